//! Parallel-vs-sequential throughput on the two hot Monte Carlo loops:
//! DP quantizer draws and subspace-distortion batches. With the default
//! `parallel` feature the indexed map runs on rayon; rebuilding with
//! `--no-default-features` makes both paths sequential.

use criterion::{criterion_group, criterion_main, Criterion};

use dpbeamsim_core::channel::draw_rayleigh;
use dpbeamsim_core::cmatrix::{chordal_distance_sq, svd};
use dpbeamsim_core::dpq::{GridKind, QuantGrid};
use dpbeamsim_core::exec::{map_indexed, map_indexed_seq};
use dpbeamsim_core::givens::decompose;
use dpbeamsim_core::link::{quantize_and_reconstruct, Scheme};
use dpbeamsim_core::rng::{stream, DOMAIN_VALIDATE};
use rand::Rng;

fn dpsq_batch(item: usize) -> f64 {
    let grid = QuantGrid::new(GridKind::Phase, 6).unwrap();
    let mut rng = stream(9, DOMAIN_VALIDATE, item as u64);
    let mut acc = 0.0;
    for _ in 0..2_000 {
        let a = -std::f64::consts::PI + rng.random::<f64>() * std::f64::consts::TAU;
        let q = grid.quantize_dpsq(a, 0.1, &mut rng).unwrap();
        let err = grid.level_value(q) - a;
        acc += err * err;
    }
    acc
}

fn distortion_batch(item: usize) -> f64 {
    let mut rng = stream(11, DOMAIN_VALIDATE, item as u64);
    let h = draw_rayleigh(4, 4, &mut rng);
    let v_star = svd(&h).unwrap().v.leading_cols(2);
    let angles = decompose(&v_star).unwrap();
    let v_hat =
        quantize_and_reconstruct(&angles, Scheme::DpSq, 6, 3, 0.1, 0.1, &mut rng).unwrap();
    chordal_distance_sq(&v_star, &v_hat).unwrap()
}

fn bench_quantizer(c: &mut Criterion) {
    let mut group = c.benchmark_group("dpsq_mse_batches");
    group.bench_function("map_indexed", |b| {
        b.iter(|| map_indexed(64, dpsq_batch).iter().sum::<f64>())
    });
    group.bench_function("map_indexed_seq", |b| {
        b.iter(|| map_indexed_seq(64, dpsq_batch).iter().sum::<f64>())
    });
    group.finish();
}

fn bench_distortion(c: &mut Criterion) {
    let mut group = c.benchmark_group("subspace_distortion");
    group.bench_function("map_indexed", |b| {
        b.iter(|| map_indexed(512, distortion_batch).iter().sum::<f64>())
    });
    group.bench_function("map_indexed_seq", |b| {
        b.iter(|| map_indexed_seq(512, distortion_batch).iter().sum::<f64>())
    });
    group.finish();
}

criterion_group!(benches, bench_quantizer, bench_distortion);
criterion_main!(benches);
