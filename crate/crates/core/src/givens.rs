//! Givens/phase angle parametrization of semi-unitary matrices.
//!
//! A tall matrix `V` with orthonormal columns is represented by an ordered
//! set of per-antenna phases `phi` and plane-rotation mixing angles `psi`,
//! one group per column:
//!
//! ```text
//! V = [ prod_{i=1}^{min(n_s, n_t-1)} D_i(phi_{.,i}) prod_{l=i+1}^{n_t} G_{l,i}(psi_{l,i}) ] E_{n_s}
//! ```
//!
//! where `D_i` places `e^{j phi_{k,i}}` on diagonal rows `k = i..n_t-1`
//! (ones elsewhere), `G_{l,i}` is the real rotation in the `(i, l)` plane,
//! and `E_{n_s}` keeps the first `n_s` columns. Reconstruction from any
//! in-domain angles yields exactly orthonormal columns, so arbitrary
//! (quantized, perturbed) feedback always decodes to a valid beamformer.
//!
//! The round trip `reconstruct(decompose(V))` recovers the column span of
//! `V` rather than `V` itself: each column is re-phased to a canonical
//! representative, which every subspace-level metric downstream ignores.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::cmatrix::{C64, ComplexMatrix, ORTHO_TOL};
use crate::error::{Error, Result};

/// Ordered Givens/phase angle set for an `n_t x n_s` semi-unitary matrix.
///
/// Storage is grouped by column: for column `i` (1-based, up to
/// `min(n_s, n_t-1)`), `phases` holds `phi_{k,i}` for `k = i..n_t-1` and
/// `mixings` holds `psi_{l,i}` for `l = i+1..n_t`, both `n_t - i` values.
#[derive(Clone, Debug, PartialEq)]
pub struct GivensAngles {
    n_t: usize,
    n_s: usize,
    phases: Vec<f64>,
    mixings: Vec<f64>,
}

/// Total angle count per family: `sum_{i=1}^{min(n_s, n_t-1)} (n_t - i)`,
/// which equals `n_s n_t - n_s (n_s + 1) / 2` for `n_s < n_t` and the same
/// expression with the vanishing last term when `n_s = n_t`.
pub fn angle_count(n_t: usize, n_s: usize) -> usize {
    assert!(n_s >= 1 && n_s <= n_t);
    let m = n_s.min(n_t - 1);
    (1..=m).map(|i| n_t - i).sum()
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_phase(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

impl GivensAngles {
    pub fn new(n_t: usize, n_s: usize, phases: Vec<f64>, mixings: Vec<f64>) -> Result<Self> {
        if n_s == 0 || n_t == 0 || n_s > n_t {
            return Err(Error::InvalidInput(format!(
                "invalid shape: n_t={n_t}, n_s={n_s}"
            )));
        }
        let n = angle_count(n_t, n_s);
        if phases.len() != n || mixings.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "expected {n} phases and {n} mixing angles for {n_t}x{n_s}, got {} and {}",
                phases.len(),
                mixings.len()
            )));
        }
        for &p in &phases {
            if !(-PI..PI).contains(&p) {
                return Err(Error::InvalidInput(format!(
                    "phase angle {p} outside [-pi, pi)"
                )));
            }
        }
        for &m in &mixings {
            if !(0.0..=FRAC_PI_2).contains(&m) {
                return Err(Error::InvalidInput(format!(
                    "mixing angle {m} outside [0, pi/2]"
                )));
            }
        }
        Ok(Self {
            n_t,
            n_s,
            phases,
            mixings,
        })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn mixings(&self) -> &[f64] {
        &self.mixings
    }

    /// Number of parametrized columns, `min(n_s, n_t - 1)`.
    pub fn column_blocks(&self) -> usize {
        self.n_s.min(self.n_t - 1)
    }

    /// Offset of column block `i` (1-based) into the flat angle vectors.
    fn block_offset(&self, i: usize) -> usize {
        (1..i).map(|j| self.n_t - j).sum()
    }

    /// Rebuilds the semi-unitary matrix from the angle set.
    ///
    /// The output has orthonormal columns for any in-domain angles.
    pub fn reconstruct(&self) -> ComplexMatrix {
        let n_t = self.n_t;
        let mut w = ComplexMatrix::zeros(n_t, self.n_s);
        for j in 0..self.n_s {
            w[(j, j)] = C64::new(1.0, 0.0);
        }
        for i in (1..=self.column_blocks()).rev() {
            let off = self.block_offset(i);
            // Inner factors first: G_{n_t,i} ... G_{i+1,i}, then D_i.
            for l in ((i + 1)..=n_t).rev() {
                let psi = self.mixings[off + (l - i - 1)];
                let (s, c) = psi.sin_cos();
                for col in 0..self.n_s {
                    let a = w[(i - 1, col)];
                    let b = w[(l - 1, col)];
                    w[(i - 1, col)] = a * c - b * s;
                    w[(l - 1, col)] = a * s + b * c;
                }
            }
            for k in i..=(n_t - 1) {
                let rot = C64::from_polar(1.0, self.phases[off + (k - i)]);
                for col in 0..self.n_s {
                    w[(k - 1, col)] *= rot;
                }
            }
        }
        w
    }
}

/// Extracts the Givens/phase angles of a matrix with orthonormal columns.
///
/// Column by column: a unit phase makes the bottom entry of the column
/// nonnegative real, the per-row phases are stripped with `D_i^H`, then
/// plane rotations `G_{l,i}^T` zero the subdiagonal entries. The recorded
/// angles reproduce the span of `v` via [`GivensAngles::reconstruct`].
pub fn decompose(v: &ComplexMatrix) -> Result<GivensAngles> {
    let n_t = v.rows();
    let n_s = v.cols();
    if n_s > n_t {
        return Err(Error::InvalidInput(format!(
            "cannot decompose wide matrix {n_t}x{n_s}"
        )));
    }
    let defect = v.orthonormality_defect();
    if defect > ORTHO_TOL {
        return Err(Error::InvalidInput(format!(
            "columns are not orthonormal (defect {defect:.3e})"
        )));
    }

    let mut w = v.clone();
    let m = n_s.min(n_t - 1);
    let mut phases = Vec::with_capacity(angle_count(n_t, n_s));
    let mut mixings = Vec::with_capacity(angle_count(n_t, n_s));

    for i in 1..=m {
        let bottom = w[(n_t - 1, i - 1)];
        if bottom.norm() > 0.0 {
            let rot = C64::from_polar(1.0, -bottom.arg());
            for r in 0..n_t {
                w[(r, i - 1)] *= rot;
            }
        }
        for k in i..=(n_t - 1) {
            let phi = wrap_phase(w[(k - 1, i - 1)].arg());
            phases.push(phi);
            let rot = C64::from_polar(1.0, -phi);
            for col in 0..n_s {
                w[(k - 1, col)] *= rot;
            }
        }
        for l in (i + 1)..=n_t {
            let c0 = w[(i - 1, i - 1)].re;
            let s0 = w[(l - 1, i - 1)].norm();
            let psi = s0.atan2(c0).clamp(0.0, FRAC_PI_2);
            mixings.push(psi);
            let (s, c) = psi.sin_cos();
            for col in 0..n_s {
                let a = w[(i - 1, col)];
                let b = w[(l - 1, col)];
                w[(i - 1, col)] = a * c + b * s;
                w[(l - 1, col)] = b * c - a * s;
            }
        }
    }

    GivensAngles::new(n_t, n_s, phases, mixings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmatrix::{chordal_distance_sq, random_unitary_columns};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const ROUND_TRIP_SHAPES: [(usize, usize); 6] =
        [(2, 1), (2, 2), (3, 2), (4, 2), (8, 1), (8, 2)];

    #[test]
    fn reconstruct_equal_power_beam() {
        let a = GivensAngles::new(2, 1, vec![0.0], vec![std::f64::consts::FRAC_PI_4]).unwrap();
        let v = a.reconstruct();
        let r = (0.5f64).sqrt();
        assert!((v[(0, 0)] - C64::new(r, 0.0)).norm() < 1e-15);
        assert!((v[(1, 0)] - C64::new(r, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn reconstruct_antenna_selection_with_phase() {
        let a = GivensAngles::new(2, 1, vec![std::f64::consts::FRAC_PI_2], vec![0.0]).unwrap();
        let v = a.reconstruct();
        assert!((v[(0, 0)] - C64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(v[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn reconstruct_matches_two_phase_form() {
        // Same subspace as [cos(psi) e^{j phi1}, sin(psi) e^{j phi2}] whenever
        // phi1 - phi2 equals the single recorded phase.
        let psi = PI / 6.0;
        let phi = PI / 3.0;
        let a = GivensAngles::new(2, 1, vec![phi], vec![psi]).unwrap();
        let v = a.reconstruct();
        assert!((v[(0, 0)] - C64::from_polar(psi.cos(), phi)).norm() < 1e-15);
        assert!((v[(1, 0)] - C64::new(psi.sin(), 0.0)).norm() < 1e-15);

        let phi2 = -0.4;
        let two_phase = ComplexMatrix::new(
            2,
            1,
            vec![
                C64::from_polar(psi.cos(), phi + phi2),
                C64::from_polar(psi.sin(), phi2),
            ],
        )
        .unwrap();
        assert!(chordal_distance_sq(&v, &two_phase).unwrap() < 1e-15);
    }

    #[test]
    fn decompose_identity_direction() {
        let v = ComplexMatrix::from_real(2, 1, &[1.0, 0.0]).unwrap();
        let a = decompose(&v).unwrap();
        assert_eq!(a.phases(), &[0.0]);
        assert_eq!(a.mixings(), &[0.0]);
    }

    #[test]
    fn decompose_symmetric_direction() {
        let r = (0.5f64).sqrt();
        let v = ComplexMatrix::from_real(2, 1, &[r, r]).unwrap();
        let a = decompose(&v).unwrap();
        assert!((a.mixings()[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
        assert!(a.phases()[0].abs() < 1e-15);
    }

    #[test]
    fn round_trip_preserves_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for &(n_t, n_s) in &ROUND_TRIP_SHAPES {
            for _ in 0..50 {
                let v = random_unitary_columns(n_t, n_s, &mut rng);
                let a = decompose(&v).unwrap();
                let back = a.reconstruct();
                let d = chordal_distance_sq(&back, &v).unwrap();
                assert!(d < 1e-18, "round trip {n_t}x{n_s}: d={d:.3e}");
            }
        }
    }

    #[test]
    fn round_trip_of_svd_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let h = ComplexMatrix::from_fn(4, 2, |_, _| {
                C64::new(
                    rng.sample(rand_distr::StandardNormal),
                    rng.sample(rand_distr::StandardNormal),
                )
            });
            let v = crate::cmatrix::svd(&h).unwrap().v;
            let a = decompose(&v).unwrap();
            let d = chordal_distance_sq(&a.reconstruct(), &v).unwrap();
            assert!(d < 1e-18);
        }
    }

    #[test]
    fn angle_counts_match_closed_form() {
        for &(n_t, n_s) in &ROUND_TRIP_SHAPES {
            let expected = n_s * n_t - n_s * (n_s + 1) / 2;
            assert_eq!(angle_count(n_t, n_s), expected, "shape {n_t}x{n_s}");
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let v = random_unitary_columns(n_t, n_s, &mut rng);
            let a = decompose(&v).unwrap();
            assert_eq!(a.phases().len(), expected);
            assert_eq!(a.mixings().len(), expected);
        }
    }

    #[test]
    fn two_by_one_moduli_are_cos_sin() {
        let psi = 0.7f64;
        let phi = -2.1f64;
        let a = GivensAngles::new(2, 1, vec![phi], vec![psi]).unwrap();
        let v = a.reconstruct();
        assert_eq!(v[(1, 0)], C64::new(psi.sin(), 0.0));
        assert!((v[(0, 0)].norm() - psi.cos()).abs() < 1e-15);
    }

    #[test]
    fn decompose_rejects_non_orthonormal() {
        let v = ComplexMatrix::from_real(2, 1, &[0.9, 0.1]).unwrap();
        assert!(matches!(decompose(&v), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn angles_reject_out_of_domain() {
        assert!(GivensAngles::new(2, 1, vec![PI], vec![0.0]).is_err());
        assert!(GivensAngles::new(2, 1, vec![0.0], vec![-0.1]).is_err());
        assert!(GivensAngles::new(2, 1, vec![0.0], vec![FRAC_PI_2 + 0.1]).is_err());
    }

    #[test]
    fn single_antenna_has_no_angles() {
        let v = ComplexMatrix::new(1, 1, vec![C64::from_polar(1.0, 0.3)]).unwrap();
        let a = decompose(&v).unwrap();
        assert!(a.phases().is_empty() && a.mixings().is_empty());
        let back = a.reconstruct();
        assert!(chordal_distance_sq(&back, &v).unwrap() < 1e-18);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn reconstruct_always_orthonormal(
            shape_idx in 0usize..ROUND_TRIP_SHAPES.len(),
            seed in any::<u64>(),
        ) {
            let (n_t, n_s) = ROUND_TRIP_SHAPES[shape_idx];
            let n = angle_count(n_t, n_s);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let phases: Vec<f64> = (0..n).map(|_| wrap_phase(rng.random_range(-10.0..10.0))).collect();
            let mixings: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=FRAC_PI_2)).collect();
            let a = GivensAngles::new(n_t, n_s, phases, mixings).unwrap();
            prop_assert!(a.reconstruct().orthonormality_defect() < 1e-12);
        }
    }
}
