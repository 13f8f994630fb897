//! Time-varying multipath Rician MIMO channel traces with user-motion
//! Doppler, pilot sounding with LS estimation, and a flat binary trace
//! format.
//!
//! The model is a tap delay line: path `p` has an integer sample delay,
//! an arrival angle (path 1 is the line-of-sight and arrives from the
//! motion direction), and one complex gain per antenna pair. Gains are
//! seeded circular Gaussians rescaled so each path carries exactly its
//! Rician power fraction and the total mean power is one. The Doppler
//! phase integrates the piecewise-constant speed profile, so speed steps
//! produce the expected spectrogram bands.

use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cmatrix::{C64, ComplexMatrix};
use crate::error::{Error, Result};
use crate::rng::{stream, DOMAIN_CHANNEL};

/// Propagation speed used for every wavelength conversion, in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

const TRACE_MAGIC: &[u8; 8] = b"DPBMTRC1";

/// Piecewise-constant speed profile `v(t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedProfile {
    /// `(start_time_s, speed_mps)` segments; the first starts at 0 and each
    /// segment extends to the next start time.
    segments: Vec<(f64, f64)>,
}

impl SpeedProfile {
    pub fn constant(speed_mps: f64) -> Self {
        Self {
            segments: vec![(0.0, speed_mps)],
        }
    }

    pub fn piecewise(segments: Vec<(f64, f64)>) -> Result<Self> {
        if segments.is_empty() || segments[0].0 != 0.0 {
            return Err(Error::InvalidInput(
                "speed profile must start at t = 0".into(),
            ));
        }
        for w in segments.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::InvalidInput(
                    "speed profile start times must increase".into(),
                ));
            }
        }
        if segments.iter().any(|&(_, v)| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("speeds must be nonnegative".into()));
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let mut v = self.segments[0].1;
        for &(start, speed) in &self.segments {
            if t >= start {
                v = speed;
            } else {
                break;
            }
        }
        v
    }

    /// Integrated displacement up to `t` (piecewise-linear in time).
    pub fn displacement(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (i, &(start, speed)) in self.segments.iter().enumerate() {
            if t <= start {
                break;
            }
            let end = self
                .segments
                .get(i + 1)
                .map(|&(s, _)| s.min(t))
                .unwrap_or(t);
            acc += speed * (end - start);
        }
        acc
    }
}

/// Generation parameters for a synthetic CSI trace.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_sc: usize,
    pub bandwidth_hz: f64,
    pub n_paths: usize,
    pub max_delay_samples: usize,
    pub k_factor_db: f64,
    pub f_c_hz: f64,
    pub interval_s: f64,
    pub n_snapshots: usize,
    pub velocity_angle_rad: f64,
    pub speed_profile: SpeedProfile,
    pub seed: u64,
}

impl Default for ChannelConfig {
    /// 2x1 downlink over 20 MHz: 10 paths, max tap delay 20 samples,
    /// K = 4 dB, 5.785 GHz carrier, 1 ms reports, 5000 snapshots.
    fn default() -> Self {
        Self {
            n_tx: 2,
            n_rx: 1,
            n_sc: 52,
            bandwidth_hz: 20e6,
            n_paths: 10,
            max_delay_samples: 20,
            k_factor_db: 4.0,
            f_c_hz: 5.785e9,
            interval_s: 1e-3,
            n_snapshots: 5000,
            velocity_angle_rad: 0.0,
            speed_profile: SpeedProfile::constant(1.5),
            seed: 1,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_rx == 0 || self.n_sc == 0 {
            return Err(Error::InvalidInput("antenna/subcarrier counts must be >= 1".into()));
        }
        if self.n_paths == 0 || self.n_snapshots == 0 {
            return Err(Error::InvalidInput("path/snapshot counts must be >= 1".into()));
        }
        if !(self.bandwidth_hz > 0.0) || !(self.f_c_hz > 0.0) || !(self.interval_s > 0.0) {
            return Err(Error::InvalidInput(
                "bandwidth, carrier frequency, and interval must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c_hz
    }

    fn k_factor_linear(&self) -> f64 {
        10f64.powf(self.k_factor_db / 10.0)
    }
}

/// Trace header fields kept with the samples (and serialized to disk).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceMeta {
    pub n_snapshots: usize,
    pub n_sc: usize,
    pub n_rx: usize,
    pub n_tx: usize,
    pub f_c_hz: f64,
    pub interval_s: f64,
}

/// Time-indexed per-subcarrier channel matrices `H[k, n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiTrace {
    meta: TraceMeta,
    /// Samples in `[snapshot][subcarrier][rx][tx]` order.
    data: Vec<C64>,
}

impl CsiTrace {
    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.meta.interval_s
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.meta.n_snapshots).map(|n| self.time(n)).collect()
    }

    pub fn entry(&self, n: usize, k: usize, r: usize, t: usize) -> C64 {
        let m = &self.meta;
        self.data[((n * m.n_sc + k) * m.n_rx + r) * m.n_tx + t]
    }

    /// Channel matrix at snapshot `n`, subcarrier `k`.
    pub fn matrix_at(&self, n: usize, k: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.meta.n_rx, self.meta.n_tx, |r, t| self.entry(n, k, r, t))
    }

    /// Plain average of `H[k, n]` over subcarriers at snapshot `n`.
    pub fn band_average(&self, n: usize) -> ComplexMatrix {
        let m = &self.meta;
        let mut acc = ComplexMatrix::zeros(m.n_rx, m.n_tx);
        for k in 0..m.n_sc {
            for r in 0..m.n_rx {
                for t in 0..m.n_tx {
                    acc[(r, t)] += self.entry(n, k, r, t);
                }
            }
        }
        let scale = 1.0 / m.n_sc as f64;
        for z in 0..m.n_rx * m.n_tx {
            acc[(z / m.n_tx, z % m.n_tx)] *= scale;
        }
        acc
    }
}

struct Path {
    delay_samples: usize,
    cos_rel: f64,
    /// Per-antenna-pair gains, `[rx][tx]` row-major.
    gains: Vec<C64>,
}

/// Draws the tap set for one channel realization.
///
/// Draw order per path (fixed for reproducibility): delay, arrival angle,
/// then the antenna gains. Path 1 is the specular line-of-sight: it arrives
/// from the motion direction, carries the Rician fraction `K/(K+1)` of the
/// power, and has unit-magnitude per-antenna gains (random phases), so no
/// antenna is starved of its LOS component. Scattered paths draw circular
/// Gaussian gains. Each path's realized power is normalized exactly to its
/// fraction, so the total mean power is one.
fn draw_paths<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Vec<Path> {
    let n_pairs = cfg.n_rx * cfg.n_tx;
    let k_lin = cfg.k_factor_linear();
    let mut paths = Vec::with_capacity(cfg.n_paths);
    for p in 0..cfg.n_paths {
        let delay_samples = rng.random_range(0..=cfg.max_delay_samples);
        let arrival = rng.random_range(0.0..std::f64::consts::TAU);
        let arrival = if p == 0 { cfg.velocity_angle_rad } else { arrival };
        let frac = if cfg.n_paths == 1 {
            1.0
        } else if p == 0 {
            k_lin / (k_lin + 1.0)
        } else {
            1.0 / ((k_lin + 1.0) * (cfg.n_paths - 1) as f64)
        };
        let mut gains: Vec<C64> = if p == 0 {
            (0..n_pairs)
                .map(|_| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
                .collect()
        } else {
            (0..n_pairs)
                .map(|_| {
                    C64::new(
                        rng.sample::<f64, _>(StandardNormal),
                        rng.sample::<f64, _>(StandardNormal),
                    ) * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect()
        };
        let power: f64 = gains.iter().map(|g| g.norm_sqr()).sum();
        assert!(power > 0.0, "degenerate gain draw");
        let scale = (frac * n_pairs as f64 / power).sqrt();
        for g in &mut gains {
            *g *= scale;
        }
        paths.push(Path {
            delay_samples,
            cos_rel: (arrival - cfg.velocity_angle_rad).cos(),
            gains,
        });
    }
    paths
}

/// Generates the full CSI trace for a configuration. Deterministic for a
/// fixed seed.
pub fn generate_trace(cfg: &ChannelConfig) -> Result<CsiTrace> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, DOMAIN_CHANNEL, 0);
    let paths = draw_paths(cfg, &mut rng);
    let lambda = cfg.wavelength_m();
    let n_pairs = cfg.n_rx * cfg.n_tx;

    // Per-path subcarrier phasors exp(-j 2 pi k delta_f tau_p); with
    // tau_p = d_p / bandwidth and delta_f = bandwidth / n_sc this is
    // exp(-j 2 pi k d_p / n_sc).
    let mut sub = vec![C64::new(1.0, 0.0); cfg.n_paths * cfg.n_sc];
    for (p, path) in paths.iter().enumerate() {
        for k in 0..cfg.n_sc {
            let ph = -std::f64::consts::TAU * (k * path.delay_samples) as f64 / cfg.n_sc as f64;
            sub[p * cfg.n_sc + k] = C64::from_polar(1.0, ph);
        }
    }

    let mut data = vec![C64::new(0.0, 0.0); cfg.n_snapshots * cfg.n_sc * n_pairs];
    for n in 0..cfg.n_snapshots {
        let disp = cfg.speed_profile.displacement(n as f64 * cfg.interval_s);
        let base = n * cfg.n_sc * n_pairs;
        for (p, path) in paths.iter().enumerate() {
            let rot = C64::from_polar(1.0, std::f64::consts::TAU * path.cos_rel * disp / lambda);
            for k in 0..cfg.n_sc {
                let c = rot * sub[p * cfg.n_sc + k];
                let cell = base + k * n_pairs;
                for (i, &g) in path.gains.iter().enumerate() {
                    data[cell + i] += g * c;
                }
            }
        }
    }

    Ok(CsiTrace {
        meta: TraceMeta {
            n_snapshots: cfg.n_snapshots,
            n_sc: cfg.n_sc,
            n_rx: cfg.n_rx,
            n_tx: cfg.n_tx,
            f_c_hz: cfg.f_c_hz,
            interval_s: cfg.interval_s,
        },
        data,
    })
}

/// One narrowband channel draw (the subcarrier-0, time-0 value of a fresh
/// path realization). Used by the Monte Carlo link experiments.
pub fn draw_channel<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> ComplexMatrix {
    let paths = draw_paths(cfg, rng);
    let mut h = ComplexMatrix::zeros(cfg.n_rx, cfg.n_tx);
    for path in &paths {
        for r in 0..cfg.n_rx {
            for t in 0..cfg.n_tx {
                h[(r, t)] += path.gains[r * cfg.n_tx + t];
            }
        }
    }
    h
}

/// IID Rayleigh draw with unit per-entry power.
pub fn draw_rayleigh<R: Rng + ?Sized>(n_rx: usize, n_tx: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(n_rx, n_tx, |_, _| {
        C64::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// LS channel estimate from orthogonal pilots: `H + E` with i.i.d. circular
/// Gaussian error entries of variance `n0 / (p_tx * t_p)`.
///
/// Requires a pilot at least as long as the transmit antenna count.
pub fn sound_ls<R: Rng + ?Sized>(
    h: &ComplexMatrix,
    p_tx: f64,
    t_p: usize,
    n0: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    if t_p < h.cols() {
        return Err(Error::InvalidInput(format!(
            "pilot length {t_p} shorter than {} transmit antennas",
            h.cols()
        )));
    }
    if !(p_tx > 0.0) || !(n0 >= 0.0) {
        return Err(Error::InvalidInput(
            "pilot power must be positive and noise power nonnegative".into(),
        ));
    }
    let sigma = (n0 / (p_tx * t_p as f64) / 2.0).sqrt();
    Ok(ComplexMatrix::from_fn(h.rows(), h.cols(), |r, c| {
        h[(r, c)]
            + C64::new(
                sigma * rng.sample::<f64, _>(StandardNormal),
                sigma * rng.sample::<f64, _>(StandardNormal),
            )
    }))
}

/// Writes a trace as the flat little-endian binary format: magic, counts,
/// carrier and interval, then interleaved complex samples as f32 re/im
/// pairs in `[snapshot][subcarrier][rx][tx]` order.
pub fn write_trace<W: Write>(trace: &CsiTrace, out: &mut W) -> Result<()> {
    let m = trace.meta();
    out.write_all(TRACE_MAGIC)?;
    for count in [m.n_snapshots, m.n_sc, m.n_rx, m.n_tx] {
        let v = u32::try_from(count)
            .map_err(|_| Error::Encode("trace dimension exceeds u32".into()))?;
        out.write_all(&v.to_le_bytes())?;
    }
    out.write_all(&m.f_c_hz.to_le_bytes())?;
    out.write_all(&m.interval_s.to_le_bytes())?;
    for z in trace.data() {
        out.write_all(&(z.re as f32).to_le_bytes())?;
        out.write_all(&(z.im as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads a trace written by [`write_trace`]. Samples come back at f32
/// precision.
pub fn read_trace<R: Read>(input: &mut R) -> Result<CsiTrace> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != TRACE_MAGIC {
        return Err(Error::InvalidInput("bad trace file magic".into()));
    }
    let mut u32buf = [0u8; 4];
    let mut counts = [0usize; 4];
    for slot in &mut counts {
        input.read_exact(&mut u32buf)?;
        *slot = u32::from_le_bytes(u32buf) as usize;
    }
    let [n_snapshots, n_sc, n_rx, n_tx] = counts;
    let mut f64buf = [0u8; 8];
    input.read_exact(&mut f64buf)?;
    let f_c_hz = f64::from_le_bytes(f64buf);
    input.read_exact(&mut f64buf)?;
    let interval_s = f64::from_le_bytes(f64buf);

    let total = n_snapshots * n_sc * n_rx * n_tx;
    let mut data = Vec::with_capacity(total);
    let mut pair = [0u8; 8];
    for _ in 0..total {
        input.read_exact(&mut pair)?;
        let re = f32::from_le_bytes(pair[0..4].try_into().expect("4 bytes"));
        let im = f32::from_le_bytes(pair[4..8].try_into().expect("4 bytes"));
        data.push(Complex64::new(re as f64, im as f64));
    }
    Ok(CsiTrace {
        meta: TraceMeta {
            n_snapshots,
            n_sc,
            n_rx,
            n_tx,
            f_c_hz,
            interval_s,
        },
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{DOMAIN_SOUNDING, DOMAIN_VALIDATE};

    fn small_cfg() -> ChannelConfig {
        ChannelConfig {
            n_sc: 8,
            n_snapshots: 64,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn speed_profile_lookup_and_integral() {
        let p = SpeedProfile::piecewise(vec![(0.0, 0.0), (2.0, 1.5), (4.0, 3.0)]).unwrap();
        assert_eq!(p.speed_at(1.0), 0.0);
        assert_eq!(p.speed_at(2.0), 1.5);
        assert_eq!(p.speed_at(10.0), 3.0);
        assert!((p.displacement(3.0) - 1.5).abs() < 1e-12);
        assert!((p.displacement(5.0) - (2.0 * 1.5 + 3.0)).abs() < 1e-12);
        assert!(SpeedProfile::piecewise(vec![(1.0, 1.0)]).is_err());
        assert!(SpeedProfile::piecewise(vec![(0.0, -1.0)]).is_err());
    }

    #[test]
    fn zero_speed_trace_is_time_invariant() {
        let cfg = ChannelConfig {
            speed_profile: SpeedProfile::constant(0.0),
            ..small_cfg()
        };
        let trace = generate_trace(&cfg).unwrap();
        let m = trace.meta();
        let per_snapshot = m.n_sc * m.n_rx * m.n_tx;
        for n in 1..m.n_snapshots {
            assert_eq!(
                &trace.data()[n * per_snapshot..(n + 1) * per_snapshot],
                &trace.data()[0..per_snapshot],
            );
        }
    }

    #[test]
    fn single_los_path_is_a_pure_doppler_tone() {
        let cfg = ChannelConfig {
            n_paths: 1,
            n_sc: 4,
            n_snapshots: 512,
            ..ChannelConfig::default()
        };
        let trace = generate_trace(&cfg).unwrap();
        let f_expected = 1.5 / cfg.wavelength_m();
        assert!((f_expected - 28.94).abs() < 0.01);
        // Consecutive-snapshot phase increments of a pure tone are constant.
        for n in 1..trace.meta().n_snapshots {
            let a = trace.entry(n - 1, 0, 0, 0);
            let b = trace.entry(n, 0, 0, 0);
            let df = (b * a.conj()).arg() / (std::f64::consts::TAU * cfg.interval_s);
            assert!(
                (df - f_expected).abs() / f_expected < 0.01,
                "snapshot {n}: doppler {df}"
            );
        }
    }

    #[test]
    fn mean_trace_power_is_normalized() {
        let trace = generate_trace(&ChannelConfig::default()).unwrap();
        let m = trace.meta();
        let total: f64 = trace.data().iter().map(|z| z.norm_sqr()).sum();
        let mean = total / (m.n_snapshots * m.n_sc) as f64 / (m.n_rx * m.n_tx) as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean power {mean}");
    }

    #[test]
    fn trace_is_reproducible_per_seed() {
        let cfg = small_cfg();
        let a = generate_trace(&cfg).unwrap();
        let b = generate_trace(&cfg).unwrap();
        assert_eq!(a.data(), b.data());
        let c = generate_trace(&ChannelConfig {
            seed: cfg.seed + 1,
            ..cfg
        })
        .unwrap();
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn noiseless_sounding_is_exact() {
        let mut rng = stream(3, DOMAIN_SOUNDING, 0);
        let h = draw_rayleigh(1, 2, &mut rng);
        let est = sound_ls(&h, 1.0, 2, 0.0, &mut rng).unwrap();
        assert_eq!(est.data(), h.data());
    }

    #[test]
    fn ls_error_variance_matches_closed_form() {
        let mut rng = stream(11, DOMAIN_VALIDATE, 0);
        let h = draw_rayleigh(1, 2, &mut rng);
        let trials = 100_000;
        let mut acc = 0.0;
        for _ in 0..trials {
            let est = sound_ls(&h, 1.0, 4, 0.1, &mut rng).unwrap();
            for i in 0..h.data().len() {
                acc += (est.data()[i] - h.data()[i]).norm_sqr();
            }
        }
        let var = acc / (trials * h.data().len()) as f64;
        let expect = 0.1 / 4.0;
        assert!((var - expect).abs() / expect < 0.02, "var {var}");
    }

    #[test]
    fn sounding_requires_long_enough_pilot() {
        let h = ComplexMatrix::zeros(1, 4);
        let mut rng = stream(0, DOMAIN_SOUNDING, 1);
        assert!(sound_ls(&h, 1.0, 3, 0.1, &mut rng).is_err());
    }

    #[test]
    fn trace_file_round_trip() {
        let trace = generate_trace(&small_cfg()).unwrap();
        let mut buf = Vec::new();
        write_trace(&trace, &mut buf).unwrap();
        let back = read_trace(&mut buf.as_slice()).unwrap();
        assert_eq!(back.meta(), trace.meta());
        for (a, b) in trace.data().iter().zip(back.data()) {
            assert!((a - b).norm() <= 1e-6 * a.norm().max(1.0));
        }
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let cfg = ChannelConfig {
            n_tx: 0,
            ..ChannelConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = ChannelConfig {
            bandwidth_hz: 0.0,
            ..ChannelConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
