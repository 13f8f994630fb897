//! Passive-eavesdropper pipeline: reconstruct effective CSI from observed
//! feedback, aggregate across subcarriers, estimate Doppler and speed with
//! a sliding phase-slope fit, and emit spectrograms.
//!
//! The eavesdropper's per-subcarrier observable is its own (noisier) view
//! of the channel row projected on the beam decoded from the feedback:
//! `h[k, n] = h_obs[k, n] . v_hat[n]`. The estimation pipeline itself is
//! agnostic to how that effective CSI was produced.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cbr::{self, CbrFrame};
use crate::channel::{generate_trace, ChannelConfig, CsiTrace, SPEED_OF_LIGHT};
use crate::cmatrix::{svd, C64, ComplexMatrix};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::givens::decompose;
use crate::link::{quantize_indices, reconstruct_from_indices, Scheme};
use crate::rng::{stream, DOMAIN_DPSQ, DOMAIN_EAVESDROPPER};

/// Sliding-window Doppler/speed track.
#[derive(Clone, Debug)]
pub struct SpeedEstimate {
    pub times: Vec<f64>,
    pub doppler_hz: Vec<f64>,
    pub speed_mps: Vec<f64>,
    pub window: usize,
}

/// Weighted subcarrier aggregation with nonnegative weights.
///
/// Weights are normalized to sum to one internally.
pub fn aggregate(h_k: &[C64], weights: &[f64]) -> Result<C64> {
    if h_k.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples vs {} weights",
            h_k.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidInput("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("weights must not all vanish".into()));
    }
    Ok(h_k
        .iter()
        .zip(weights)
        .map(|(h, &w)| h * (w / total))
        .sum())
}

/// Removes 2-pi discontinuities: output starts at the input's first value
/// and successive differences lie in `(-pi, pi]`.
pub fn unwrap_phase(phi: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phi.len());
    let mut prev_in = match phi.first() {
        Some(&p) => {
            out.push(p);
            p
        }
        None => return out,
    };
    for &p in &phi[1..] {
        let mut d = (p - prev_in).rem_euclid(std::f64::consts::TAU);
        if d > std::f64::consts::PI {
            d -= std::f64::consts::TAU;
        }
        let next = out.last().expect("nonempty") + d;
        out.push(next);
        prev_in = p;
    }
    out
}

/// Doppler from the least-squares slope of an unwrapped phase trajectory:
/// `f_d = slope / (2 pi)`.
pub fn estimate_doppler(times: &[f64], unwrapped_phase: &[f64]) -> Result<f64> {
    if times.len() != unwrapped_phase.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} times vs {} phases",
            times.len(),
            unwrapped_phase.len()
        )));
    }
    if times.len() < 2 {
        return Err(Error::Estimation("need at least two samples".into()));
    }
    let n = times.len() as f64;
    let t_mean = times.iter().sum::<f64>() / n;
    let p_mean = unwrapped_phase.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&t, &p) in times.iter().zip(unwrapped_phase) {
        num += (t - t_mean) * (p - p_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        return Err(Error::Estimation("sample times are all equal".into()));
    }
    Ok(num / den / std::f64::consts::TAU)
}

/// One-way radial speed from a Doppler shift: `v = (c / f_c) f_d`.
/// The sign of the Doppler carries through.
pub fn estimate_speed(f_d_hz: f64, f_c_hz: f64) -> f64 {
    SPEED_OF_LIGHT / f_c_hz * f_d_hz
}

/// Short-time Doppler/speed tracking: per valid center, unwrap the phases
/// inside the window and fit a local line.
pub fn sliding_speed(
    h_tilde: &[C64],
    times: &[f64],
    window: usize,
    f_c_hz: f64,
) -> Result<SpeedEstimate> {
    if h_tilde.len() != times.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} samples vs {} times",
            h_tilde.len(),
            times.len()
        )));
    }
    if window < 2 || window > h_tilde.len() {
        return Err(Error::InvalidInput(format!(
            "window {window} out of range for {} samples",
            h_tilde.len()
        )));
    }
    let raw_phase: Vec<f64> = h_tilde.iter().map(|z| z.arg()).collect();
    let half = window / 2;
    let last_center = h_tilde.len() - window + half;
    let mut out = SpeedEstimate {
        times: Vec::new(),
        doppler_hz: Vec::new(),
        speed_mps: Vec::new(),
        window,
    };
    for m in half..=last_center {
        let start = m - half;
        let phases = unwrap_phase(&raw_phase[start..start + window]);
        let f_d = estimate_doppler(&times[start..start + window], &phases)?;
        out.times.push(times[m]);
        out.doppler_hz.push(f_d);
        out.speed_mps.push(estimate_speed(f_d, f_c_hz));
    }
    Ok(out)
}

/// Reconstructs the eavesdropper's per-snapshot effective CSI `h[k, n]`
/// from length-prefixed report payloads plus its own noisy channel view.
///
/// Frame `n` is decoded with the given widths, rebuilt into a beam, and
/// projected against receive antenna 0 of the observed channel. The
/// observation noise is circular Gaussian at the given SNR (relative to
/// unit mean channel power).
pub fn observe_feedback(
    trace: &CsiTrace,
    payloads: &[Vec<u8>],
    n_s: usize,
    b_phi: u32,
    b_psi: u32,
    eavesdropper_snr_db: f64,
    seed: u64,
) -> Result<Vec<Vec<C64>>> {
    if payloads.is_empty() {
        return Ok(Vec::new());
    }
    let meta = *trace.meta();
    if payloads.len() > meta.n_snapshots {
        return Err(Error::ShapeMismatch(format!(
            "{} frames for {} snapshots",
            payloads.len(),
            meta.n_snapshots
        )));
    }
    let beams: Vec<ComplexMatrix> = payloads
        .iter()
        .enumerate()
        .map(|(n, payload)| {
            let frame =
                CbrFrame::from_payload(payload.clone(), meta.n_tx, n_s, b_phi, b_psi, false)
                    .map_err(|e| Error::Decode {
                        frame: n,
                        reason: e.to_string(),
                    })?;
            reconstruct_from_indices(
                meta.n_tx,
                n_s,
                b_phi,
                b_psi,
                &frame.phi_indices,
                &frame.psi_indices,
            )
        })
        .collect::<Result<_>>()?;
    let observed = observe_with_beams(trace, &beams, eavesdropper_snr_db, seed);
    Ok(observed)
}

/// Effective CSI given explicit per-snapshot beams (first column used).
pub fn observe_with_beams(
    trace: &CsiTrace,
    beams: &[ComplexMatrix],
    eavesdropper_snr_db: f64,
    seed: u64,
) -> Vec<Vec<C64>> {
    let meta = *trace.meta();
    let sigma = (10f64.powf(-eavesdropper_snr_db / 10.0) / 2.0).sqrt();
    map_indexed(beams.len(), |n| {
        let mut rng = stream(seed, DOMAIN_EAVESDROPPER, n as u64);
        let v = &beams[n];
        (0..meta.n_sc)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for t in 0..meta.n_tx {
                    let obs = trace.entry(n, k, 0, t)
                        + C64::new(
                            sigma * rng.sample::<f64, _>(StandardNormal),
                            sigma * rng.sample::<f64, _>(StandardNormal),
                        );
                    acc += obs * v[(t, 0)];
                }
                acc
            })
            .collect()
    })
}

/// Short-time Fourier magnitude of a complex snapshot sequence.
///
/// Hann-windowed frames of `fft_len` samples every `hop` snapshots; the
/// frequency axis is two-sided in Hz given the snapshot interval, in
/// ascending order.
#[derive(Clone, Debug)]
pub struct Spectrogram {
    pub times: Vec<f64>,
    pub freqs_hz: Vec<f64>,
    /// `magnitude[frame][bin]`, bins aligned with `freqs_hz`.
    pub magnitude: Vec<Vec<f64>>,
}

pub fn spectrogram(
    samples: &[C64],
    fft_len: usize,
    hop: usize,
    interval_s: f64,
) -> Result<Spectrogram> {
    if fft_len < 2 || fft_len > samples.len() {
        return Err(Error::InvalidInput(format!(
            "fft length {fft_len} out of range for {} samples",
            samples.len()
        )));
    }
    if hop == 0 {
        return Err(Error::InvalidInput("hop must be at least 1".into()));
    }
    if !(interval_s > 0.0) {
        return Err(Error::InvalidInput("interval must be positive".into()));
    }
    let fs = 1.0 / interval_s;
    let n = fft_len;
    let window: Vec<f64> = (0..n)
        .map(|i| {
            0.5 * (1.0
                - (std::f64::consts::TAU * i as f64 / (n as f64 - 1.0)).cos())
        })
        .collect();
    // Signed bin order: -n/2 .. n/2 - 1.
    let bins: Vec<i64> = (0..n as i64).map(|b| b - (n as i64) / 2).collect();
    let freqs_hz: Vec<f64> = bins.iter().map(|&b| b as f64 * fs / n as f64).collect();

    let n_frames = (samples.len() - fft_len) / hop + 1;
    let mut times = Vec::with_capacity(n_frames);
    let magnitude = map_indexed(n_frames, |f| {
        let start = f * hop;
        bins.iter()
            .map(|&b| {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n {
                    let ph = -std::f64::consts::TAU * b as f64 * i as f64 / n as f64;
                    acc += samples[start + i] * window[i] * C64::from_polar(1.0, ph);
                }
                acc.norm()
            })
            .collect()
    });
    for f in 0..n_frames {
        times.push((f * hop + fft_len / 2) as f64 * interval_s);
    }
    Ok(Spectrogram {
        times,
        freqs_hz,
        magnitude,
    })
}

/// Subcarrier weighting policy for the aggregation step.
///
/// Per-path delay phases rotate across subcarriers, so spreading real
/// weights over the band cancels paths instead of averaging noise; the
/// selection policies keep the aggregate coherent by concentrating on one
/// subcarrier.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightsPolicy {
    Uniform,
    /// Proportional to the observed average subcarrier power.
    SnrProportional,
    /// One-hot on the subcarrier with the most stable phase trajectory
    /// (highest first-lag autocorrelation of the observed series).
    Coherent,
}

/// First-lag temporal autocorrelation magnitude, normalized by power.
fn lag1_coherence(series: impl Iterator<Item = C64> + Clone) -> f64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut power = 0.0;
    let mut prev: Option<C64> = None;
    for z in series {
        if let Some(p) = prev {
            acc += z * p.conj();
        }
        power += z.norm_sqr();
        prev = Some(z);
    }
    if power > 0.0 {
        acc.norm() / power
    } else {
        0.0
    }
}

/// The station's feedback reference: the subcarrier with the most stable
/// anchor-antenna phase over the trace.
pub fn reference_subcarrier(trace: &CsiTrace) -> usize {
    let meta = *trace.meta();
    let anchor_tx = meta.n_tx - 1;
    (0..meta.n_sc)
        .max_by(|&a, &b| {
            let score = |k: usize| {
                lag1_coherence((0..meta.n_snapshots).map(|n| trace.entry(n, k, 0, anchor_tx)))
            };
            score(a).partial_cmp(&score(b)).expect("finite")
        })
        .expect("at least one subcarrier")
}

/// Full attack experiment parameters.
#[derive(Clone, Debug)]
pub struct AttackConfig {
    pub chan: ChannelConfig,
    pub b_phi: u32,
    pub b_psi: u32,
    pub eps_phi: f64,
    pub eps_psi: f64,
    pub window: usize,
    pub eavesdropper_snr_db: f64,
    pub weights: WeightsPolicy,
    pub schemes: Vec<Scheme>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            chan: ChannelConfig::default(),
            b_phi: 6,
            b_psi: 3,
            eps_phi: 0.1,
            eps_psi: 0.1,
            window: 256,
            eavesdropper_snr_db: 20.0,
            weights: WeightsPolicy::Coherent,
            schemes: vec![Scheme::PerfectSvd, Scheme::Deterministic, Scheme::DpSq],
        }
    }
}

/// Speed tracks recovered by the eavesdropper for each feedback scheme,
/// plus the ground truth at the window centers.
#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub times: Vec<f64>,
    pub true_speed_mps: Vec<f64>,
    pub tracks: Vec<(Scheme, SpeedEstimate)>,
}

impl AttackOutcome {
    /// Mean relative speed error `|v_hat - v| / v` of one scheme's track
    /// over centers with nonzero true speed.
    pub fn mean_rel_error(&self, scheme: Scheme) -> Option<f64> {
        let track = &self.tracks.iter().find(|(s, _)| *s == scheme)?.1;
        let mut acc = 0.0;
        let mut count = 0usize;
        for (i, &v_true) in self.true_speed_mps.iter().enumerate() {
            if v_true > 0.0 {
                acc += (track.speed_mps[i].abs() - v_true).abs() / v_true;
                count += 1;
            }
        }
        (count > 0).then(|| acc / count as f64)
    }
}

/// Shared state for one attack realization: the trace and the station's
/// per-snapshot exact beams, computed from its reference subcarrier.
pub struct AttackContext {
    trace: CsiTrace,
    exact_beams: Vec<ComplexMatrix>,
}

impl AttackContext {
    pub fn prepare(cfg: &AttackConfig) -> Result<Self> {
        let trace = generate_trace(&cfg.chan)?;
        let k_ref = reference_subcarrier(&trace);
        let exact_beams: Vec<ComplexMatrix> = map_indexed(trace.meta().n_snapshots, |n| {
            let h_ref = trace.matrix_at(n, k_ref);
            Ok::<_, Error>(svd(&h_ref)?.v.leading_cols(1))
        })
        .into_iter()
        .collect::<Result<_>>()?;
        Ok(Self { trace, exact_beams })
    }

    pub fn trace(&self) -> &CsiTrace {
        &self.trace
    }

    /// The aggregated effective-CSI snapshot series the eavesdropper works
    /// with under one feedback scheme. Quantized schemes round-trip through
    /// the report codec; every scheme shares the trace and the observation
    /// noise, so scheme comparisons are paired.
    pub fn effective_series(&self, cfg: &AttackConfig, scheme: Scheme) -> Result<Vec<C64>> {
        let meta = *self.trace.meta();
        let n_snapshots = meta.n_snapshots;
        let observed = match scheme {
            Scheme::PerfectSvd => observe_with_beams(
                &self.trace,
                &self.exact_beams,
                cfg.eavesdropper_snr_db,
                cfg.chan.seed,
            ),
            _ => {
                let payloads: Vec<Vec<u8>> = map_indexed(n_snapshots, |n| {
                    let angles = decompose(&self.exact_beams[n])?;
                    let mut dp_rng = stream(cfg.chan.seed, DOMAIN_DPSQ, n as u64);
                    let (phi_idx, psi_idx) = quantize_indices(
                        &angles,
                        scheme,
                        cfg.b_phi,
                        cfg.b_psi,
                        cfg.eps_phi,
                        cfg.eps_psi,
                        &mut dp_rng,
                    )?;
                    cbr::encode(&phi_idx, &psi_idx, meta.n_tx, 1, cfg.b_phi, cfg.b_psi)
                })
                .into_iter()
                .collect::<Result<_>>()?;
                observe_feedback(
                    &self.trace,
                    &payloads,
                    1,
                    cfg.b_phi,
                    cfg.b_psi,
                    cfg.eavesdropper_snr_db,
                    cfg.chan.seed,
                )?
            }
        };

        let weights = match cfg.weights {
            WeightsPolicy::Uniform => vec![1.0; meta.n_sc],
            WeightsPolicy::SnrProportional => {
                let mut w = vec![0.0; meta.n_sc];
                for row in &observed {
                    for (k, h) in row.iter().enumerate() {
                        w[k] += h.norm_sqr();
                    }
                }
                w
            }
            WeightsPolicy::Coherent => {
                let best = (0..meta.n_sc)
                    .max_by(|&a, &b| {
                        let score =
                            |k: usize| lag1_coherence(observed.iter().map(|row| row[k]));
                        score(a).partial_cmp(&score(b)).expect("finite")
                    })
                    .expect("subcarriers");
                let mut w = vec![0.0; meta.n_sc];
                w[best] = 1.0;
                w
            }
        };
        observed.iter().map(|row| aggregate(row, &weights)).collect()
    }
}

/// Runs the eavesdropper experiment on one trace realization.
pub fn run_attack(cfg: &AttackConfig) -> Result<AttackOutcome> {
    let ctx = AttackContext::prepare(cfg)?;
    let meta = *ctx.trace.meta();
    let snapshot_times = ctx.trace.times();

    let mut tracks = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let h_tilde = ctx.effective_series(cfg, scheme)?;
        let est = sliding_speed(&h_tilde, &snapshot_times, cfg.window, meta.f_c_hz)?;
        tracks.push((scheme, est));
    }

    let times = tracks
        .first()
        .map(|(_, est)| est.times.clone())
        .unwrap_or_default();
    let true_speed_mps = times
        .iter()
        .map(|&t| cfg.chan.speed_profile.speed_at(t))
        .collect();
    Ok(AttackOutcome {
        times,
        true_speed_mps,
        tracks,
    })
}

/// Paired mean relative errors over independently seeded traces.
///
/// Returns one `(scheme, errors-per-seed)` row per configured scheme; seed
/// `i` uses `base seed + i` for the trace, feedback, and observation noise,
/// so schemes are compared on identical randomness.
pub fn attack_error_sweep(
    cfg: &AttackConfig,
    n_seeds: usize,
) -> Result<Vec<(Scheme, Vec<f64>)>> {
    let outcomes = map_indexed(n_seeds, |i| {
        let mut per_seed = cfg.clone();
        per_seed.chan.seed = cfg.chan.seed + i as u64;
        let outcome = run_attack(&per_seed)?;
        cfg.schemes
            .iter()
            .map(|&s| {
                outcome
                    .mean_rel_error(s)
                    .ok_or_else(|| Error::Estimation("no nonzero-speed centers".into()))
            })
            .collect::<Result<Vec<f64>>>()
    });
    let mut rows: Vec<(Scheme, Vec<f64>)> = cfg
        .schemes
        .iter()
        .map(|&s| (s, Vec::with_capacity(n_seeds)))
        .collect();
    for outcome in outcomes {
        let errs = outcome?;
        for (row, e) in rows.iter_mut().zip(errs) {
            row.1.push(e);
        }
    }
    Ok(rows)
}
