//! QAM link simulation with reconstructed beamformers: BER tables,
//! constellation dumps, and the relative beamforming-gain metric.
//!
//! The receiver is genie-aided: maximum-ratio combining against the known
//! effective channel `H v_hat`, which isolates beamforming distortion from
//! receiver estimation effects. One spatial stream is transmitted.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{draw_channel, draw_rayleigh, sound_ls, ChannelConfig};
use crate::cmatrix::{svd, C64, ComplexMatrix};
use crate::dpq::{GridKind, QuantGrid};
use crate::error::{Error, Result};
use crate::exec::map_indexed;
use crate::givens::{decompose, GivensAngles};
use crate::rng::{
    stream, DOMAIN_BITS, DOMAIN_CHANNEL, DOMAIN_DPSQ, DOMAIN_NOISE, DOMAIN_SOUNDING,
};

const BLOCK_SYMBOLS: usize = 128;
const EARLY_STOP_ERRORS: u64 = 200;
const EARLY_STOP_MIN_BITS: u64 = 10_000;

/// Feedback scheme applied between channel estimation and precoding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    /// Ideal right-singular vector of the true channel, no quantization.
    PerfectSvd,
    /// Nearest-bin quantization of the Givens angles.
    Deterministic,
    /// The epsilon-DP stochastic quantizer.
    DpSq,
}

impl Scheme {
    pub fn label(&self) -> &'static str {
        match self {
            Scheme::PerfectSvd => "perfect",
            Scheme::Deterministic => "det",
            Scheme::DpSq => "dpsq",
        }
    }
}

/// Link experiment parameters.
#[derive(Clone, Debug)]
pub struct LinkConfig {
    /// Square QAM order (power of 4).
    pub mod_order: usize,
    pub snr_db: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub b_phi: u32,
    pub b_psi: u32,
    pub eps_phi: f64,
    pub eps_psi: f64,
    /// Target payload bits per SNR point (early stop once every scheme has
    /// accumulated enough errors).
    pub n_bits: u64,
    pub seed: u64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            mod_order: 16,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            schemes: vec![Scheme::PerfectSvd, Scheme::Deterministic, Scheme::DpSq],
            b_phi: 6,
            b_psi: 3,
            eps_phi: 0.1,
            eps_psi: 0.1,
            n_bits: 1_000_000,
            seed: 1,
        }
    }
}

impl LinkConfig {
    pub fn validate(&self) -> Result<()> {
        qam_params(self.mod_order)?;
        if self.snr_db.is_empty() || self.schemes.is_empty() {
            return Err(Error::InvalidInput(
                "need at least one SNR point and one scheme".into(),
            ));
        }
        if self.n_bits < 10_000 {
            return Err(Error::InvalidInput(format!(
                "n_bits per point must be at least 10^4, got {}",
                self.n_bits
            )));
        }
        Ok(())
    }
}

struct QamParams {
    bits_per_symbol: u32,
    side: usize,
    scale: f64,
}

fn qam_params(m: usize) -> Result<QamParams> {
    let bits = m.trailing_zeros();
    if m < 4 || !m.is_power_of_two() || !bits.is_multiple_of(2) || m > 1 << 16 {
        return Err(Error::InvalidInput(format!(
            "modulation order must be a square power of 4, got {m}"
        )));
    }
    let side = 1usize << (bits / 2);
    Ok(QamParams {
        bits_per_symbol: bits,
        side,
        scale: (3.0 / (2.0 * (m as f64 - 1.0))).sqrt(),
    })
}

fn gray(l: usize) -> usize {
    l ^ (l >> 1)
}

fn gray_inverse(mut g: usize) -> usize {
    let mut l = g;
    while g > 0 {
        g >>= 1;
        l ^= g;
    }
    l
}

fn bits_to_value(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

/// Maps bits (0/1 values, MSB first per field) onto Gray-coded square QAM
/// symbols with unit average energy.
pub fn qam_map(bits: &[u8], m: usize) -> Result<Vec<C64>> {
    let p = qam_params(m)?;
    let bps = p.bits_per_symbol as usize;
    if !bits.len().is_multiple_of(bps) {
        return Err(Error::InvalidInput(format!(
            "bit count {} not divisible by {bps}",
            bits.len()
        )));
    }
    let half = bps / 2;
    Ok(bits
        .chunks_exact(bps)
        .map(|chunk| {
            let vi = gray_inverse(bits_to_value(&chunk[..half]));
            let vq = gray_inverse(bits_to_value(&chunk[half..]));
            C64::new(
                p.scale * (2.0 * vi as f64 - (p.side - 1) as f64),
                p.scale * (2.0 * vq as f64 - (p.side - 1) as f64),
            )
        })
        .collect())
}

fn slice_level(x: f64, p: &QamParams) -> usize {
    let l = ((x / p.scale + (p.side - 1) as f64) / 2.0).round();
    (l.max(0.0) as usize).min(p.side - 1)
}

/// Hard-decision per-symbol demapping (nearest constellation point).
pub fn qam_demap(symbols: &[C64], m: usize) -> Result<Vec<u8>> {
    let p = qam_params(m)?;
    let half = (p.bits_per_symbol / 2) as usize;
    let mut out = Vec::with_capacity(symbols.len() * p.bits_per_symbol as usize);
    for s in symbols {
        for v in [gray(slice_level(s.re, &p)), gray(slice_level(s.im, &p))] {
            for k in (0..half).rev() {
                out.push(((v >> k) & 1) as u8);
            }
        }
    }
    Ok(out)
}

/// Relative per-stream beamforming gain `||H v_hat||^2 / ||H v_star||^2`.
pub fn beamforming_gain(
    h: &ComplexMatrix,
    v_hat: &ComplexMatrix,
    v_star: &ComplexMatrix,
) -> Result<f64> {
    if v_hat.rows() != h.cols()
        || v_star.rows() != h.cols()
        || v_hat.cols() != 1
        || v_star.cols() != 1
    {
        return Err(Error::ShapeMismatch(
            "beamformers must be single columns matching the channel".into(),
        ));
    }
    let num = h.mul(v_hat)?.frob_norm_sq();
    let den = h.mul(v_star)?.frob_norm_sq();
    if den == 0.0 {
        return Err(Error::DegenerateChannel(
            "reference beam has zero effective channel".into(),
        ));
    }
    Ok(num / den)
}

/// Mean of per-column gains for multi-stream precoders.
pub fn average_gain(
    h: &ComplexMatrix,
    v_hat: &ComplexMatrix,
    v_star: &ComplexMatrix,
) -> Result<f64> {
    let n_s = v_hat.cols();
    let mut acc = 0.0;
    for k in 0..n_s {
        let hat = ComplexMatrix::from_fn(v_hat.rows(), 1, |r, _| v_hat[(r, k)]);
        let star = ComplexMatrix::from_fn(v_star.rows(), 1, |r, _| v_star[(r, k)]);
        acc += beamforming_gain(h, &hat, &star)?;
    }
    Ok(acc / n_s as f64)
}

/// Quantizes a decomposed angle set with the selected scheme and rebuilds
/// the precoder. The DP draws consume `rng` in storage order: all phases,
/// then all mixing angles.
pub fn quantize_and_reconstruct<R: Rng + ?Sized>(
    angles: &GivensAngles,
    scheme: Scheme,
    b_phi: u32,
    b_psi: u32,
    eps_phi: f64,
    eps_psi: f64,
    rng: &mut R,
) -> Result<ComplexMatrix> {
    let (phi_idx, psi_idx) =
        quantize_indices(angles, scheme, b_phi, b_psi, eps_phi, eps_psi, rng)?;
    reconstruct_from_indices(
        angles.n_t(),
        angles.n_s(),
        b_phi,
        b_psi,
        &phi_idx,
        &psi_idx,
    )
}

/// Quantized grid indices for an angle set under a feedback scheme.
pub fn quantize_indices<R: Rng + ?Sized>(
    angles: &GivensAngles,
    scheme: Scheme,
    b_phi: u32,
    b_psi: u32,
    eps_phi: f64,
    eps_psi: f64,
    rng: &mut R,
) -> Result<(Vec<u32>, Vec<u32>)> {
    let phase_grid = QuantGrid::new(GridKind::Phase, b_phi)?;
    let mixing_grid = QuantGrid::new(GridKind::Mixing, b_psi)?;
    let quantize = |grid: &QuantGrid, value: f64, eps: f64, rng: &mut R| -> Result<u32> {
        let idx = match scheme {
            Scheme::PerfectSvd => unreachable!("perfect scheme carries no indices"),
            Scheme::Deterministic => grid.quantize_det(value),
            Scheme::DpSq => grid.quantize_dpsq(value, eps, rng)?,
        };
        Ok(idx as u32)
    };
    if scheme == Scheme::PerfectSvd {
        return Err(Error::InvalidInput(
            "perfect scheme has no quantized representation".into(),
        ));
    }
    let mut phi_idx = Vec::with_capacity(angles.phases().len());
    for &phi in angles.phases() {
        phi_idx.push(quantize(&phase_grid, phi, eps_phi, rng)?);
    }
    let mut psi_idx = Vec::with_capacity(angles.mixings().len());
    for &psi in angles.mixings() {
        psi_idx.push(quantize(&mixing_grid, psi, eps_psi, rng)?);
    }
    Ok((phi_idx, psi_idx))
}

/// Decodes grid indices back to angle values and rebuilds the precoder.
pub fn reconstruct_from_indices(
    n_t: usize,
    n_s: usize,
    b_phi: u32,
    b_psi: u32,
    phi_idx: &[u32],
    psi_idx: &[u32],
) -> Result<ComplexMatrix> {
    let phase_grid = QuantGrid::new(GridKind::Phase, b_phi)?;
    let mixing_grid = QuantGrid::new(GridKind::Mixing, b_psi)?;
    let phases = phi_idx
        .iter()
        .map(|&i| phase_grid.level_value(i as usize))
        .collect();
    let mixings = psi_idx
        .iter()
        .map(|&i| mixing_grid.level_value(i as usize))
        .collect();
    Ok(GivensAngles::new(n_t, n_s, phases, mixings)?.reconstruct())
}

/// One BER measurement.
#[derive(Clone, Debug)]
pub struct BerPoint {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub ber: f64,
    pub stderr: f64,
    pub bits: u64,
    pub errors: u64,
}

struct BlockOutcome {
    errors: Vec<u64>,
    bits: u64,
    equalized: Option<Vec<Vec<C64>>>,
}

struct PointContext<'a> {
    link: &'a LinkConfig,
    chan: &'a ChannelConfig,
    n0: f64,
    point: usize,
}

impl PointContext<'_> {
    fn stream_index(&self, block: u64) -> u64 {
        ((self.point as u64) << 32) | block
    }

    /// Runs one fading block: a single channel draw, shared payload bits
    /// and receiver noise, one equalized symbol stream per scheme.
    fn run_block(&self, block: u64, collect_symbols: bool) -> Result<BlockOutcome> {
        let link = self.link;
        let idx = self.stream_index(block);
        let mut chan_rng = stream(link.seed, DOMAIN_CHANNEL, idx);
        let mut sound_rng = stream(link.seed, DOMAIN_SOUNDING, idx);
        let mut noise_rng = stream(link.seed, DOMAIN_NOISE, idx);
        let mut bits_rng = stream(link.seed, DOMAIN_BITS, idx);
        let mut dp_rng = stream(link.seed, DOMAIN_DPSQ, idx);

        let h = draw_channel(self.chan, &mut chan_rng);
        let true_svd = svd(&h)?;
        if true_svd.sigma[0] < 1e-12 {
            return Ok(BlockOutcome {
                errors: vec![0; link.schemes.len()],
                bits: 0,
                equalized: collect_symbols.then(|| vec![Vec::new(); link.schemes.len()]),
            });
        }
        let v_star = true_svd.v.leading_cols(1);

        let needs_feedback = link
            .schemes
            .iter()
            .any(|s| !matches!(s, Scheme::PerfectSvd));
        let angles = if needs_feedback {
            let est = sound_ls(&h, 1.0, self.chan.n_tx, self.n0, &mut sound_rng)?;
            Some(decompose(&svd(&est)?.v.leading_cols(1))?)
        } else {
            None
        };

        let p = qam_params(link.mod_order)?;
        let bps = p.bits_per_symbol as usize;
        let payload: Vec<u8> = (0..BLOCK_SYMBOLS * bps)
            .map(|_| bits_rng.random_range(0..=1u8))
            .collect();
        let symbols = qam_map(&payload, link.mod_order)?;
        let sigma = (self.n0 / 2.0).sqrt();
        let noise: Vec<Vec<C64>> = (0..BLOCK_SYMBOLS)
            .map(|_| {
                (0..h.rows())
                    .map(|_| {
                        C64::new(
                            sigma * noise_rng.sample::<f64, _>(StandardNormal),
                            sigma * noise_rng.sample::<f64, _>(StandardNormal),
                        )
                    })
                    .collect()
            })
            .collect();

        let mut errors = Vec::with_capacity(link.schemes.len());
        let mut equalized = collect_symbols.then(Vec::new);
        for &scheme in &link.schemes {
            let v_hat = match scheme {
                Scheme::PerfectSvd => v_star.clone(),
                _ => quantize_and_reconstruct(
                    angles.as_ref().expect("feedback angles"),
                    scheme,
                    link.b_phi,
                    link.b_psi,
                    link.eps_phi,
                    link.eps_psi,
                    &mut dp_rng,
                )?,
            };
            let h_eff = h.mul(&v_hat)?;
            let h_eff_sq = h_eff.frob_norm_sq();
            let mut received = Vec::with_capacity(BLOCK_SYMBOLS);
            for (n, s) in symbols.iter().enumerate() {
                // Genie-aided MRC on the known effective channel.
                let mut mrc = C64::new(0.0, 0.0);
                for r in 0..h.rows() {
                    let y = h_eff[(r, 0)] * s + noise[n][r];
                    mrc += h_eff[(r, 0)].conj() * y;
                }
                received.push(mrc / h_eff_sq);
            }
            let decoded = qam_demap(&received, link.mod_order)?;
            let errs = decoded
                .iter()
                .zip(&payload)
                .filter(|(a, b)| a != b)
                .count() as u64;
            errors.push(errs);
            if let Some(eq) = equalized.as_mut() {
                eq.push(received);
            }
        }
        Ok(BlockOutcome {
            errors,
            bits: (BLOCK_SYMBOLS * bps) as u64,
            equalized,
        })
    }
}

fn n0_from_snr_db(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Monte Carlo BER over the configured SNR grid, all schemes paired on the
/// same channel, payload, and noise realizations. SNR points run in
/// parallel; a fixed seed reproduces the whole table bit for bit.
pub fn simulate_ber(link: &LinkConfig, chan: &ChannelConfig) -> Result<Vec<BerPoint>> {
    link.validate()?;
    chan.validate()?;
    let results = map_indexed(link.snr_db.len(), |pi| -> Result<Vec<BerPoint>> {
        let snr_db = link.snr_db[pi];
        let ctx = PointContext {
            link,
            chan,
            n0: n0_from_snr_db(snr_db),
            point: pi,
        };
        let mut errors = vec![0u64; link.schemes.len()];
        let mut bits = 0u64;
        let mut block = 0u64;
        while bits < link.n_bits {
            let out = ctx.run_block(block, false)?;
            for (acc, e) in errors.iter_mut().zip(&out.errors) {
                *acc += e;
            }
            bits += out.bits;
            block += 1;
            if bits >= EARLY_STOP_MIN_BITS
                && errors.iter().all(|&e| e >= EARLY_STOP_ERRORS)
            {
                break;
            }
        }
        Ok(link
            .schemes
            .iter()
            .zip(&errors)
            .map(|(&scheme, &e)| {
                let ber = e as f64 / bits as f64;
                BerPoint {
                    scheme,
                    snr_db,
                    ber,
                    stderr: (ber * (1.0 - ber) / bits as f64).sqrt(),
                    bits,
                    errors: e,
                }
            })
            .collect())
    });
    let mut table = Vec::new();
    for point in results {
        table.extend(point?);
    }
    Ok(table)
}

/// Per-block error counts for every configured scheme at one SNR point,
/// for paired significance tests.
pub fn paired_block_errors(
    link: &LinkConfig,
    chan: &ChannelConfig,
    snr_db: f64,
    n_blocks: u64,
) -> Result<Vec<Vec<u64>>> {
    link.validate()?;
    chan.validate()?;
    let ctx = PointContext {
        link,
        chan,
        n0: n0_from_snr_db(snr_db),
        point: 0,
    };
    let rows = map_indexed(n_blocks as usize, |b| {
        ctx.run_block(b as u64, false).map(|o| o.errors)
    });
    rows.into_iter().collect()
}

/// Equalized received symbols per scheme at one SNR point.
pub fn constellation_dump(
    link: &LinkConfig,
    chan: &ChannelConfig,
    snr_db: f64,
    n_symbols: usize,
) -> Result<Vec<(Scheme, Vec<C64>)>> {
    link.validate()?;
    chan.validate()?;
    let ctx = PointContext {
        link,
        chan,
        n0: n0_from_snr_db(snr_db),
        point: 0,
    };
    let mut out: Vec<(Scheme, Vec<C64>)> =
        link.schemes.iter().map(|&s| (s, Vec::new())).collect();
    let mut block = 0u64;
    while out[0].1.len() < n_symbols {
        let res = ctx.run_block(block, true)?;
        let eq = res.equalized.expect("symbols requested");
        for (slot, mut sym) in out.iter_mut().zip(eq) {
            let take = (n_symbols - slot.1.len()).min(sym.len());
            slot.1.extend(sym.drain(..take));
        }
        block += 1;
    }
    Ok(out)
}

/// Channel model for the beamforming-gain experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GainChannelModel {
    /// Tap-delay-line Rician draw from the channel configuration.
    Rician,
    /// IID Rayleigh entries.
    Rayleigh,
}

#[derive(Clone, Debug)]
pub struct GainConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_realizations: usize,
    pub b_phi: u32,
    pub b_psi: u32,
    pub eps_phi: f64,
    pub eps_psi: f64,
    pub model: GainChannelModel,
    /// Optional LS sounding SNR before feedback; `None` feeds back the
    /// true right-singular vector's angles.
    pub sounding_snr_db: Option<f64>,
    pub seed: u64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self {
            n_tx: 2,
            n_rx: 1,
            n_realizations: 5000,
            b_phi: 6,
            b_psi: 3,
            eps_phi: 0.1,
            eps_psi: 0.1,
            model: GainChannelModel::Rician,
            sounding_snr_db: None,
            seed: 1,
        }
    }
}

/// Per-realization relative gains for the deterministic and DP schemes
/// (the perfect SVD reference is identically 1).
pub fn gain_samples(cfg: &GainConfig, chan: &ChannelConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if cfg.n_realizations == 0 {
        return Err(Error::InvalidInput("need at least one realization".into()));
    }
    let chan = ChannelConfig {
        n_tx: cfg.n_tx,
        n_rx: cfg.n_rx,
        ..chan.clone()
    };
    let rows = map_indexed(cfg.n_realizations, |i| -> Result<(f64, f64)> {
        let idx = i as u64;
        let mut chan_rng = stream(cfg.seed, DOMAIN_CHANNEL, idx);
        let mut dp_rng = stream(cfg.seed, DOMAIN_DPSQ, idx);
        let h = match cfg.model {
            GainChannelModel::Rician => draw_channel(&chan, &mut chan_rng),
            GainChannelModel::Rayleigh => draw_rayleigh(cfg.n_rx, cfg.n_tx, &mut chan_rng),
        };
        let s = svd(&h)?;
        if s.sigma[0] < 1e-12 {
            return Ok((1.0, 1.0));
        }
        let v_star = s.v.leading_cols(1);
        let feedback_v = match cfg.sounding_snr_db {
            Some(snr) => {
                let mut sound_rng = stream(cfg.seed, DOMAIN_SOUNDING, idx);
                let est = sound_ls(&h, 1.0, chan.n_tx, n0_from_snr_db(snr), &mut sound_rng)?;
                svd(&est)?.v.leading_cols(1)
            }
            None => v_star.clone(),
        };
        let angles = decompose(&feedback_v)?;
        let v_det = quantize_and_reconstruct(
            &angles,
            Scheme::Deterministic,
            cfg.b_phi,
            cfg.b_psi,
            cfg.eps_phi,
            cfg.eps_psi,
            &mut dp_rng,
        )?;
        let v_dp = quantize_and_reconstruct(
            &angles,
            Scheme::DpSq,
            cfg.b_phi,
            cfg.b_psi,
            cfg.eps_phi,
            cfg.eps_psi,
            &mut dp_rng,
        )?;
        Ok((
            beamforming_gain(&h, &v_det, &v_star)?,
            beamforming_gain(&h, &v_dp, &v_star)?,
        ))
    });
    let mut det = Vec::with_capacity(cfg.n_realizations);
    let mut dp = Vec::with_capacity(cfg.n_realizations);
    for row in rows {
        let (a, b) = row?;
        det.push(a);
        dp.push(b);
    }
    Ok((det, dp))
}

/// Median of a sample (averages the middle pair for even sizes).
pub fn median(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DOMAIN_VALIDATE;

    #[test]
    fn qam_round_trip_all_orders() {
        let mut rng = stream(1, DOMAIN_VALIDATE, 10);
        for m in [4usize, 16, 64, 256] {
            let bps = m.trailing_zeros() as usize;
            let bits: Vec<u8> = (0..bps * 200).map(|_| rng.random_range(0..=1u8)).collect();
            let symbols = qam_map(&bits, m).unwrap();
            assert_eq!(symbols.len(), 200);
            let back = qam_demap(&symbols, m).unwrap();
            assert_eq!(back, bits);
        }
    }

    #[test]
    fn qam_constellations_have_unit_energy() {
        for m in [4usize, 16, 64, 256] {
            let bps = m.trailing_zeros() as usize;
            // Enumerate every symbol once.
            let mut bits = Vec::new();
            for v in 0..m {
                for k in (0..bps).rev() {
                    bits.push(((v >> k) & 1) as u8);
                }
            }
            let symbols = qam_map(&bits, m).unwrap();
            let energy: f64 = symbols.iter().map(|s| s.norm_sqr()).sum::<f64>() / m as f64;
            assert!((energy - 1.0).abs() < 1e-12, "m={m}: energy {energy}");
        }
    }

    #[test]
    fn qam_rejects_bad_inputs() {
        assert!(qam_map(&[0, 1, 0], 16).is_err());
        assert!(qam_map(&[0, 1], 8).is_err());
    }

    #[test]
    fn qpsk_awgn_ber_matches_q_function() {
        // Eb/N0 = 4 dB: the Gray-QPSK bit error rate is
        // Q(sqrt(2 Eb/N0)) ~= 1.25e-2.
        let ebn0 = 10f64.powf(0.4);
        let n0 = 1.0 / (2.0 * ebn0);
        let sigma = (n0 / 2.0).sqrt();
        let mut rng = stream(2, DOMAIN_VALIDATE, 11);
        let n_bits = 1_000_000usize;
        let bits: Vec<u8> = (0..n_bits).map(|_| rng.random_range(0..=1u8)).collect();
        let symbols = qam_map(&bits, 4).unwrap();
        let noisy: Vec<C64> = symbols
            .iter()
            .map(|s| {
                s + C64::new(
                    sigma * rng.sample::<f64, _>(StandardNormal),
                    sigma * rng.sample::<f64, _>(StandardNormal),
                )
            })
            .collect();
        let decoded = qam_demap(&noisy, 4).unwrap();
        let errors = decoded.iter().zip(&bits).filter(|(a, b)| a != b).count();
        let ber = errors as f64 / n_bits as f64;
        assert!((ber - 1.25e-2).abs() < 1.25e-3, "ber {ber}");
    }

    #[test]
    fn gain_is_phase_invariant_and_bounded() {
        let h = ComplexMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        let v_star = ComplexMatrix::from_real(2, 1, &[1.0, 0.0]).unwrap();
        let rotated = ComplexMatrix::new(
            2,
            1,
            vec![C64::from_polar(1.0, 1.3), C64::new(0.0, 0.0)],
        )
        .unwrap();
        let g = beamforming_gain(&h, &rotated, &v_star).unwrap();
        assert!((g - 1.0).abs() < 1e-12);

        let swapped = ComplexMatrix::from_real(2, 1, &[0.0, 1.0]).unwrap();
        let g = beamforming_gain(&h, &swapped, &v_star).unwrap();
        assert!((g - 0.25).abs() < 1e-12);
    }

    #[test]
    fn average_gain_over_streams() {
        let h = ComplexMatrix::from_real(2, 2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        let v_star = ComplexMatrix::identity(2);
        assert!((average_gain(&h, &v_star, &v_star).unwrap() - 1.0).abs() < 1e-12);
        // Columns re-phased individually still give unit gain per stream.
        let rotated = ComplexMatrix::from_fn(2, 2, |r, c| {
            v_star[(r, c)] * C64::from_polar(1.0, 0.7 * (c as f64 + 1.0))
        });
        assert!((average_gain(&h, &rotated, &v_star).unwrap() - 1.0).abs() < 1e-12);
        let swapped = ComplexMatrix::from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let g = average_gain(&h, &swapped, &v_star).unwrap();
        assert!((g - (0.25 + 4.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn gain_rejects_degenerate_reference() {
        let h = ComplexMatrix::zeros(2, 2);
        let v = ComplexMatrix::from_real(2, 1, &[1.0, 0.0]).unwrap();
        assert!(matches!(
            beamforming_gain(&h, &v, &v),
            Err(Error::DegenerateChannel(_))
        ));
    }

    fn small_link() -> LinkConfig {
        LinkConfig {
            n_bits: 20_000,
            snr_db: vec![10.0],
            ..LinkConfig::default()
        }
    }

    #[test]
    fn ber_table_is_reproducible_and_ordered() {
        let link = small_link();
        let chan = ChannelConfig::default();
        let a = simulate_ber(&link, &chan).unwrap();
        let b = simulate_ber(&link, &chan).unwrap();
        assert_eq!(a.len(), 3);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.ber, y.ber);
            assert_eq!(x.bits, y.bits);
        }
        // Perfect feedback can only beat quantized feedback up to noise.
        let perfect = a.iter().find(|p| p.scheme == Scheme::PerfectSvd).unwrap();
        let dpsq = a.iter().find(|p| p.scheme == Scheme::DpSq).unwrap();
        assert!(perfect.ber <= dpsq.ber + 2.0 * dpsq.stderr.max(perfect.stderr));
    }

    #[test]
    fn ber_decreases_with_snr() {
        let link = LinkConfig {
            snr_db: vec![0.0, 10.0, 20.0],
            schemes: vec![Scheme::Deterministic],
            n_bits: 40_000,
            ..LinkConfig::default()
        };
        let table = simulate_ber(&link, &ChannelConfig::default()).unwrap();
        for w in table.windows(2) {
            let slack = 2.0 * (w[0].stderr + w[1].stderr);
            assert!(w[1].ber <= w[0].ber + slack);
        }
    }

    fn grid_rms(points: &[C64]) -> f64 {
        let grid = qam_map(
            &{
                let mut bits = Vec::new();
                for v in 0..16usize {
                    for k in (0..4).rev() {
                        bits.push(((v >> k) & 1) as u8);
                    }
                }
                bits
            },
            16,
        )
        .unwrap();
        (points
            .iter()
            .map(|p| {
                grid.iter()
                    .map(|g| (p - g).norm_sqr())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / points.len() as f64)
            .sqrt()
    }

    #[test]
    fn constellation_perfect_at_infinite_snr_sits_on_grid() {
        let link = LinkConfig {
            b_phi: 1,
            b_psi: 1,
            ..small_link()
        };
        let chan = ChannelConfig::default();
        let dump = constellation_dump(&link, &chan, f64::INFINITY, 512).unwrap();
        assert_eq!(dump.len(), 3);
        let perfect = &dump[0].1;
        assert_eq!(perfect.len(), 512);
        assert!(perfect.iter().all(|p| p.re.is_finite() && p.im.is_finite()));
        assert!(grid_rms(perfect) < 1e-9);
    }

    #[test]
    fn constellation_dpsq_disperses_more_than_deterministic() {
        // Worse beams lower the post-MRC SNR, so at a finite link SNR the
        // stochastic quantizer spreads the cloud further than nearest-bin.
        let link = LinkConfig {
            b_phi: 1,
            b_psi: 1,
            ..small_link()
        };
        let chan = ChannelConfig::default();
        let dump = constellation_dump(&link, &chan, 15.0, 4096).unwrap();
        let det = grid_rms(&dump[1].1);
        let dp = grid_rms(&dump[2].1);
        assert!(dp > det, "dpsq rms {dp} vs det rms {det}");
    }

    #[test]
    fn gain_experiment_orders_schemes() {
        let cfg = GainConfig {
            n_realizations: 500,
            ..GainConfig::default()
        };
        let (det, dp) = gain_samples(&cfg, &ChannelConfig::default()).unwrap();
        assert_eq!(det.len(), 500);
        let med_det = median(&det);
        let med_dp = median(&dp);
        assert!(med_det > med_dp, "det {med_det} vs dp {med_dp}");
        assert!(det.iter().all(|&g| (0.0..=1.0 + 1e-9).contains(&g)));
        assert!(dp.iter().all(|&g| (0.0..=1.0 + 1e-9).contains(&g)));
    }

    #[test]
    fn paired_blocks_are_deterministic() {
        let link = LinkConfig {
            schemes: vec![Scheme::Deterministic, Scheme::DpSq],
            ..small_link()
        };
        let chan = ChannelConfig::default();
        let a = paired_block_errors(&link, &chan, 15.0, 16).unwrap();
        let b = paired_block_errors(&link, &chan, 15.0, 16).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 16);
    }
}
