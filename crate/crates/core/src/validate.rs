//! Analytic-versus-Monte-Carlo validation checks: quantizer MSE against its
//! closed form, the per-release DP ratio, the subspace-distortion bound,
//! LS estimator error variance, and the composition accountant.

use rand::Rng;

use crate::channel::{draw_rayleigh, sound_ls};
use crate::cmatrix::{chordal_distance_sq, svd};
use crate::dpq::{kappa, p_star, GridKind, PrivacyBudget, QuantGrid};
use crate::error::Result;
use crate::exec::map_indexed;
use crate::givens::{angle_count, decompose, wrap_phase};
use crate::link::{quantize_and_reconstruct, Scheme};
use crate::rng::{stream, DOMAIN_VALIDATE};

/// One named check with its measured value and the bound it must meet.
#[derive(Clone, Debug)]
pub struct CheckReport {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub pass: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: String, measured: f64, bound: f64, pass: bool, detail: String) -> Self {
        Self {
            name,
            measured,
            bound,
            pass,
            detail,
        }
    }
}

/// Monte Carlo sizes for the validation suite.
#[derive(Clone, Debug)]
pub struct ValidateConfig {
    pub mse_draws: usize,
    pub ratio_pairs: usize,
    pub ratio_draws: usize,
    pub distortion_channels: usize,
    pub ls_trials: usize,
    pub seed: u64,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            mse_draws: 1_000_000,
            ratio_pairs: 100,
            ratio_draws: 100_000,
            distortion_channels: 10_000,
            ls_trials: 100_000,
            seed: 1,
        }
    }
}

/// Quantizer MSE vs the closed form over a (bits, eps) grid, cell-uniform
/// inputs, 1% relative tolerance.
pub fn mse_closed_form_checks(cfg: &ValidateConfig) -> Result<Vec<CheckReport>> {
    let bits = [1u32, 3, 6];
    let eps_grid = [0.1f64, 1.0, 10.0];
    let combos: Vec<(u32, f64)> = bits
        .iter()
        .flat_map(|&b| eps_grid.iter().map(move |&e| (b, e)))
        .collect();
    let rows = map_indexed(combos.len(), |i| -> Result<CheckReport> {
        let (b, eps) = combos[i];
        let grid = QuantGrid::new(GridKind::Phase, b)?;
        let mut rng = stream(cfg.seed, DOMAIN_VALIDATE, 0x100 + i as u64);
        let mut acc = 0.0;
        for _ in 0..cfg.mse_draws {
            let a = -std::f64::consts::PI + rng.random::<f64>() * std::f64::consts::TAU;
            let q = grid.quantize_dpsq(a, eps, &mut rng)?;
            let err = wrap_phase(grid.level_value(q) - a);
            acc += err * err;
        }
        let empirical = acc / cfg.mse_draws as f64;
        let predicted = grid.mse_predicted(eps)?;
        let rel = (empirical - predicted).abs() / predicted;
        Ok(CheckReport::new(
            format!("angle-mse B={b} eps={eps}"),
            empirical,
            predicted,
            rel < 0.01,
            format!("relative deviation {rel:.5}"),
        ))
    });
    rows.into_iter().collect()
}

/// Per-release privacy ratio on shared-bracket input pairs.
///
/// The analytic release probabilities are only ever `p*` and `1 - p*`, so
/// any per-level ratio is bounded by `e^eps` exactly; the empirical check
/// allows 3-sigma binomial slack on the log-ratio.
pub fn dp_ratio_checks(cfg: &ValidateConfig, eps: f64) -> Result<Vec<CheckReport>> {
    let p = p_star(eps)?;
    let analytic = p / (1.0 - p);
    let mut reports = vec![CheckReport::new(
        format!("dp-ratio analytic eps={eps}"),
        analytic,
        eps.exp(),
        (analytic / eps.exp() - 1.0).abs() < 1e-12,
        "p*/(1-p*) must equal e^eps".into(),
    )];

    let grid = QuantGrid::new(GridKind::Phase, 3)?;
    let rows = map_indexed(cfg.ratio_pairs, |i| -> Result<(f64, f64)> {
        let mut rng = stream(cfg.seed, DOMAIN_VALIDATE, 0x200 + i as u64);
        let cell = rng.random_range(0..grid.levels());
        let a = grid.level_value(cell) + rng.random::<f64>() * grid.step();
        let a2 = grid.level_value(cell) + rng.random::<f64>() * grid.step();
        let lo = grid.bracket(a).lo;
        let count_lo = |input: f64, rng: &mut rand_chacha::ChaCha8Rng| -> Result<f64> {
            let mut hits = 0usize;
            for _ in 0..cfg.ratio_draws {
                if grid.quantize_dpsq(input, eps, rng)? == lo {
                    hits += 1;
                }
            }
            Ok(hits as f64 / cfg.ratio_draws as f64)
        };
        let p_a = count_lo(a, &mut rng)?;
        let p_a2 = count_lo(a2, &mut rng)?;
        // Worst log-ratio across the two levels and both directions.
        let mut worst = f64::NEG_INFINITY;
        let mut worst_slack = 0.0;
        for (x, y) in [
            (p_a, p_a2),
            (p_a2, p_a),
            (1.0 - p_a, 1.0 - p_a2),
            (1.0 - p_a2, 1.0 - p_a),
        ] {
            let log_ratio = (x / y).ln();
            if log_ratio > worst {
                worst = log_ratio;
                let n = cfg.ratio_draws as f64;
                worst_slack = 3.0 * ((1.0 - x) / (x * n) + (1.0 - y) / (y * n)).sqrt();
            }
        }
        Ok((worst, worst_slack))
    });
    let mut max_excess = f64::NEG_INFINITY;
    let mut worst_ratio = 0.0;
    for row in rows {
        let (log_ratio, slack) = row?;
        let excess = log_ratio - (eps + slack);
        if excess > max_excess {
            max_excess = excess;
            worst_ratio = log_ratio;
        }
    }
    reports.push(CheckReport::new(
        format!("dp-ratio empirical eps={eps} pairs={}", cfg.ratio_pairs),
        worst_ratio.exp(),
        eps.exp(),
        max_excess <= 0.0,
        format!("worst log-ratio excess over eps+3sigma: {max_excess:.5}"),
    ));
    Ok(reports)
}

/// Expected squared chordal distortion of DP-quantized precoders against
/// the analytic bound `d_q^2 + 2 N_s N_tot (sigma_psi^2 + sigma_phi^2)`.
pub fn distortion_bound_checks(
    cfg: &ValidateConfig,
    shapes: &[(usize, usize)],
    b_phi: u32,
    b_psi: u32,
    eps: f64,
) -> Result<Vec<CheckReport>> {
    let phase_grid = QuantGrid::new(GridKind::Phase, b_phi)?;
    let mixing_grid = QuantGrid::new(GridKind::Mixing, b_psi)?;
    let sigma_sum = phase_grid.mse_predicted(eps)? + mixing_grid.mse_predicted(eps)?;
    shapes
        .iter()
        .map(|&(n_t, n_s)| {
            let rows = map_indexed(cfg.distortion_channels, |i| -> Result<(f64, f64)> {
                let idx = ((n_t * 16 + n_s) as u64) << 32 | i as u64;
                let mut rng = stream(cfg.seed, DOMAIN_VALIDATE, idx);
                let h = draw_rayleigh(n_t, n_t, &mut rng);
                let v_star = svd(&h)?.v.leading_cols(n_s);
                let angles = decompose(&v_star)?;
                let v_q = quantize_and_reconstruct(
                    &angles,
                    Scheme::Deterministic,
                    b_phi,
                    b_psi,
                    eps,
                    eps,
                    &mut rng,
                )?;
                let v_hat = quantize_and_reconstruct(
                    &angles,
                    Scheme::DpSq,
                    b_phi,
                    b_psi,
                    eps,
                    eps,
                    &mut rng,
                )?;
                Ok((
                    chordal_distance_sq(&v_star, &v_q)?,
                    chordal_distance_sq(&v_star, &v_hat)?,
                ))
            });
            let mut dq_mean = 0.0;
            let mut dhat_mean = 0.0;
            for row in rows {
                let (dq, dhat) = row?;
                dq_mean += dq;
                dhat_mean += dhat;
            }
            dq_mean /= cfg.distortion_channels as f64;
            dhat_mean /= cfg.distortion_channels as f64;
            let n_tot = angle_count(n_t, n_s) as f64;
            let bound = dq_mean + 2.0 * n_s as f64 * n_tot * sigma_sum;
            Ok(CheckReport::new(
                format!("distortion-bound {n_t}x{n_s} B=({b_phi},{b_psi}) eps={eps}"),
                dhat_mean,
                bound,
                dhat_mean <= bound,
                format!(
                    "E[d_q^2]={dq_mean:.6}, slack {:.3}x",
                    bound / dhat_mean.max(1e-300)
                ),
            ))
        })
        .collect()
}

/// Deterministic-limit collapse: at eps = inf the DP quantizer's mean
/// distortion equals the deterministic floor.
pub fn distortion_deterministic_limit_check(cfg: &ValidateConfig) -> Result<CheckReport> {
    let n = cfg.distortion_channels.min(2000);
    let rows = map_indexed(n, |i| -> Result<(f64, f64)> {
        let mut rng = stream(cfg.seed, DOMAIN_VALIDATE, 0x300 + i as u64);
        let h = draw_rayleigh(2, 2, &mut rng);
        let v_star = svd(&h)?.v.leading_cols(1);
        let angles = decompose(&v_star)?;
        let v_q = quantize_and_reconstruct(
            &angles,
            Scheme::Deterministic,
            6,
            3,
            f64::INFINITY,
            f64::INFINITY,
            &mut rng,
        )?;
        let v_hat = quantize_and_reconstruct(
            &angles,
            Scheme::DpSq,
            6,
            3,
            f64::INFINITY,
            f64::INFINITY,
            &mut rng,
        )?;
        Ok((
            chordal_distance_sq(&v_star, &v_q)?,
            chordal_distance_sq(&v_star, &v_hat)?,
        ))
    });
    let mut diff: f64 = 0.0;
    for row in rows {
        let (dq, dhat) = row?;
        diff = diff.max((dq - dhat).abs());
    }
    Ok(CheckReport::new(
        "distortion-bound eps=inf collapses to deterministic floor".into(),
        diff,
        1e-15,
        diff <= 1e-15,
        "per-channel distortion must coincide at infinite budget".into(),
    ))
}

/// LS estimator error variance against `N0 / (P T_p)` for two pilot
/// settings, 2% relative tolerance.
pub fn ls_variance_checks(cfg: &ValidateConfig) -> Result<Vec<CheckReport>> {
    let settings = [(1.0f64, 4usize, 0.1f64), (2.0, 8, 0.2)];
    settings
        .iter()
        .enumerate()
        .map(|(si, &(p_tx, t_p, n0))| {
            let mut rng = stream(cfg.seed, DOMAIN_VALIDATE, 0x400 + si as u64);
            let h = draw_rayleigh(1, 2, &mut rng);
            let mut acc = 0.0;
            for _ in 0..cfg.ls_trials {
                let est = sound_ls(&h, p_tx, t_p, n0, &mut rng)?;
                for i in 0..h.data().len() {
                    acc += (est.data()[i] - h.data()[i]).norm_sqr();
                }
            }
            let var = acc / (cfg.ls_trials * h.data().len()) as f64;
            let expect = n0 / (p_tx * t_p as f64);
            let rel = (var - expect).abs() / expect;
            Ok(CheckReport::new(
                format!("ls-variance P={p_tx} Tp={t_p} N0={n0}"),
                var,
                expect,
                rel < 0.02,
                format!("relative deviation {rel:.5}"),
            ))
        })
        .collect()
}

/// Advanced-composition accountant against an independent evaluation of
/// the closed form, plus the sqrt-k scaling of the sublinear term.
pub fn composition_checks() -> Result<Vec<CheckReport>> {
    let budget = PrivacyBudget::new(0.1, 0.1, 1e-5)?;
    let mut reports = Vec::new();
    for k in [1u64, 10_000] {
        let got = budget.composed_eps(k)?;
        let eps = 0.1f64;
        let expect = (2.0 * k as f64 * (1.0f64 / 1e-5).ln()).sqrt() * eps
            + k as f64 * eps * (eps.exp() - 1.0);
        let err = (got - expect).abs();
        reports.push(CheckReport::new(
            format!("composition closed-form k={k}"),
            got,
            expect,
            err < 1e-9,
            format!("absolute deviation {err:.3e}"),
        ));
    }
    for k in [1u64, 100, 2500] {
        let (s1, _) = budget.composed_eps_terms(k)?;
        let (s4, _) = budget.composed_eps_terms(4 * k)?;
        let err = (s4 / s1 - 2.0).abs();
        reports.push(CheckReport::new(
            format!("composition sqrt-term scaling k={k} vs {}", 4 * k),
            s4 / s1,
            2.0,
            err < 1e-9,
            format!("ratio deviation {err:.3e}"),
        ));
    }
    // A sanity anchor for kappa's role in the accountant inputs.
    let k01 = kappa(0.1)?;
    reports.push(CheckReport::new(
        "kappa(0.1)".into(),
        k01,
        0.04996,
        (k01 - 0.04996).abs() < 1e-5,
        "bias factor at the headline budget".into(),
    ));
    Ok(reports)
}

/// The full validation suite with default shapes and parameters.
pub fn run_all(cfg: &ValidateConfig) -> Result<Vec<CheckReport>> {
    let mut reports = mse_closed_form_checks(cfg)?;
    reports.extend(dp_ratio_checks(cfg, 0.1)?);
    reports.extend(distortion_bound_checks(
        cfg,
        &[(2, 1), (4, 2), (8, 2)],
        6,
        3,
        0.1,
    )?);
    reports.push(distortion_deterministic_limit_check(cfg)?);
    reports.extend(ls_variance_checks(cfg)?);
    reports.extend(composition_checks()?);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> ValidateConfig {
        ValidateConfig {
            mse_draws: 100_000,
            ratio_pairs: 10,
            ratio_draws: 20_000,
            distortion_channels: 500,
            ls_trials: 20_000,
            seed: 7,
        }
    }

    #[test]
    fn reduced_suite_passes() {
        // Loosened sizes: the full-budget run is the acceptance suite's job.
        let cfg = quick_cfg();
        let reports = run_all(&cfg).unwrap();
        let failed: Vec<_> = reports
            .iter()
            .filter(|r| !r.pass)
            // Small-sample MSE checks can sit just outside 1%.
            .filter(|r| {
                !(r.name.starts_with("angle-mse")
                    && (r.measured - r.bound).abs() / r.bound < 0.03)
            })
            .collect();
        assert!(failed.is_empty(), "failed checks: {failed:?}");
    }

    #[test]
    fn distortion_bound_has_real_slack() {
        let cfg = quick_cfg();
        let reports = distortion_bound_checks(&cfg, &[(2, 1)], 6, 3, 0.1).unwrap();
        assert!(reports[0].pass);
        assert!(reports[0].measured < reports[0].bound * 0.8);
    }
}
