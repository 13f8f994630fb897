//! Uniform angular grids, deterministic quantization, the epsilon-DP
//! stochastic quantizer, closed-form distortion predictors, and an
//! advanced-composition privacy accountant.
//!
//! The mechanism releases one of the two grid levels bracketing the input:
//! the nearer level with probability `p*(eps) = e^eps / (e^eps + 1)` and the
//! farther one otherwise. The two release probabilities only ever take the
//! values `p*` and `1 - p*`, whose ratio is exactly `e^eps`, which is the
//! per-release privacy guarantee on shared-bracket inputs. The mean squared
//! angular error for a cell-uniform input is `(step^2 / 12) (4 - 3 kappa)`
//! with `kappa(eps) = (e^eps - 1)/(e^eps + 1)`; as `eps -> inf` the
//! mechanism degenerates to nearest-bin quantization and the MSE falls to
//! the usual `step^2 / 12`.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng;

use crate::error::{Error, Result};
use crate::givens::wrap_phase;

/// DP bias factor `kappa(eps) = (e^eps - 1)/(e^eps + 1) = tanh(eps / 2)`.
///
/// Strictly increasing, 0 at `eps -> 0+`, 1 at `eps = +inf` (allowed).
pub fn kappa(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok((0.5 * eps).tanh())
}

/// Probability of releasing the nearer bracketing level.
pub fn p_star(eps: f64) -> Result<f64> {
    check_eps(eps)?;
    Ok(1.0 / (1.0 + (-eps).exp()))
}

fn check_eps(eps: f64) -> Result<()> {
    if eps > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "privacy budget must be positive, got {eps}"
        )))
    }
}

/// Which angle family a grid quantizes. Phase grids are circular on
/// `[-pi, pi)`; mixing grids cover the clamped segment `[0, pi/2]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridKind {
    Phase,
    Mixing,
}

/// Uniform angular grid with `2^bits` levels `q_j = a_min + j * step`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantGrid {
    kind: GridKind,
    bits: u32,
    levels: usize,
    step: f64,
    a_min: f64,
}

/// The two grid levels bracketing an input, with the offset `r = a - q_lo`
/// in `[0, step]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bracket {
    pub lo: usize,
    pub hi: usize,
    pub offset: f64,
}

impl QuantGrid {
    pub fn new(kind: GridKind, bits: u32) -> Result<Self> {
        if bits == 0 || bits > 24 {
            return Err(Error::InvalidInput(format!(
                "grid bits must be in 1..=24, got {bits}"
            )));
        }
        let levels = 1usize << bits;
        let (range, a_min) = match kind {
            GridKind::Phase => (2.0 * PI, -PI),
            GridKind::Mixing => (FRAC_PI_2, 0.0),
        };
        Ok(Self {
            kind,
            bits,
            levels,
            step: range / levels as f64,
            a_min,
        })
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn level_value(&self, index: usize) -> f64 {
        debug_assert!(index < self.levels);
        self.a_min + index as f64 * self.step
    }

    /// Wraps (Phase) or clamps (Mixing) an angle into the grid domain.
    ///
    /// Mixing inputs above the top level `q_{L-1}` have no upper bracketing
    /// level and are clamped onto it before the mechanism runs, so the
    /// release support stays two-point everywhere.
    pub fn canonicalize(&self, a: f64) -> f64 {
        match self.kind {
            GridKind::Phase => wrap_phase(a),
            GridKind::Mixing => {
                let top = self.level_value(self.levels - 1);
                a.clamp(0.0, FRAC_PI_2).min(top)
            }
        }
    }

    /// The two nearest levels around `a`: `q_lo <= a <= q_lo + step`.
    ///
    /// Phase grids wrap (`lo = L-1` pairs with `hi = 0`); mixing inputs at
    /// or beyond the top level map onto the `(L-2, L-1)` pair with maximal
    /// offset. Total over all real inputs.
    pub fn bracket(&self, a: f64) -> Bracket {
        let a = self.canonicalize(a);
        match self.kind {
            GridKind::Phase => {
                let raw = ((a - self.a_min) / self.step).floor() as isize;
                let lo = raw.clamp(0, self.levels as isize - 1) as usize;
                let offset = (a - self.level_value(lo)).clamp(0.0, self.step);
                Bracket {
                    lo,
                    hi: (lo + 1) % self.levels,
                    offset,
                }
            }
            GridKind::Mixing => {
                let raw = (a / self.step).floor() as isize;
                let lo = raw.clamp(0, self.levels as isize - 2) as usize;
                let offset = (a - self.level_value(lo)).clamp(0.0, self.step);
                Bracket {
                    lo,
                    hi: lo + 1,
                    offset,
                }
            }
        }
    }

    /// Nearest-bin quantization; ties at half a step go to the lower level.
    pub fn quantize_det(&self, a: f64) -> usize {
        let b = self.bracket(a);
        if b.offset <= 0.5 * self.step {
            b.lo
        } else {
            b.hi
        }
    }

    /// DP stochastic quantization: releases the nearer bracketing level with
    /// probability `p*(eps)`, the farther with `1 - p*(eps)`.
    ///
    /// At `eps = +inf` this coincides with [`Self::quantize_det`] draw for
    /// draw. Output support is exactly the two bracketing levels.
    pub fn quantize_dpsq<R: Rng + ?Sized>(&self, a: f64, eps: f64, rng: &mut R) -> Result<usize> {
        let p = p_star(eps)?;
        let b = self.bracket(a);
        let (near, far) = if b.offset <= 0.5 * self.step {
            (b.lo, b.hi)
        } else {
            (b.hi, b.lo)
        };
        Ok(if rng.random::<f64>() < p { near } else { far })
    }

    /// Closed-form MSE of the DP quantizer for a cell-uniform input:
    /// `(step^2 / 12) (4 - 3 kappa(eps))`.
    pub fn mse_predicted(&self, eps: f64) -> Result<f64> {
        let k = kappa(eps)?;
        Ok(self.step * self.step / 12.0 * (4.0 - 3.0 * k))
    }

    /// Fixed-probability stochastic quantization MSE,
    /// `(step^2 / 12) (4 - 6p + 6p^2)`.
    ///
    /// Provided verbatim for reporting; it is not consistent with
    /// [`Self::mse_predicted`] under `p = p*(eps)` and is never used as an
    /// oracle elsewhere in the crate.
    pub fn mse_fixed_p(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "probability must lie in (0, 1], got {p}"
            )));
        }
        Ok(self.step * self.step / 12.0 * (4.0 - 6.0 * p + 6.0 * p * p))
    }
}

/// Per-angle privacy budgets plus a release counter for composition
/// accounting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyBudget {
    eps_phi: f64,
    eps_psi: f64,
    delta: f64,
    releases: u64,
}

impl PrivacyBudget {
    pub fn new(eps_phi: f64, eps_psi: f64, delta: f64) -> Result<Self> {
        for (name, eps) in [("eps_phi", eps_phi), ("eps_psi", eps_psi)] {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be finite and positive, got {eps}"
                )));
            }
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "delta must lie in (0, 1), got {delta}"
            )));
        }
        Ok(Self {
            eps_phi,
            eps_psi,
            delta,
            releases: 0,
        })
    }

    pub fn eps_phi(&self) -> f64 {
        self.eps_phi
    }

    pub fn eps_psi(&self) -> f64 {
        self.eps_psi
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn releases(&self) -> u64 {
        self.releases
    }

    pub fn max_eps(&self) -> f64 {
        self.eps_phi.max(self.eps_psi)
    }

    /// Counts `n` additional protected releases.
    pub fn record_releases(&mut self, n: u64) {
        self.releases += n;
    }

    /// Advanced-composition terms for `k` releases at `eps = max(eps_phi,
    /// eps_psi)`: the sublinear term `sqrt(2 k ln(1/delta)) eps` and the
    /// linear term `k eps (e^eps - 1)`.
    pub fn composed_eps_terms(&self, k: u64) -> Result<(f64, f64)> {
        if k == 0 {
            return Err(Error::InvalidInput(
                "composition requires at least one release".into(),
            ));
        }
        let eps = self.max_eps();
        let kf = k as f64;
        let sqrt_term = (2.0 * kf * (1.0 / self.delta).ln()).sqrt() * eps;
        let linear_term = kf * eps * (eps.exp() - 1.0);
        Ok((sqrt_term, linear_term))
    }

    /// Total advanced-composition privacy loss over `k` releases.
    pub fn composed_eps(&self, k: u64) -> Result<f64> {
        let (s, l) = self.composed_eps_terms(k)?;
        Ok(s + l)
    }

    /// Composition over the releases recorded so far (0 if none).
    pub fn composed_total(&self) -> f64 {
        if self.releases == 0 {
            0.0
        } else {
            self.composed_eps(self.releases).expect("releases >= 1")
        }
    }
}
