//! Simulation library for differentially private stochastic quantization of
//! Givens-angle CSI feedback in 802.11-style explicit beamforming.
//!
//! The crate covers the full experiment chain: small complex linear algebra
//! ([`cmatrix`]), the Givens/phase parametrization of precoders
//! ([`givens`]), deterministic and epsilon-DP stochastic angle quantization
//! with distortion predictors and a composition accountant ([`dpq`]), the
//! bit-exact compressed report codec ([`cbr`]), a tap-delay-line Rician
//! channel with LS sounding ([`channel`]), QAM link and beamforming-gain
//! experiments ([`link`]), the passive-eavesdropper speed-estimation
//! pipeline ([`adversary`]), and analytic-versus-Monte-Carlo validation
//! ([`validate`]).
//!
//! Randomness is derived from counter-based ChaCha streams ([`rng`]) and
//! all Monte Carlo loops run through [`exec::map_indexed`], so results are
//! bit-identical whether they run serially or on the rayon pool (default
//! `parallel` feature).


// Negated comparisons like `!(x > 0.0)` are used on purpose: unlike
// `x <= 0.0`, they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversary;
pub mod cbr;
pub mod channel;
pub mod cmatrix;
pub mod dpq;
pub mod error;
pub mod exec;
pub mod givens;
pub mod link;
pub mod rng;
pub mod validate;

pub use error::{Error, Result};
