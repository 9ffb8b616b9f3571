//! Quantum light through free-space channels with beam wandering.
//!
//! The crate follows the chain from geometry to observables:
//!
//! * [`aperture`]: transmission efficiency of a deflected Gaussian beam through a
//!   circular aperture, exact and in the fitted `T₀² exp[-(r/R)^λ]` form;
//! * [`pdtc`]: the distribution of the transmission coefficient when the beam
//!   centre wanders as a 2-D Gaussian (log-negative generalized Rice / Weibull);
//! * [`channel`]: propagation of normally ordered moments through the channel;
//! * [`bell`]: CHSH test with a parametric down-conversion source;
//! * [`squeezing`]: quadrature and photon-number squeezing with post-selection;
//! * [`mc_verify`]: Monte Carlo cross-checks of the analytic results.
//!
//! Lengths are measured in units of the aperture radius unless stated otherwise.

// `!(x > 0.0)` style guards are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aperture;
pub mod bell;
pub mod channel;
pub mod cli;
pub mod error;
pub mod mc_verify;
pub mod pdtc;
pub mod specfun;
pub mod squeezing;

pub use error::{Error, Result};
