//! Optimal excitation design for parameter identification.
//!
//! Input signals are chosen to maximize global sensitivity measures of a
//! stochastic model's outputs with respect to uncertain parameters. Two
//! sensitivity engines are provided:
//!
//! * an intrusive polynomial-chaos surrogate for linear parameter-varying
//!   systems ([`pce`], [`lpv`], [`sensitivity`]), and
//! * a non-intrusive estimator based on Bures-Wasserstein discrepancies for
//!   black-box simulators ([`transport`]).
//!
//! [`signal`] holds input parameterizations and the cost functional,
//! [`optimize`] the differential-evolution driver, [`models`] the reference
//! systems and [`identify`] the least-squares identification used to check
//! the payoff of a design.

pub mod error;
pub mod identify;
pub mod lpv;
pub mod models;
pub mod ode;
pub mod optimize;
mod par;
pub mod pce;
pub mod sensitivity;
pub mod signal;
pub mod transport;

pub use error::{Error, Result};
