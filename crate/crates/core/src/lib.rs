//! Simulation and analysis of a two-photon conditional-phase switch.
//!
//! A weak signal beam and a weak control beam cross inside a χ⁽²⁾ crystal
//! that is pumped strongly enough to down-convert photon pairs into the same
//! two modes. The pair amplitude interferes with the accidental product of the
//! two coherent inputs, so the optical phase of the signal depends on whether
//! the control mode holds a photon.
//!
//! The crate is split along the same lines as the analysis:
//!
//! * [`fock`]: exact truncated-Fock-space engine, used as the brute-force oracle.
//! * [`switch`]: closed-form lowest-order model (pair amplitudes, conditional
//!   phase, regime law, polarization variant).
//! * [`detection`]: Monte-Carlo photon-counting virtual experiment.
//! * [`fit`]: constrained-period cosine fits and phase-difference extraction.
//! * [`experiment`]: descriptor-driven runners that regenerate the fringe-pair
//!   and phase-sweep data sets, plus the validation suite.

// `!(x > 0.0)` style guards are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection;
pub mod experiment;
pub mod fit;
pub mod fock;
pub mod linalg;
pub mod switch;

pub use num_complex::Complex64 as C64;

/// Wraps an angle in radians into `(-π, π]`.
pub fn wrap_phase(theta: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = theta.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}
