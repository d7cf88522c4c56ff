//! Closed-form lowest-order model of the switch.
//!
//! Phase convention: the signal amplitude `alpha` and control amplitude
//! `beta` are taken real and positive; the pump phase lives entirely in
//! `arg(a_dc)`. Only the ratio `r = |A_DC / (αβ)|` and the pump phase
//! `θ_p = arg(A_DC · conj(αβ))` enter the conditional phase.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{wrap_phase, C64};

/// Largest amplitude magnitude for which the lowest-order expansion is used.
pub const VALIDITY_LIMIT: f64 = 0.5;
/// Conditional amplitudes below this modulus have no defined phase.
pub const VANISHING_AMPLITUDE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitchError {
    #[error("|{name}| = {value} exceeds the weak-field limit {VALIDITY_LIMIT}")]
    Validity { name: &'static str, value: f64 },
    #[error("bs2_transmissivity {0} outside [0, 1]")]
    Transmissivity(f64),
    #[error("control amplitude beta is zero; the conditional amplitude is undefined")]
    ZeroControl,
    #[error(
        "conditional amplitude vanishes (r = {r}, theta_p = {theta_p}); its phase is undefined"
    )]
    UndefinedPhase { r: f64, theta_p: f64 },
    #[error("ratio r = {0} must be finite and non-negative")]
    BadRatio(f64),
    #[error("polarization state has eps = 0")]
    ZeroEpsilon,
    #[error("coincidence subspace is empty")]
    EmptyCoincidenceSubspace,
    #[error("alpha·beta = 0, so the ratio r and pump phase are undefined")]
    NoAccidentalAmplitude,
}

/// Inputs of the analytic model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchParams {
    /// Signal coherent amplitude.
    pub alpha: C64,
    /// Control coherent amplitude.
    pub beta: C64,
    /// Down-conversion pair amplitude.
    pub a_dc: C64,
    /// Phase-reference amplitude arriving at the recombining splitter.
    pub ref_amp: C64,
    pub bs2_transmissivity: f64,
}

impl SwitchParams {
    /// Builds parameters from the regime ratio and pump phase, with real
    /// positive `alpha`, `beta` and `ref_amp`.
    pub fn from_ratio(alpha: f64, beta: f64, r: f64, theta_p: f64, ref_amp: f64, t: f64) -> Self {
        Self {
            alpha: C64::new(alpha, 0.0),
            beta: C64::new(beta, 0.0),
            a_dc: C64::from_polar(r * alpha * beta, theta_p),
            ref_amp: C64::new(ref_amp, 0.0),
            bs2_transmissivity: t,
        }
    }

    pub fn validate(&self) -> Result<(), SwitchError> {
        for (name, z) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("a_dc", self.a_dc),
            ("ref_amp", self.ref_amp),
        ] {
            if !(z.norm() <= VALIDITY_LIMIT) {
                return Err(SwitchError::Validity {
                    name,
                    value: z.norm(),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.bs2_transmissivity) {
            return Err(SwitchError::Transmissivity(self.bs2_transmissivity));
        }
        Ok(())
    }

    /// `r = |A_DC / (αβ)|`; infinite when `αβ = 0` and `A_DC ≠ 0`.
    pub fn ratio(&self) -> f64 {
        let acc = (self.alpha * self.beta).norm();
        let dc = self.a_dc.norm();
        if dc == 0.0 {
            0.0
        } else {
            dc / acc
        }
    }

    /// `θ_p = arg(A_DC · conj(αβ))`.
    pub fn pump_phase(&self) -> f64 {
        (self.a_dc * (self.alpha * self.beta).conj()).arg()
    }

    pub fn regime(&self) -> RegimeReport {
        RegimeReport::from_ratio(self.ratio())
    }

    /// Same parameters with the pump phase replaced, keeping `|A_DC|`.
    pub fn with_pump_phase(&self, theta_p: f64) -> Self {
        let ab = self.alpha * self.beta;
        let base = if ab.norm() == 0.0 { 0.0 } else { ab.arg() };
        Self {
            a_dc: C64::from_polar(self.a_dc.norm(), base + theta_p),
            ..*self
        }
    }
}

/// The four amplitudes `(c00, c10, c01, c11)`, unnormalized, with `c00 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairAmplitudes {
    pub c00: C64,
    pub c10: C64,
    pub c01: C64,
    pub c11: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Small,
    Boundary,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub r: f64,
    pub regime: Regime,
}

impl RegimeReport {
    pub fn from_ratio(r: f64) -> Self {
        let regime = if r < 1.0 {
            Regime::Small
        } else if r == 1.0 {
            Regime::Boundary
        } else {
            Regime::Large
        };
        Self { r, regime }
    }
}

/// `|0⟩|0⟩ + α|1⟩|0⟩ + β|0⟩|1⟩ + (αβ + A_DC)|1⟩|1⟩`.
pub fn evolved_amplitudes(params: &SwitchParams) -> PairAmplitudes {
    PairAmplitudes {
        c00: C64::new(1.0, 0.0),
        c10: params.alpha,
        c01: params.beta,
        c11: params.alpha * params.beta + params.a_dc,
    }
}

/// Mode-1 amplitude of the branch where mode 2 holds a photon, `α + A_DC/β`.
pub fn conditional_amplitude(params: &SwitchParams) -> Result<C64, SwitchError> {
    if params.beta.norm() == 0.0 {
        return Err(SwitchError::ZeroControl);
    }
    Ok(params.alpha + params.a_dc / params.beta)
}

/// `arg(1 + r e^{iθ_p})` in `(-π, π]`: the phase the control photon adds to
/// the signal relative to the no-photon branch.
pub fn conditional_phase_shift(r: f64, theta_p: f64) -> Result<f64, SwitchError> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(SwitchError::BadRatio(r));
    }
    let z = C64::new(1.0, 0.0) + C64::from_polar(r, theta_p);
    if z.norm() < VANISHING_AMPLITUDE {
        return Err(SwitchError::UndefinedPhase { r, theta_p });
    }
    Ok(wrap_phase(z.arg()))
}

/// `|1 + r e^{iθ_p}|²`: pair rate relative to the accidental rate.
pub fn pair_rate_modulation(r: f64, theta_p: f64) -> f64 {
    (C64::new(1.0, 0.0) + C64::from_polar(r, theta_p)).norm_sqr()
}

/// Largest conditional phase reachable for a given ratio: `arcsin r` below
/// one, `π` at or above.
pub fn max_phase_shift(r: f64) -> f64 {
    if r < 1.0 {
        r.asin()
    } else {
        PI
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryPoint {
    pub theta_p: f64,
    /// `None` where the conditional amplitude vanishes.
    pub phase_shift: Option<f64>,
}

/// Pointwise [`conditional_phase_shift`] over a grid of pump phases.
pub fn theory_curve(r: f64, grid: &[f64]) -> Vec<TheoryPoint> {
    grid.iter()
        .map(|&theta_p| TheoryPoint {
            theta_p,
            phase_shift: conditional_phase_shift(r, theta_p).ok(),
        })
        .collect()
}

/// Lowest-order Det. 1 click probability per pulse behind the recombining
/// splitter: `|√T·a + √(1−T)·ρ·e^{iφ_ref}|²`.
pub fn det1_singles_probability(mode1_amp: C64, params: &SwitchParams, phi_ref: f64) -> f64 {
    let t = params.bs2_transmissivity;
    (mode1_amp * t.sqrt() + params.ref_amp * C64::from_polar((1.0 - t).sqrt(), phi_ref)).norm_sqr()
}

/// Pair state `|00⟩ + ε(a|HH⟩ + b|HV⟩ + c|VH⟩ + d|VV⟩)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationPairState {
    pub eps: C64,
    pub a: C64,
    pub b: C64,
    pub c: C64,
    pub d: C64,
}

impl PolarizationPairState {
    pub fn new(eps: C64, a: C64, b: C64, c: C64, d: C64) -> Self {
        Self { eps, a, b, c, d }
    }

    pub fn coincidence_norm(&self) -> f64 {
        (self.a.norm_sqr() + self.b.norm_sqr() + self.c.norm_sqr() + self.d.norm_sqr()).sqrt()
    }

    /// Rescales `(a, b, c, d)` to unit norm and absorbs the factor into `eps`,
    /// leaving the physical state unchanged.
    pub fn normalized(&self) -> Result<Self, SwitchError> {
        let n = self.coincidence_norm();
        if n == 0.0 {
            return Err(SwitchError::EmptyCoincidenceSubspace);
        }
        Ok(Self {
            eps: self.eps * n,
            a: self.a / n,
            b: self.b / n,
            c: self.c / n,
            d: self.d / n,
        })
    }

    /// Multiplies `(a, b, c, d)` by a common phase.
    pub fn with_global_phase(&self, phi: f64) -> Self {
        let p = C64::from_polar(1.0, phi);
        Self {
            a: self.a * p,
            b: self.b * p,
            c: self.c * p,
            d: self.d * p,
            ..*self
        }
    }
}

/// Adds a pair amplitude to the VV term only, then renormalizes the
/// coincidence subspace.
pub fn polarization_switch(
    state: &PolarizationPairState,
    a_dc: C64,
) -> Result<PolarizationPairState, SwitchError> {
    if state.eps.norm() == 0.0 {
        return Err(SwitchError::ZeroEpsilon);
    }
    PolarizationPairState {
        d: state.d + a_dc / state.eps,
        ..*state
    }
    .normalized()
}

/// `2|ad − bc|` for a normalized two-qubit pure state.
pub fn concurrence(state: &PolarizationPairState) -> f64 {
    (2.0 * (state.a * state.d - state.b * state.c).norm()).min(1.0)
}

/// Outcome of checking the first-order c-φ mapping on [`evolved_amplitudes`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CphiReport {
    /// `|arg(c10/c00) − arg α|`.
    pub residual_10: f64,
    /// `|arg(c01/c00) − arg β|`.
    pub residual_01: f64,
    /// Measured `arg(c11 / (αβ))`.
    pub phase_shift: f64,
    /// Expected [`conditional_phase_shift`].
    pub expected_phase_shift: f64,
    pub residual_11: f64,
    pub regime: RegimeReport,
    /// `|φ| ≤ max_phase_shift(r)`.
    pub within_regime_bound: bool,
    pub passed: bool,
}

const CPHI_TOL: f64 = 1e-12;

/// Checks that, to first order, only the `|11⟩` amplitude acquires a phase,
/// and that this phase equals the conditional phase shift.
pub fn cphi_contract_check(params: &SwitchParams) -> Result<CphiReport, SwitchError> {
    let ab = params.alpha * params.beta;
    if ab.norm() == 0.0 {
        return Err(SwitchError::NoAccidentalAmplitude);
    }
    let amps = evolved_amplitudes(params);
    let residual_10 = wrap_phase((amps.c10 / amps.c00).arg() - params.alpha.arg()).abs();
    let residual_01 = wrap_phase((amps.c01 / amps.c00).arg() - params.beta.arg()).abs();
    let r = params.ratio();
    let expected = conditional_phase_shift(r, params.pump_phase())?;
    let phase_shift = wrap_phase((amps.c11 / ab).arg());
    let residual_11 = wrap_phase(phase_shift - expected).abs();
    let within_regime_bound = phase_shift.abs() <= max_phase_shift(r) + CPHI_TOL;
    Ok(CphiReport {
        residual_10,
        residual_01,
        phase_shift,
        expected_phase_shift: expected,
        residual_11,
        regime: RegimeReport::from_ratio(r),
        within_regime_bound,
        passed: residual_10 <= CPHI_TOL
            && residual_01 <= CPHI_TOL
            && residual_11 <= CPHI_TOL
            && within_regime_bound,
    })
}
