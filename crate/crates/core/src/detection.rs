//! Monte-Carlo photon-counting virtual experiment.
//!
//! Every laser pulse ends in one of four joint outcomes at the two threshold
//! detectors: nothing, Det. 1 alone, Det. 2 alone, or both (a coincidence).
//! The per-pulse probabilities come from the lowest-order switch model, and
//! each reference-delay step draws its counts from a multinomial over
//! `round(rep_rate × dwell_time)` pulses.

use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fock::ClickDistribution;
use crate::switch::{evolved_amplitudes, SwitchError, SwitchParams};
use crate::C64;

/// Ti:sapphire repetition rate, pulses per second.
pub const DEFAULT_REP_RATE: f64 = 8.0e7;
/// Signal/control/reference centre wavelength.
pub const DEFAULT_WAVELENGTH_NM: f64 = 810.0;
/// Reference-delay step.
pub const DEFAULT_STEP_UM: f64 = 0.04;
/// 61 steps of 0.04 μm cover just over three 0.81 μm fringes.
pub const DEFAULT_STEP_COUNT: usize = 61;
/// Recombining splitter (90/10 T/R like every splitter in the setup).
pub const DEFAULT_BS2_TRANSMISSIVITY: f64 = 0.9;
/// Per-step dwell in the large phase-shift regime.
pub const LARGE_REGIME_DWELL_S: f64 = 40.0;
/// Per-step dwell in the small phase-shift regime.
pub const SMALL_REGIME_DWELL_S: f64 = 1.0;

/// Probabilities may overshoot 1 by this much before the model is rejected.
const OVERSHOOT_TOL: f64 = 1e-3;

const SCAN_CSV_VERSION: &str = "# cphase scan-record v1";

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error("{name} = {value} is invalid: {reason}")]
    Config {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("inconsistent rates: implied per-pulse probability {name} = {value:.4} exceeds 1")]
    InconsistentRates { name: &'static str, value: f64 },
    #[error("model validity: per-pulse probability {name} = {value:.4} exceeds 1")]
    ModelValidity { name: &'static str, value: f64 },
    #[error("scan csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("scan csv: missing version line `{SCAN_CSV_VERSION}`")]
    CsvVersion,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Measured rates (s⁻¹) that pin down the amplitudes of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSet {
    /// Det. 1 singles from the signal beam alone.
    pub singles_1_sig: f64,
    /// Det. 1 singles from the phase reference alone.
    pub singles_1_ref: f64,
    /// Det. 2 singles from the control beam.
    pub singles_2: f64,
    /// Signal–control coincidences without interference (accidentals).
    pub acc_coinc: f64,
    /// Coincidences from down-conversion alone.
    pub dc_coinc: f64,
}

impl RateSet {
    /// Small phase-shift calibration: 256 s⁻¹ accidentals, 4.7 s⁻¹ pairs.
    pub const SMALL_REGIME: RateSet = RateSet {
        singles_1_sig: 88.0e3,
        singles_1_ref: 79.0e3,
        singles_2: 282.0e3,
        acc_coinc: 256.0,
        dc_coinc: 4.7,
    };

    /// Large phase-shift calibration: 1.1 s⁻¹ accidentals, 5.2 s⁻¹ pairs.
    pub const LARGE_REGIME: RateSet = RateSet {
        singles_1_sig: 700.0,
        singles_1_ref: 8600.0,
        singles_2: 129.0e3,
        acc_coinc: 1.1,
        dc_coinc: 5.2,
    };

    /// `r = √(dc_coinc / acc_coinc)`.
    pub fn ratio(&self) -> f64 {
        (self.dc_coinc / self.acc_coinc).sqrt()
    }
}

/// Amplitudes recovered from a [`RateSet`], plus how well the Det. 2 singles
/// are reproduced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    /// Calibrated parameters at pump phase zero.
    pub switch: SwitchParams,
    pub r: f64,
    /// Det. 2 singles implied by the calibrated control amplitude.
    pub implied_singles_2: f64,
    /// `(implied − quoted) / quoted`.
    pub singles_2_residual: f64,
}

/// Solves amplitude magnitudes from measured rates.
///
/// `|α|²` and `|ρ|²` come from the Det. 1 singles of each arm. `|β|²` is
/// fixed by the accidental coincidence rate, `acc = rep·η₁η₂·T·p(α)·p(β)`
/// with `p(a) = |a|²/(1+|a|²)` the one-photon share of a weak beam, so
/// the coincidence channel reproduces the quoted value exactly; the Det. 2
/// singles this implies are reported alongside. `|A_DC| = |αβ|·√(dc/acc)`.
pub fn calibrate_from_rates(
    rates: &RateSet,
    rep_rate: f64,
    det1_efficiency: f64,
    det2_efficiency: f64,
    bs2_transmissivity: f64,
) -> Result<Calibration, DetectionError> {
    for (name, value) in [
        ("singles_1_sig", rates.singles_1_sig),
        ("singles_1_ref", rates.singles_1_ref),
        ("singles_2", rates.singles_2),
        ("dc_coinc", rates.dc_coinc),
    ] {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(DetectionError::Config {
                name,
                value,
                reason: "rates must be non-negative",
            });
        }
    }
    if !(rates.acc_coinc > 0.0 && rates.acc_coinc.is_finite()) {
        return Err(DetectionError::Config {
            name: "acc_coinc",
            value: rates.acc_coinc,
            reason: "accidental coincidence rate must be positive",
        });
    }
    if !(rates.singles_1_sig > 0.0) {
        return Err(DetectionError::Config {
            name: "singles_1_sig",
            value: rates.singles_1_sig,
            reason: "signal singles must be positive to resolve the control amplitude",
        });
    }
    if !(rep_rate > 0.0) {
        return Err(DetectionError::Config {
            name: "rep_rate",
            value: rep_rate,
            reason: "must be positive",
        });
    }
    for (name, value) in [
        ("det1_efficiency", det1_efficiency),
        ("det2_efficiency", det2_efficiency),
    ] {
        if !(value > 0.0 && value <= 1.0) {
            return Err(DetectionError::Config {
                name,
                value,
                reason: "must lie in (0, 1]",
            });
        }
    }
    if !(0.0..=1.0).contains(&bs2_transmissivity) {
        return Err(SwitchError::Transmissivity(bs2_transmissivity).into());
    }

    let t = bs2_transmissivity;
    // Per-pulse photon probabilities of each beam alone; the branch norms of
    // `per_pulse_probabilities` turn them into `|a|²/(1+|a|²)`.
    let signal_p = rates.singles_1_sig / (rep_rate * det1_efficiency * t);
    let ref_sq = if rates.singles_1_ref == 0.0 {
        0.0
    } else {
        rates.singles_1_ref / (rep_rate * det1_efficiency * (1.0 - t))
    };
    let control_p = rates.acc_coinc / (det2_efficiency * rates.singles_1_sig);
    for (name, value) in [
        ("signal photon", signal_p),
        ("|ref_amp|^2", ref_sq),
        ("control photon", control_p),
    ] {
        if !(value < 1.0) {
            return Err(DetectionError::InconsistentRates { name, value });
        }
    }
    let alpha_sq = signal_p / (1.0 - signal_p);
    let beta_sq = control_p / (1.0 - control_p);
    let r = rates.ratio();
    let switch =
        SwitchParams::from_ratio(alpha_sq.sqrt(), beta_sq.sqrt(), r, 0.0, ref_sq.sqrt(), t);
    switch.validate()?;
    let implied_singles_2 = rep_rate * det2_efficiency * control_p;
    let singles_2_residual = if rates.singles_2 > 0.0 {
        (implied_singles_2 - rates.singles_2) / rates.singles_2
    } else {
        0.0
    };
    Ok(Calibration {
        switch,
        r,
        implied_singles_2,
        singles_2_residual,
    })
}

/// Everything the virtual source and detectors need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceConfig {
    pub rep_rate: f64,
    pub dwell_time: f64,
    pub switch: SwitchParams,
    pub det1_efficiency: f64,
    pub det2_efficiency: f64,
    pub dark_rate_1: f64,
    pub dark_rate_2: f64,
    /// Extra flat coincidence background, s⁻¹.
    pub accidental_floor: f64,
    pub rng_seed: u64,
}

impl SourceConfig {
    /// Ideal detectors, no darks or background.
    pub fn new(switch: SwitchParams, rep_rate: f64, dwell_time: f64, rng_seed: u64) -> Self {
        Self {
            rep_rate,
            dwell_time,
            switch,
            det1_efficiency: 1.0,
            det2_efficiency: 1.0,
            dark_rate_1: 0.0,
            dark_rate_2: 0.0,
            accidental_floor: 0.0,
            rng_seed,
        }
    }

    /// Calibrates against `rates` with ideal detectors at pump phase `theta_p`.
    pub fn from_rates(
        rates: &RateSet,
        theta_p: f64,
        dwell_time: f64,
        rng_seed: u64,
    ) -> Result<Self, DetectionError> {
        let cal = calibrate_from_rates(
            rates,
            DEFAULT_REP_RATE,
            1.0,
            1.0,
            DEFAULT_BS2_TRANSMISSIVITY,
        )?;
        Ok(Self::new(
            cal.switch.with_pump_phase(theta_p),
            DEFAULT_REP_RATE,
            dwell_time,
            rng_seed,
        ))
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(self.rep_rate * self.dwell_time >= 1.0) {
            return Err(DetectionError::Config {
                name: "dwell_time",
                value: self.dwell_time,
                reason: "rep_rate × dwell_time must be at least one pulse",
            });
        }
        for (name, value) in [
            ("det1_efficiency", self.det1_efficiency),
            ("det2_efficiency", self.det2_efficiency),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(DetectionError::Config {
                    name,
                    value,
                    reason: "must lie in [0, 1]",
                });
            }
        }
        for (name, value) in [
            ("dark_rate_1", self.dark_rate_1),
            ("dark_rate_2", self.dark_rate_2),
            ("accidental_floor", self.accidental_floor),
        ] {
            if !(value >= 0.0 && value <= self.rep_rate) {
                return Err(DetectionError::Config {
                    name,
                    value,
                    reason: "must lie in [0, rep_rate]",
                });
            }
        }
        self.switch.validate()?;
        Ok(())
    }

    pub fn n_pulses(&self) -> u64 {
        (self.rep_rate * self.dwell_time).round() as u64
    }
}

/// Reference-delay scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSpec {
    pub start_um: f64,
    pub step_um: f64,
    pub count: usize,
    pub wavelength_nm: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            start_um: 0.0,
            step_um: DEFAULT_STEP_UM,
            count: DEFAULT_STEP_COUNT,
            wavelength_nm: DEFAULT_WAVELENGTH_NM,
        }
    }
}

impl ScanSpec {
    /// Fringe period in delay units (μm).
    pub fn period_um(&self) -> f64 {
        self.wavelength_nm / 1000.0
    }

    pub fn delay(&self, index: usize) -> f64 {
        self.start_um + index as f64 * self.step_um
    }

    /// `2π · delay / λ`.
    pub fn phi_ref(&self, delay_um: f64) -> f64 {
        TAU * delay_um / self.period_um()
    }

    pub fn validate(&self) -> Result<(), DetectionError> {
        if !(self.step_um > 0.0 && self.step_um.is_finite()) {
            return Err(DetectionError::Config {
                name: "step_um",
                value: self.step_um,
                reason: "must be positive",
            });
        }
        if !(self.wavelength_nm > 0.0 && self.wavelength_nm.is_finite()) {
            return Err(DetectionError::Config {
                name: "wavelength_nm",
                value: self.wavelength_nm,
                reason: "must be positive",
            });
        }
        if !self.start_um.is_finite() {
            return Err(DetectionError::Config {
                name: "start_um",
                value: self.start_um,
                reason: "must be finite",
            });
        }
        // A hair of slack so 61 × 0.04 μm counts as three 0.81 μm fringes.
        if (self.count as f64) * self.step_um < 3.0 * self.period_um() * (1.0 - 1e-9) {
            return Err(DetectionError::Config {
                name: "count",
                value: self.count as f64,
                reason: "scan must cover at least three fringe periods",
            });
        }
        Ok(())
    }
}

/// Counts recorded at one reference-delay step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanPoint {
    #[serde(rename = "delay_um")]
    pub delay_um: OrderedF64,
    #[serde(rename = "phi_ref_rad")]
    pub phi_ref: OrderedF64,
    pub n_pulses: u64,
    #[serde(rename = "singles1")]
    pub singles_1: u64,
    #[serde(rename = "singles2")]
    pub singles_2: u64,
    #[serde(rename = "coinc")]
    pub coincidences: u64,
}

/// `f64` wrapper with bitwise equality so records compare exactly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderedF64(pub f64);

impl PartialEq for OrderedF64 {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits()
    }
}
impl Eq for OrderedF64 {}

/// A full reference-delay scan.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScanRecord {
    pub points: Vec<ScanPoint>,
}

impl ScanRecord {
    pub fn delays(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.delay_um.0).collect()
    }

    pub fn singles_1(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.singles_1 as f64).collect()
    }

    pub fn singles_2(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.singles_2 as f64).collect()
    }

    pub fn coincidences(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.coincidences as f64).collect()
    }

    /// `coinc ≤ min(singles)` and every count ≤ pulses, at every step.
    pub fn is_consistent(&self) -> bool {
        self.points.iter().all(|p| {
            p.coincidences <= p.singles_1.min(p.singles_2)
                && p.singles_1 <= p.n_pulses
                && p.singles_2 <= p.n_pulses
        })
    }

    /// Writes the versioned CSV: a comment line, the header row, one row per step.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<(), DetectionError> {
        writeln!(out, "{SCAN_CSV_VERSION}")?;
        let mut w = csv::Writer::from_writer(out);
        for p in &self.points {
            w.serialize(p)?;
        }
        if self.points.is_empty() {
            w.write_record([
                "delay_um",
                "phi_ref_rad",
                "n_pulses",
                "singles1",
                "singles2",
                "coinc",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    pub fn read_csv<R: Read>(mut input: R) -> Result<Self, DetectionError> {
        let mut text = String::new();
        input.read_to_string(&mut text)?;
        if !text
            .lines()
            .next()
            .is_some_and(|l| l.trim() == SCAN_CSV_VERSION)
        {
            return Err(DetectionError::CsvVersion);
        }
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let points = r.deserialize().collect::<Result<Vec<ScanPoint>, _>>()?;
        Ok(Self { points })
    }
}

/// Joint click probabilities for one pulse at reference phase `phi_ref`.
///
/// The pulse is split on the control mode: the photon branch carries
/// `c₀₁|0⟩ + c₁₁|1⟩` on the signal mode, the empty branch `c₀₀|0⟩ + c₁₀|1⟩`,
/// with `q` the photon branch's share of the norm. Det. 1 behind the
/// recombining splitter fires with `T⟨n⟩ + (1−T)|ρ|² + 2√(T(1−T))·Re(⟨a⟩ρ̄e^{−iφ})`
/// in each branch (scaled by `η₁`), which is the lowest-order fringe
/// `|√T·a + √(1−T)·ρe^{iφ}|²` when the branch is mostly vacuum. Det. 2 sees
/// the control photon with efficiency `η₂`. Dark counts and the flat
/// accidental floor are independent per-pulse events OR-ed on top.
pub fn per_pulse_probabilities(
    config: &SourceConfig,
    phi_ref: f64,
) -> Result<ClickDistribution, DetectionError> {
    let sw = &config.switch;
    sw.validate()?;
    let amps = evolved_amplitudes(sw);
    let (w0, p0) = branch_click(amps.c00, amps.c10, sw, phi_ref);
    let (w1, p1) = branch_click(amps.c01, amps.c11, sw, phi_ref);
    let q = w1 / (w0 + w1);
    let f0 = checked_probability("det1 (no control photon)", config.det1_efficiency * p0)?;
    let f1 = checked_probability("det1 (control photon)", config.det1_efficiency * p1)?;
    let eta2 = config.det2_efficiency;

    let both = eta2 * q * f1;
    let det2_only = eta2 * q * (1.0 - f1);
    let det1_only = (1.0 - q) * f0 + (1.0 - eta2) * q * f1;
    let none = (1.0 - q) * (1.0 - f0) + (1.0 - eta2) * q * (1.0 - f1);
    let photons = ClickDistribution {
        none,
        det1_only,
        det2_only,
        both,
    };

    let d1 = checked_probability(
        "dark_rate_1 per pulse",
        config.dark_rate_1 / config.rep_rate,
    )?;
    let d2 = checked_probability(
        "dark_rate_2 per pulse",
        config.dark_rate_2 / config.rep_rate,
    )?;
    let fl = checked_probability(
        "accidental_floor per pulse",
        config.accidental_floor / config.rep_rate,
    )?;
    if d1 == 0.0 && d2 == 0.0 && fl == 0.0 {
        return Ok(photons);
    }
    // Extra clicks independent of the light: (none, 1 only, 2 only, both).
    let quiet = (1.0 - d1) * (1.0 - d2) * (1.0 - fl);
    let extra1 = d1 * (1.0 - d2) * (1.0 - fl);
    let extra2 = (1.0 - d1) * d2 * (1.0 - fl);
    let extra_both = fl + (1.0 - fl) * d1 * d2;
    Ok(ClickDistribution {
        none: photons.none * quiet,
        det1_only: photons.det1_only * (quiet + extra1) + photons.none * extra1,
        det2_only: photons.det2_only * (quiet + extra2) + photons.none * extra2,
        both: photons.both
            + photons.none * extra_both
            + photons.det1_only * (extra2 + extra_both)
            + photons.det2_only * (extra1 + extra_both),
    })
}

/// Norm of the signal-mode branch `u|0⟩ + v|1⟩` and the Det. 1 click
/// probability it produces.
fn branch_click(u: C64, v: C64, sw: &SwitchParams, phi_ref: f64) -> (f64, f64) {
    let t = sw.bs2_transmissivity;
    let reference = (1.0 - t) * sw.ref_amp.norm_sqr();
    let norm = u.norm_sqr() + v.norm_sqr();
    if norm == 0.0 {
        return (0.0, reference);
    }
    let mean_n = v.norm_sqr() / norm;
    let mean_a = u.conj() * v / norm;
    let lo = sw.ref_amp * C64::from_polar(1.0, phi_ref);
    let cross = 2.0 * (t * (1.0 - t)).sqrt() * (mean_a * lo.conj()).re;
    (norm, t * mean_n + reference + cross)
}

fn checked_probability(name: &'static str, p: f64) -> Result<f64, DetectionError> {
    if !(p <= 1.0 + OVERSHOOT_TOL) || p.is_nan() {
        return Err(DetectionError::ModelValidity { name, value: p });
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Mixes a base seed with an index (splitmix64 finalizer) so sweep points
/// get unrelated seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for step `index` of a scan: one ChaCha stream per step.
pub fn step_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Counts of the four joint outcomes over a block of pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutcomeCounts {
    pub none: u64,
    pub det1_only: u64,
    pub det2_only: u64,
    pub both: u64,
}

/// Multinomial draw over the four outcomes by chained binomials.
pub fn sample_outcomes<R: rand::Rng>(n: u64, p: &ClickDistribution, rng: &mut R) -> OutcomeCounts {
    let mut remaining = n;
    let mut mass = 1.0;
    let mut draws = [0u64; 3];
    for (slot, pk) in draws.iter_mut().zip([p.both, p.det1_only, p.det2_only]) {
        let frac = if mass > 0.0 {
            (pk / mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        if remaining > 0 && frac > 0.0 {
            *slot = Binomial::new(remaining, frac)
                .expect("probability clamped to [0, 1]")
                .sample(rng);
        }
        remaining -= *slot;
        mass -= pk;
    }
    OutcomeCounts {
        none: remaining,
        det1_only: draws[1],
        det2_only: draws[2],
        both: draws[0],
    }
}

/// Simulates one reference-delay scan. Steps run in parallel, each on its
/// own RNG stream, and come back in delay order.
pub fn simulate_scan(config: &SourceConfig, spec: &ScanSpec) -> Result<ScanRecord, DetectionError> {
    config.validate()?;
    spec.validate()?;
    let n = config.n_pulses();
    let points = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let delay = spec.delay(i);
            let phi = spec.phi_ref(delay);
            let probs = per_pulse_probabilities(config, phi)?;
            let mut rng = step_rng(config.rng_seed, i);
            let c = sample_outcomes(n, &probs, &mut rng);
            Ok(ScanPoint {
                delay_um: OrderedF64(delay),
                phi_ref: OrderedF64(phi),
                n_pulses: n,
                singles_1: c.det1_only + c.both,
                singles_2: c.det2_only + c.both,
                coincidences: c.both,
            })
        })
        .collect::<Result<Vec<_>, DetectionError>>()?;
    Ok(ScanRecord { points })
}

/// Expected counts per step (no sampling): `(singles_1, singles_2, coinc)`.
pub fn expected_counts(
    config: &SourceConfig,
    phi_ref: f64,
) -> Result<(f64, f64, f64), DetectionError> {
    let p = per_pulse_probabilities(config, phi_ref)?;
    let n = config.n_pulses() as f64;
    Ok((
        n * (p.det1_only + p.both),
        n * (p.det2_only + p.both),
        n * p.both,
    ))
}

/// Mean of `f(φ)` over a fringe, by a uniform 360-point rule (exact for the
/// low-order trigonometric polynomials the model produces).
pub fn fringe_average<F: Fn(f64) -> f64>(f: F) -> f64 {
    let n = 360;
    (0..n).map(|k| f(TAU * k as f64 / n as f64)).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::switch::{conditional_phase_shift, det1_singles_probability};

    fn zero_switch() -> SwitchParams {
        SwitchParams {
            alpha: C64::new(0.0, 0.0),
            beta: C64::new(0.0, 0.0),
            a_dc: C64::new(0.0, 0.0),
            ref_amp: C64::new(0.0, 0.0),
            bs2_transmissivity: DEFAULT_BS2_TRANSMISSIVITY,
        }
    }

    #[test]
    fn calibration_ratios() {
        let small =
            calibrate_from_rates(&RateSet::SMALL_REGIME, DEFAULT_REP_RATE, 1.0, 1.0, 0.9).unwrap();
        assert!((small.r - 0.1355).abs() < 5e-5);
        let large =
            calibrate_from_rates(&RateSet::LARGE_REGIME, DEFAULT_REP_RATE, 1.0, 1.0, 0.9).unwrap();
        assert!((large.r - 2.174).abs() < 5e-4);
        assert!((large.switch.ratio() - large.r).abs() < 1e-12);

        let mut none = RateSet::LARGE_REGIME;
        none.dc_coinc = 0.0;
        let cal = calibrate_from_rates(&none, DEFAULT_REP_RATE, 1.0, 1.0, 0.9).unwrap();
        assert_eq!(cal.switch.a_dc.norm(), 0.0);
    }

    #[test]
    fn calibration_reports_det2_residual() {
        let small =
            calibrate_from_rates(&RateSet::SMALL_REGIME, DEFAULT_REP_RATE, 1.0, 1.0, 0.9).unwrap();
        // 256 / 88e3 × 8e7 ≈ 232.7e3 against the quoted 282e3.
        assert!((small.implied_singles_2 - 232_727.27).abs() < 0.1);
        assert!((small.singles_2_residual + 0.1747).abs() < 1e-3);
    }

    #[test]
    fn calibration_errors() {
        let mut bad = RateSet::SMALL_REGIME;
        bad.acc_coinc = 0.0;
        assert!(calibrate_from_rates(&bad, DEFAULT_REP_RATE, 1.0, 1.0, 0.9).is_err());
        let mut bright = RateSet::SMALL_REGIME;
        bright.singles_1_sig = 1e9;
        assert!(matches!(
            calibrate_from_rates(&bright, DEFAULT_REP_RATE, 1.0, 1.0, 0.9),
            Err(DetectionError::InconsistentRates { .. })
        ));
    }

    #[test]
    fn small_regime_accidentals_integrate_to_quoted_rate() {
        // Reference arm blocked, no pump: coincidences are pure accidentals.
        let mut cfg = SourceConfig::from_rates(&RateSet::SMALL_REGIME, 0.0, 1.0, 1).unwrap();
        cfg.switch.ref_amp = C64::new(0.0, 0.0);
        cfg.switch.a_dc = C64::new(0.0, 0.0);
        let rate =
            fringe_average(|phi| per_pulse_probabilities(&cfg, phi).unwrap().both) * cfg.rep_rate;
        assert!((rate - 256.0).abs() / 256.0 < 0.02, "{rate}");
        // Pump on at zero pump phase: pair rate grows by |1 + r|².
        cfg.switch = cfg.switch.with_pump_phase(0.0);
        let cal =
            calibrate_from_rates(&RateSet::SMALL_REGIME, DEFAULT_REP_RATE, 1.0, 1.0, 0.9).unwrap();
        cfg.switch.a_dc = cal.switch.a_dc;
        let rate = per_pulse_probabilities(&cfg, 0.0).unwrap().both * cfg.rep_rate;
        assert!((rate - 256.0 * 1.1355f64.powi(2)).abs() < 0.5);
    }

    #[test]
    fn zero_amplitudes_never_click() {
        let cfg = SourceConfig::new(zero_switch(), DEFAULT_REP_RATE, 1.0, 0);
        let p = per_pulse_probabilities(&cfg, 0.3).unwrap();
        assert_eq!(p.none, 1.0);
        let rec = simulate_scan(&cfg, &ScanSpec::default()).unwrap();
        assert!(rec
            .points
            .iter()
            .all(|p| p.singles_1 == 0 && p.singles_2 == 0 && p.coincidences == 0));
    }

    #[test]
    fn coincidence_fringe_shifted_by_conditional_phase() {
        let cfg =
            SourceConfig::from_rates(&RateSet::LARGE_REGIME, 95f64.to_radians(), 40.0, 0).unwrap();
        // Peak of the coincidence fringe sits Δφ later than the no-control fringe.
        let peak = |f: &dyn Fn(f64) -> f64| {
            let (mut s, mut c) = (0.0, 0.0);
            for k in 0..3600 {
                let phi = TAU * k as f64 / 3600.0;
                s += f(phi) * phi.sin();
                c += f(phi) * phi.cos();
            }
            s.atan2(c)
        };
        let sw = cfg.switch;
        let f0 = |phi: f64| det1_singles_probability(sw.alpha, &sw, phi);
        let fc = |phi: f64| per_pulse_probabilities(&cfg, phi).unwrap().both;
        let lag = crate::wrap_phase(peak(&fc) - peak(&f0));
        let expected = conditional_phase_shift(sw.ratio(), sw.pump_phase()).unwrap();
        assert!((lag - expected).abs() < 1e-9, "{lag} vs {expected}");
    }

    #[test]
    fn darks_and_floor_keep_distribution_normalized() {
        let mut cfg = SourceConfig::from_rates(&RateSet::SMALL_REGIME, 1.0, 1.0, 0).unwrap();
        cfg.dark_rate_1 = 500.0;
        cfg.dark_rate_2 = 800.0;
        cfg.accidental_floor = 3.0;
        cfg.det1_efficiency = 0.6;
        cfg.det2_efficiency = 0.7;
        for k in 0..16 {
            let p = per_pulse_probabilities(&cfg, k as f64 * 0.4).unwrap();
            assert!((p.total() - 1.0).abs() < 1e-12);
            assert!([p.none, p.det1_only, p.det2_only, p.both]
                .iter()
                .all(|x| (0.0..=1.0).contains(x)));
        }
        // Floor alone adds exactly its rate to the coincidences of the dark state.
        let mut quiet = SourceConfig::new(zero_switch(), DEFAULT_REP_RATE, 1.0, 0);
        quiet.accidental_floor = 8.0;
        let p = per_pulse_probabilities(&quiet, 0.0).unwrap();
        assert!((p.both * quiet.rep_rate - 8.0).abs() < 1e-9);
    }

    #[test]
    fn overshoot_is_model_validity_error() {
        let sw = SwitchParams::from_ratio(0.1, 0.1, 1.0, 0.0, 0.1, 0.5);
        let mut cfg = SourceConfig::new(sw, DEFAULT_REP_RATE, 1.0, 0);
        cfg.dark_rate_1 = 2.0 * DEFAULT_REP_RATE;
        assert!(matches!(
            per_pulse_probabilities(&cfg, 0.0),
            Err(DetectionError::ModelValidity { .. })
        ));
    }

    #[test]
    fn pair_dominated_branch_stays_normalized() {
        // |A_DC/β| = 20: the control-photon branch is almost a signal photon.
        let sw = SwitchParams::from_ratio(0.4, 0.01, 50.0, 0.0, 0.4, 0.5);
        let cfg = SourceConfig::new(sw, DEFAULT_REP_RATE, 1.0, 0);
        for k in 0..8 {
            let p = per_pulse_probabilities(&cfg, k as f64 * 0.8).unwrap();
            assert!((p.total() - 1.0).abs() < 1e-12);
            assert!([p.none, p.det1_only, p.det2_only, p.both]
                .iter()
                .all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn seeded_scan_is_deterministic() {
        let cfg = SourceConfig::from_rates(&RateSet::LARGE_REGIME, 1.0, 40.0, 42).unwrap();
        let a = simulate_scan(&cfg, &ScanSpec::default()).unwrap();
        let b = simulate_scan(&cfg, &ScanSpec::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert!(a.is_consistent());
        let mut other = cfg;
        other.rng_seed = 43;
        assert_ne!(a, simulate_scan(&other, &ScanSpec::default()).unwrap());
    }

    #[test]
    fn csv_layout_and_round_trip() {
        let cfg = SourceConfig::from_rates(&RateSet::SMALL_REGIME, 0.5, 1.0, 3).unwrap();
        let rec = simulate_scan(&cfg, &ScanSpec::default()).unwrap();
        let text = rec.to_csv_string();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SCAN_CSV_VERSION));
        assert_eq!(
            lines.next(),
            Some("delay_um,phi_ref_rad,n_pulses,singles1,singles2,coinc")
        );
        assert!(lines.next().unwrap().starts_with("0.0,0.0,80000000,"));
        assert_eq!(ScanRecord::read_csv(text.as_bytes()).unwrap(), rec);
        assert!(matches!(
            ScanRecord::read_csv("delay_um\n".as_bytes()),
            Err(DetectionError::CsvVersion)
        ));
    }

    #[test]
    fn multinomial_means() {
        let p = ClickDistribution {
            none: 0.7,
            det1_only: 0.1,
            det2_only: 0.15,
            both: 0.05,
        };
        let mut rng = step_rng(9, 0);
        let n = 1_000_000u64;
        let c = sample_outcomes(n, &p, &mut rng);
        let counts = [c.none, c.det1_only, c.det2_only, c.both];
        assert_eq!(counts.iter().sum::<u64>(), n);
        for (count, prob) in counts
            .iter()
            .zip([p.none, p.det1_only, p.det2_only, p.both])
        {
            let sd = (n as f64 * prob * (1.0 - prob)).sqrt();
            assert!((*count as f64 - n as f64 * prob).abs() < 5.0 * sd);
        }
    }

    #[test]
    fn scan_spec_validation() {
        assert!(ScanSpec::default().validate().is_ok());
        let short = ScanSpec {
            count: 20,
            ..ScanSpec::default()
        };
        assert!(short.validate().is_err());
        let neg = ScanSpec {
            step_um: -0.04,
            ..ScanSpec::default()
        };
        assert!(neg.validate().is_err());
    }
}
