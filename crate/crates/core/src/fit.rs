//! Cosine fringe fitting with a shared period, and phase differences.
//!
//! The model is `A + B·cos(2π·x/L + φ)`. For a fixed period it is linear in
//! `(A, B cos φ, B sin φ)` and is solved in closed form by weighted least
//! squares. A free period is found by scanning `L` over `[0.5, 2]×` the
//! nominal value with the inner linear solve, then refining the best grid
//! point by golden-section search.

use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::detection::ScanRecord;
use crate::wrap_phase;

const NEGATIVE_DIP_SIGMAS: f64 = 3.0;
/// Lower and upper edges of the free-period bracket, relative to nominal.
pub const PERIOD_BRACKET: (f64, f64) = (0.5, 2.0);
const PERIOD_GRID_POINTS: usize = 600;
const GOLDEN_REL_TOL: f64 = 1e-6;
/// Tolerance on "same period" when differencing two fits.
const PERIOD_MATCH_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("delays and counts differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("scan spans {span} but must cover at least one period ({period})")]
    ShortSpan { span: f64, period: f64 },
    #[error("negative or non-finite count {0}")]
    BadCount(f64),
    #[error("period must be positive and finite, got {0}")]
    BadPeriod(f64),
    #[error("degenerate design matrix: the delays do not resolve offset, cosine and sine")]
    Degenerate,
    #[error("fits used different periods ({0} vs {1}); fix the coincidence period to the singles period")]
    PeriodMismatch(f64, f64),
}

/// Fitted fringe `A + B·cos(2π·x/L + φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FringeModel {
    pub offset: f64,
    pub amplitude: f64,
    /// In `(-π, π]`.
    pub phase: f64,
    pub period: f64,
}

impl FringeModel {
    pub fn eval(&self, x: f64) -> f64 {
        self.offset + self.amplitude * (TAU * x / self.period + self.phase).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PeriodSpec {
    Fixed(f64),
    Free { nominal: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Weighting {
    /// `w = 1 / max(count, 1)`.
    #[default]
    Poisson,
    Uniform,
}

/// Quality flags attached to a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct FitFlags {
    /// Amplitude is within one standard error of zero.
    pub low_visibility: bool,
    /// The fitted minimum `A − B` is significantly below zero.
    pub negative_model: bool,
}

impl FitFlags {
    pub fn any(&self) -> bool {
        self.low_visibility || self.negative_model
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.low_visibility {
            out.push("low_visibility");
        }
        if self.negative_model {
            out.push("negative_model");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: FringeModel,
    /// Covariance of `(A, B, φ)` or `(A, B, φ, L)` when the period was free.
    pub covariance: DMatrix<f64>,
    pub chi2: f64,
    pub dof: i64,
    pub period_fixed: bool,
    pub flags: FitFlags,
}

impl FitResult {
    /// One-sigma phase uncertainty (radians), capped at π.
    pub fn phase_sigma(&self) -> f64 {
        self.covariance[(2, 2)].max(0.0).sqrt().min(PI)
    }

    pub fn amplitude_sigma(&self) -> f64 {
        self.covariance[(1, 1)].max(0.0).sqrt()
    }

    pub fn period_sigma(&self) -> Option<f64> {
        (!self.period_fixed).then(|| self.covariance[(3, 3)].max(0.0).sqrt())
    }
}

/// Linear solve at a fixed period: `(A, c, s)` with model `A + c·cos − s·sin`.
struct LinearFit {
    coef: [f64; 3],
    /// Inverse normal matrix, i.e. the covariance of `(A, c, s)`.
    cov: DMatrix<f64>,
    chi2: f64,
}

fn linear_fit(x: &[f64], y: &[f64], w: &[f64], period: f64) -> Result<LinearFit, FitError> {
    let mut normal = DMatrix::<f64>::zeros(3, 3);
    let mut rhs = DVector::<f64>::zeros(3);
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        let k = TAU * xi / period;
        let row = [1.0, k.cos(), -k.sin()];
        for a in 0..3 {
            rhs[a] += wi * row[a] * yi;
            for b in 0..3 {
                normal[(a, b)] += wi * row[a] * row[b];
            }
        }
    }
    let scale = normal.diagonal().max();
    let chol = nalgebra::Cholesky::new(normal.clone()).ok_or(FitError::Degenerate)?;
    let cov = chol.inverse();
    // Reject near-singular systems that Cholesky lets through.
    let cond = scale * cov.diagonal().max();
    if !cond.is_finite() || cond > 1e12 {
        return Err(FitError::Degenerate);
    }
    let coef = chol.solve(&rhs);
    let coef = [coef[0], coef[1], coef[2]];
    let chi2 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let k = TAU * xi / period;
            let m = coef[0] + coef[1] * k.cos() - coef[2] * k.sin();
            wi * (yi - m).powi(2)
        })
        .sum();
    Ok(LinearFit { coef, cov, chi2 })
}

fn weights(y: &[f64], weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Poisson => y.iter().map(|&c| 1.0 / c.max(1.0)).collect(),
        Weighting::Uniform => vec![1.0; y.len()],
    }
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo) > rel_tol * 0.5 * (hi + lo).abs() {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Weighted least-squares cosine fit of `counts` against `delays`.
pub fn fit_fringe(
    delays: &[f64],
    counts: &[f64],
    period: PeriodSpec,
    weighting: Weighting,
) -> Result<FitResult, FitError> {
    if delays.len() != counts.len() {
        return Err(FitError::LengthMismatch(delays.len(), counts.len()));
    }
    if delays.len() < 5 {
        return Err(FitError::TooFewPoints(delays.len()));
    }
    if let Some(&bad) = counts.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(FitError::BadCount(bad));
    }
    let (lo, hi) = delays
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let span = hi - lo;
    if span == 0.0 {
        return Err(FitError::Degenerate);
    }
    let reference = match period {
        PeriodSpec::Fixed(l) | PeriodSpec::Free { nominal: l } => l,
    };
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(FitError::BadPeriod(reference));
    }
    if span < reference * (1.0 - 1e-9) {
        return Err(FitError::ShortSpan {
            span,
            period: reference,
        });
    }
    let w = weights(counts, weighting);

    let (best_period, period_fixed) = match period {
        PeriodSpec::Fixed(l) => (l, true),
        PeriodSpec::Free { nominal } => (search_period(delays, counts, &w, nominal)?, false),
    };
    let lin = linear_fit(delays, counts, &w, best_period)?;
    let [a, c, s] = lin.coef;
    let amplitude = c.hypot(s);
    let phase = if amplitude > 0.0 {
        wrap_phase(s.atan2(c))
    } else {
        0.0
    };
    let model = FringeModel {
        offset: a,
        amplitude,
        phase,
        period: best_period,
    };

    let covariance = if period_fixed {
        polar_covariance(&lin.cov, c, s)
    } else {
        free_period_covariance(delays, &w, &model).unwrap_or_else(|| {
            // Period unresolved (flat data): report the fixed-period block
            // and an unbounded period variance.
            let mut cov = DMatrix::zeros(4, 4);
            cov.view_mut((0, 0), (3, 3))
                .copy_from(&polar_covariance(&lin.cov, c, s));
            cov[(3, 3)] = f64::INFINITY;
            cov
        })
    };
    let n_params = if period_fixed { 3 } else { 4 };
    let dof = delays.len() as i64 - n_params;

    let sigma_b = covariance[(1, 1)].max(0.0).sqrt();
    let flags = FitFlags {
        low_visibility: amplitude <= sigma_b,
        negative_model: a - amplitude
            < -NEGATIVE_DIP_SIGMAS * covariance[(0, 0)].max(0.0).sqrt().hypot(sigma_b),
    };
    Ok(FitResult {
        model,
        covariance,
        chi2: lin.chi2,
        dof,
        period_fixed,
        flags,
    })
}

/// Coarse grid over the bracket, then golden-section around the best node.
fn search_period(x: &[f64], y: &[f64], w: &[f64], nominal: f64) -> Result<f64, FitError> {
    let chi2_at = |l: f64| linear_fit(x, y, w, l).map_or(f64::INFINITY, |f| f.chi2);
    let (lo, hi) = (PERIOD_BRACKET.0 * nominal, PERIOD_BRACKET.1 * nominal);
    // Log-spaced nodes keep a constant relative resolution.
    let ratio = (hi / lo).powf(1.0 / (PERIOD_GRID_POINTS - 1) as f64);
    let nodes: Vec<f64> = (0..PERIOD_GRID_POINTS)
        .map(|k| lo * ratio.powi(k as i32))
        .collect();
    let (best, best_chi2) = nodes
        .iter()
        .enumerate()
        .map(|(k, &l)| (k, chi2_at(l)))
        .fold(
            (0, f64::INFINITY),
            |acc, cur| if cur.1 < acc.1 { cur } else { acc },
        );
    if !best_chi2.is_finite() {
        return Err(FitError::Degenerate);
    }
    let a = nodes[best.saturating_sub(1)];
    let b = nodes[(best + 1).min(nodes.len() - 1)];
    let refined = golden_section(chi2_at, a, b, GOLDEN_REL_TOL);
    Ok(if chi2_at(refined) <= best_chi2 {
        refined
    } else {
        nodes[best]
    })
}

/// Propagates the `(A, c, s)` covariance to `(A, B, φ)`.
fn polar_covariance(cov: &DMatrix<f64>, c: f64, s: f64) -> DMatrix<f64> {
    let b2 = c * c + s * s;
    if b2 == 0.0 {
        let mut out = DMatrix::zeros(3, 3);
        out[(0, 0)] = cov[(0, 0)];
        out[(1, 1)] = cov[(1, 1)].max(cov[(2, 2)]);
        out[(2, 2)] = PI * PI;
        return out;
    }
    let b = b2.sqrt();
    let j = DMatrix::from_row_slice(
        3,
        3,
        &[1.0, 0.0, 0.0, 0.0, c / b, s / b, 0.0, -s / b2, c / b2],
    );
    &j * cov * j.transpose()
}

/// Gauss–Newton covariance of `(A, B, φ, L)` at the optimum.
fn free_period_covariance(x: &[f64], w: &[f64], m: &FringeModel) -> Option<DMatrix<f64>> {
    let mut jtwj = DMatrix::<f64>::zeros(4, 4);
    for (&xi, &wi) in x.iter().zip(w) {
        let arg = TAU * xi / m.period + m.phase;
        let row = [
            1.0,
            arg.cos(),
            -m.amplitude * arg.sin(),
            m.amplitude * arg.sin() * TAU * xi / (m.period * m.period),
        ];
        for a in 0..4 {
            for b in 0..4 {
                jtwj[(a, b)] += wi * row[a] * row[b];
            }
        }
    }
    let scale = jtwj.diagonal().max();
    let inv = nalgebra::Cholesky::new(jtwj)?.inverse();
    let cond = scale * inv.diagonal().max();
    (cond.is_finite() && cond < 1e14).then_some(inv)
}

/// Lag of the coincidence fringe behind the singles fringe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseDifference {
    /// Radians in `(-π, π]`; positive when the coincidence fringe peaks at a
    /// larger delay than the singles fringe.
    pub delta_phi: f64,
    pub sigma: f64,
}

impl PhaseDifference {
    pub fn delta_phi_deg(&self) -> f64 {
        self.delta_phi.to_degrees()
    }

    pub fn sigma_deg(&self) -> f64 {
        self.sigma.to_degrees()
    }
}

/// `δφ = wrap(φ_singles − φ_coinc)` with uncertainties added in quadrature.
///
/// In the model `cos(2πx/L + φ)` a later peak means a smaller `φ`, so this
/// ordering reports a lagging coincidence fringe as a positive shift.
pub fn phase_difference(
    singles: &FitResult,
    coinc: &FitResult,
) -> Result<PhaseDifference, FitError> {
    let (ls, lc) = (singles.model.period, coinc.model.period);
    if (ls - lc).abs() > PERIOD_MATCH_TOL * ls.abs().max(lc.abs()) {
        return Err(FitError::PeriodMismatch(ls, lc));
    }
    Ok(PhaseDifference {
        delta_phi: wrap_phase(singles.model.phase - coinc.model.phase),
        sigma: singles.phase_sigma().hypot(coinc.phase_sigma()),
    })
}

/// Both fits of one scan and the phase difference between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanAnalysis {
    pub singles: FitResult,
    pub coincidences: FitResult,
    pub difference: PhaseDifference,
}

impl ScanAnalysis {
    pub fn flags(&self) -> FitFlags {
        FitFlags {
            low_visibility: self.singles.flags.low_visibility
                || self.coincidences.flags.low_visibility,
            negative_model: self.singles.flags.negative_model
                || self.coincidences.flags.negative_model,
        }
    }
}

/// Fits the Det. 1 singles with a free period, then the coincidences with
/// the period fixed to the singles value.
pub fn analyze_scan(record: &ScanRecord, nominal_period: f64) -> Result<ScanAnalysis, FitError> {
    let delays = record.delays();
    let singles = fit_fringe(
        &delays,
        &record.singles_1(),
        PeriodSpec::Free {
            nominal: nominal_period,
        },
        Weighting::Poisson,
    )?;
    let coincidences = fit_fringe(
        &delays,
        &record.coincidences(),
        PeriodSpec::Fixed(singles.model.period),
        Weighting::Poisson,
    )?;
    let difference = phase_difference(&singles, &coincidences)?;
    Ok(ScanAnalysis {
        singles,
        coincidences,
        difference,
    })
}

/// One point of a pump-phase sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub theta_p: f64,
    pub outcome: Result<ScanAnalysis, FitError>,
}

impl SweepPoint {
    pub fn record(&self) -> SweepRecord {
        match &self.outcome {
            Ok(a) => SweepRecord {
                theta_p_deg: self.theta_p.to_degrees(),
                delta_phi_deg: Some(a.difference.delta_phi_deg()),
                sigma_deg: Some(a.difference.sigma_deg()),
                chi2: Some(a.coincidences.chi2),
                dof: Some(a.coincidences.dof),
                flags: a.flags().names().into_iter().map(String::from).collect(),
            },
            Err(e) => SweepRecord {
                theta_p_deg: self.theta_p.to_degrees(),
                delta_phi_deg: None,
                sigma_deg: None,
                chi2: None,
                dof: None,
                flags: vec![format!("fit_failed: {e}")],
            },
        }
    }
}

/// Serialized form of a sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub theta_p_deg: f64,
    pub delta_phi_deg: Option<f64>,
    pub sigma_deg: Option<f64>,
    pub chi2: Option<f64>,
    pub dof: Option<i64>,
    pub flags: Vec<String>,
}

impl SweepRecord {
    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// Runs [`analyze_scan`] on every scan. Failures become flagged points and
/// never stop the sweep; phases stay wrapped.
pub fn sweep_analysis(scans: &[(f64, ScanRecord)], nominal_period: f64) -> Vec<SweepPoint> {
    use rayon::prelude::*;
    scans
        .par_iter()
        .map(|(theta_p, rec)| SweepPoint {
            theta_p: *theta_p,
            outcome: analyze_scan(rec, nominal_period),
        })
        .collect()
}
