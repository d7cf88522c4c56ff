use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::fit::{fit_fringe, FringeModel, PeriodSpec, Weighting};
use crate::fock::{coherent_product, project_on_click, spdc_evolve, FockBasis, FockError};
use crate::switch::{
    concurrence, conditional_amplitude, conditional_phase_shift, cphi_contract_check,
    det1_singles_probability, max_phase_shift, polarization_switch, PolarizationPairState,
    SwitchParams,
};
use crate::{wrap_phase, C64};

const GRID_MAGNITUDES: [f64; 3] = [0.02, 0.05, 0.1];
const ORACLE_TOLERANCE_FACTOR: f64 = 10.0;
const REGIME_SAMPLES: usize = 20;
const REGIME_GRID: usize = 3600;
const EXTREME_R: f64 = 1000.0;
const EXTREME_TOL_DEG: f64 = 0.06;
const IDENTITY_TOL: f64 = 1e-12;
const COVERAGE_BAND: (f64, f64) = (0.60, 0.76);
const COVERAGE_OFFSET: f64 = 208.0;
const COVERAGE_AMPLITUDE: f64 = 50.0;
const COVERAGE_POINTS: usize = 25;
const COVERAGE_STEP_UM: f64 = 0.04;
const COVERAGE_PERIOD_UM: f64 = 0.81;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidateOptions {
    /// Fock cutoff for the oracle grid.
    pub cutoff: usize,
    /// Mutation: evaluate the fringe-shift identity with `−θ_p`.
    pub flip_theta_sign: bool,
    pub seed: u64,
    pub coverage_runs: u64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            cutoff: 3,
            flip_theta_sign: false,
            seed: 0,
            coverage_runs: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub format: &'static str,
    pub cutoff: usize,
    pub seed: u64,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OraclePoint {
    pub alpha: C64,
    pub beta: C64,
    pub kappa: C64,
    pub engine_phase: f64,
    pub model_phase: f64,
    pub error: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleGridReport {
    pub cutoff: usize,
    pub points: Vec<OraclePoint>,
    /// Largest `error / bound` over the grid.
    pub worst_ratio: f64,
}

impl OracleGridReport {
    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

/// 27 magnitude combinations of `(α, β, κ)` in `{0.02, 0.05, 0.1}` with random
/// phases. Each point compares the phase of `c₁₁/c₀₁` after exact evolution
/// and a control click against `arg(α + κ/β)`.
pub fn oracle_grid(cutoff: usize, seed: u64) -> Result<OracleGridReport, FockError> {
    let basis = FockBasis::new(2, cutoff)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(27);
    for &ma in &GRID_MAGNITUDES {
        for &mb in &GRID_MAGNITUDES {
            for &mk in &GRID_MAGNITUDES {
                let alpha = C64::from_polar(ma, rng.random_range(0.0..TAU));
                let beta = C64::from_polar(mb, rng.random_range(0.0..TAU));
                let kappa = C64::from_polar(mk, rng.random_range(0.0..TAU));
                let input = coherent_product(&[alpha, beta], basis)?;
                let evolved = spdc_evolve(&input, 0, 1, kappa)?;
                let (cond, _) = project_on_click(&evolved, &[1], true)?;
                let engine_phase = (cond.amplitude(&[1, 1]) / cond.amplitude(&[0, 1])).arg();
                let params = SwitchParams {
                    alpha,
                    beta,
                    a_dc: kappa,
                    ref_amp: C64::new(0.0, 0.0),
                    bs2_transmissivity: 1.0,
                };
                let model_phase = conditional_amplitude(&params)
                    .expect("beta is nonzero")
                    .arg();
                let m = ma.max(mb).max(mk);
                points.push(OraclePoint {
                    alpha,
                    beta,
                    kappa,
                    engine_phase,
                    model_phase,
                    error: wrap_phase(engine_phase - model_phase).abs(),
                    bound: ORACLE_TOLERANCE_FACTOR * m * m,
                });
            }
        }
    }
    let worst_ratio = points.iter().map(|p| p.error / p.bound).fold(0.0, f64::max);
    Ok(OracleGridReport {
        cutoff,
        points,
        worst_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoverageReport {
    pub runs: u64,
    pub covered: u64,
    pub fraction: f64,
    pub true_phase: f64,
}

impl CoverageReport {
    pub fn within_band(&self) -> bool {
        (COVERAGE_BAND.0..=COVERAGE_BAND.1).contains(&self.fraction)
    }
}

/// Fits `runs` Poisson-sampled fringes at 208 mean counts per bin and
/// counts how often the true phase lies within the reported 1σ.
pub fn fit_coverage(runs: u64, true_phase: f64) -> CoverageReport {
    let truth = FringeModel {
        offset: COVERAGE_OFFSET,
        amplitude: COVERAGE_AMPLITUDE,
        phase: true_phase,
        period: COVERAGE_PERIOD_UM,
    };
    let delays: Vec<f64> = (0..COVERAGE_POINTS)
        .map(|i| i as f64 * COVERAGE_STEP_UM)
        .collect();
    let mut covered = 0;
    for seed in 0..runs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts: Vec<f64> = delays
            .iter()
            .map(|&x| {
                Poisson::new(truth.eval(x))
                    .expect("positive mean")
                    .sample(&mut rng)
            })
            .collect();
        if let Ok(fit) = fit_fringe(
            &delays,
            &counts,
            PeriodSpec::Fixed(COVERAGE_PERIOD_UM),
            Weighting::Poisson,
        ) {
            if wrap_phase(fit.model.phase - true_phase).abs() <= fit.phase_sigma() {
                covered += 1;
            }
        }
    }
    CoverageReport {
        runs,
        covered,
        fraction: covered as f64 / runs.max(1) as f64,
        true_phase,
    }
}

fn check(name: &'static str, passed: bool, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail: detail.into(),
    }
}

fn oracle_check(opts: &ValidateOptions) -> CheckResult {
    match oracle_grid(opts.cutoff, opts.seed) {
        Ok(rep) => check(
            "oracle_equivalence",
            rep.passed(),
            format!("27 points at cutoff {}: worst error/bound = {:.3e}", rep.cutoff, rep.worst_ratio),
        ),
        Err(FockError::TruncationLeakage { leakage, bound, cutoff }) => check(
            "oracle_equivalence",
            false,
            format!("truncation: leakage {leakage:.3e} exceeds {bound:.1e} at cutoff {cutoff}; raise the cutoff"),
        ),
        Err(e) => check("oracle_equivalence", false, e.to_string()),
    }
}

fn theta_grid(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| TAU * k as f64 / n as f64)
}

fn small_regime_check(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst_excess: f64 = f64::NEG_INFINITY;
    let mut worst_peak_gap: f64 = 0.0;
    for _ in 0..REGIME_SAMPLES {
        let r = rng.random_range(0.01..0.99);
        let bound = max_phase_shift(r);
        for t in theta_grid(REGIME_GRID) {
            let d = conditional_phase_shift(r, t).expect("r < 1 never vanishes");
            worst_excess = worst_excess.max(d.abs() - bound);
        }
        let at_peak = conditional_phase_shift(r, (-r).acos()).expect("r < 1 never vanishes");
        worst_peak_gap = worst_peak_gap.max((at_peak.abs() - bound).abs());
    }
    check(
        "small_regime_bound",
        worst_excess <= 1e-12 && worst_peak_gap <= 1e-6,
        format!("max(|dphi| - arcsin r) = {worst_excess:.2e}, max gap at cos(theta_p) = -r: {worst_peak_gap:.2e}"),
    )
}

fn large_regime_check(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst_step = f64::INFINITY;
    for _ in 0..REGIME_SAMPLES {
        let r = rng.random_range(1.01..20.0);
        let mut prev = conditional_phase_shift(r, 0.0).expect("r > 1 never vanishes");
        for t in theta_grid(REGIME_GRID).skip(1).chain(std::iter::once(TAU)) {
            let d = conditional_phase_shift(r, t).expect("r > 1 never vanishes");
            worst_step = worst_step.min(wrap_phase(d - prev));
            prev = d;
        }
    }
    check(
        "large_regime_monotonic",
        worst_step > 0.0,
        format!("smallest unwrapped step over {REGIME_SAMPLES} ratios: {worst_step:.3e} rad"),
    )
}

fn extreme_check() -> CheckResult {
    let worst = (0..360)
        .map(|k| {
            let t = (k as f64).to_radians();
            wrap_phase(conditional_phase_shift(EXTREME_R, t).expect("r = 1000 never vanishes") - t)
                .abs()
        })
        .fold(0.0, f64::max)
        .to_degrees();
    check(
        "extreme_limit",
        worst <= EXTREME_TOL_DEG,
        format!("r = {EXTREME_R}: max |dphi - theta_p| = {worst:.4} deg"),
    )
}

/// The conditional Det. 1 fringe, rescaled to the unconditional magnitude,
/// equals the unconditional fringe shifted by `−Δφ`.
fn fringe_shift_check(rng: &mut ChaCha8Rng, flip: bool) -> CheckResult {
    let sign = if flip { -1.0 } else { 1.0 };
    let mut worst: f64 = 0.0;
    for _ in 0..REGIME_SAMPLES {
        let r = rng.random_range(0.05..5.0);
        let theta_p =
            rng.random_range(0.2..(PI - 0.2)) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let params = SwitchParams::from_ratio(0.1, 0.1, r, theta_p, 0.1, 0.9);
        let cond = conditional_amplitude(&params).expect("beta is nonzero");
        let Ok(dphi) = conditional_phase_shift(r, sign * theta_p) else {
            continue;
        };
        let rescaled = cond * (params.alpha.norm() / cond.norm());
        for phi in theta_grid(36) {
            let lhs = det1_singles_probability(rescaled, &params, phi);
            let rhs = det1_singles_probability(params.alpha, &params, phi - dphi);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    check(
        "fringe_shift_identity",
        worst <= IDENTITY_TOL,
        format!(
            "max pointwise mismatch {worst:.2e}{}",
            if flip { " (theta_p sign flipped)" } else { "" }
        ),
    )
}

fn coverage_check(runs: u64) -> CheckResult {
    let rep = fit_coverage(runs, 69.5_f64.to_radians());
    check(
        "fit_coverage",
        rep.within_band(),
        format!(
            "{}/{} runs cover the true phase ({:.0}%), band {:.0}-{:.0}%",
            rep.covered,
            rep.runs,
            100.0 * rep.fraction,
            100.0 * COVERAGE_BAND.0,
            100.0 * COVERAGE_BAND.1
        ),
    )
}

fn bell_check() -> CheckResult {
    let z = |re: f64| C64::new(re, 0.0);
    let input = PolarizationPairState::new(z(0.1), z(1.0), z(0.0), z(0.0), z(0.0));
    match polarization_switch(&input, z(0.1)) {
        Ok(out) => {
            let c = concurrence(&out);
            check(
                "bell_state",
                (c - 1.0).abs() <= 1e-12,
                format!("concurrence {c:.15}"),
            )
        }
        Err(e) => check("bell_state", false, e.to_string()),
    }
}

fn cphi_check(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut failures = 0;
    let mut n = 0;
    for &ma in &GRID_MAGNITUDES {
        for &mb in &GRID_MAGNITUDES {
            for &mk in &GRID_MAGNITUDES {
                let params = SwitchParams {
                    alpha: C64::from_polar(ma, rng.random_range(0.0..TAU)),
                    beta: C64::from_polar(mb, rng.random_range(0.0..TAU)),
                    a_dc: C64::from_polar(mk, rng.random_range(0.0..TAU)),
                    ref_amp: C64::new(0.0, 0.0),
                    bs2_transmissivity: 1.0,
                };
                n += 1;
                if !cphi_contract_check(&params).is_ok_and(|rep| rep.passed) {
                    failures += 1;
                }
            }
        }
    }
    check(
        "cphi_contract",
        failures == 0,
        format!("{failures}/{n} grid points fail"),
    )
}

/// Runs every self-check and collects a machine-readable report.
pub fn run_validate(opts: &ValidateOptions) -> ValidationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let checks = vec![
        oracle_check(opts),
        small_regime_check(&mut rng),
        large_regime_check(&mut rng),
        extreme_check(),
        fringe_shift_check(&mut rng, opts.flip_theta_sign),
        coverage_check(opts.coverage_runs),
        bell_check(),
        cphi_check(&mut rng),
    ];
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport {
        format: "cphase.validate/1",
        cutoff: opts.cutoff,
        seed: opts.seed,
        checks,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn find<'a>(rep: &'a ValidationReport, name: &str) -> &'a CheckResult {
        rep.checks.iter().find(|c| c.name == name).unwrap()
    }

    #[test]
    fn default_build_passes() {
        let rep = run_validate(&ValidateOptions::default());
        for c in &rep.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert!(rep.passed);
    }

    #[test]
    fn cutoff_one_fails_oracle_with_truncation() {
        let rep = run_validate(&ValidateOptions {
            cutoff: 1,
            coverage_runs: 10,
            ..Default::default()
        });
        let c = find(&rep, "oracle_equivalence");
        assert!(!c.passed);
        assert!(c.detail.contains("truncation"), "{}", c.detail);
        assert!(!rep.passed);
    }

    #[test]
    fn sign_flip_breaks_fringe_identity() {
        let rep = run_validate(&ValidateOptions {
            flip_theta_sign: true,
            coverage_runs: 10,
            ..Default::default()
        });
        assert!(!find(&rep, "fringe_shift_identity").passed);
        assert!(find(&rep, "small_regime_bound").passed);
    }
}
