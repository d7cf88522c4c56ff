use std::f64::consts::{PI, TAU};

use proptest::prelude::*;

use cphase::detection::{OrderedF64, ScanPoint, ScanRecord};
use cphase::fit::{fit_fringe, phase_difference, FringeModel, PeriodSpec, Weighting};
use cphase::fock::{
    beamsplitter, coherent_product, project_on_click, spdc_evolve, spdc_operator, FockBasis,
    StateVector,
};
use cphase::switch::{
    concurrence, conditional_amplitude, conditional_phase_shift, cphi_contract_check,
    det1_singles_probability, max_phase_shift, pair_rate_modulation, PolarizationPairState,
    SwitchParams,
};
use cphase::{wrap_phase, C64};

fn phase() -> impl Strategy<Value = f64> {
    -PI..PI
}

fn complex(max: f64) -> impl Strategy<Value = C64> {
    (0.0..max, 0.0..TAU).prop_map(|(m, p)| C64::from_polar(m, p))
}

fn fit_exact(model: &FringeModel, shift: f64, weighting: Weighting) -> FringeModel {
    let x: Vec<f64> = (0..40).map(|i| shift + i as f64 * 0.04).collect();
    let y: Vec<f64> = x.iter().map(|&xi| model.eval(xi)).collect();
    fit_fringe(&x, &y, PeriodSpec::Fixed(model.period), weighting)
        .unwrap()
        .model
}

proptest! {
    #[test]
    fn small_regime_is_bounded_by_arcsin(r in 0.0..0.999, theta in phase()) {
        let d = conditional_phase_shift(r, theta).unwrap();
        prop_assert!(d.abs() <= r.asin() + 1e-12);
    }

    #[test]
    fn large_regime_is_increasing(r in 1.001..100.0, a in phase(), b in phase()) {
        prop_assume!((a - b).abs() > 1e-9);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(conditional_phase_shift(r, lo).unwrap() < conditional_phase_shift(r, hi).unwrap());
    }

    #[test]
    fn extreme_ratio_follows_pump(r in 1e3..1e6, theta in phase()) {
        let d = conditional_phase_shift(r, theta).unwrap();
        prop_assert!(wrap_phase(d - theta).abs() <= (1.0 / r).asin() + 1e-12);
        prop_assert_eq!(max_phase_shift(r), PI);
    }

    #[test]
    fn rate_and_phase_agree(r in 0.0..10.0, theta in phase()) {
        let m = pair_rate_modulation(r, theta);
        prop_assume!(m > 1e-6);
        let d = conditional_phase_shift(r, theta).unwrap();
        prop_assert!((m.sqrt() * d.cos() - (1.0 + r * theta.cos())).abs() < 1e-9);
        prop_assert!((m.sqrt() * d.sin() - r * theta.sin()).abs() < 1e-9);
    }

    #[test]
    fn concurrence_ignores_global_phase_and_scale(
        a in complex(1.0), b in complex(1.0), c in complex(1.0), d in complex(1.0),
        phi in phase(), k in 0.1..10.0,
    ) {
        let s = PolarizationPairState::new(C64::new(0.1, 0.0), a, b, c, d);
        prop_assume!(s.coincidence_norm() > 1e-3);
        let n = s.normalized().unwrap();
        let scaled = PolarizationPairState::new(s.eps, a * k, b * k, c * k, d * k).normalized().unwrap();
        let c0 = concurrence(&n);
        prop_assert!((concurrence(&n.with_global_phase(phi)) - c0).abs() < 1e-12);
        prop_assert!((concurrence(&scaled) - c0).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&c0));
    }

    #[test]
    fn fit_phase_is_shift_equivariant(phi in phase(), shift in -2.0..2.0, amp in 20.0..80.0) {
        let model = FringeModel { offset: 200.0, amplitude: amp, phase: phi, period: 0.81 };
        // Sampling at x + shift moves the fitted phase by 2π·shift/L.
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.04).collect();
        let y: Vec<f64> = x.iter().map(|&xi| model.eval(xi + shift)).collect();
        let fit = fit_fringe(&x, &y, PeriodSpec::Fixed(0.81), Weighting::Poisson).unwrap().model;
        prop_assert!(wrap_phase(fit.phase - (phi + TAU * shift / 0.81)).abs() < 1e-8);
        let again = fit_exact(&model, shift, Weighting::Poisson);
        prop_assert!(wrap_phase(again.phase - phi).abs() < 1e-8);
    }

    #[test]
    fn fit_phase_is_scale_invariant(phi in phase(), k in 0.5..20.0f64) {
        let model = FringeModel { offset: 300.0, amplitude: 100.0, phase: phi, period: 0.81 };
        let scaled = FringeModel { offset: 300.0 * k, amplitude: 100.0 * k, ..model };
        for w in [Weighting::Poisson, Weighting::Uniform] {
            let a = fit_exact(&model, 0.0, w);
            let b = fit_exact(&scaled, 0.0, w);
            prop_assert!(wrap_phase(a.phase - b.phase).abs() < 1e-9);
            prop_assert!((b.amplitude / a.amplitude - k).abs() < 1e-6 * k);
        }
    }

    #[test]
    fn phase_difference_is_antisymmetric(p in phase(), q in phase()) {
        let fit_at = |phi: f64| {
            let model = FringeModel { offset: 200.0, amplitude: 60.0, phase: phi, period: 0.81 };
            let x: Vec<f64> = (0..25).map(|i| i as f64 * 0.04).collect();
            let y: Vec<f64> = x.iter().map(|&xi| model.eval(xi)).collect();
            fit_fringe(&x, &y, PeriodSpec::Fixed(0.81), Weighting::Poisson).unwrap()
        };
        let (a, b) = (fit_at(p), fit_at(q));
        let ab = phase_difference(&a, &b).unwrap().delta_phi;
        let ba = phase_difference(&b, &a).unwrap().delta_phi;
        prop_assert!(wrap_phase(ab + ba).abs() < 1e-9);
    }

    #[test]
    fn beamsplitter_conserves_photon_number(
        n in 0usize..=3, m in 0usize..=3, t in 0.0..=1.0, phi in phase(),
    ) {
        prop_assume!(n + m <= 3);
        let basis = FockBasis::new(2, 3).unwrap();
        let input = StateVector::fock(basis, &[n, m]).unwrap();
        let out = input.apply(&beamsplitter(basis, 0, 1, t, phi).unwrap());
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        prop_assert!((out.mean_total_photon_number() - (n + m) as f64).abs() < 1e-10);
    }

    #[test]
    fn mode_operators_are_unitary(t in 0.0..=1.0, phi in phase(), kappa in complex(0.2)) {
        let basis = FockBasis::new(2, 4).unwrap();
        prop_assert!(beamsplitter(basis, 0, 1, t, phi).unwrap().unitarity_defect() < 1e-9);
        prop_assert!(spdc_operator(basis, 0, 1, kappa).unwrap().unitarity_defect() < 1e-9);
    }

    #[test]
    fn raising_cutoff_never_increases_leakage(a in complex(0.5), b in complex(0.5)) {
        let l3 = coherent_product(&[a, b], FockBasis::new(2, 3).unwrap()).unwrap().truncation_leakage();
        let l4 = coherent_product(&[a, b], FockBasis::new(2, 4).unwrap()).unwrap().truncation_leakage();
        prop_assert!(l4 <= l3 + 1e-15);
    }

    #[test]
    fn engine_matches_model_phase(
        ma in 0.01..0.1, mb in 0.01..0.1, mk in 0.01..0.1,
        pa in 0.0..TAU, pb in 0.0..TAU, pk in 0.0..TAU,
    ) {
        let (alpha, beta, kappa) = (C64::from_polar(ma, pa), C64::from_polar(mb, pb), C64::from_polar(mk, pk));
        let basis = FockBasis::new(2, 3).unwrap();
        let evolved = spdc_evolve(&coherent_product(&[alpha, beta], basis).unwrap(), 0, 1, kappa).unwrap();
        let (cond, _) = project_on_click(&evolved, &[1], true).unwrap();
        let engine = (cond.amplitude(&[1, 1]) / cond.amplitude(&[0, 1])).arg();
        let params = SwitchParams { alpha, beta, a_dc: kappa, ref_amp: C64::default(), bs2_transmissivity: 1.0 };
        let model = conditional_amplitude(&params).unwrap().arg();
        let m = ma.max(mb).max(mk);
        prop_assert!(wrap_phase(engine - model).abs() <= 10.0 * m * m);
    }

    #[test]
    fn conditional_fringe_is_shifted_unconditional_fringe(
        r in 0.05..5.0, theta in phase(), phi in phase(), t in 0.05..0.95,
    ) {
        let params = SwitchParams::from_ratio(0.1, 0.1, r, theta, 0.1, t);
        let cond = conditional_amplitude(&params).unwrap();
        prop_assume!(cond.norm() > 1e-9);
        let dphi = conditional_phase_shift(r, theta).unwrap();
        let rescaled = cond * (params.alpha.norm() / cond.norm());
        let lhs = det1_singles_probability(rescaled, &params, phi);
        let rhs = det1_singles_probability(params.alpha, &params, phi - dphi);
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn first_order_amplitudes_respect_cphi(
        ma in 0.01..0.3, mb in 0.01..0.3, mk in 0.0..0.3, pa in phase(), pb in phase(), pk in phase(),
    ) {
        let params = SwitchParams {
            alpha: C64::from_polar(ma, pa),
            beta: C64::from_polar(mb, pb),
            a_dc: C64::from_polar(mk, pk),
            ref_amp: C64::default(),
            bs2_transmissivity: 0.9,
        };
        prop_assume!(conditional_phase_shift(params.ratio(), params.pump_phase()).is_ok());
        let rep = cphi_contract_check(&params).unwrap();
        prop_assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn scan_csv_round_trips(rows in prop::collection::vec((0.0..10.0f64, 0u64..1_000_000, 0u64..1000, 0u64..1000, 0u64..100), 1..20)) {
        let points = rows
            .iter()
            .map(|&(d, n, s1, s2, c)| ScanPoint {
                delay_um: OrderedF64(d),
                phi_ref: OrderedF64(d * 7.0),
                n_pulses: n + s1 + s2,
                singles_1: s1,
                singles_2: s2,
                coincidences: c.min(s1).min(s2),
            })
            .collect();
        let rec = ScanRecord { points };
        let back = ScanRecord::read_csv(rec.to_csv_string().as_bytes()).unwrap();
        prop_assert_eq!(back, rec);
    }
}
