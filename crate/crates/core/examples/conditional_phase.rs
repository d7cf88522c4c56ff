//! Conditional phase shift against pump phase in both regimes.

use cphase::detection::RateSet;
use cphase::switch::{conditional_phase_shift, max_phase_shift, RegimeReport};

fn main() {
    for (name, rates) in [
        ("small", RateSet::SMALL_REGIME),
        ("large", RateSet::LARGE_REGIME),
    ] {
        let r = rates.ratio();
        println!(
            "{name}: r = {r:.4} ({:?}), max |dphi| = {:.2} deg",
            RegimeReport::from_ratio(r).regime,
            max_phase_shift(r).to_degrees()
        );
        for deg in (0..360).step_by(30) {
            let dphi = conditional_phase_shift(r, (deg as f64).to_radians()).unwrap();
            println!(
                "  theta_p = {deg:>3} deg  dphi = {:>8.2} deg",
                dphi.to_degrees()
            );
        }
    }
}
