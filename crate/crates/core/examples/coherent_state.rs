//! Weak coherent states in a truncated Fock space.

use cphase::fock::{coherent_state, FockBasis};
use cphase::C64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for cutoff in [1, 2, 3, 4] {
        let basis = FockBasis::new(1, cutoff)?;
        let state = coherent_state(0, C64::new(0.3, 0.0), basis)?;
        println!(
            "cutoff {cutoff}: <n> = {:.6}  leakage = {:.2e}  c1/c0 = {:.4}",
            state.mean_photon_number(0),
            state.truncation_leakage(),
            state.amplitude(&[1]) / state.amplitude(&[0]),
        );
    }
    Ok(())
}
