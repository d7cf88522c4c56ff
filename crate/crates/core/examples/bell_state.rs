//! A pair amplitude on |VV> turns the product state |HH> into a Bell state.

use cphase::switch::{concurrence, polarization_switch, PolarizationPairState};
use cphase::C64;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let eps = C64::new(0.1, 0.0);
    let hh = PolarizationPairState::new(
        eps,
        C64::new(1.0, 0.0),
        C64::default(),
        C64::default(),
        C64::default(),
    );
    for delta in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let out = polarization_switch(&hh, eps * delta)?;
        println!(
            "A_DC/eps = {delta:<4}  a = {:.4}  d = {:.4}  C = {:.12}",
            out.a,
            out.d,
            concurrence(&out)
        );
    }
    Ok(())
}
