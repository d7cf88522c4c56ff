//! Pump-phase sweep in both regimes against the zero-parameter theory curve.

use cphase::experiment::{run_fig4, ExperimentDescriptor, Preset, RunOptions};
use cphase::switch::conditional_phase_shift;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for preset in [Preset::Small, Preset::Large] {
        let mut desc = ExperimentDescriptor::preset(preset).unwrap();
        desc.out_dir = format!("out/example-fig4-{preset}").into();
        let s = run_fig4(&desc, &RunOptions::default())?;
        println!("{preset}: r = {:.4}", s.r);
        for p in &s.points {
            let theory =
                conditional_phase_shift(s.r, p.theta_p_deg.to_radians()).map(f64::to_degrees);
            println!(
                "  {:>6.1} deg  measured {:>8.2} +/- {:.2}  theory {:>8.2}",
                p.theta_p_deg,
                p.delta_phi_deg.unwrap_or(f64::NAN),
                p.sigma_deg.unwrap_or(f64::NAN),
                theory.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}
