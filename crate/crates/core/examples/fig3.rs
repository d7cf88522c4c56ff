//! Fringe pair at a fixed pump phase, written to `out/example-fig3`.

use cphase::experiment::{run_fig3, ExperimentDescriptor, Preset, RunOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut desc = ExperimentDescriptor::preset(Preset::Large).unwrap();
    desc.out_dir = "out/example-fig3".into();
    let s = run_fig3(&desc, &RunOptions::default())?;
    println!(
        "dphi = {:.1} +/- {:.1} deg, theory {:.1} deg",
        s.delta_phi_deg.unwrap_or(f64::NAN),
        s.sigma_deg.unwrap_or(f64::NAN),
        s.theory_delta_phi_deg.unwrap_or(f64::NAN)
    );
    for f in s.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}
