//! Exact two-mode evolution against the closed-form conditional amplitude.

use cphase::experiment::oracle_grid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = oracle_grid(3, 1)?;
    println!(
        "{:>8} {:>8} {:>8} {:>12} {:>12} {:>10}",
        "|alpha|", "|beta|", "|kappa|", "engine", "model", "err/bound"
    );
    for p in &report.points {
        println!(
            "{:>8.2} {:>8.2} {:>8.2} {:>12.6} {:>12.6} {:>10.3e}",
            p.alpha.norm(),
            p.beta.norm(),
            p.kappa.norm(),
            p.engine_phase,
            p.model_phase,
            p.error / p.bound
        );
    }
    println!("worst error/bound: {:.3e}", report.worst_ratio);
    Ok(())
}
