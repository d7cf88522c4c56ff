//! One simulated reference-delay scan in the large regime, printed as CSV.

use cphase::detection::{simulate_scan, RateSet, ScanSpec, SourceConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SourceConfig::from_rates(&RateSet::LARGE_REGIME, 95f64.to_radians(), 40.0, 7)?;
    let record = simulate_scan(&config, &ScanSpec::default())?;
    record.write_csv(std::io::stdout().lock())?;
    Ok(())
}
