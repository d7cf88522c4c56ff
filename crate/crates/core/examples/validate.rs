//! Run the self-checks and print the report.

use cphase::experiment::{run_validate, ValidateOptions};

fn main() {
    let report = run_validate(&ValidateOptions::default());
    for c in &report.checks {
        println!(
            "{} {:<24} {}",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    std::process::exit(if report.passed { 0 } else { 1 });
}
