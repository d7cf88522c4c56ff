//! Experiment orchestration: descriptors, the fringe-pair and sweep runs,
//! and the self-validation report.

mod descriptor;
mod runner;
mod validate;

pub use descriptor::{
    deg_to_rad, load_descriptor, uniform_grid_deg, DescriptorError, ExperimentDescriptor,
    OutputFormat, Preset, SourceSettings, DEFAULT_FIG3_THETA_P_DEG, DEFAULT_SEED,
    DEFAULT_SWEEP_POINTS,
};
pub use runner::{
    calibration_report, present_mod360, pump_delay_fs_to_degrees, run_fig3, run_fig4,
    simulate_sweep, CalibrationReport, ExperimentError, Fig3Summary, Fig4Summary, FitSummary,
    RunOptions, DEFAULT_PUMP_WAVELENGTH_NM,
};
pub use validate::{
    fit_coverage, oracle_grid, run_validate, CheckResult, CoverageReport, OracleGridReport,
    OraclePoint, ValidateOptions, ValidationReport,
};
