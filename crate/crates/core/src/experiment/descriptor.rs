//! Experiment descriptors.
//!
//! A descriptor is a TOML file with sections. Only `[experiment].preset`
//! is required; everything else falls back to the preset's defaults.
//!
//! ```toml
//! # cphase descriptor v1
//! [experiment]
//! preset = "large"          # small | large | custom
//! seed = 7
//! fig3_theta_p_deg = 95.0
//!
//! [source]                  # optional overrides
//! dwell_time = 40.0
//! det1_efficiency = 1.0
//!
//! [rates]                   # custom preset only; all five required
//! singles_1_sig = 700.0
//! singles_1_ref = 8600.0
//! singles_2 = 129000.0
//! acc_coinc = 1.1
//! dc_coinc = 5.2
//!
//! [scan]
//! step_um = 0.04
//! count = 61
//!
//! [sweep]
//! points = 24               # or theta_p_deg = [0.0, 15.0, ...]
//!
//! [output]
//! dir = "out"
//! format = "json"           # json | csv
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{
    calibrate_from_rates, Calibration, DetectionError, RateSet, ScanSpec, SourceConfig,
    DEFAULT_BS2_TRANSMISSIVITY, DEFAULT_REP_RATE, LARGE_REGIME_DWELL_S, SMALL_REGIME_DWELL_S,
};

/// Default pump phase of the single fringe-pair run (the −1.6 fs point,
/// quoted as about 455°, i.e. 95° mod 360°).
pub const DEFAULT_FIG3_THETA_P_DEG: f64 = 95.0;
/// Default number of uniformly spaced sweep points over `[0°, 360°)`.
pub const DEFAULT_SWEEP_POINTS: usize = 24;
pub const DEFAULT_SEED: u64 = 2002;

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("descriptor is empty")]
    Empty,
    #[error("descriptor parse error: {0}")]
    Parse(String),
    #[error("descriptor field `{field}`: {reason}")]
    Constraint { field: String, reason: String },
    #[error("cannot read descriptor {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn constraint(field: &str, reason: impl Into<String>) -> DescriptorError {
    DescriptorError::Constraint {
        field: field.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Small,
    Large,
    Custom,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Small => "small",
            Preset::Large => "large",
            Preset::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

/// Source and detector settings on top of the calibrated amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceSettings {
    pub rep_rate: f64,
    pub dwell_time: f64,
    pub det1_efficiency: f64,
    pub det2_efficiency: f64,
    pub dark_rate_1: f64,
    pub dark_rate_2: f64,
    pub accidental_floor: f64,
    pub bs2_transmissivity: f64,
}

impl SourceSettings {
    fn for_preset(preset: Preset) -> Self {
        Self {
            rep_rate: DEFAULT_REP_RATE,
            dwell_time: match preset {
                Preset::Small => SMALL_REGIME_DWELL_S,
                Preset::Large | Preset::Custom => LARGE_REGIME_DWELL_S,
            },
            det1_efficiency: 1.0,
            det2_efficiency: 1.0,
            dark_rate_1: 0.0,
            dark_rate_2: 0.0,
            accidental_floor: 0.0,
            bs2_transmissivity: DEFAULT_BS2_TRANSMISSIVITY,
        }
    }
}

/// A validated, fully expanded experiment description.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentDescriptor {
    pub preset: Preset,
    pub rates: RateSet,
    pub source: SourceSettings,
    pub scan: ScanSpec,
    pub fig3_theta_p_deg: f64,
    pub sweep_theta_p_deg: Vec<f64>,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub format: OutputFormat,
}

impl ExperimentDescriptor {
    /// Defaults for a named preset. Custom has no rates of its own.
    pub fn preset(preset: Preset) -> Option<Self> {
        let rates = match preset {
            Preset::Small => RateSet::SMALL_REGIME,
            Preset::Large => RateSet::LARGE_REGIME,
            Preset::Custom => return None,
        };
        Some(Self::with_rates(preset, rates))
    }

    fn with_rates(preset: Preset, rates: RateSet) -> Self {
        Self {
            preset,
            rates,
            source: SourceSettings::for_preset(preset),
            scan: ScanSpec::default(),
            fig3_theta_p_deg: DEFAULT_FIG3_THETA_P_DEG,
            sweep_theta_p_deg: uniform_grid_deg(DEFAULT_SWEEP_POINTS),
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            format: OutputFormat::Json,
        }
    }

    /// Custom descriptor from explicit rates.
    pub fn custom(rates: RateSet) -> Self {
        Self::with_rates(Preset::Custom, rates)
    }

    /// `r = √(dc/acc)`, from the rates alone.
    pub fn r(&self) -> f64 {
        self.rates.ratio()
    }

    pub fn calibration(&self) -> Result<Calibration, DetectionError> {
        calibrate_from_rates(
            &self.rates,
            self.source.rep_rate,
            self.source.det1_efficiency,
            self.source.det2_efficiency,
            self.source.bs2_transmissivity,
        )
    }

    /// Source configuration at pump phase `theta_p_deg` (degrees).
    pub fn source_config(
        &self,
        theta_p_deg: f64,
        seed: u64,
    ) -> Result<SourceConfig, DetectionError> {
        let cal = self.calibration()?;
        let s = &self.source;
        let config = SourceConfig {
            rep_rate: s.rep_rate,
            dwell_time: s.dwell_time,
            switch: cal.switch.with_pump_phase(deg_to_rad(theta_p_deg)),
            det1_efficiency: s.det1_efficiency,
            det2_efficiency: s.det2_efficiency,
            dark_rate_1: s.dark_rate_1,
            dark_rate_2: s.dark_rate_2,
            accidental_floor: s.accidental_floor,
            rng_seed: seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, DescriptorError> {
        if text.trim().is_empty() {
            return Err(DescriptorError::Empty);
        }
        let raw: RawDescriptor =
            toml::from_str(text).map_err(|e| DescriptorError::Parse(e.to_string()))?;
        raw.expand()
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        let s = &self.source;
        if !(s.rep_rate > 0.0 && s.rep_rate.is_finite()) {
            return Err(constraint(
                "source.rep_rate",
                format!("{} must be positive", s.rep_rate),
            ));
        }
        if !(s.dwell_time > 0.0 && s.dwell_time * s.rep_rate >= 1.0) {
            return Err(constraint(
                "source.dwell_time",
                format!("{} must give at least one pulse per step", s.dwell_time),
            ));
        }
        for (field, v) in [
            ("source.det1_efficiency", s.det1_efficiency),
            ("source.det2_efficiency", s.det2_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(constraint(field, format!("{v} not in (0, 1]")));
            }
        }
        if !(0.0..=1.0).contains(&s.bs2_transmissivity) {
            return Err(constraint(
                "source.bs2_transmissivity",
                format!("{} not in [0, 1]", s.bs2_transmissivity),
            ));
        }
        for (field, v) in [
            ("source.dark_rate_1", s.dark_rate_1),
            ("source.dark_rate_2", s.dark_rate_2),
            ("source.accidental_floor", s.accidental_floor),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(constraint(field, format!("{v} must be non-negative")));
            }
        }
        for (field, v) in [
            ("rates.singles_1_sig", self.rates.singles_1_sig),
            ("rates.singles_1_ref", self.rates.singles_1_ref),
            ("rates.singles_2", self.rates.singles_2),
            ("rates.dc_coinc", self.rates.dc_coinc),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(constraint(field, format!("{v} must be non-negative")));
            }
        }
        if !(self.rates.acc_coinc > 0.0 && self.rates.acc_coinc.is_finite()) {
            return Err(constraint(
                "rates.acc_coinc",
                format!("{} must be positive", self.rates.acc_coinc),
            ));
        }
        if let Err(e) = self.scan.validate() {
            return Err(constraint("scan", e.to_string()));
        }
        if !self.fig3_theta_p_deg.is_finite() {
            return Err(constraint("experiment.fig3_theta_p_deg", "must be finite"));
        }
        if self.sweep_theta_p_deg.is_empty() {
            return Err(constraint("sweep", "theta_p grid is empty"));
        }
        if self.sweep_theta_p_deg.iter().any(|t| !t.is_finite()) {
            return Err(constraint("sweep.theta_p_deg", "values must be finite"));
        }
        if let Err(e) = self.calibration() {
            return Err(constraint("rates", e.to_string()));
        }
        Ok(())
    }
}

/// Reads and validates a descriptor file.
pub fn load_descriptor(path: impl AsRef<Path>) -> Result<ExperimentDescriptor, DescriptorError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| DescriptorError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentDescriptor::parse(&text)
}

/// `n` evenly spaced pump phases over `[0°, 360°)`.
pub fn uniform_grid_deg(n: usize) -> Vec<f64> {
    (0..n).map(|k| 360.0 * k as f64 / n as f64).collect()
}

/// The one place descriptor degrees become radians.
pub fn deg_to_rad(deg: f64) -> f64 {
    deg.to_radians()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDescriptor {
    experiment: RawExperiment,
    #[serde(default)]
    source: RawSource,
    rates: Option<RateSet>,
    scan: Option<ScanSpec>,
    #[serde(default)]
    sweep: RawSweep,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    preset: Preset,
    seed: Option<u64>,
    fig3_theta_p_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSource {
    rep_rate: Option<f64>,
    dwell_time: Option<f64>,
    det1_efficiency: Option<f64>,
    det2_efficiency: Option<f64>,
    dark_rate_1: Option<f64>,
    dark_rate_2: Option<f64>,
    accidental_floor: Option<f64>,
    bs2_transmissivity: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    theta_p_deg: Option<Vec<f64>>,
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    format: Option<OutputFormat>,
}

impl RawDescriptor {
    fn expand(self) -> Result<ExperimentDescriptor, DescriptorError> {
        let preset = self.experiment.preset;
        let mut desc = match (preset, self.rates) {
            (Preset::Custom, Some(rates)) => ExperimentDescriptor::custom(rates),
            (Preset::Custom, None) => {
                return Err(constraint(
                    "rates",
                    "custom preset requires a [rates] section with all five rates",
                ))
            }
            (_, Some(_)) => {
                return Err(constraint(
                    "rates",
                    format!("preset `{preset}` fixes the rates; use preset = \"custom\""),
                ))
            }
            (p, None) => ExperimentDescriptor::preset(p).expect("named preset"),
        };

        let s = self.source;
        let d = &mut desc.source;
        d.rep_rate = s.rep_rate.unwrap_or(d.rep_rate);
        d.dwell_time = s.dwell_time.unwrap_or(d.dwell_time);
        d.det1_efficiency = s.det1_efficiency.unwrap_or(d.det1_efficiency);
        d.det2_efficiency = s.det2_efficiency.unwrap_or(d.det2_efficiency);
        d.dark_rate_1 = s.dark_rate_1.unwrap_or(d.dark_rate_1);
        d.dark_rate_2 = s.dark_rate_2.unwrap_or(d.dark_rate_2);
        d.accidental_floor = s.accidental_floor.unwrap_or(d.accidental_floor);
        d.bs2_transmissivity = s.bs2_transmissivity.unwrap_or(d.bs2_transmissivity);

        if let Some(scan) = self.scan {
            desc.scan = scan;
        }
        if let Some(seed) = self.experiment.seed {
            desc.seed = seed;
        }
        if let Some(t) = self.experiment.fig3_theta_p_deg {
            desc.fig3_theta_p_deg = t;
        }
        desc.sweep_theta_p_deg = match (self.sweep.theta_p_deg, self.sweep.points) {
            (Some(_), Some(_)) => {
                return Err(constraint(
                    "sweep",
                    "give either theta_p_deg or points, not both",
                ))
            }
            (Some(grid), None) => grid,
            (None, Some(n)) => uniform_grid_deg(n),
            (None, None) => desc.sweep_theta_p_deg,
        };
        if let Some(dir) = self.output.dir {
            desc.out_dir = dir;
        }
        if let Some(f) = self.output.format {
            desc.format = f;
        }
        desc.validate()?;
        Ok(desc)
    }
}
