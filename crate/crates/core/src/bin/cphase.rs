use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cphase::experiment::{
    calibration_report, load_descriptor, run_fig3, run_fig4, run_validate, ExperimentDescriptor,
    OutputFormat, Preset, RunOptions, ValidateOptions,
};

type Failure = Box<dyn std::error::Error>;

/// Two-photon conditional-phase switch: simulation, fitting and validation.
#[derive(Parser)]
#[command(name = "cphase", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One reference-delay scan at a fixed pump phase, with fringe fits.
    Fig3(RunArgs),
    /// Pump-phase sweep against the zero-parameter theory curve.
    Fig4(RunArgs),
    /// Self-checks: oracle equivalence, regime bounds, fit coverage.
    Validate(ValidateArgs),
    /// Amplitudes and regime implied by a descriptor's rates.
    Calibrate(DescriptorArgs),
}

#[derive(Args)]
struct DescriptorArgs {
    /// Descriptor file (TOML).
    #[arg(long, env = "CPHASE_DESCRIPTOR", conflicts_with = "preset")]
    descriptor: Option<PathBuf>,
    /// Built-in preset, used when no descriptor is given.
    #[arg(long, env = "CPHASE_PRESET", value_parser = parse_preset, default_value = "large")]
    preset: Preset,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: DescriptorArgs,
    #[arg(long, env = "CPHASE_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "CPHASE_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "CPHASE_WORKERS")]
    workers: Option<usize>,
    #[arg(long, env = "CPHASE_FORMAT", value_enum)]
    format: Option<OutputFormat>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, env = "CPHASE_SEED", default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, env = "CPHASE_OUT")]
    out: Option<PathBuf>,
    /// Fock cutoff for the oracle grid.
    #[arg(long, default_value_t = 3)]
    cutoff: usize,
    /// Mutation test: flip the pump-phase sign in the fringe-shift check.
    #[arg(long, hide = true)]
    flip_theta_sign: bool,
}

fn parse_preset(s: &str) -> Result<Preset, String> {
    match s {
        "small" => Ok(Preset::Small),
        "large" => Ok(Preset::Large),
        _ => Err(format!(
            "unknown preset `{s}` (small | large; use a descriptor for custom)"
        )),
    }
}

fn descriptor(args: &DescriptorArgs) -> Result<ExperimentDescriptor, Failure> {
    Ok(match &args.descriptor {
        Some(path) => load_descriptor(path)?,
        None => ExperimentDescriptor::preset(args.preset).expect("named preset"),
    })
}

fn prepare(args: &RunArgs) -> Result<(ExperimentDescriptor, RunOptions), Failure> {
    let mut desc = descriptor(&args.source)?;
    if let Some(seed) = args.seed {
        desc.seed = seed;
    }
    if let Some(out) = &args.out {
        desc.out_dir = out.clone();
    }
    if let Some(format) = args.format {
        desc.format = format;
    }
    let mut opts = RunOptions::default();
    if let Some(w) = args.workers {
        opts.workers = w.max(1);
    }
    Ok((desc, opts))
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Fig3(args) => {
            let (desc, opts) = prepare(&args)?;
            let s = run_fig3(&desc, &opts)?;
            match (s.delta_phi_deg, s.sigma_deg) {
                (Some(d), Some(e)) => println!(
                    "delta_phi = {d:.1} ± {e:.1} deg (theory {:.1})",
                    s.theory_delta_phi_deg.unwrap_or(f64::NAN)
                ),
                _ => println!("fit failed"),
            }
            for f in &s.files {
                println!("wrote {}", f.display());
            }
            if s.flagged() {
                eprintln!("flags: {}", s.flags.join(", "));
            }
            Ok(!s.flagged())
        }
        Command::Fig4(args) => {
            let (desc, opts) = prepare(&args)?;
            let s = run_fig4(&desc, &opts)?;
            let flagged = s.points.iter().filter(|p| p.is_flagged()).count();
            println!(
                "{} sweep points, {flagged} flagged, r = {:.4}",
                s.points.len(),
                s.r
            );
            for f in &s.files {
                println!("wrote {}", f.display());
            }
            Ok(!s.flagged())
        }
        Command::Validate(args) => {
            let report = run_validate(&ValidateOptions {
                cutoff: args.cutoff,
                flip_theta_sign: args.flip_theta_sign,
                seed: args.seed,
                ..ValidateOptions::default()
            });
            let json = serde_json::to_string_pretty(&report)?;
            match &args.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    let path = dir.join("validate.json");
                    std::fs::write(&path, json + "\n")?;
                    println!("wrote {}", path.display());
                }
                None => println!("{json}"),
            }
            for c in &report.checks {
                eprintln!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            Ok(report.passed)
        }
        Command::Calibrate(args) => {
            let report = calibration_report(&descriptor(&args)?)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
