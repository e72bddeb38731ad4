//! Experiment runner: each subcommand drives one pipeline stage end to end
//! from a JSON config, printing JSON (or CSV for scans) on stdout.
//!
//! Exit codes: 0 on success, 1 on any stage or validation failure, 2 on
//! usage errors (handled by the argument parser).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hybrid_aqs::estimation::estimate_observable;
use hybrid_aqs::evolution::min_gap;
use hybrid_aqs::experiment::{
    build_experiment, fit_rows, prepare_state, read_scan_csv, run_full, run_scan_stage,
    scan_csv_text, validate_config, ExperimentConfig, GAP_SCAN_RESOLUTION,
};
use hybrid_aqs::gadget::{verify_gadget, GadgetSpec};
use hybrid_aqs::units::UnitSystem;
use hybrid_aqs::AqsError;

const SEED_ENV: &str = "HYBRID_AQS_SEED";

#[derive(Parser)]
#[command(
    name = "hybrid-aqs",
    version,
    about = "Simulates ground-state measurement of spin-graph Hamiltonians \
             through an adiabatically prepared register and a probe qubit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment description (JSON).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Master seed override; beats the HYBRID_AQS_SEED variable and the
    /// seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Force the closed-system pipeline regardless of the config.
    #[arg(long)]
    no_noise: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Build the model and print its summary
    Build(ConfigArgs),
    /// Scan the sweep for the minimum spectral gap
    Gap(ConfigArgs),
    /// Prepare the ground state and report its fidelity
    Prepare(ConfigArgs),
    /// Run the probe scan and emit the dataset CSV
    Scan {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Fit the damped cosine to a saved dataset CSV
    Fit {
        /// Dataset CSV produced by `scan` or `full-run`.
        #[arg(long = "in", value_name = "FILE")]
        input: PathBuf,
        /// Probe splitting in units of the base energy scale.
        #[arg(long)]
        delta: f64,
        /// Base frequency the dataset was generated at.
        #[arg(long, default_value_t = 25.0)]
        omega0_mhz: f64,
        /// Frequency hint in units of the base energy scale.
        #[arg(long)]
        omega_hint: Option<f64>,
    },
    /// Check the three-body reduction at a given accuracy
    GadgetVerify {
        /// Requested accuracy; the penalty gap is set to epsilon^-3.
        #[arg(long)]
        epsilon: f64,
        /// Strength of the three-body target term.
        #[arg(long, default_value_t = 1.0)]
        coupling: f64,
        /// Points on the self-energy evaluation grid.
        #[arg(long, default_value_t = 21)]
        grid_points: usize,
    },
    /// Run the whole pipeline and write scan.csv, result.json, plot.csv
    FullRun {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory for the artifacts.
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig, AqsError> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    } else if let Ok(text) = std::env::var(SEED_ENV) {
        cfg.seed = text
            .parse()
            .map_err(|_| AqsError::Config(format!("{SEED_ENV}={text} is not a valid seed")))?;
    }
    if args.no_noise {
        cfg.noise.enabled = false;
    }
    let diagnostics = validate_config(&cfg);
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("{:?}: {}", d.code, d.message);
        }
        return Err(AqsError::Config(format!(
            "{} diagnostic(s); see stderr",
            diagnostics.len()
        )));
    }
    Ok(cfg)
}

fn emit<T: serde::Serialize>(value: &T) -> Result<(), AqsError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool, AqsError> {
    match cli.command {
        Command::Build(args) => {
            let exp = build_experiment(&load_config(&args)?)?;
            emit(&exp.summary())?;
        }
        Command::Gap(args) => {
            let exp = build_experiment(&load_config(&args)?)?;
            let (gap, s_at_min) = min_gap(&exp.h_initial, &exp.h_target, GAP_SCAN_RESOLUTION)?;
            emit(&serde_json::json!({ "min_gap": gap, "s_at_min": s_at_min }))?;
        }
        Command::Prepare(args) => {
            let cfg = load_config(&args)?;
            let exp = build_experiment(&cfg)?;
            let (state, fidelity) = prepare_state(&exp, &cfg)?;
            emit(&serde_json::json!({
                "prep_fidelity": fidelity,
                "dim": state.dim(),
                "noise_enabled": exp.noise.is_some(),
            }))?;
        }
        Command::Scan { config, out } => {
            let cfg = load_config(&config)?;
            let exp = build_experiment(&cfg)?;
            let (dataset, _) = run_scan_stage(&exp, &cfg)?;
            let text = scan_csv_text(&dataset, &exp.units);
            match out {
                Some(path) => std::fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
        Command::Fit {
            input,
            delta,
            omega0_mhz,
            omega_hint,
        } => {
            let rows = read_scan_csv(&input)?;
            let omega0 = UnitSystem::from_mhz(omega0_mhz).omega0_rad_per_s();
            let fit = fit_rows(&rows, omega_hint.map(|h| h * omega0))?;
            let a0_hat = estimate_observable(&fit, delta * omega0)? / omega0;
            emit(&serde_json::json!({
                "omega_hat": fit.model.omega / omega0,
                "a0_hat": a0_hat,
                "residual": fit.residual_norm,
                "converged": fit.converged,
                "starts_tried": fit.starts_tried,
            }))?;
        }
        Command::GadgetVerify {
            epsilon,
            coupling,
            grid_points,
        } => {
            let spec = GadgetSpec::pauli_z(coupling, epsilon)?;
            let report = verify_gadget(&spec, grid_points)?;
            emit(&report)?;
            return Ok(report.pass);
        }
        Command::FullRun { config, out } => {
            let cfg = load_config(&config)?;
            let artifacts = run_full(&cfg, &out)?;
            emit(&artifacts.summary)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
