use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radial_ma::config::{parse_config, ExperimentConfig};
use radial_ma::experiment::{fit_csv, run_experiment, run_lemmas, run_sweep, RunStatus};
use radial_ma::io::{to_sorted_json, write_json};

#[derive(Parser)]
#[command(
    version,
    about = "Radial Monge-Ampere solver and decay-estimate checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `analysis.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one model end; writes CSV, manifest and timings.
    Solve,
    /// Sweep over `sweep.eps` and/or `sweep.exponents`.
    Sweep,
    /// Run the lemma property suites only.
    Lemmas,
    /// Re-fit decay exponents from an existing solution CSV.
    Fit { csv: PathBuf },
}

fn load(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.analysis.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<RunStatus, (RunStatus, String)> {
    let validation = |e: String| (RunStatus::ValidationFailure, e);
    let io = |e: radial_ma::io::IoError| (RunStatus::SolverFailure, e.to_string());
    let cfg = load(cli).map_err(validation)?;
    match &cli.command {
        Command::Solve => {
            let outcome = run_experiment(&cfg).map_err(io)?;
            let m = &outcome.manifest;
            for stage in &m.stages {
                match &stage.error {
                    Some(err) => eprintln!("{}: {:?}: {err}", stage.name, stage.status),
                    None => eprintln!("{}: {:?}", stage.name, stage.status),
                }
            }
            if let Some(limit) = &m.limit {
                println!("sup|u| = {:e}", limit.sup_u);
                if let Some(err) = limit.oracle_sup_error {
                    println!("oracle sup error = {err:e}");
                }
            }
            if let Some(p) = &m.main_theorem {
                println!(
                    "pinch exponent = {:?} (envelope {})",
                    p.fitted_pinch_exponent, p.envelope
                );
            }
            println!("written to {}", cfg.output.dir.display());
            Ok(m.status)
        }
        Command::Sweep => {
            if cfg.sweep.eps.is_empty() && cfg.sweep.exponents.is_empty() {
                return Err(validation(
                    "sweep needs sweep.eps or sweep.exponents".into(),
                ));
            }
            let m = run_sweep(&cfg).map_err(io)?;
            println!(
                "{} eps points, {} exponent runs written to {}",
                m.eps_points.len(),
                m.exponent_runs.len(),
                cfg.output.dir.display()
            );
            Ok(m.status)
        }
        Command::Lemmas => {
            let outcome = run_lemmas(&cfg).map_err(io)?;
            for r in &outcome.manifest.lemmas {
                println!(
                    "{} n={} samples={} failures={} worst_ratio={:.6}",
                    r.lemma, r.dim, r.samples, r.failures, r.worst_ratio
                );
            }
            Ok(outcome.manifest.status)
        }
        Command::Fit { csv } => {
            let report = fit_csv(csv, &cfg.windows()).map_err(validation_io)?;
            if cli.out.is_some() {
                write_json(&report, &cfg.output.dir.join("fits.json")).map_err(io)?;
            }
            print!("{}", to_sorted_json(&report.asymptotic).map_err(io)?);
            Ok(RunStatus::Success)
        }
    }
}

fn validation_io(e: radial_ma::io::IoError) -> (RunStatus, String) {
    (RunStatus::ValidationFailure, e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let status = match run(&cli) {
        Ok(status) => status,
        Err((status, message)) => {
            eprintln!("error: {message}");
            status
        }
    };
    ExitCode::from(status.exit_code() as u8)
}
