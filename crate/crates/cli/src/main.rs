//! `vortex`: stability analysis of point-vortex relative equilibria.
//!
//! Exit codes: 0 when the analysis completed (whatever the verdict),
//! 2 for invalid input, 3 for numerical failures.

mod suite;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vortex_core::analysis::{
    analyze, emit, gamma_sweep, perturbed_trajectory, AnalysisOptions, CorroborationOptions, Emit, Format,
    SweepOptions,
};
use vortex_core::dynamics::invariant_drift_report;
use vortex_core::par::Execution;
use vortex_core::scenario::{build_scenario, Scenario, ScenarioKind, ScenarioParams};
use vortex_core::stability::DEFAULT_SEED;
use vortex_core::Error;

#[derive(Parser)]
#[command(name = "vortex", version, about = "Stability of point-vortex relative equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// equilateral3, triangle-center, square-center, polygon-center:<m> or custom
    #[arg(long)]
    scenario: Option<String>,
    /// Central circulation (third circulation for equilateral3)
    #[arg(long, allow_negative_numbers = true)]
    gamma: Option<f64>,
    /// Explicit circulations, comma-separated
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    circulations: Option<Vec<f64>>,
    /// JSON file with `positions: [[x, y], ...]` and `circulations: [...]`
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Spectrum, multipliers and Energy-Casimir certificate at one point
    Analyze {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Casimir orders to include
        #[arg(long, value_delimiter = ',', default_value = "1")]
        casimirs: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Also integrate a perturbed trajectory up to this time
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1e-4)]
        perturb: f64,
        /// Output file; `.csv` selects CSV, anything else JSON
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verdicts and minors over a grid of the free parameter
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        step: f64,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        casimirs: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        /// Evaluate grid points one at a time
        #[arg(long)]
        sequential: bool,
        /// Output file; `.json` selects JSON, anything else CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduced trajectory from a perturbed fixed point
    Integrate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long, default_value_t = 0.0)]
        perturb: f64,
        /// Output file; `.json` selects JSON, anything else CSV
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in reference fixtures
    Check {
        #[arg(long, value_enum, default_value_t = Suite::Paper)]
        suite: Suite,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    /// Worked examples with closed-form spectra, multipliers, minors and verdicts
    Paper,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_invalid_input() || matches!(e, Error::Io(_) | Error::Json(_)) {
        2
    } else {
        3
    }
}

fn resolve(args: &ScenarioArgs) -> Result<Scenario, Error> {
    let mut params = match &args.config {
        Some(path) => ScenarioParams::from_json_file(path)?,
        None => ScenarioParams::default(),
    };
    if args.gamma.is_some() {
        params.gamma = args.gamma;
    }
    if args.circulations.is_some() {
        params.circulations = args.circulations.clone();
    }
    let kind = match (&args.scenario, &args.config) {
        (Some(s), _) => s.parse()?,
        (None, Some(_)) => ScenarioKind::Custom,
        (None, None) => return Err(Error::InvalidArgument("--scenario or --config is required".into())),
    };
    build_scenario(kind, &params)
}

/// `.json` or `.csv` by extension, otherwise `default`.
fn format_for(path: &Path, default: Format) -> Format {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("json") => Format::Json,
        Some("csv") => Format::Csv,
        _ => default,
    }
}

/// Writes to `out` when given, otherwise to stdout.
fn output<T: Emit>(item: &T, out: Option<&Path>, default: Format) -> Result<(), Error> {
    match out {
        Some(path) => emit(item, format_for(path, default), path),
        None => {
            let mut lock = std::io::stdout().lock();
            item.write_to(default, &mut lock)?;
            lock.flush()?;
            Ok(())
        }
    }
}

/// Exit status on success; 3 when reference checks fail.
fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Analyze { scenario, casimirs, seed, t_end, dt, perturb, out } => {
            let s = resolve(&scenario)?;
            let opts = AnalysisOptions {
                casimirs,
                seed,
                corroborate: t_end.map(|t_end| CorroborationOptions { t_end, dt, perturb }),
            };
            let report = analyze(&s, &opts)?;
            output(&report, out.as_deref(), Format::Json)?;
            if out.is_some() {
                println!("{}: {}", s.name, report.verdict);
            }
        }
        Command::Sweep { scenario, from, to, step, casimirs, seed, sequential, out } => {
            let kind: ScenarioKind = scenario
                .scenario
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("--scenario is required".into()))?
                .parse()?;
            let opts = SweepOptions {
                casimirs,
                seed,
                execution: if sequential { Execution::Sequential } else { Execution::Parallel },
            };
            let table = gamma_sweep(kind, &ScenarioParams::default(), from, to, step, &opts)?;
            for note in &table.notes {
                eprintln!("note: {note}");
            }
            output(&table, out.as_deref(), Format::Csv)?;
        }
        Command::Integrate { scenario, t_end, dt, perturb, out } => {
            let s = resolve(&scenario)?;
            let traj = perturbed_trajectory(&s, perturb, t_end, dt)?;
            let drift = invariant_drift_report(&traj)?;
            output(&traj, out.as_deref(), Format::Csv)?;
            eprintln!(
                "{} samples; drift: H {:.3e}, residual {:.3e}",
                traj.len(),
                drift.hamiltonian.max,
                drift.residual_max.max
            );
            if let Some(reason) = &traj.aborted {
                return Err(Error::IntegrationAborted(reason.clone()));
            }
        }
        Command::Check { suite: Suite::Paper } => {
            let results = suite::run();
            let failed = results.iter().filter(|r| !r.passed).count();
            for (i, r) in results.iter().enumerate() {
                let tag = if r.passed { "PASS" } else { "FAIL" };
                println!("{tag} [{:>2}] {}: {}", i + 1, r.name, r.detail);
            }
            println!("{} passed, {failed} failed", results.len() - failed);
            if failed > 0 {
                return Ok(3);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
