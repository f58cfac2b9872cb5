//! `qmpx`: solve QMP problem files and run the relay-network Monte-Carlo
//! studies.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use qmpx::designer::{Initializer, IterationConfig};
use qmpx::model::read_problem;
use qmpx::scenario::read_scenario;
use qmpx::sim::{emit_csv, run_initstudy, run_sweep, CurveRow, SnrGrid, Strategy, SweepSpec};
use qmpx::solvers::{solve_auto, solve_with, SolvePath};

#[derive(Parser)]
#[command(
    name = "qmpx",
    version,
    about = "Quadratic matrix programming and LMMSE transceiver design"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a problem file and print the solution as JSON.
    Solve {
        problem: PathBuf,
        /// auto, closed-form, bisection, dual-newton, convex-sdp, socp or sdr.
        #[arg(long, default_value = "auto")]
        path: PathChoice,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average sum-MSE curves over channel draws for each SNR point.
    Simulate {
        scenario: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_delimiter = ',', default_value = "proposed,uniformpa")]
        strategies: Vec<Strategy>,
        #[arg(long, value_delimiter = ',', default_value = "feasible")]
        initializers: Vec<Initializer>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare initializers: final curves plus the mean objective per sweep.
    Initstudy {
        scenario: PathBuf,
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "feasible,infeasible,rank-deficient"
        )]
        initializers: Vec<Initializer>,
        #[arg(long)]
        out: PathBuf,
        /// Per-sweep traces (defaults to `<out>` with a `.traces.csv` suffix).
        #[arg(long)]
        traces: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SweepArgs {
    /// SNR grid in dB, `start:step:stop` or one value.
    #[arg(long, default_value = "0:5:30")]
    snr: SnrGrid,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// QPSK symbols per trial for the empirical MSE.
    #[arg(long, default_value_t = 10_000)]
    symbols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Iteration settings as JSON (fields of `IterationConfig`).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

/// `auto` or a named path.
#[derive(Clone, Copy)]
struct PathChoice(Option<SolvePath>);

impl std::str::FromStr for PathChoice {
    type Err = qmpx::Error;

    fn from_str(s: &str) -> Result<Self, qmpx::Error> {
        if s.eq_ignore_ascii_case("auto") {
            Ok(Self(None))
        } else {
            s.parse().map(|p| Self(Some(p)))
        }
    }
}

impl SweepArgs {
    fn spec(&self, scenario: &Path) -> Result<SweepSpec> {
        let file =
            read_scenario(scenario).with_context(|| format!("reading {}", scenario.display()))?;
        let mut spec = SweepSpec::new(file, self.snr.0.clone());
        spec.trials = self.trials;
        spec.symbols = self.symbols;
        spec.seed = self.seed;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            spec.iteration = serde_json::from_str::<IterationConfig>(&text)
                .with_context(|| format!("parsing {}", path.display()))?;
        }
        if let Some(n) = self.max_sweeps {
            spec.iteration.max_sweeps = n;
        }
        if let Some(t) = self.tol {
            spec.iteration.tol = t;
        }
        Ok(spec)
    }
}

fn report_skips(rows: &[CurveRow]) {
    for r in rows.iter().filter(|r| r.skipped > 0) {
        let init = r.initializer.map(|i| format!(" {i:?}")).unwrap_or_default();
        eprintln!(
            "{} dB {}{init}: skipped {} failed trials",
            r.snr_db, r.strategy, r.skipped
        );
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { problem, path, out } => {
            let p =
                read_problem(&problem).with_context(|| format!("reading {}", problem.display()))?;
            let rep = match path.0 {
                None => solve_auto(&p)?,
                Some(path) => solve_with(&p, path)?,
            };
            let json = rep.to_json()?;
            match out {
                Some(o) => {
                    std::fs::write(&o, json).with_context(|| format!("writing {}", o.display()))?
                }
                None => println!("{json}"),
            }
        }
        Command::Simulate {
            scenario,
            sweep,
            strategies,
            initializers,
            out,
        } => {
            let mut spec = sweep.spec(&scenario)?;
            spec.strategies = strategies;
            spec.initializers = initializers;
            let rows = run_sweep(&spec)?;
            report_skips(&rows);
            emit_csv(&rows, &out).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("wrote {} rows to {}", rows.len(), out.display());
        }
        Command::Initstudy {
            scenario,
            sweep,
            initializers,
            out,
            traces,
        } => {
            let mut spec = sweep.spec(&scenario)?;
            spec.strategies = vec![Strategy::Proposed];
            spec.initializers = initializers;
            let traces = traces.unwrap_or_else(|| out.with_extension("traces.csv"));
            let (curves, trace_rows) = run_initstudy(&spec)?;
            report_skips(&curves);
            emit_csv(&curves, &out).with_context(|| format!("writing {}", out.display()))?;
            emit_csv(&trace_rows, &traces)
                .with_context(|| format!("writing {}", traces.display()))?;
            eprintln!(
                "wrote {} rows to {} and {} rows to {}",
                curves.len(),
                out.display(),
                trace_rows.len(),
                traces.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
