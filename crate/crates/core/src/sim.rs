//! Monte-Carlo sweeps: per trial and SNR point, design the transceivers with
//! each strategy and record the analytic sum-MSE alongside a symbol-level
//! estimate from QPSK transmission.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::designer::{initialize, run, Initializer, IterationConfig};
use crate::error::{Error, Result};
use crate::robust::ChannelError;
use crate::scenario::{empirical_mse, DesignState, NetworkScenario, ScenarioFile};

/// Environment variable capping the worker count.
pub const THREADS_VAR: &str = "QMPX_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Strategy {
    Proposed,
    UniformPA,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Proposed => f.write_str("Proposed"),
            Strategy::UniformPA => f.write_str("UniformPA"),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "proposed" => Ok(Strategy::Proposed),
            "uniformpa" | "uniform" | "upa" => Ok(Strategy::UniformPA),
            _ => Err(Error::ConfigError(format!("unknown strategy {s:?}"))),
        }
    }
}

/// SNR points in dB, written `start:step:stop` or as a single value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrGrid(pub Vec<f64>);

impl FromStr for SnrGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::ConfigError(format!("SNR grid {s:?} is not start:step:stop"));
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        match parts[..] {
            [v] if v.is_finite() => Ok(SnrGrid(vec![v])),
            [start, step, stop]
                if start.is_finite() && stop.is_finite() && step > 0.0 && start <= stop =>
            {
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                Ok(SnrGrid((0..=n).map(|i| start + i as f64 * step).collect()))
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: ScenarioFile,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    /// QPSK vectors per trial for the symbol-level estimate.
    pub symbols: usize,
    pub strategies: Vec<Strategy>,
    /// Starting points of the proposed design (ignored by `UniformPA`).
    pub initializers: Vec<Initializer>,
    pub seed: u64,
    pub iteration: IterationConfig,
}

impl SweepSpec {
    pub fn new(scenario: ScenarioFile, snr_db: Vec<f64>) -> Self {
        Self {
            scenario,
            snr_db,
            trials: 500,
            symbols: 10_000,
            strategies: vec![Strategy::Proposed, Strategy::UniformPA],
            initializers: vec![Initializer::FullRankIdentityFeasible],
            seed: 0,
            iteration: IterationConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigError(m.into()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.snr_db.is_empty() {
            return bad("the SNR grid is empty");
        }
        if self.symbols == 0 {
            return bad("symbols must be at least 1");
        }
        if self.strategies.is_empty() {
            return bad("no strategy selected");
        }
        if self.strategies.contains(&Strategy::Proposed) && self.initializers.is_empty() {
            return bad("the proposed design needs an initializer");
        }
        if self.initializers.contains(&Initializer::Custom) {
            return bad("the custom initializer cannot be swept");
        }
        self.iteration.validate()
    }

    /// `(strategy, initializer)` pairs in output order: the proposed design
    /// per initializer, then the baseline.
    fn cells(&self) -> Vec<(Strategy, Option<Initializer>)> {
        let mut cells = Vec::new();
        if self.strategies.contains(&Strategy::Proposed) {
            for &init in &self.initializers {
                if !cells.contains(&(Strategy::Proposed, Some(init))) {
                    cells.push((Strategy::Proposed, Some(init)));
                }
            }
        }
        if self.strategies.contains(&Strategy::UniformPA) {
            cells.push((Strategy::UniformPA, None));
        }
        cells
    }
}

/// One averaged point of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub snr_db: f64,
    pub strategy: Strategy,
    pub initializer: Option<Initializer>,
    pub analytic_mse: f64,
    pub empirical_mse: f64,
    pub trials: usize,
    pub skipped: usize,
}

/// Average objective after each sweep of the proposed design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub snr_db: f64,
    pub initializer: Initializer,
    pub sweep: usize,
    pub mean_objective: f64,
    /// Average objective of the start before it was scaled into the budgets
    /// (sweep 0 of infeasible starts only).
    pub mean_pre_projection: Option<f64>,
    pub trials: usize,
    pub skipped: usize,
}

/// Identity precoders and relay matrices at exact power equality, Wiener
/// equalizers.
pub fn uniform_pa(s: &NetworkScenario) -> Result<DesignState> {
    let cfg = IterationConfig {
        initializer: Initializer::FullRankIdentityFeasible,
        ..IterationConfig::default()
    };
    initialize(s, &cfg)
}

/// Channel seed of a trial, independent of the other trials.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial);
    rng.random()
}

/// The scenario with its channels replaced by one draw of the error model.
fn realize(s: &NetworkScenario, rng: &mut ChaCha8Rng) -> Result<NetworkScenario> {
    let mut truth = s.clone();
    if s.has_channel_errors() {
        for link in &mut truth.links {
            let h = link.channel.sampler()?.draw(rng);
            link.channel = ChannelError::exact(h);
        }
    }
    Ok(truth)
}

#[derive(Debug, Clone)]
struct Outcome {
    analytic: f64,
    empirical: f64,
    trace: Vec<f64>,
    pre_projection: Option<f64>,
}

/// Outcomes per SNR point and cell; `None` where the trial failed.
fn run_trial(
    spec: &SweepSpec,
    cells: &[(Strategy, Option<Initializer>)],
    trial: usize,
) -> Vec<Vec<Option<Outcome>>> {
    let seed = trial_seed(spec.seed, trial as u64);
    spec.snr_db
        .iter()
        .enumerate()
        .map(|(pi, &snr)| {
            let params = crate::scenario::CaseParams {
                seed,
                snr_db: snr,
                ..spec.scenario.params.clone()
            };
            let Ok(s) = spec.scenario.build_with(&params) else {
                return vec![None; cells.len()];
            };
            cells
                .iter()
                .enumerate()
                .map(|(ci, &(strategy, init))| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(1 + (pi * cells.len() + ci) as u64);
                    evaluate(&s, spec, strategy, init, &mut rng).ok()
                })
                .collect()
        })
        .collect()
}

fn evaluate(
    s: &NetworkScenario,
    spec: &SweepSpec,
    strategy: Strategy,
    init: Option<Initializer>,
    rng: &mut ChaCha8Rng,
) -> Result<Outcome> {
    let (d, trace, pre_projection) = match (strategy, init) {
        (Strategy::UniformPA, _) => {
            let d = uniform_pa(s)?;
            let v = s.sum_mse(&d)?;
            (d, vec![v], None)
        }
        (Strategy::Proposed, init) => {
            let cfg = IterationConfig {
                initializer: init.unwrap_or(Initializer::FullRankIdentityFeasible),
                ..spec.iteration.clone()
            };
            let (d, rep) = run(s, &cfg)?;
            (d, rep.trace, rep.pre_projection)
        }
    };
    let analytic = s.sum_mse(&d)?;
    let truth = realize(s, rng)?;
    let empirical = empirical_mse(&truth, &d, spec.symbols, rng)?;
    Ok(Outcome {
        analytic,
        empirical,
        trace,
        pre_projection,
    })
}

/// Worker pool honoring `QMPX_THREADS` (rayon's default when unset).
fn pool() -> Result<rayon::ThreadPool> {
    let threads = match std::env::var(THREADS_VAR) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                Error::ConfigError(format!(
                    "{THREADS_VAR} must be a positive integer, got {v:?}"
                ))
            })?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::ConfigError(e.to_string()))
}

type Trials = Vec<Vec<Vec<Option<Outcome>>>>;

fn run_trials(spec: &SweepSpec) -> Result<(Vec<(Strategy, Option<Initializer>)>, Trials)> {
    spec.validate()?;
    let cells = spec.cells();
    let trials = pool()?.install(|| {
        (0..spec.trials)
            .into_par_iter()
            .map(|t| run_trial(spec, &cells, t))
            .collect::<Vec<_>>()
    });
    Ok((cells, trials))
}

fn curve(
    spec: &SweepSpec,
    cells: &[(Strategy, Option<Initializer>)],
    trials: &Trials,
) -> Vec<CurveRow> {
    let mut rows = Vec::new();
    for (pi, &snr) in spec.snr_db.iter().enumerate() {
        for (ci, &(strategy, initializer)) in cells.iter().enumerate() {
            let (mut a, mut e, mut n) = (0.0, 0.0, 0usize);
            // summed in trial order so results do not depend on scheduling
            for t in trials {
                if let Some(o) = &t[pi][ci] {
                    a += o.analytic;
                    e += o.empirical;
                    n += 1;
                }
            }
            rows.push(CurveRow {
                snr_db: snr,
                strategy,
                initializer,
                analytic_mse: a / n as f64,
                empirical_mse: e / n as f64,
                trials: n,
                skipped: spec.trials - n,
            });
        }
    }
    rows
}

/// Averaged curves for every SNR point, strategy and initializer.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<CurveRow>> {
    let (cells, trials) = run_trials(spec)?;
    Ok(curve(spec, &cells, &trials))
}

/// Curves of the proposed design per initializer plus the average objective
/// after every sweep. Runs that stop early hold their final value.
pub fn run_initstudy(spec: &SweepSpec) -> Result<(Vec<CurveRow>, Vec<TraceRow>)> {
    let spec = SweepSpec {
        strategies: vec![Strategy::Proposed],
        ..spec.clone()
    };
    let (cells, trials) = run_trials(&spec)?;
    let sweeps = spec.iteration.max_sweeps;
    let mut traces = Vec::new();
    for (pi, &snr) in spec.snr_db.iter().enumerate() {
        for (ci, &(_, init)) in cells.iter().enumerate() {
            let init = init.expect("proposed cells carry an initializer");
            let done: Vec<&Outcome> = trials.iter().filter_map(|t| t[pi][ci].as_ref()).collect();
            let n = done.len();
            let pre: Vec<f64> = done.iter().filter_map(|o| o.pre_projection).collect();
            for k in 0..=sweeps {
                let total: f64 = done.iter().map(|o| o.trace[k.min(o.trace.len() - 1)]).sum();
                traces.push(TraceRow {
                    snr_db: snr,
                    initializer: init,
                    sweep: k,
                    mean_objective: total / n as f64,
                    mean_pre_projection: (k == 0 && !pre.is_empty())
                        .then(|| pre.iter().sum::<f64>() / pre.len() as f64),
                    trials: n,
                    skipped: spec.trials - n,
                });
            }
        }
    }
    Ok((curve(&spec, &cells, &trials), traces))
}

/// Writes rows with a header line; the column order is that of the fields.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::ConfigError("nothing to write".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}
