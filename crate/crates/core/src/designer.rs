//! Block coordinate descent over the transceiver matrices of a scenario.
//!
//! A sweep visits every equalizer, then every precoder and relay matrix, and
//! replaces each one by the solution of its QMP subproblem with the others
//! frozen. A candidate that is infeasible or worse than the incumbent is
//! dropped, so the objective trace never increases.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{eye, ComplexMatrix, HermitianMatrix, C64};
use crate::scenario::{CaseTag, DesignState, NetworkScenario, Sense, VarId};
use crate::solvers::{solve_auto, solve_unconstrained, solve_with, SolvePath, SolveReport};

/// Starting point of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Initializer {
    /// Identities scaled so every budget is met with equality.
    FullRankIdentityFeasible,
    /// Unscaled identities (usually over budget).
    FullRankIdentityInfeasible,
    /// Identities with the last diagonal entry zeroed, scaled to the budgets.
    RankDeficientFeasible,
    /// Caller-supplied matrices, see [`run_custom`].
    Custom,
}

impl std::str::FromStr for Initializer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "fullrankidentityfeasible" | "feasible" => Ok(Initializer::FullRankIdentityFeasible),
            "fullrankidentityinfeasible" | "infeasible" => {
                Ok(Initializer::FullRankIdentityInfeasible)
            }
            "rankdeficientfeasible" | "rankdeficient" | "deficient" => {
                Ok(Initializer::RankDeficientFeasible)
            }
            "custom" => Ok(Initializer::Custom),
            _ => Err(Error::ConfigError(format!("unknown initializer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationConfig {
    pub max_sweeps: usize,
    /// Stop once a sweep lowers the objective by less than this fraction.
    pub tol: f64,
    pub initializer: Initializer,
    /// Paths tried in order for constrained steps; empty means `solve_auto`.
    pub solver_order: Vec<SolvePath>,
    /// Largest constraint violation a candidate may carry.
    pub feasibility_tol: f64,
}

impl Default for IterationConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tol: 1e-6,
            initializer: Initializer::FullRankIdentityFeasible,
            solver_order: Vec::new(),
            feasibility_tol: 1e-8,
        }
    }
}

impl IterationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::ConfigError("tolerance must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::ConfigError("max_sweeps must be at least 1".into()));
        }
        if !(self.feasibility_tol >= 0.0) {
            return Err(Error::ConfigError(
                "feasibility_tol must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one variable update.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub var: String,
    pub path: Option<SolvePath>,
    pub before: f64,
    pub after: f64,
    pub accepted: bool,
    pub kkt_residual: Option<f64>,
    /// Why the incumbent was kept, when it was.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRecord {
    pub objective: f64,
    pub steps: Vec<StepRecord>,
    /// Some step failed and kept its incumbent.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub case: CaseTag,
    pub config: IterationConfig,
    /// Objective of an infeasible start before it was scaled into the budgets.
    pub pre_projection: Option<f64>,
    /// Objective at the start and after every sweep.
    pub trace: Vec<f64>,
    pub sweeps: Vec<SweepRecord>,
    pub converged: bool,
    pub max_violation: f64,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn final_objective(&self) -> f64 {
        *self.trace.last().expect("trace holds the starting value")
    }

    /// KKT residuals of the last sweep's steps.
    pub fn last_kkt(&self) -> Vec<(String, f64)> {
        self.sweeps
            .last()
            .map(|sw| {
                sw.steps
                    .iter()
                    .filter_map(|st| st.kkt_residual.map(|k| (st.var.clone(), k)))
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Rectangular identity, optionally with its last diagonal entry zeroed when
/// that leaves a nonzero matrix.
fn identity(rows: usize, cols: usize, deficient: bool) -> ComplexMatrix {
    let mut m = eye(rows, cols);
    let k = rows.min(cols);
    if deficient && k > 1 {
        m[(k - 1, k - 1)] = C64::new(0.0, 0.0);
    }
    m
}

/// Identity precoders and relay matrices; streams of one source occupy
/// consecutive antennas.
fn identity_state(s: &NetworkScenario, deficient: bool) -> DesignState {
    let mut d = s.zero_state();
    for &src in s.sources() {
        let tx = s.nodes[src].tx;
        let mut row = 0;
        for (i, st) in s
            .streams
            .iter()
            .enumerate()
            .filter(|(_, st)| st.source == src)
        {
            let mut p = ComplexMatrix::zeros(tx, st.count());
            let block = identity(tx, st.count(), deficient);
            for c in 0..st.count() {
                for r in 0..tx {
                    p[((r + row) % tx, c)] = block[(r, c)];
                }
            }
            row += st.count();
            d.precoders[i] = p;
        }
    }
    for j in s.relays() {
        d.relays[j] = identity(s.nodes[j].tx, s.nodes[j].rx, deficient);
    }
    d
}

fn scale_node(s: &NetworkScenario, d: &mut DesignState, node: usize, f: f64) {
    let f = C64::new(f, 0.0);
    if s.is_relay(node) {
        d.relays[node] *= f;
    } else {
        for (i, st) in s.streams.iter().enumerate() {
            if st.source == node {
                d.precoders[i] *= f;
            }
        }
    }
}

/// Left-multiplies a node's transmit variables by `m`.
fn shape_node(s: &NetworkScenario, d: &mut DesignState, node: usize, m: &ComplexMatrix) {
    if s.is_relay(node) {
        d.relays[node] = m * &d.relays[node];
    } else {
        for (i, st) in s.streams.iter().enumerate() {
            if st.source == node {
                d.precoders[i] = m * &d.precoders[i];
            }
        }
    }
}

/// Scales nodes layer by layer (upstream first, since downstream powers
/// depend on upstream ones). With `to_equality` every budget is met exactly
/// unless a meter needs less; otherwise nodes are only scaled down.
fn fit_budgets(s: &NetworkScenario, d: &mut DesignState, to_equality: bool) -> Result<()> {
    for m in s.degenerate_meters() {
        // only the null space of the meter weight is admissible
        let (vals, vecs) = HermitianMatrix::gram(&m.weight.adjoint()).eigh();
        let cut = 1e-12 * vals.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        let null: Vec<f64> = vals
            .iter()
            .map(|&v| if v <= cut { 1.0 } else { 0.0 })
            .collect();
        let proj = HermitianMatrix::from_spectrum(&null, &vecs);
        shape_node(s, d, m.node, proj.matrix());
    }
    let last = s.layers.len() - 1;
    for layer in &s.layers[..last] {
        for &n in layer {
            let budget = s.nodes[n].budget.expect("transmitting nodes have budgets");
            let used = s.power_usage(d)[n];
            if used <= 0.0 {
                continue;
            }
            let mut f2 = budget / used;
            if !to_equality {
                f2 = f2.min(1.0);
            }
            let readings = s.meter_values(d);
            for (mt, v) in s.meters.iter().zip(&readings) {
                if mt.node == n
                    && mt.sense == Sense::AtMost
                    && mt.threshold > 0.0
                    && v * f2 > mt.threshold
                {
                    f2 = mt.threshold / v;
                }
            }
            scale_node(s, d, n, f2.sqrt());
        }
    }
    for (mt, v) in s.meters.iter().zip(s.meter_values(d)) {
        if mt.sense == Sense::AtLeast && v < mt.threshold {
            steer_to_meter(s, d, mt.node, &mt.weight)?;
        }
    }
    Ok(())
}

/// Rank-one transmission along the strongest direction of a harvesting
/// meter, at full power.
fn steer_to_meter(
    s: &NetworkScenario,
    d: &mut DesignState,
    node: usize,
    w: &ComplexMatrix,
) -> Result<()> {
    if s.is_relay(node) {
        return Err(Error::InfeasibleProblem);
    }
    let (vals, vecs) = HermitianMatrix::gram(&w.adjoint()).eigh();
    let top = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or(Error::InfeasibleProblem)?;
    let mut first = true;
    for (i, st) in s
        .streams
        .iter()
        .enumerate()
        .filter(|(_, st)| st.source == node)
    {
        let mut p = ComplexMatrix::zeros(s.nodes[node].tx, st.count());
        if first {
            p.set_column(0, &vecs.column(top));
            first = false;
        }
        d.precoders[i] = p;
    }
    let used = s.power_usage(d)[node];
    let budget = s.nodes[node].budget.expect("sources have budgets");
    scale_node(s, d, node, (budget / used).sqrt());
    let (mt, v) = s
        .meters
        .iter()
        .zip(s.meter_values(d))
        .find(|(m, _)| m.node == node && m.sense == Sense::AtLeast)
        .expect("called for a harvesting meter");
    if v < mt.threshold * (1.0 - 1e-12) {
        return Err(Error::InfeasibleProblem);
    }
    Ok(())
}

/// Replaces every equalizer by its Wiener solution.
pub fn wiener_pass(s: &NetworkScenario, d: &mut DesignState) -> Result<()> {
    for &k in s.destinations() {
        let sub = s.qm_for_variable(d, VarId::Equalizer(k))?;
        let rep = solve_unconstrained(&sub.problem.objective)?;
        d.set(VarId::Equalizer(k), sub.from_x(&rep.x));
    }
    Ok(())
}

/// Starting state for `cfg.initializer`, equalizers set by one Wiener pass.
pub fn initialize(s: &NetworkScenario, cfg: &IterationConfig) -> Result<DesignState> {
    let mut d = match cfg.initializer {
        Initializer::FullRankIdentityFeasible => {
            let mut d = identity_state(s, false);
            fit_budgets(s, &mut d, true)?;
            d
        }
        Initializer::FullRankIdentityInfeasible => identity_state(s, false),
        Initializer::RankDeficientFeasible => {
            let mut d = identity_state(s, true);
            fit_budgets(s, &mut d, true)?;
            d
        }
        Initializer::Custom => {
            return Err(Error::ConfigError(
                "the custom initializer takes explicit matrices".into(),
            ))
        }
    };
    wiener_pass(s, &mut d)?;
    Ok(d)
}

/// A caller-supplied start, scaled down where it breaks a constraint.
pub fn initialize_custom(s: &NetworkScenario, start: &DesignState) -> Result<DesignState> {
    s.check_state(start)?;
    let mut d = start.clone();
    fit_budgets(s, &mut d, false)?;
    wiener_pass(s, &mut d)?;
    Ok(d)
}

/// The cheapest feasible solution among the configured paths.
fn solve_step(p: &crate::model::QMPProblem, cfg: &IterationConfig) -> Result<SolveReport> {
    if p.constraint_count() == 0 || cfg.solver_order.is_empty() {
        return solve_auto(p);
    }
    let mut last = Error::ConfigError("empty solver order".into());
    for &path in &cfg.solver_order {
        match solve_with(p, path) {
            Ok(rep) if p.max_violation(&rep.x) <= cfg.feasibility_tol => return Ok(rep),
            Ok(_) => last = Error::InfeasibleProblem,
            Err(e) => last = e,
        }
    }
    Err(last)
}

fn is_exact(path: SolvePath) -> bool {
    path != SolvePath::SDR
}

/// Relative regression an exact path may show before it counts as a bug.
const EXACT_SLACK: f64 = 1e-6;

/// One pass over all variables.
pub fn sweep(
    s: &NetworkScenario,
    d: &mut DesignState,
    cfg: &IterationConfig,
) -> Result<SweepRecord> {
    let mut steps = Vec::new();
    let mut flagged = false;
    for var in s.variables() {
        let before = s.sum_mse(d)?;
        let sub = s.qm_for_variable(d, var)?;
        let mut step = StepRecord {
            var: var.to_string(),
            path: None,
            before,
            after: before,
            accepted: false,
            kkt_residual: None,
            note: None,
        };
        match solve_step(&sub.problem, cfg) {
            Err(e) => {
                flagged = true;
                step.note = Some(e.to_string());
            }
            Ok(rep) => {
                step.path = Some(rep.path);
                step.kkt_residual = Some(rep.kkt_residual);
                let v = sub.from_x(&rep.x);
                let mut cand = d.clone();
                cand.set(var, v);
                let value = s.sum_mse(&cand)?;
                let violation = sub.problem.max_violation(&rep.x);
                if violation > cfg.feasibility_tol {
                    flagged = true;
                    step.note = Some(format!("candidate violates a constraint by {violation:e}"));
                } else if value > before {
                    if is_exact(rep.path) && value > before + EXACT_SLACK * (1.0 + before.abs()) {
                        return Err(Error::NonMonotoneDetected {
                            before,
                            after: value,
                            step: var.to_string(),
                        });
                    }
                    if !is_exact(rep.path) {
                        flagged = true;
                    }
                    step.note = Some(format!("candidate {value} is not better"));
                } else {
                    *d = cand;
                    step.after = value;
                    step.accepted = true;
                }
            }
        }
        steps.push(step);
    }
    Ok(SweepRecord {
        objective: s.sum_mse(d)?,
        steps,
        flagged,
    })
}

/// Runs from `cfg.initializer` until the relative decrease of a sweep drops
/// below `cfg.tol` or `cfg.max_sweeps` sweeps are done.
pub fn run(s: &NetworkScenario, cfg: &IterationConfig) -> Result<(DesignState, RunReport)> {
    cfg.validate()?;
    let d = initialize(s, cfg)?;
    run_from(s, cfg, d)
}

/// Like [`run`] from caller-supplied matrices.
pub fn run_custom(
    s: &NetworkScenario,
    cfg: &IterationConfig,
    start: &DesignState,
) -> Result<(DesignState, RunReport)> {
    cfg.validate()?;
    let d = initialize_custom(s, start)?;
    run_from(s, cfg, d)
}

fn run_from(
    s: &NetworkScenario,
    cfg: &IterationConfig,
    mut d: DesignState,
) -> Result<(DesignState, RunReport)> {
    let clock = Instant::now();
    let mut pre_projection = None;
    if s.max_violation(&d) > cfg.feasibility_tol {
        pre_projection = Some(s.sum_mse(&d)?);
        fit_budgets(s, &mut d, false)?;
    }
    let mut trace = vec![s.sum_mse(&d)?];
    let mut sweeps = Vec::new();
    let mut converged = false;
    while sweeps.len() < cfg.max_sweeps {
        let prev = *trace.last().expect("trace starts non-empty");
        let rec = sweep(s, &mut d, cfg)?;
        let now = rec.objective;
        trace.push(now);
        sweeps.push(rec);
        if prev - now < cfg.tol * prev.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    d.iteration = sweeps.len();
    d.trace = trace.clone();
    let report = RunReport {
        case: s.case,
        config: cfg.clone(),
        pre_projection,
        trace,
        sweeps,
        converged,
        max_violation: s.max_violation(&d),
        wall_clock_s: clock.elapsed().as_secs_f64(),
    };
    Ok((d, report))
}
