//! Solution paths for QMP problems: closed form, single-constraint
//! bisection, convex conic reformulations and the semidefinite relaxation.

mod bisection;
mod closed_form;
mod dual;
mod sdr;

pub use bisection::{g_mu, single_constraint_budget, solve_single_constraint, SingleConstraint};
pub use closed_form::{solve_unconstrained, solve_weighted, weighted_function};
pub use sdr::{solve_sdr, solve_sdr_with, SdrOptions};

use serde::{Deserialize, Serialize};

use crate::conic::{SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, HermitianMatrix};
use crate::model::{lower_convex_sdp, lower_socp, LoweredProgram, QMPProblem, QmpKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolvePath {
    ClosedForm,
    Bisection,
    /// Projected Newton ascent on the Lagrange dual of a convex type-2
    /// problem, certified by its KKT residual.
    DualNewton,
    ConvexSDP,
    SOCP,
    SDR,
}

impl std::str::FromStr for SolvePath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "closedform" => Ok(SolvePath::ClosedForm),
            "bisection" => Ok(SolvePath::Bisection),
            "dualnewton" => Ok(SolvePath::DualNewton),
            "convexsdp" | "sdp" => Ok(SolvePath::ConvexSDP),
            "socp" => Ok(SolvePath::SOCP),
            "sdr" => Ok(SolvePath::SDR),
            _ => Err(Error::ConfigError(format!("unknown solve path {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub x: ComplexMatrix,
    pub objective: f64,
    /// Multiplier of the single constraint (bisection and conic paths).
    pub multiplier: Option<f64>,
    pub path: SolvePath,
    pub iterations: usize,
    /// Largest of the Lagrangian stationarity norm, the constraint violation
    /// and the complementary slackness residual.
    pub kkt_residual: f64,
    /// `λ_2/λ_1` (lifted) or `λ_{r+1}/λ_1` (homogenized) of the SDR solution.
    pub sdr_rank_gap: Option<f64>,
    /// Optimal value of the relaxation, a lower bound on the QMP optimum.
    pub relaxation_bound: Option<f64>,
}

#[derive(Serialize)]
struct ReportFile {
    path: SolvePath,
    objective: f64,
    kkt_residual: f64,
    multiplier: Option<f64>,
    iterations: usize,
    sdr_rank_gap: Option<f64>,
    relaxation_bound: Option<f64>,
    n: usize,
    r: usize,
    /// Rows of `X` as `[re, im]` pairs, like the problem files.
    x: Vec<Vec<[f64; 2]>>,
}

impl SolveReport {
    pub fn to_json(&self) -> Result<String> {
        let file = ReportFile {
            path: self.path,
            objective: self.objective,
            kkt_residual: self.kkt_residual,
            multiplier: self.multiplier,
            iterations: self.iterations,
            sdr_rank_gap: self.sdr_rank_gap,
            relaxation_bound: self.relaxation_bound,
            n: self.x.nrows(),
            r: self.x.ncols(),
            x: crate::model::io::to_rows(&self.x),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }
}

/// KKT residual at `x` for inequality multipliers `mu` (equalities, when
/// present, enter with multipliers `nu`).
pub fn kkt_residual(p: &QMPProblem, x: &ComplexMatrix, mu: &[f64], nu: &[f64]) -> f64 {
    let mut grad = p.objective.stationarity(x);
    for (f, &m) in p.inequalities.iter().zip(mu) {
        grad += f.stationarity(x) * crate::matrix::C64::new(m, 0.0);
    }
    for (f, &m) in p.equalities.iter().zip(nu) {
        grad += f.stationarity(x) * crate::matrix::C64::new(m, 0.0);
    }
    let comp = p
        .inequalities
        .iter()
        .zip(mu)
        .map(|(f, &m)| (m * f.eval(x)).abs())
        .fold(0.0, f64::max);
    let dual = mu.iter().map(|&m| (-m).max(0.0)).fold(0.0, f64::max);
    grad.norm().max(p.max_violation(x)).max(comp).max(dual)
}

fn conic_report(p: &QMPProblem, lowered: LoweredProgram, path: SolvePath) -> Result<SolveReport> {
    let sol = lowered.solve(&SolverOptions::default())?;
    let raw_kkt = kkt_residual(p, &sol.x, &sol.multipliers, &[]);
    let polished = dual::polish(p, &sol.multipliers)
        .map(|(x, mu)| (kkt_residual(p, &x, &mu, &[]), x, mu))
        .filter(|(k, _, _)| *k < raw_kkt);
    let (kkt, x, mu) = match (sol.status, polished) {
        (SolveStatus::Infeasible, _) => return Err(Error::InfeasibleProblem),
        (SolveStatus::Optimal, Some(best)) => best,
        (SolveStatus::Optimal, None) => (raw_kkt, sol.x, sol.multipliers),
        // a stalled interior point still seeds the Newton refinement well
        (SolveStatus::MaxIterations, Some(best)) if best.0 < 1e-8 => best,
        (SolveStatus::MaxIterations, _) => {
            return Err(Error::ConicSolverFailure(format!(
                "{path:?} lowering did not converge in {} iterations",
                sol.iterations
            )))
        }
    };
    Ok(SolveReport {
        kkt_residual: kkt,
        multiplier: (mu.len() == 1).then(|| mu[0]),
        objective: p.objective.eval(&x),
        x,
        path,
        iterations: sol.iterations,
        sdr_rank_gap: None,
        relaxation_bound: None,
    })
}

/// Convex problems through the Schur-complement epigraph SDP.
pub fn solve_convex_sdp(p: &QMPProblem) -> Result<SolveReport> {
    conic_report(p, lower_convex_sdp(p)?, SolvePath::ConvexSDP)
}

/// Strictly convex problems through completed squares and second-order cones.
pub fn solve_socp(p: &QMPProblem) -> Result<SolveReport> {
    conic_report(p, lower_socp(p)?, SolvePath::SOCP)
}

fn is_psd_tol(h: &HermitianMatrix) -> bool {
    let (lo, hi) = h.eig_range();
    lo >= -1e-9 * (1.0 + hi.abs())
}

fn is_pd_tol(h: &HermitianMatrix) -> bool {
    let (lo, hi) = h.eig_range();
    lo > 1e-10 * (1.0 + hi.abs())
}

/// Picks the cheapest exact path for the problem's structure: closed form
/// without constraints, bisection for one convex budget, the convex SDP for
/// other convex problems and the relaxation otherwise. Type-1 problems with a
/// common weight are first whitened to type 2.
pub fn solve_auto(p: &QMPProblem) -> Result<SolveReport> {
    if p.kind == QmpKind::T1 {
        if let Some((w, sqrt_d)) = p.whiten() {
            let mut rep = solve_auto(&w)?;
            rep.x = &rep.x * sqrt_d.inverse_pd()?.matrix();
            rep.objective = p.objective.eval(&rep.x);
            return Ok(rep);
        }
    }
    if p.constraint_count() == 0 {
        if is_pd_tol(&p.objective.a) && is_pd_tol(&p.objective.d) {
            return solve_unconstrained(&p.objective);
        }
        return Err(Error::SingularA(p.objective.a.min_eigenvalue()));
    }
    if let Ok(sc) = SingleConstraint::from_problem(p) {
        if sc.budget > 0.0 {
            match bisection::solve_checked(p, &sc, sc.budget, 1e-10) {
                Err(Error::NotConvex(_)) => {}
                other => return other,
            }
        }
    }
    let convex =
        p.equalities.is_empty() && p.functions().all(|f| is_psd_tol(&f.a) && is_psd_tol(&f.d));
    if convex {
        if p.kind == QmpKind::T2 {
            if let Ok(rep) = dual::solve_dual(p) {
                return Ok(rep);
            }
        }
        return solve_convex_sdp(p);
    }
    solve_sdr(p)
}

/// Solves through one named path, whitening type-1 problems first when they
/// have a common weight. Fails when the problem does not fit the path.
pub fn solve_with(p: &QMPProblem, path: SolvePath) -> Result<SolveReport> {
    if p.kind == QmpKind::T1 {
        if let Some((w, sqrt_d)) = p.whiten() {
            let mut rep = solve_with(&w, path)?;
            rep.x = &rep.x * sqrt_d.inverse_pd()?.matrix();
            rep.objective = p.objective.eval(&rep.x);
            return Ok(rep);
        }
    }
    match path {
        SolvePath::ClosedForm if p.constraint_count() == 0 => solve_unconstrained(&p.objective),
        SolvePath::ClosedForm => Err(Error::KindMismatch(
            "closed form needs an unconstrained problem".into(),
        )),
        SolvePath::Bisection => {
            let sc = SingleConstraint::from_problem(p)?;
            solve_single_constraint(p, sc.budget, 1e-10)
        }
        SolvePath::DualNewton => {
            let convex = p.equalities.is_empty() && p.functions().all(|f| is_psd_tol(&f.a));
            if p.kind != QmpKind::T2 || !convex {
                return Err(Error::NotConvex(
                    "dual Newton needs a convex type-2 problem".into(),
                ));
            }
            dual::solve_dual(p)
        }
        SolvePath::ConvexSDP => solve_convex_sdp(p),
        SolvePath::SOCP => solve_socp(p),
        SolvePath::SDR => solve_sdr(p),
    }
}
