//! Newton refinement of inequality multipliers for convex type-2 problems.
//!
//! For fixed `μ ≥ 0` the Lagrangian is minimized by
//! `X(μ) = -(A_0 + Σ μ_i A_i)^{-1} (B_0 + Σ μ_i B_i)`, and the dual function
//! `φ(μ) = L(X(μ), μ)` is concave with gradient `f_i(X(μ))`. A projected
//! Newton ascent on `φ` refines an interior-point estimate of `μ` to machine
//! precision, and started from `μ = 0` it solves small problems outright.

use super::{kkt_residual, SolvePath, SolveReport};
use crate::error::{Error, Result};
use crate::matrix::ComplexMatrix;
use crate::model::{QMFunction, QMPProblem};

const MAX_NEWTON: usize = 60;
const CERTIFY: f64 = 1e-10;
/// Smallest Cholesky pivot of `A(μ)` relative to the largest; below it `X(μ)`
/// is noise.
const CONDITION: f64 = 1e-7;

struct Inner {
    x: ComplexMatrix,
    /// `A(μ)^{-1}` applied to each `A_i X + B_i`, and the latter themselves.
    solved: Vec<ComplexMatrix>,
    grads: Vec<ComplexMatrix>,
    values: Vec<f64>,
    dual: f64,
}

fn inner(p: &QMPProblem, mu: &[f64]) -> Option<Inner> {
    let mut a = p.objective.a.clone();
    let mut b = p.objective.b.clone();
    for (f, &m) in p.inequalities.iter().zip(mu) {
        if m != 0.0 {
            a = a.add(&f.a.scale(m));
            b += &f.b * crate::matrix::C64::new(m, 0.0);
        }
    }
    let ch = a.matrix().clone().cholesky()?;
    let diag = ch.l_dirty().diagonal().map(|d| d.re);
    if diag.min() < CONDITION * diag.max() {
        return None;
    }
    let x = -ch.solve(&b);
    let grads: Vec<ComplexMatrix> = p
        .inequalities
        .iter()
        .map(|f| f.a.matrix() * &x + &f.b)
        .collect();
    let solved = grads.iter().map(|g| ch.solve(g)).collect();
    let values: Vec<f64> = p.inequalities.iter().map(|f| f.eval(&x)).collect();
    let dual = p.objective.eval(&x) + mu.iter().zip(&values).map(|(m, v)| m * v).sum::<f64>();
    Some(Inner {
        x,
        solved,
        grads,
        values,
        dual,
    })
}

fn residual(mu: &[f64], values: &[f64]) -> f64 {
    mu.iter()
        .zip(values)
        .map(|(&m, &v)| (m * v).abs().max(v))
        .fold(0.0, f64::max)
}

/// Refined `(X, μ)`, or `None` when the problem is outside the supported
/// form or the Newton iteration breaks down.
pub(crate) fn polish(p: &QMPProblem, mu0: &[f64]) -> Option<(ComplexMatrix, Vec<f64>)> {
    if !p.equalities.is_empty()
        || p.inequalities.is_empty()
        || mu0.len() != p.inequalities.len()
        || !p.functions().all(QMFunction::has_identity_d)
    {
        return None;
    }
    let scale = 1.0 + p.functions().map(|f| f.c.abs()).fold(0.0, f64::max);
    let mut mu: Vec<f64> = mu0.iter().map(|m| m.max(0.0)).collect();
    let mut cur = inner(p, &mu)?;
    for _ in 0..MAX_NEWTON {
        if residual(&mu, &cur.values) <= 1e-14 * scale {
            break;
        }
        let active: Vec<usize> = (0..mu.len())
            .filter(|&i| mu[i] > 0.0 || cur.values[i] > 0.0)
            .collect();
        if active.is_empty() {
            break;
        }
        let k = active.len();
        let mut h = nalgebra::DMatrix::<f64>::zeros(k, k);
        for (r, &i) in active.iter().enumerate() {
            for (c, &j) in active.iter().enumerate() {
                h[(r, c)] = 2.0 * (cur.grads[i].adjoint() * &cur.solved[j]).trace().re;
            }
        }
        let g = nalgebra::DVector::from_iterator(k, active.iter().map(|&i| cur.values[i]));
        let ridge = 1e-10 * h.diagonal().amax().max(f64::MIN_POSITIVE);
        let step = h
            .clone()
            .cholesky()
            .or_else(|| (&h + nalgebra::DMatrix::<f64>::identity(k, k) * ridge).cholesky())
            .map(|ch| ch.solve(&g))?;
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..40 {
            let mut trial = mu.clone();
            for (r, &i) in active.iter().enumerate() {
                trial[i] = (mu[i] + t * step[r]).max(0.0);
            }
            if let Some(n) = inner(p, &trial) {
                if n.dual >= cur.dual - 1e-15 * cur.dual.abs().max(1.0) {
                    next = Some((trial, n));
                    break;
                }
            }
            t *= 0.5;
        }
        let (m, n) = next?;
        mu = m;
        cur = n;
    }
    Some((cur.x, mu))
}

/// Convex type-2 problems with inequalities only, by Newton ascent on the
/// dual from `μ = 0` (or `μ = 1` when `A_0` alone is singular). Succeeds only
/// with a certified KKT point.
pub(crate) fn solve_dual(p: &QMPProblem) -> Result<SolveReport> {
    let m = p.inequalities.len();
    let start = if inner(p, &vec![0.0; m]).is_some() {
        0.0
    } else {
        1.0
    };
    let (x, mu) = polish(p, &vec![start; m])
        .ok_or_else(|| Error::ConicSolverFailure("dual Newton broke down".into()))?;
    let kkt = kkt_residual(p, &x, &mu, &[]);
    let scale = 1.0
        + p.functions()
            .map(|f| f.c.abs())
            .fold(p.objective.b.norm(), f64::max);
    if !(kkt <= CERTIFY * scale) {
        return Err(Error::ConicSolverFailure(format!(
            "dual Newton stopped at KKT residual {kkt:.2e}"
        )));
    }
    Ok(SolveReport {
        objective: p.objective.eval(&x),
        multiplier: (m == 1).then(|| mu[0]),
        x,
        path: SolvePath::DualNewton,
        iterations: 0,
        kkt_residual: kkt,
        sdr_rank_gap: None,
        relaxation_bound: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{complex_gaussian, random_pd, HermitianMatrix};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recovers_a_single_budget_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let b = complex_gaussian(3, 2, &mut rng) * crate::matrix::C64::new(5.0, 0.0);
        let obj = QMFunction::type2(random_pd(3, 0.1, &mut rng), b, 0.0).unwrap();
        let budget = QMFunction::energy(HermitianMatrix::identity(3), 2, -0.1);
        let p = QMPProblem::auto(obj, vec![budget], vec![]).unwrap();
        let exact = crate::solvers::solve_auto(&p).unwrap();
        let (x, mu) = polish(&p, &[exact.multiplier.unwrap() * 1.3]).unwrap();
        assert!((p.objective.eval(&x) - exact.objective).abs() < 1e-8);
        assert!((mu[0] - exact.multiplier.unwrap()).abs() < 1e-6 * mu[0]);
        assert!(crate::solvers::kkt_residual(&p, &x, &mu, &[]) < 1e-12);
    }

    #[test]
    fn unsupported_forms_are_left_alone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let obj = QMFunction::type2(
            random_pd(3, 0.1, &mut rng),
            complex_gaussian(3, 2, &mut rng),
            0.0,
        )
        .unwrap();
        let free = QMPProblem::unconstrained(obj).unwrap();
        assert!(polish(&free, &[]).is_none());
    }
}
