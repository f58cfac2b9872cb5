use crate::error::{Error, Result};
use crate::matrix::{try_solve_hpd, ComplexMatrix, HermitianMatrix};
use crate::model::{QMFunction, QMPProblem};

use super::{kkt_residual, SolvePath, SolveReport};

const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 2000;

/// The single budget `Tr(X^H A_1 X) ≤ P` of a type-2 problem.
#[derive(Debug, Clone)]
pub struct SingleConstraint {
    pub a1: HermitianMatrix,
    pub budget: f64,
}

impl SingleConstraint {
    pub fn from_problem(p: &QMPProblem) -> Result<Self> {
        let bad = |why: &str| Err(Error::NotSingleConstraintForm(why.into()));
        if !p.equalities.is_empty() || p.inequalities.len() != 1 {
            return bad("need exactly one inequality and no equalities");
        }
        let f = &p.inequalities[0];
        if !p.functions().all(QMFunction::has_identity_d) {
            return bad("need D = I");
        }
        if f.b.norm() > 1e-12 * (1.0 + f.a.norm()) {
            return bad("constraint has a linear term");
        }
        if f.a.matrix().clone().cholesky().is_none() {
            return bad("constraint matrix is not positive definite");
        }
        Ok(Self {
            a1: f.a.clone(),
            budget: -f.c,
        })
    }
}

/// `P = -c_1` for a problem whose constraint reads `Tr(X^H A_1 X) + c_1 ≤ 0`.
pub fn single_constraint_budget(p: &QMPProblem) -> Result<f64> {
    SingleConstraint::from_problem(p).map(|s| s.budget)
}

/// Eigen-decomposition of `L^{-1} A_0 L^{-H} = V Λ V^H` with `A_1 = L L^H`,
/// which makes `g(μ)` and `X(μ)` diagonal in `μ`.
struct Pencil {
    l_inv: ComplexMatrix,
    lambda: Vec<f64>,
    v: ComplexMatrix,
    /// `V^H L^{-1} B_0`
    c: ComplexMatrix,
    /// Squared row norms of `c`.
    weights: Vec<f64>,
    zero_cut: f64,
}

impl Pencil {
    fn new(a0: &HermitianMatrix, a1: &HermitianMatrix, b0: &ComplexMatrix) -> Result<Self> {
        let n = a1.dim();
        let l = a1
            .matrix()
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(a1.min_eigenvalue()))?
            .unpack();
        let l_inv = l
            .solve_lower_triangular(&ComplexMatrix::identity(n, n))
            .ok_or_else(|| Error::NotPositiveDefinite(0.0))?;
        let k = a0.congruence(&l_inv);
        let (lambda, v) = k.eigh();
        let c = v.adjoint() * &l_inv * b0;
        let weights = (0..c.nrows()).map(|i| c.row(i).norm_squared()).collect();
        let scale = lambda.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
        Ok(Self {
            l_inv,
            lambda,
            v,
            c,
            weights,
            zero_cut: 1e-12 * scale.max(1.0),
        })
    }

    /// Same inertia as `A_0`.
    fn convex(&self) -> bool {
        let hi = self.lambda.last().copied().unwrap_or(0.0);
        self.lambda
            .first()
            .is_none_or(|&lo| lo >= -1e-9 * (1.0 + hi.abs()))
    }

    /// `Σ_i w_i / (λ_i + μ)²`; a zero denominator with nonzero weight is
    /// infinite, with zero weight it is dropped (pseudo-inverse convention).
    fn g(&self, mu: f64) -> f64 {
        let wcut = 1e-24 * (1.0 + self.weights.iter().sum::<f64>());
        self.lambda
            .iter()
            .zip(&self.weights)
            .map(|(&l, &w)| {
                let d = l + mu;
                if d.abs() <= self.zero_cut {
                    if w <= wcut {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                } else {
                    w / (d * d)
                }
            })
            .sum()
    }

    /// `X(μ) = -L^{-H} V (Λ + μ)^† V^H L^{-1} B_0`.
    fn x(&self, mu: f64) -> ComplexMatrix {
        let mut scaled = self.c.clone();
        for (i, &l) in self.lambda.iter().enumerate() {
            let d = l + mu;
            let s = if d.abs() <= self.zero_cut {
                0.0
            } else {
                -1.0 / d
            };
            scaled.row_mut(i).scale_mut(s);
        }
        self.l_inv.adjoint() * (&self.v * scaled)
    }
}

fn parts(p: &QMPProblem) -> Result<(SingleConstraint, &QMFunction)> {
    Ok((SingleConstraint::from_problem(p)?, &p.objective))
}

/// `g(μ) = Tr(B_0^H A_1^{-1/2} (A_1^{-1/2} A_0 A_1^{-1/2} + μI)^{-2} A_1^{-1/2} B_0)`,
/// the constraint energy `Tr(X(μ)^H A_1 X(μ))` of the stationary point.
pub fn g_mu(p: &QMPProblem, mu: f64) -> Result<f64> {
    let (sc, f) = parts(p)?;
    if mu < 0.0 {
        return Err(Error::InvalidParams("μ must be nonnegative".into()));
    }
    Ok(Pencil::new(&f.a, &sc.a1, &f.b)?.g(mu))
}

/// KKT solution of `min f_0(X)` s.t. `Tr(X^H A_1 X) ≤ P` for convex `f_0`:
/// `μ = 0` if the unconstrained point fits the budget, otherwise `g(μ) = P`
/// by bisection and `X = -(A_0 + μ A_1)^{-1} B_0`.
pub fn solve_single_constraint(p: &QMPProblem, budget: f64, tol: f64) -> Result<SolveReport> {
    let sc = SingleConstraint::from_problem(p)?;
    if budget <= 0.0 || !budget.is_finite() {
        return Err(Error::InvalidParams(format!(
            "budget must be positive, got {budget}"
        )));
    }
    if tol <= 0.0 {
        return Err(Error::InvalidParams(
            "bisection tolerance must be positive".into(),
        ));
    }
    solve_checked(p, &sc, budget, tol)
}

/// [`solve_single_constraint`] for a problem already known to be in
/// single-constraint form.
pub(crate) fn solve_checked(
    p: &QMPProblem,
    sc: &SingleConstraint,
    budget: f64,
    tol: f64,
) -> Result<SolveReport> {
    let f = &p.objective;
    let fits = |x: &ComplexMatrix| (x.adjoint() * sc.a1.matrix() * x).trace().re <= budget;
    let unconstrained = try_solve_hpd(&f.a, &(-&f.b)).filter(fits);
    let pencil = match unconstrained {
        Some(_) => None,
        None => Some(Pencil::new(&f.a, &sc.a1, &f.b)?),
    };
    if pencil.as_ref().is_some_and(|pc| !pc.convex()) {
        return Err(Error::NotConvex("objective matrix is indefinite".into()));
    }

    let (mu, x, iterations) = if let Some(x) = unconstrained {
        (0.0, x, 0)
    } else if let Some(pencil) = pencil.as_ref().filter(|pc| pc.g(0.0) <= budget) {
        (0.0, pencil.x(0.0), 0)
    } else {
        let pencil = pencil
            .as_ref()
            .expect("built when the unconstrained point does not fit");
        let mut hi = 1.0;
        let mut doublings = 0;
        while pencil.g(hi) > budget {
            hi *= 2.0;
            doublings += 1;
            if doublings >= MAX_DOUBLINGS {
                return Err(Error::InfeasibleBracket(doublings));
            }
        }
        let mut lo = if doublings > 0 { hi / 2.0 } else { 0.0 };
        let mut steps = doublings;
        while steps < MAX_BISECTIONS {
            if (pencil.g(hi) - budget).abs() < tol * budget || hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if pencil.g(mid) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
            steps += 1;
        }
        let pencil_sum = f.a.add(&sc.a1.scale(hi));
        let x = try_solve_hpd(&pencil_sum, &(-&f.b)).unwrap_or_else(|| pencil.x(hi));
        (hi, x, steps)
    };

    let mut with_budget = p.clone();
    with_budget.inequalities[0].c = -budget;
    Ok(SolveReport {
        kkt_residual: kkt_residual(&with_budget, &x, &[mu], &[]),
        objective: f.eval(&x),
        x,
        multiplier: Some(mu),
        path: SolvePath::Bisection,
        iterations,
        sdr_rank_gap: None,
        relaxation_bound: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::solve_hpd;
    use crate::matrix::{complex_gaussian, random_pd, random_psd, C64};
    use crate::model::QmpKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_problem(a0: f64, a1: f64, b0: f64, p: f64) -> QMPProblem {
        let m = |v: f64| ComplexMatrix::from_element(1, 1, C64::new(v, 0.0));
        let obj = QMFunction::type2(HermitianMatrix::new(m(a0)).unwrap(), m(b0), 0.0).unwrap();
        let con = QMFunction::energy(HermitianMatrix::new(m(a1)).unwrap(), 1, -p);
        QMPProblem::new(QmpKind::T2, obj, vec![con], vec![]).unwrap()
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, r: usize, budget: f64) -> QMPProblem {
        let obj =
            QMFunction::type2(random_pd(n, 0.05, rng), complex_gaussian(n, r, rng), 0.0).unwrap();
        let con = QMFunction::energy(random_pd(n, 0.2, rng), r, -budget);
        QMPProblem::new(QmpKind::T2, obj, vec![con], vec![]).unwrap()
    }

    #[test]
    fn g_scalar_values() {
        let p = scalar_problem(1.0, 1.0, 2.0, 1.0);
        assert!((g_mu(&p, 0.0).unwrap() - 4.0).abs() < 1e-14);
        assert!((g_mu(&p, 1.0).unwrap() - 1.0).abs() < 1e-14);
        let q = scalar_problem(1.0, 1.0, 0.0, 1.0);
        assert_eq!(g_mu(&q, 0.0).unwrap(), 0.0);
        assert_eq!(g_mu(&q, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn g_matches_substituted_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let p = random_problem(&mut rng, 4, 2, 1.0);
            let mu = rng.random::<f64>() * 3.0;
            let a = p.objective.a.add(&p.inequalities[0].a.scale(mu));
            let x = -solve_hpd(&a, &p.objective.b).unwrap();
            let direct = (x.adjoint() * p.inequalities[0].a.matrix() * &x).trace().re;
            assert!((g_mu(&p, mu).unwrap() - direct).abs() < 1e-10 * (1.0 + direct));
        }
    }

    #[test]
    fn g_is_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let p = random_problem(&mut rng, 3, 2, 1.0);
            let a = rng.random::<f64>() * 5.0;
            let b = a + rng.random::<f64>() * 5.0 + 1e-6;
            assert!(g_mu(&p, a).unwrap() >= g_mu(&p, b).unwrap());
        }
    }

    #[test]
    fn scalar_active_and_inactive() {
        let rep =
            solve_single_constraint(&scalar_problem(1.0, 1.0, -2.0, 1.0), 1.0, 1e-12).unwrap();
        assert!((rep.multiplier.unwrap() - 1.0).abs() < 1e-9);
        assert!((rep.x[(0, 0)].re - 1.0).abs() < 1e-9);
        let rep =
            solve_single_constraint(&scalar_problem(1.0, 1.0, -0.5, 1.0), 1.0, 1e-12).unwrap();
        assert_eq!(rep.multiplier, Some(0.0));
        assert!((rep.x[(0, 0)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kkt_conditions_hold() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let budget = 0.05 + rng.random::<f64>();
            let p = random_problem(&mut rng, 4, 2, budget);
            let rep = solve_single_constraint(&p, budget, 1e-10).unwrap();
            let mu = rep.multiplier.unwrap();
            let a = p.objective.a.add(&p.inequalities[0].a.scale(mu));
            assert!((a.matrix() * &rep.x + &p.objective.b).norm() < 1e-8);
            let used = (rep.x.adjoint() * p.inequalities[0].a.matrix() * &rep.x)
                .trace()
                .re;
            assert!(used <= budget + 1e-8);
            assert!(mu >= 0.0);
            assert!((mu * (used - budget)).abs() < 1e-6);
            assert!(rep.kkt_residual < 1e-8);
        }
    }

    #[test]
    fn singular_objective_uses_pseudo_inverse() {
        // A_0 = diag(1, 0) and B_0 in its range: the μ = 0 branch is finite
        let mut a0 = ComplexMatrix::zeros(2, 2);
        a0[(0, 0)] = C64::new(1.0, 0.0);
        let mut b0 = ComplexMatrix::zeros(2, 1);
        b0[(0, 0)] = C64::new(-0.5, 0.0);
        let obj = QMFunction::type2(HermitianMatrix::new(a0).unwrap(), b0, 0.0).unwrap();
        let con = QMFunction::energy(HermitianMatrix::identity(2), 1, -1.0);
        let p = QMPProblem::new(QmpKind::T2, obj, vec![con], vec![]).unwrap();
        let rep = solve_single_constraint(&p, 1.0, 1e-10).unwrap();
        assert_eq!(rep.multiplier, Some(0.0));
        assert!((rep.x[(0, 0)].re - 0.5).abs() < 1e-12 && rep.x[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn rejects_other_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut p = random_problem(&mut rng, 3, 1, 1.0);
        p.inequalities[0].b = complex_gaussian(3, 1, &mut rng);
        assert!(matches!(
            g_mu(&p, 0.0),
            Err(Error::NotSingleConstraintForm(_))
        ));
        let mut q = random_problem(&mut rng, 3, 1, 1.0);
        q.inequalities.push(q.inequalities[0].clone());
        assert!(matches!(
            g_mu(&q, 0.0),
            Err(Error::NotSingleConstraintForm(_))
        ));
        let mut s = random_problem(&mut rng, 3, 1, 1.0);
        s.objective.a = random_psd(3, 3, &mut rng).scale(-1.0);
        assert!(matches!(
            solve_single_constraint(&s, 1.0, 1e-10),
            Err(Error::NotConvex(_))
        ));
    }
}
