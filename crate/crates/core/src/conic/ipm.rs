//! Infeasible-start path-following with the HKM search direction and a
//! Mehrotra predictor-corrector step.

use nalgebra::{Cholesky, Dyn, LU};

use super::presolve::presolve;
use super::{BlockMatrix, ConicProgram, ConicSolution, IterateRecord, SolveStatus};
use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Bound on relative primal/dual residuals and normalized gap.
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction-to-boundary factor.
    pub step_fraction: f64,
    /// Static regularization on the Schur complement, relative to its diagonal.
    pub regularization: f64,
    /// Iterations without progress before giving up.
    pub stall_window: usize,
    /// Keep one [`IterateRecord`] per iteration.
    pub record_history: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
            step_fraction: 0.98,
            regularization: 1e-10,
            stall_window: 20,
            record_history: false,
        }
    }
}

pub fn solve(prog: &ConicProgram, tol: f64, max_iter: usize) -> Result<ConicSolution> {
    solve_with(
        prog,
        &SolverOptions {
            tol,
            max_iter,
            ..SolverOptions::default()
        },
    )
}

pub fn solve_with(prog: &ConicProgram, opts: &SolverOptions) -> Result<ConicSolution> {
    if opts.tol <= 0.0 {
        return Err(Error::InvalidParams(
            "solver tolerance must be positive".into(),
        ));
    }
    let pre = presolve(prog);
    let mut sol = Ipm::new(&pre.program, opts).run()?;
    let total_rows = prog.constraints.len() + prog.fixed.len();
    let mut y = vec![0.0; total_rows];
    for (k, &o) in pre.origin.iter().enumerate() {
        y[o] = sol.y[k];
    }
    sol.y = y;
    Ok(sol)
}

struct Ipm<'a> {
    p: &'a ConicProgram,
    opts: &'a SolverOptions,
    b: Vec<f64>,
    /// Per constraint, the blocks where its matrix is nonzero.
    support: Vec<Vec<usize>>,
    /// Cholesky factor of the Gram matrix `<A_i, A_j>`, used to project the
    /// primal direction back onto `A(dX) = r_p`.
    gram: Option<Cholesky<f64, Dyn>>,
    n: f64,
}

struct Direction {
    dx: BlockMatrix,
    dy: Vec<f64>,
    ds: BlockMatrix,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Largest step `α` keeping `x + α dx ⪰ 0`, for `x ≻ 0`.
fn max_step(x: &BlockMatrix, dx: &BlockMatrix) -> f64 {
    let mut alpha = f64::INFINITY;
    for (xb, db) in x.blocks().iter().zip(dx.blocks()) {
        if xb.nrows() == 1 {
            if db[(0, 0)] < 0.0 {
                alpha = alpha.min(-xb[(0, 0)] / db[(0, 0)]);
            }
            continue;
        }
        let Some(ch) = Cholesky::new(xb.clone()) else {
            return 0.0;
        };
        let l = ch.l();
        let Some(t) = l.solve_lower_triangular(db) else {
            return 0.0;
        };
        let Some(t2) = l.solve_lower_triangular(&t.transpose()) else {
            return 0.0;
        };
        let sym = (&t2 + t2.transpose()) * 0.5;
        let min = sym.symmetric_eigenvalues().min();
        if min < 0.0 {
            alpha = alpha.min(-1.0 / min);
        }
    }
    alpha
}

fn min_eigenvalue(m: &BlockMatrix) -> f64 {
    m.blocks()
        .iter()
        .map(|b| b.clone().symmetric_eigenvalues().min())
        .fold(f64::INFINITY, f64::min)
}

fn block_inverse(s: &BlockMatrix) -> Option<BlockMatrix> {
    let mut out = Vec::with_capacity(s.0.len());
    for b in s.blocks() {
        out.push(Cholesky::new(b.clone())?.inverse());
    }
    Some(BlockMatrix(out))
}

fn block_mul(a: &BlockMatrix, b: &BlockMatrix) -> BlockMatrix {
    BlockMatrix(a.0.iter().zip(&b.0).map(|(x, y)| x * y).collect())
}

enum Factor {
    Chol(Cholesky<f64, Dyn>),
    Lu(LU<f64, Dyn, Dyn>),
}

impl Factor {
    fn solve(&self, rhs: &nalgebra::DVector<f64>) -> Option<nalgebra::DVector<f64>> {
        match self {
            Factor::Chol(c) => Some(c.solve(rhs)),
            Factor::Lu(l) => l.solve(rhs),
        }
    }
}

impl<'a> Ipm<'a> {
    fn new(p: &'a ConicProgram, opts: &'a SolverOptions) -> Self {
        let support = p
            .constraints
            .iter()
            .map(|c| {
                c.a.blocks()
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.iter().any(|&v| v != 0.0))
                    .map(|(k, _)| k)
                    .collect()
            })
            .collect();
        let m = p.constraints.len();
        let gram = RealMatrix::from_fn(m, m, |i, j| p.constraints[i].a.inner(&p.constraints[j].a));
        Self {
            p,
            opts,
            b: p.rhs(),
            support,
            gram: Cholesky::new(gram),
            n: p.total_dim().max(1) as f64,
        }
    }

    fn apply(&self, x: &BlockMatrix) -> Vec<f64> {
        self.p
            .constraints
            .iter()
            .zip(&self.support)
            .map(|(c, sup)| sup.iter().map(|&k| c.a.block(k).dot(x.block(k))).sum())
            .collect()
    }

    /// `M_ij = Tr(A_i X A_j S^{-1}) = <G_i, G_j>` with `G_i = L_X^T A_i L_S^{-T}`,
    /// which keeps `M` a Gram matrix in floating point.
    fn schur(&self, x: &BlockMatrix, s: &BlockMatrix) -> Result<RealMatrix> {
        let breakdown = || Error::NumericalBreakdown("iterate left the cone".into());
        let nb = self.p.blocks.len();
        let mut lx = Vec::with_capacity(nb);
        let mut ls = Vec::with_capacity(nb);
        for k in 0..nb {
            lx.push(Cholesky::new(x.block(k).clone()).ok_or_else(breakdown)?.l());
            ls.push(Cholesky::new(s.block(k).clone()).ok_or_else(breakdown)?.l());
        }
        let m = self.p.constraints.len();
        let g: Vec<Vec<Option<RealMatrix>>> = self
            .p
            .constraints
            .iter()
            .zip(&self.support)
            .map(|(c, sup)| {
                let mut row = vec![None; nb];
                for &k in sup {
                    let t = c.a.block(k) * &lx[k];
                    row[k] = ls[k].solve_lower_triangular(&t);
                }
                row
            })
            .collect();
        let mut mat = RealMatrix::zeros(m, m);
        for j in 0..m {
            for i in 0..=j {
                let v: f64 = self.support[i]
                    .iter()
                    .filter_map(|&k| match (&g[i][k], &g[j][k]) {
                        (Some(a), Some(b)) => Some(a.dot(b)),
                        _ => None,
                    })
                    .sum();
                mat[(i, j)] = v;
                mat[(j, i)] = v;
            }
        }
        Ok(mat)
    }

    fn factor(&self, m: &RealMatrix) -> Result<Factor> {
        let scale = (0..m.nrows())
            .fold(0.0_f64, |a, i| a.max(m[(i, i)].abs()))
            .max(1e-300);
        let mut reg = self.opts.regularization;
        for _ in 0..5 {
            let mut mr = m.clone();
            for i in 0..mr.nrows() {
                mr[(i, i)] += reg * m[(i, i)].abs().max(1e-14 * scale);
            }
            if let Some(ch) = Cholesky::new(mr) {
                return Ok(Factor::Chol(ch));
            }
            reg *= 100.0;
        }
        let lu = LU::new(m.clone());
        if lu.is_invertible() {
            Ok(Factor::Lu(lu))
        } else {
            Err(Error::NumericalBreakdown(
                "Schur complement is singular".into(),
            ))
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        x: &BlockMatrix,
        sinv: &BlockMatrix,
        rp: &[f64],
        rd: &BlockMatrix,
        m: &RealMatrix,
        fac: &Factor,
        sigma_mu: f64,
        corr: Option<(&BlockMatrix, &BlockMatrix)>,
    ) -> Result<Direction> {
        // H = σμ S^{-1} - X - dXa dSa S^{-1} - X Rd S^{-1}
        let mut h = sinv.scale(sigma_mu);
        h.axpy(-1.0, x);
        let mut tail = block_mul(x, rd);
        if let Some((dxa, dsa)) = corr {
            tail.axpy(1.0, &block_mul(dxa, dsa));
        }
        h.axpy(-1.0, &block_mul(&tail, sinv));
        h.symmetrize();

        let ah = self.apply(&h);
        let rhs =
            nalgebra::DVector::from_iterator(rp.len(), rp.iter().zip(&ah).map(|(r, a)| r - a));
        let breakdown = || Error::NumericalBreakdown("Schur solve failed".into());
        let mut dy = fac.solve(&rhs).ok_or_else(breakdown)?;
        let resid = &rhs - m * &dy;
        dy += fac.solve(&resid).ok_or_else(breakdown)?;
        let dy: Vec<f64> = dy.iter().copied().collect();

        let aty = self.p.apply_adjoint(&dy);
        let mut ds = rd.clone();
        ds.axpy(-1.0, &aty);
        let mut dx = h;
        dx.axpy(1.0, &block_mul(&block_mul(x, &aty), sinv));
        dx.symmetrize();
        // The Schur system loses accuracy as μ → 0; remove the drift in A(dX).
        if let Some(g) = &self.gram {
            let adx = self.apply(&dx);
            let e =
                nalgebra::DVector::from_iterator(rp.len(), rp.iter().zip(&adx).map(|(r, a)| r - a));
            let z = g.solve(&e);
            let z: Vec<f64> = z.iter().copied().collect();
            dx.axpy(1.0, &self.p.apply_adjoint(&z));
        }
        Ok(Direction { dx, dy, ds })
    }

    /// Mehrotra predictor-corrector direction at the current iterate.
    fn search_direction(
        &self,
        x: &BlockMatrix,
        s: &BlockMatrix,
        rp: &[f64],
        rd: &BlockMatrix,
        mu: f64,
    ) -> Result<Direction> {
        let m = self.p.constraints.len();
        let sinv = block_inverse(s)
            .ok_or_else(|| Error::NumericalBreakdown("dual slack lost definiteness".into()))?;
        let schur = self.schur(x, s)?;
        let fac = if m > 0 {
            self.factor(&schur)?
        } else {
            Factor::Chol(Cholesky::new(RealMatrix::identity(0, 0)).expect("empty factor"))
        };

        let pred = self.direction(x, &sinv, rp, rd, &schur, &fac, 0.0, None)?;
        let ap = max_step(x, &pred.dx).min(1.0);
        let ad = max_step(s, &pred.ds).min(1.0);
        let mut xa = x.clone();
        xa.axpy(ap, &pred.dx);
        let mut sa = s.clone();
        sa.axpy(ad, &pred.ds);
        let mu_aff = xa.inner(&sa) / self.n;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        self.direction(
            x,
            &sinv,
            rp,
            rd,
            &schur,
            &fac,
            sigma * mu,
            Some((&pred.dx, &pred.ds)),
        )
    }

    fn run(&self) -> Result<ConicSolution> {
        let p = self.p;
        let m = p.constraints.len();
        let dims = &p.blocks;
        let normb = norm(&self.b);
        let normc = p.c.norm();
        let sqrt_n = self.n.sqrt();

        let anorms: Vec<f64> = p.constraints.iter().map(|c| c.a.norm()).collect();
        let x0 = self
            .b
            .iter()
            .zip(&anorms)
            .map(|(b, a)| sqrt_n * (1.0 + b.abs()) / (1.0 + a))
            .fold(10.0_f64.max(sqrt_n), f64::max);
        let s0 = anorms
            .iter()
            .copied()
            .fold(10.0_f64.max(sqrt_n).max(normc), f64::max);
        let mut x = BlockMatrix::identity(dims).scale(x0);
        let mut s = BlockMatrix::identity(dims).scale(s0);
        let mut y = vec![0.0; m];

        let mut best_merit = f64::INFINITY;
        let mut since_best = 0;
        let mut status = SolveStatus::MaxIterations;
        let mut iterations = 0;
        let mut history = Vec::new();
        let (mut relp, mut reld, mut gap);

        loop {
            let ax = self.apply(&x);
            let rp: Vec<f64> = self.b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let mut rd = p.c.clone();
            rd.axpy(-1.0, &p.apply_adjoint(&y));
            rd.axpy(-1.0, &s);
            let pobj = p.c.inner(&x);
            let dobj = dot(&self.b, &y);
            let xs = x.inner(&s);
            let mu = xs / self.n;
            relp = norm(&rp) / (1.0 + normb);
            reld = rd.norm() / (1.0 + normc);
            gap = xs / (1.0 + pobj.abs());
            if self.opts.record_history {
                history.push(IterateRecord {
                    primal_objective: pobj,
                    dual_objective: dobj,
                    primal_residual: relp,
                    dual_residual: reld,
                    min_eig_x: min_eigenvalue(&x),
                    min_eig_s: min_eigenvalue(&s),
                });
            }

            if relp < self.opts.tol && reld < self.opts.tol && gap < self.opts.tol {
                status = SolveStatus::Optimal;
                break;
            }
            // Certificates: y/b^T y with A^T y + S → 0 proves primal
            // infeasibility; X/|<C,X>| with A(X) → 0 proves dual infeasibility.
            let cert_tol = 1e-8;
            if dobj > 0.0 && (normc + rd.norm()) <= cert_tol * dobj {
                status = SolveStatus::Infeasible;
                y.iter_mut().for_each(|v| *v /= dobj);
                break;
            }
            if pobj < 0.0 && norm(&ax) <= cert_tol * -pobj {
                status = SolveStatus::Infeasible;
                break;
            }
            let merit = relp.max(reld).max(gap);
            if merit < 0.5 * best_merit {
                best_merit = merit;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= self.opts.stall_window {
                    status = if best_merit < 1e-4 {
                        SolveStatus::MaxIterations
                    } else {
                        SolveStatus::Infeasible
                    };
                    break;
                }
            }
            if iterations >= self.opts.max_iter {
                break;
            }
            iterations += 1;

            let dir = match self.search_direction(&x, &s, &rp, &rd, mu) {
                Ok(d) => d,
                // Near the solution the scaling can become too ill-conditioned
                // to factor; the current iterate is then as good as it gets.
                Err(_) if best_merit < 1e-4 => break,
                Err(e) => return Err(e),
            };
            let tau = self.opts.step_fraction;
            let ap = (tau * max_step(&x, &dir.dx)).min(1.0);
            let ad = (tau * max_step(&s, &dir.ds)).min(1.0);
            x.axpy(ap, &dir.dx);
            s.axpy(ad, &dir.ds);
            for (yi, d) in y.iter_mut().zip(&dir.dy) {
                *yi += ad * d;
            }
            x.symmetrize();
            s.symmetrize();
        }

        Ok(ConicSolution {
            primal_objective: p.c.inner(&x),
            dual_objective: dot(&self.b, &y),
            x,
            y,
            s,
            status,
            gap,
            primal_residual: relp,
            dual_residual: reld,
            iterations,
            history,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn diag_block(vals: &[f64]) -> BlockMatrix {
        BlockMatrix(vec![RealMatrix::from_diagonal(
            &nalgebra::DVector::from_row_slice(vals),
        )])
    }

    #[test]
    fn smallest_eigenvalue_program() {
        let mut p = ConicProgram::new(vec![2]);
        p.c = diag_block(&[1.0, 2.0]);
        p.add_constraint(BlockMatrix::identity(&[2]), 1.0);
        let sol = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.primal_objective - 1.0).abs() < 1e-7);
        let xm = sol.x.block(0);
        assert!((xm[(0, 0)] - 1.0).abs() < 1e-6 && xm[(1, 1)].abs() < 1e-6);
    }

    #[test]
    fn scalar_lp_lower_bound() {
        // min x  s.t. x - s = 2,  x, s ≥ 0
        let mut p = ConicProgram::new(vec![1, 1]);
        p.c.block_mut(0)[(0, 0)] = 1.0;
        let mut a = BlockMatrix::zeros(&[1, 1]);
        a.block_mut(0)[(0, 0)] = 1.0;
        a.block_mut(1)[(0, 0)] = -1.0;
        p.add_constraint(a, 2.0);
        let sol = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x.block(0)[(0, 0)] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn fixed_entries_are_honored() {
        // min <C, X> with X_11 pinned to 1 and C = [[1, 1], [1, 1]]: X = [[1,-1],[-1,1]], value 0
        let mut p = ConicProgram::new(vec![2]);
        p.c = BlockMatrix(vec![dmatrix![1.0, 1.0; 1.0, 1.0]]);
        p.fix_entry(0, 0, 0, 1.0);
        let sol = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal_objective.abs() < 1e-7);
        assert!((sol.x.block(0)[(0, 0)] - 1.0).abs() < 1e-8);
        assert_eq!(sol.y.len(), 1);
    }

    #[test]
    fn detects_primal_infeasibility() {
        // x = -1 with x ≥ 0
        let mut p = ConicProgram::new(vec![1]);
        p.add_constraint(diag_block(&[1.0]), -1.0);
        let sol = solve(&p, 1e-8, 200).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let p = ConicProgram::new(vec![1]);
        assert!(solve(&p, 0.0, 10).is_err());
    }

    #[test]
    fn max_step_matches_eigen_bound() {
        let x = BlockMatrix(vec![RealMatrix::identity(2, 2)]);
        let dx = diag_block(&[-2.0, 1.0]);
        assert!((max_step(&x, &dx) - 0.5).abs() < 1e-12);
        assert!(max_step(&x, &diag_block(&[1.0, 1.0])).is_infinite());
    }
}
