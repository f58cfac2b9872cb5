//! Semidefinite relaxation with rank-one recovery.
//!
//! Type-2 problems use the homogenized matrix `U` of dimension `n+r` with its
//! lower-right block pinned to `I_r`; other problems use the lifted `Z` of
//! dimension `nr+1` with its corner pinned to one. The complex matrix enters
//! the conic solver as a real PSD matrix of twice the size.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::conic::{solve_with, BlockMatrix, ConicProgram, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::matrix::{
    complex_gaussian, hermitian_sqrt, real_embed, real_unembed, unvectorize, ComplexMatrix,
    HermitianMatrix, C64,
};
use crate::model::{lift_t1, m_operator, QMFunction, QMPProblem, QmpKind};

use super::{kkt_residual, SolvePath, SolveReport};

#[derive(Debug, Clone)]
pub struct SdrOptions {
    /// Gaussian randomization rounds when the relaxation is not rank one.
    pub randomizations: usize,
    pub seed: u64,
    /// Rank-one threshold on the eigenvalue ratio.
    pub rank_tol: f64,
    pub solver: SolverOptions,
}

impl Default for SdrOptions {
    fn default() -> Self {
        Self {
            randomizations: 100,
            seed: 0x5d12_0001,
            rank_tol: 1e-6,
            solver: SolverOptions::default(),
        }
    }
}

/// Relative feasibility slack accepted for recovered points.
const FEAS_TOL: f64 = 1e-9;

struct Relaxation {
    objective: HermitianMatrix,
    inequalities: Vec<HermitianMatrix>,
    equalities: Vec<HermitianMatrix>,
    /// Entries of the relaxed matrix held fixed.
    pins: Vec<(usize, usize, f64)>,
    dim: usize,
}

fn relaxation(p: &QMPProblem) -> Relaxation {
    match p.kind {
        QmpKind::T2 => {
            let n = p.n;
            Relaxation {
                objective: m_operator(&p.objective),
                inequalities: p.inequalities.iter().map(m_operator).collect(),
                equalities: p.equalities.iter().map(m_operator).collect(),
                pins: (0..p.r)
                    .flat_map(|i| {
                        (i..p.r).map(move |j| (n + i, n + j, if i == j { 1.0 } else { 0.0 }))
                    })
                    .collect(),
                dim: n + p.r,
            }
        }
        QmpKind::T1 => {
            let lifted = lift_t1(p);
            let corner = lifted.corner();
            Relaxation {
                dim: lifted.dim(),
                objective: lifted.objective,
                inequalities: lifted.inequalities,
                equalities: lifted.equalities,
                pins: vec![(corner, corner, 1.0)],
            }
        }
    }
}

fn embedded(h: &HermitianMatrix, slacks: usize, slack: Option<usize>) -> BlockMatrix {
    let mut blocks = vec![real_embed(h) * 0.5];
    for k in 0..slacks {
        let mut s = crate::matrix::RealMatrix::zeros(1, 1);
        if slack == Some(k) {
            s[(0, 0)] = 1.0;
        }
        blocks.push(s);
    }
    BlockMatrix(blocks)
}

/// `Tr(H Z) = Tr(real_embed(H) W) / 2`, so every row carries that factor.
fn conic_program(rel: &Relaxation) -> ConicProgram {
    let ni = rel.inequalities.len();
    let mut dims = vec![2 * rel.dim];
    dims.extend(std::iter::repeat_n(1, ni));
    let mut prog = ConicProgram::new(dims);
    prog.c = embedded(&rel.objective, ni, None);
    for (i, h) in rel.inequalities.iter().enumerate() {
        prog.add_constraint(embedded(h, ni, Some(i)), 0.0);
    }
    for h in &rel.equalities {
        prog.add_constraint(embedded(h, ni, None), 0.0);
    }
    let n = rel.dim;
    for &(a, b, v) in &rel.pins {
        let mut re = ComplexMatrix::zeros(n, n);
        re[(a, b)] += C64::new(0.5, 0.0);
        re[(b, a)] += C64::new(0.5, 0.0);
        prog.add_constraint(embedded(&HermitianMatrix::symmetrize(re), ni, None), v);
        if a != b {
            let mut im = ComplexMatrix::zeros(n, n);
            im[(a, b)] = C64::new(0.0, 0.5);
            im[(b, a)] = C64::new(0.0, -0.5);
            prog.add_constraint(embedded(&HermitianMatrix::symmetrize(im), ni, None), 0.0);
        }
    }
    prog
}

/// `f(tX) = q t² + 2 l t + c`.
fn along_ray(f: &QMFunction, x: &ComplexMatrix) -> (f64, f64, f64) {
    let q = (f.d.matrix() * x.adjoint() * f.a.matrix() * x).trace().re;
    let l = (f.b.adjoint() * x).trace().re;
    (q, l, f.c)
}

fn roots(q: f64, l: f64, c: f64) -> Vec<f64> {
    let scale = q.abs() + l.abs() + c.abs();
    if scale == 0.0 {
        return Vec::new();
    }
    if q.abs() <= 1e-14 * scale {
        return if l != 0.0 {
            vec![-c / (2.0 * l)]
        } else {
            Vec::new()
        };
    }
    let disc = l * l - q * c;
    if disc < 0.0 {
        return Vec::new();
    }
    // stable pair: t1 = (-l - sign(l) sqrt(disc)) / q, t2 = c / (q t1)
    let s = disc.sqrt();
    let w = -l - l.signum() * s;
    if w == 0.0 {
        return vec![0.0];
    }
    vec![w / q, c / w]
}

fn quad(v: (f64, f64, f64), t: f64) -> f64 {
    v.0 * t * t + 2.0 * v.1 * t + v.2
}

/// Best feasible point on the ray `{tX}`: the feasible set of each constraint
/// along the ray is bounded by the roots of a scalar quadratic, so the
/// optimum over the ray is attained at a root, at the objective's stationary
/// point, or at the given point itself.
fn repair(p: &QMPProblem, x: &ComplexMatrix) -> Option<(ComplexMatrix, f64)> {
    let obj = along_ray(&p.objective, x);
    let ineq: Vec<_> = p.inequalities.iter().map(|f| along_ray(f, x)).collect();
    let eq: Vec<_> = p.equalities.iter().map(|f| along_ray(f, x)).collect();

    let mut cands = vec![1.0, 0.0];
    if eq.is_empty() {
        if obj.0 > 0.0 {
            cands.push(-obj.1 / obj.0);
        }
        for v in &ineq {
            cands.extend(roots(v.0, v.1, v.2));
        }
    } else {
        cands = eq.iter().flat_map(|v| roots(v.0, v.1, v.2)).collect();
        if eq.iter().all(|v| v.0 == 0.0 && v.1 == 0.0 && v.2 == 0.0) {
            cands.push(1.0);
        }
    }
    let feasible = |t: f64| {
        ineq.iter()
            .all(|v| quad(*v, t) <= FEAS_TOL * (1.0 + v.2.abs() + v.0.abs() * t * t))
            && eq
                .iter()
                .all(|v| quad(*v, t).abs() <= FEAS_TOL * (1.0 + v.2.abs() + v.0.abs() * t * t))
    };
    cands
        .into_iter()
        .filter(|t| t.is_finite() && feasible(*t))
        .map(|t| (t, quad(obj, t)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, _)| {
            let y = x * C64::new(t, 0.0);
            let v = p.objective.eval(&y);
            (y, v)
        })
}

fn descending_eigs(z: &HermitianMatrix) -> (Vec<f64>, ComplexMatrix) {
    let (vals, vecs) = z.eigh();
    let n = vals.len();
    let order: Vec<usize> = (0..n).rev().collect();
    let v = ComplexMatrix::from_fn(n, n, |i, j| vecs[(i, order[j])]);
    (order.iter().map(|&k| vals[k]).collect(), v)
}

/// Candidate points read off the relaxed matrix: its mean block, the
/// dominant-eigenvector factorization, and Gaussian draws whose second
/// moment matches the relaxed solution.
fn candidates(
    p: &QMPProblem,
    z: &HermitianMatrix,
    rank_one: bool,
    opts: &SdrOptions,
) -> Vec<ComplexMatrix> {
    let (n, r) = (p.n, p.r);
    let (vals, vecs) = descending_eigs(z);
    let mut out = Vec::new();
    match p.kind {
        QmpKind::T2 => {
            let mean = z.view((0, n), (n, r)).into_owned();
            out.push(mean.clone());
            if rank_one {
                return out;
            }
            // top-r factor [Y; Z_b] with U ≈ [Y; Z_b][Y; Z_b]^H, X = Y Z_b^H
            let mut f = vecs.columns(0, r).into_owned();
            for j in 0..r {
                f.column_mut(j).scale_mut(vals[j].max(0.0).sqrt());
            }
            let y = f.rows(0, n).into_owned();
            let zb = f.rows(n, r).into_owned();
            out.push(&y * zb.adjoint());
            let cov = HermitianMatrix::symmetrize(z.view((0, 0), (n, n)) - &mean * mean.adjoint());
            if let Ok(root) = hermitian_sqrt(&cov.spectral_map(|v| v.max(0.0))) {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                let s = C64::new(1.0 / (r as f64).sqrt(), 0.0);
                for _ in 0..opts.randomizations {
                    out.push(&mean + root.matrix() * complex_gaussian(n, r, &mut rng) * s);
                }
            }
        }
        QmpKind::T1 => {
            let nr = n * r;
            let mean = z.view((0, nr), (nr, 1)).into_owned();
            out.push(unvectorize(&mean, n, r));
            if rank_one {
                return out;
            }
            let v = vecs.column(0);
            if v[nr].norm() > 1e-12 {
                let scale = v[nr].conj() / v[nr].norm_sqr();
                let x: ComplexMatrix =
                    ComplexMatrix::from_iterator(nr, 1, v.rows(0, nr).iter().map(|e| e * scale));
                out.push(unvectorize(&x, n, r));
            }
            let cov =
                HermitianMatrix::symmetrize(z.view((0, 0), (nr, nr)) - &mean * mean.adjoint());
            if let Ok(root) = hermitian_sqrt(&cov.spectral_map(|v| v.max(0.0))) {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                for _ in 0..opts.randomizations {
                    let x = &mean + root.matrix() * complex_gaussian(nr, 1, &mut rng);
                    out.push(unvectorize(&x, n, r));
                }
            }
        }
    }
    out
}

pub fn solve_sdr(p: &QMPProblem) -> Result<SolveReport> {
    solve_sdr_with(p, &SdrOptions::default())
}

pub fn solve_sdr_with(p: &QMPProblem, opts: &SdrOptions) -> Result<SolveReport> {
    let rel = relaxation(p);
    let prog = conic_program(&rel);
    let sol = solve_with(&prog, &opts.solver)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::InfeasibleProblem),
        SolveStatus::MaxIterations => {
            if sol.primal_residual.max(sol.dual_residual).max(sol.gap) > 1e-6 {
                return Err(Error::ConicSolverFailure(format!(
                    "relaxation stopped after {} iterations with residuals {:.2e}/{:.2e}, gap {:.2e}",
                    sol.iterations, sol.primal_residual, sol.dual_residual, sol.gap
                )));
            }
        }
    }
    let z = real_unembed(sol.x.block(0));
    let bound = (rel.objective.matrix() * z.matrix()).trace().re;

    let (vals, _) = descending_eigs(&z);
    let lead = vals[0].max(0.0);
    let k = if p.kind == QmpKind::T2 { p.r } else { 1 };
    let gap = if lead > 0.0 && vals.len() > k {
        vals[k].max(0.0) / lead
    } else {
        0.0
    };
    let rank_one = gap <= opts.rank_tol;

    let best = candidates(p, &z, rank_one, opts)
        .iter()
        .filter_map(|x| repair(p, x))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| {
            Error::ConicSolverFailure("no feasible point recovered from the relaxation".into())
        })?;

    let ni = p.inequalities.len();
    let ne = p.equalities.len();
    let mu: Vec<f64> = sol.y[..ni].iter().map(|y| -y).collect();
    let nu: Vec<f64> = sol.y[ni..ni + ne].iter().map(|y| -y).collect();
    let raw_kkt = kkt_residual(p, &best.0, &mu, &nu);
    // Newton refinement keeps A_0 + Σ μ_i A_i positive definite, so a KKT
    // point it reaches is a global optimum
    let (x, mu, kkt) = match super::dual::polish(p, &mu) {
        Some((x, m)) if ne == 0 => {
            let k = kkt_residual(p, &x, &m, &[]);
            if k < raw_kkt
                && p.max_violation(&x)
                    <= FEAS_TOL
                        * (1.0 + p.inequalities.iter().map(|f| f.c.abs()).fold(0.0, f64::max))
            {
                (x, m, k)
            } else {
                (best.0, mu, raw_kkt)
            }
        }
        _ => (best.0, mu, raw_kkt),
    };
    Ok(SolveReport {
        kkt_residual: kkt,
        multiplier: (ni == 1 && ne == 0).then(|| mu[0]),
        objective: p.objective.eval(&x),
        x,
        path: SolvePath::SDR,
        iterations: sol.iterations,
        sdr_rank_gap: Some(gap),
        relaxation_bound: Some(bound),
    })
}
