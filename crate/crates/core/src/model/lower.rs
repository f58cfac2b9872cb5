//! Convex QMPs as real conic programs.
//!
//! Both lowerings work on `ξ = [Re vec X; Im vec X]`, so the quadratic part
//! `Tr(D X^H A X)` becomes `ξ^T real_embed(D^T ⊗ A) ξ` and the linear part
//! `2 Re Tr(B^H X)` becomes `2 [Re vec B; Im vec B]^T ξ`.

use crate::conic::{ConicProgram, LmiBlock, LmiProgram, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::matrix::{
    complex_unstack, hermitian_sqrt, is_psd, kron, real_embed, real_embed_general, real_stack,
    unvectorize, vectorize, ComplexMatrix, HermitianMatrix, RealMatrix,
};

use super::{QMFunction, QMPProblem};

const CONVEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lowering {
    /// Epigraph variable `t` with one Schur-complement block per function.
    ConvexSdp,
    /// Completed squares as second-order cones (arrow blocks).
    Socp,
}

#[derive(Debug, Clone)]
pub struct LoweredProgram {
    pub lowering: Lowering,
    pub lmi: LmiProgram,
    pub program: ConicProgram,
    pub n: usize,
    pub r: usize,
    /// Completed-square constant of the objective (zero for the SDP form).
    pub objective_constant: f64,
    /// Completed-square constants of the inequalities (SOCP only).
    pub constraint_constants: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LoweredSolution {
    pub x: ComplexMatrix,
    /// Optimal value in the units of the original objective.
    pub value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Multiplier of each inequality, read off the dual blocks.
    pub multipliers: Vec<f64>,
}

impl LoweredProgram {
    fn nvec(&self) -> usize {
        2 * self.n * self.r
    }

    pub fn point(&self, y: &[f64]) -> ComplexMatrix {
        unvectorize(&complex_unstack(&y[..self.nvec()]), self.n, self.r)
    }

    /// Objective value of the original QMP encoded by the epigraph variable.
    pub fn value(&self, y: &[f64]) -> f64 {
        let t = y[self.nvec()];
        match self.lowering {
            Lowering::ConvexSdp => t,
            Lowering::Socp => t * t + self.objective_constant,
        }
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<LoweredSolution> {
        let sol = self.lmi.solve(opts)?;
        // Block 0 is the objective; block i+1 carries inequality i. For the
        // Schur form the multiplier is the corner of the dual block. For the
        // cone ‖u_i‖ ≤ ρ_i the dual trace λ_i is the multiplier of the norm
        // constraint, and λ_i t / ρ_i that of the squared one.
        let t = sol.y[self.nvec()];
        let multipliers = sol.multipliers.blocks()[1..]
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let k = w.nrows() - 1;
                match self.lowering {
                    Lowering::ConvexSdp => w[(k, k)],
                    Lowering::Socp => {
                        let rho = (-self.constraint_constants[i]).sqrt();
                        if rho > 0.0 {
                            w.trace() * t / rho
                        } else {
                            0.0
                        }
                    }
                }
            })
            .collect();
        Ok(LoweredSolution {
            x: self.point(&sol.y),
            value: self.value(&sol.y),
            status: sol.status,
            iterations: sol.iterations,
            multipliers,
        })
    }
}

fn check_psd(h: &HermitianMatrix, what: &str) -> Result<()> {
    let scale = 1.0 + h.max_eigenvalue().abs();
    if is_psd(h, CONVEX_TOL * scale) {
        Ok(())
    } else {
        Err(Error::NotConvex(format!(
            "{what} is not positive semidefinite"
        )))
    }
}

/// Real factor `L` with `L^T L = real_embed(D^T ⊗ A)`.
fn real_factor(f: &QMFunction) -> Result<RealMatrix> {
    let q = HermitianMatrix::symmetrize(kron(&f.d.matrix().transpose(), f.a.matrix()));
    Ok(real_embed(&hermitian_sqrt(&q)?))
}

fn real_linear(f: &QMFunction) -> Vec<f64> {
    real_stack(&vectorize(&f.b))
}

/// Schur block `[[I, L ξ], [ξ^T L^T, s t - 2 b^T ξ - c]] ⪰ 0`, i.e.
/// `f(X) ≤ s t`, with `s = 1` for the objective and `0` for constraints.
fn schur_block(f: &QMFunction, epigraph: bool) -> Result<LmiBlock> {
    let l = real_factor(f)?;
    let b = real_linear(f);
    let m = l.nrows();
    let mut f0 = RealMatrix::identity(m + 1, m + 1);
    f0[(m, m)] = -f.c;
    let mut blk = LmiBlock::new(f0);
    for k in 0..m {
        let mut fk = RealMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            fk[(i, m)] = l[(i, k)];
            fk[(m, i)] = l[(i, k)];
        }
        fk[(m, m)] = -2.0 * b[k];
        if fk.iter().any(|&v| v != 0.0) {
            blk = blk.with(k, fk);
        }
    }
    if epigraph {
        let mut ft = RealMatrix::zeros(m + 1, m + 1);
        ft[(m, m)] = 1.0;
        blk = blk.with(m, ft);
    }
    Ok(blk)
}

fn epigraph_program(p: &QMPProblem) -> LmiProgram {
    let nv = 2 * p.n * p.r;
    let mut cost = vec![0.0; nv + 1];
    cost[nv] = 1.0;
    LmiProgram::new(nv + 1, cost)
}

pub fn lower_convex_sdp(p: &QMPProblem) -> Result<LoweredProgram> {
    if !p.equalities.is_empty() {
        return Err(Error::NotConvex(
            "equality constraints are not convex".into(),
        ));
    }
    for f in p.functions() {
        check_psd(&f.a, "A")?;
        check_psd(&f.d, "D")?;
    }
    let mut lmi = epigraph_program(p);
    lmi.push(schur_block(&p.objective, true)?);
    for f in &p.inequalities {
        lmi.push(schur_block(f, false)?);
    }
    Ok(LoweredProgram {
        lowering: Lowering::ConvexSdp,
        program: lmi.to_conic()?,
        lmi,
        n: p.n,
        r: p.r,
        objective_constant: 0.0,
        constraint_constants: Vec::new(),
    })
}

/// `f = ‖L x + w‖² + κ` with `L = D^{T/2} ⊗ A^{1/2}`,
/// `w = vec(A^{-1/2} B D^{-1/2})` and `κ = c - Tr(A^{-1} B D^{-1} B^H)`.
#[derive(Debug, Clone)]
pub struct CompletedSquare {
    pub l: ComplexMatrix,
    pub w: ComplexMatrix,
    pub kappa: f64,
}

pub fn complete_square(f: &QMFunction) -> Result<CompletedSquare> {
    for m in [&f.a, &f.d] {
        let min = m.min_eigenvalue();
        if min <= CONVEX_TOL {
            return Err(Error::NotPositiveDefinite(min));
        }
    }
    let a_half = hermitian_sqrt(&f.a)?;
    let d_half = hermitian_sqrt(&f.d)?;
    let a_ih = f.a.inv_sqrt()?;
    let d_ih = f.d.inv_sqrt()?;
    let l = kron(&d_half.matrix().transpose(), a_half.matrix());
    let wm = a_ih.matrix() * &f.b * d_ih.matrix();
    let kappa = f.c - wm.norm_squared();
    Ok(CompletedSquare {
        l,
        w: vectorize(&wm),
        kappa,
    })
}

/// Arrow block `[[ρ I, u], [u^T, ρ]]` with `u = L ξ + w` and `ρ` either the
/// epigraph variable (index `t`) or a constant.
fn arrow_block(cs: &CompletedSquare, radius: Option<f64>, t: usize) -> LmiBlock {
    let l = real_embed_general(&cs.l);
    let w = real_stack(&cs.w);
    let m = l.nrows();
    let mut f0 = RealMatrix::zeros(m + 1, m + 1);
    for i in 0..m {
        f0[(i, m)] = w[i];
        f0[(m, i)] = w[i];
    }
    if let Some(rho) = radius {
        f0.fill_diagonal(rho);
    }
    let mut blk = LmiBlock::new(f0);
    for k in 0..l.ncols() {
        if (0..m).all(|i| l[(i, k)] == 0.0) {
            continue;
        }
        let mut fk = RealMatrix::zeros(m + 1, m + 1);
        for i in 0..m {
            fk[(i, m)] = l[(i, k)];
            fk[(m, i)] = l[(i, k)];
        }
        blk = blk.with(k, fk);
    }
    if radius.is_none() {
        blk = blk.with(t, RealMatrix::identity(m + 1, m + 1));
    }
    blk
}

pub fn lower_socp(p: &QMPProblem) -> Result<LoweredProgram> {
    if !p.equalities.is_empty() {
        return Err(Error::NotConvex(
            "equality constraints are not convex".into(),
        ));
    }
    let obj = complete_square(&p.objective)?;
    let cons = p
        .inequalities
        .iter()
        .map(complete_square)
        .collect::<Result<Vec<_>>>()?;
    let nv = 2 * p.n * p.r;
    let mut lmi = epigraph_program(p);
    lmi.push(arrow_block(&obj, None, nv));
    for cs in &cons {
        if cs.kappa > 0.0 {
            // ‖u‖² ≤ -κ has no solution
            return Err(Error::InfeasibleProblem);
        }
        lmi.push(arrow_block(cs, Some((-cs.kappa).sqrt()), nv));
    }
    Ok(LoweredProgram {
        lowering: Lowering::Socp,
        program: lmi.to_conic()?,
        lmi,
        n: p.n,
        r: p.r,
        objective_constant: obj.kappa,
        constraint_constants: cons.iter().map(|c| c.kappa).collect(),
    })
}
