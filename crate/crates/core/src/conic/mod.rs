//! Primal-dual interior-point solver for block-diagonal real SDPs.
//!
//! Standard form:
//!
//! ```text
//! min  <C, X>   s.t.  <A_i, X> = b_i,  X ⪰ 0 (blockwise)
//! max  b^T y    s.t.  C - Σ y_i A_i = S ⪰ 0
//! ```
//!
//! A block of dimension one is a nonnegative scalar, so LPs embed directly.
//! Second-order cones enter through the arrow matrix `[[t I, u], [u^T, t]]`.

mod ipm;
mod lmi;
mod presolve;

use std::fmt;

pub use ipm::{solve, solve_with, SolverOptions};
pub use lmi::{LmiBlock, LmiProgram, LmiSolution};
pub use presolve::{presolve, Presolved};

use crate::matrix::RealMatrix;

/// Block-diagonal real symmetric matrix stored as its dense diagonal blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix(pub Vec<RealMatrix>);

impl BlockMatrix {
    pub fn zeros(dims: &[usize]) -> Self {
        Self(dims.iter().map(|&d| RealMatrix::zeros(d, d)).collect())
    }

    pub fn identity(dims: &[usize]) -> Self {
        Self(dims.iter().map(|&d| RealMatrix::identity(d, d)).collect())
    }

    pub fn dims(&self) -> Vec<usize> {
        self.0.iter().map(|b| b.nrows()).collect()
    }

    pub fn blocks(&self) -> &[RealMatrix] {
        &self.0
    }

    pub fn block(&self, k: usize) -> &RealMatrix {
        &self.0[k]
    }

    pub fn block_mut(&mut self, k: usize) -> &mut RealMatrix {
        &mut self.0[k]
    }

    /// Frobenius inner product `Tr(self · other)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.zip_apply(b, |x, y| *x += alpha * y);
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.iter().map(|b| b.scale(s)).collect())
    }

    pub fn symmetrize(&mut self) {
        for b in &mut self.0 {
            let t = b.transpose();
            *b += t;
            *b *= 0.5;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|b| b.iter().all(|&v| v == 0.0))
    }

    fn flatten(&self) -> Vec<f64> {
        self.0.iter().flat_map(|b| b.iter().copied()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub a: BlockMatrix,
    pub b: f64,
}

/// An entry of the primal variable held at a fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedEntry {
    pub block: usize,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub blocks: Vec<usize>,
    pub c: BlockMatrix,
    pub constraints: Vec<Constraint>,
    pub fixed: Vec<FixedEntry>,
}

impl ConicProgram {
    pub fn new(blocks: Vec<usize>) -> Self {
        let c = BlockMatrix::zeros(&blocks);
        Self {
            blocks,
            c,
            constraints: Vec::new(),
            fixed: Vec::new(),
        }
    }

    pub fn add_constraint(&mut self, a: BlockMatrix, b: f64) {
        debug_assert_eq!(a.dims(), self.blocks);
        self.constraints.push(Constraint { a, b });
    }

    pub fn fix_entry(&mut self, block: usize, row: usize, col: usize, value: f64) {
        self.fixed.push(FixedEntry {
            block,
            row,
            col,
            value,
        });
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().sum()
    }

    /// `A(X)`: the vector of constraint inner products.
    pub fn apply(&self, x: &BlockMatrix) -> Vec<f64> {
        self.constraints.iter().map(|c| c.a.inner(x)).collect()
    }

    /// `A^T(y) = Σ y_i A_i`.
    pub fn apply_adjoint(&self, y: &[f64]) -> BlockMatrix {
        let mut out = BlockMatrix::zeros(&self.blocks);
        for (c, &yi) in self.constraints.iter().zip(y) {
            if yi != 0.0 {
                out.axpy(yi, &c.a);
            }
        }
        out
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.b).collect()
    }
}

/// Textual dump used for debugging. One header line, then `C`, then one
/// `constraint i b=<rhs>` section per row; each block prints as
/// `block k dim d` followed by its nonzero `row col value` triples.
impl fmt::Display for ConicProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "sdp blocks={:?} constraints={} fixed={}",
            self.blocks,
            self.constraints.len(),
            self.fixed.len()
        )?;
        let dump = |f: &mut fmt::Formatter<'_>, m: &BlockMatrix| -> fmt::Result {
            for (k, b) in m.blocks().iter().enumerate() {
                writeln!(f, "  block {k} dim {}", b.nrows())?;
                for i in 0..b.nrows() {
                    for j in i..b.ncols() {
                        if b[(i, j)] != 0.0 {
                            writeln!(f, "    {i} {j} {:.17e}", b[(i, j)])?;
                        }
                    }
                }
            }
            Ok(())
        };
        writeln!(f, "objective")?;
        dump(f, &self.c)?;
        for (i, c) in self.constraints.iter().enumerate() {
            writeln!(f, "constraint {i} b={:.17e}", c.b)?;
            dump(f, &c.a)?;
        }
        for e in &self.fixed {
            writeln!(f, "fixed {} {} {} {:.17e}", e.block, e.row, e.col, e.value)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub x: BlockMatrix,
    /// Dual multipliers, one per constraint row of the program as given
    /// (rows removed by presolve get zero), followed by one per fixed entry.
    pub y: Vec<f64>,
    pub s: BlockMatrix,
    pub status: SolveStatus,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub iterations: usize,
    /// Per-iteration diagnostics, filled when requested in the options.
    pub history: Vec<IterateRecord>,
}

#[derive(Debug, Clone, Copy)]
pub struct IterateRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
}
