use super::{solve_with, BlockMatrix, ConicProgram, SolveStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::matrix::RealMatrix;

/// One matrix inequality `F0 + Σ_k y_k F_k ⪰ 0`.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub f0: RealMatrix,
    /// `(k, F_k)` pairs; variables not listed have a zero coefficient.
    pub coeffs: Vec<(usize, RealMatrix)>,
}

impl LmiBlock {
    pub fn new(f0: RealMatrix) -> Self {
        Self {
            f0,
            coeffs: Vec::new(),
        }
    }

    pub fn with(mut self, k: usize, fk: RealMatrix) -> Self {
        self.coeffs.push((k, fk));
        self
    }

    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }
}

/// `min cost^T y` over free `y` subject to a list of LMIs.
#[derive(Debug, Clone)]
pub struct LmiProgram {
    pub nvars: usize,
    pub cost: Vec<f64>,
    pub blocks: Vec<LmiBlock>,
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub y: Vec<f64>,
    pub value: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    /// The multiplier matrices, one per LMI block.
    pub multipliers: BlockMatrix,
}

impl LmiProgram {
    pub fn new(nvars: usize, cost: Vec<f64>) -> Self {
        Self {
            nvars,
            cost,
            blocks: Vec::new(),
        }
    }

    pub fn push(&mut self, block: LmiBlock) {
        self.blocks.push(block);
    }

    /// The LMIs are the dual slack of the standard form: `C = F0` and
    /// `A_k = -F_k`, with `b = -cost`.
    pub fn to_conic(&self) -> Result<ConicProgram> {
        if self.cost.len() != self.nvars {
            return Err(Error::ShapeMismatch(format!(
                "cost has {} entries for {} variables",
                self.cost.len(),
                self.nvars
            )));
        }
        let dims: Vec<usize> = self.blocks.iter().map(LmiBlock::dim).collect();
        let mut p = ConicProgram::new(dims.clone());
        p.c = BlockMatrix(self.blocks.iter().map(|b| b.f0.clone()).collect());
        let mut rows: Vec<BlockMatrix> =
            (0..self.nvars).map(|_| BlockMatrix::zeros(&dims)).collect();
        for (j, blk) in self.blocks.iter().enumerate() {
            for (k, fk) in &blk.coeffs {
                if *k >= self.nvars || fk.shape() != blk.f0.shape() {
                    return Err(Error::ShapeMismatch(format!(
                        "bad coefficient for variable {k}"
                    )));
                }
                *rows[*k].block_mut(j) -= fk;
            }
        }
        for (a, &c) in rows.into_iter().zip(&self.cost) {
            p.add_constraint(a, -c);
        }
        Ok(p)
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<LmiSolution> {
        let sol = solve_with(&self.to_conic()?, opts)?;
        let y = sol.y[..self.nvars].to_vec();
        let value = y.iter().zip(&self.cost).map(|(a, b)| a * b).sum();
        Ok(LmiSolution {
            y,
            value,
            status: sol.status,
            iterations: sol.iterations,
            multipliers: sol.x,
        })
    }
}
