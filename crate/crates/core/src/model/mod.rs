//! Quadratic matrix functions and QMP problems, plus the structural
//! transformations that turn them into semidefinite programs.

pub(crate) mod io;
mod lift;
mod lower;

pub use io::{problem_from_json, problem_to_json, read_problem, write_problem};
pub use lift::{
    homogenize_t2, homogenized_point, lift_t1, lifted_point, m_operator, omega, tightness_hint,
    HomogenizedSDP, LiftedSDP,
};
pub use lower::{
    complete_square, lower_convex_sdp, lower_socp, CompletedSquare, LoweredProgram,
    LoweredSolution, Lowering,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{hermitian_sqrt, ComplexMatrix, HermitianMatrix};

/// `f(X) = Tr(D X^H A X) + 2 Re Tr(B^H X) + c` over `X ∈ C^{n×r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QMFunction {
    pub a: HermitianMatrix,
    pub b: ComplexMatrix,
    pub d: HermitianMatrix,
    pub c: f64,
}

impl QMFunction {
    pub fn new(a: HermitianMatrix, b: ComplexMatrix, d: HermitianMatrix, c: f64) -> Result<Self> {
        let (n, r) = (a.dim(), d.dim());
        if b.shape() != (n, r) {
            return Err(Error::ShapeMismatch(format!(
                "B is {}x{}, expected {n}x{r}",
                b.nrows(),
                b.ncols()
            )));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParams("constant term is not finite".into()));
        }
        Ok(Self { a, b, d, c })
    }

    /// Type-2 form with `D = I_r`.
    pub fn type2(a: HermitianMatrix, b: ComplexMatrix, c: f64) -> Result<Self> {
        let r = b.ncols();
        Self::new(a, b, HermitianMatrix::identity(r), c)
    }

    /// `Tr(X^H A X) + c`, the shape of a power or energy budget row.
    pub fn energy(a: HermitianMatrix, r: usize, c: f64) -> Self {
        let n = a.dim();
        Self {
            a,
            b: ComplexMatrix::zeros(n, r),
            d: HermitianMatrix::identity(r),
            c,
        }
    }

    pub fn n(&self) -> usize {
        self.a.dim()
    }

    pub fn r(&self) -> usize {
        self.d.dim()
    }

    pub fn has_identity_d(&self) -> bool {
        let r = self.r();
        (self.d.matrix() - ComplexMatrix::identity(r, r)).norm()
            <= 1e-12 * (r as f64).sqrt().max(1.0)
    }

    pub fn evaluate(&self, x: &ComplexMatrix) -> Result<f64> {
        if x.shape() != (self.n(), self.r()) {
            return Err(Error::ShapeMismatch(format!(
                "X is {}x{}, expected {}x{}",
                x.nrows(),
                x.ncols(),
                self.n(),
                self.r()
            )));
        }
        Ok(self.eval(x))
    }

    /// Evaluation without the shape check. The quadratic trace is real for
    /// Hermitian `A`, `D`; the imaginary residue is asserted in debug builds.
    pub fn eval(&self, x: &ComplexMatrix) -> f64 {
        let ax = self.a.matrix() * x;
        let quad = (self.d.matrix() * x.adjoint() * ax).trace();
        let lin = (self.b.adjoint() * x).trace();
        debug_assert!(
            quad.im.abs()
                <= 1e-10 * (1.0 + quad.re.abs())
                    + 1e-12 * self.a.matrix().norm() * self.d.matrix().norm() * x.norm_squared(),
            "quadratic trace has imaginary residue {}",
            quad.im
        );
        quad.re + 2.0 * lin.re + self.c
    }

    /// Gradient-like stationarity residual `A X D + B` (zero at unconstrained optima).
    pub fn stationarity(&self, x: &ComplexMatrix) -> ComplexMatrix {
        self.a.matrix() * x * self.d.matrix() + &self.b
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            a: self.a.scale(s),
            b: self.b.scale(s),
            d: self.d.clone(),
            c: self.c * s,
        }
    }

    /// `f(X · T)` as a function of `X`, for a Hermitian right factor `T`
    /// that leaves `D` in the Kronecker form `T D T`.
    pub fn right_transform(&self, t: &HermitianMatrix) -> Self {
        Self {
            a: self.a.clone(),
            b: &self.b * t.matrix(),
            d: self.d.congruence(t.matrix()),
            c: self.c,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QmpKind {
    T1,
    T2,
}

/// A QMP instance. Inequalities read `f_i(X) ≤ 0`, equalities `f_j(X) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QMPProblem {
    pub objective: QMFunction,
    pub inequalities: Vec<QMFunction>,
    pub equalities: Vec<QMFunction>,
    pub n: usize,
    pub r: usize,
    pub kind: QmpKind,
}

impl QMPProblem {
    pub fn new(
        kind: QmpKind,
        objective: QMFunction,
        inequalities: Vec<QMFunction>,
        equalities: Vec<QMFunction>,
    ) -> Result<Self> {
        let (n, r) = (objective.n(), objective.r());
        for f in inequalities.iter().chain(&equalities) {
            if f.n() != n || f.r() != r {
                return Err(Error::ShapeMismatch(format!(
                    "member function is {}x{}, problem is {n}x{r}",
                    f.n(),
                    f.r()
                )));
            }
        }
        let p = Self {
            objective,
            inequalities,
            equalities,
            n,
            r,
            kind,
        };
        if kind == QmpKind::T2 && !p.functions().all(QMFunction::has_identity_d) {
            return Err(Error::KindMismatch("type-2 problems require D = I".into()));
        }
        Ok(p)
    }

    /// Type 2 if every `D` is the identity, type 1 otherwise.
    pub fn auto(
        objective: QMFunction,
        inequalities: Vec<QMFunction>,
        equalities: Vec<QMFunction>,
    ) -> Result<Self> {
        let t2 = std::iter::once(&objective)
            .chain(&inequalities)
            .chain(&equalities)
            .all(QMFunction::has_identity_d);
        let kind = if t2 { QmpKind::T2 } else { QmpKind::T1 };
        Self::new(kind, objective, inequalities, equalities)
    }

    pub fn unconstrained(objective: QMFunction) -> Result<Self> {
        Self::auto(objective, Vec::new(), Vec::new())
    }

    pub fn functions(&self) -> impl Iterator<Item = &QMFunction> {
        std::iter::once(&self.objective)
            .chain(&self.inequalities)
            .chain(&self.equalities)
    }

    pub fn constraint_count(&self) -> usize {
        self.inequalities.len() + self.equalities.len()
    }

    /// Largest constraint violation at `x` (zero when feasible).
    pub fn max_violation(&self, x: &ComplexMatrix) -> f64 {
        let ineq = self.inequalities.iter().map(|f| f.eval(x).max(0.0));
        let eq = self.equalities.iter().map(|f| f.eval(x).abs());
        ineq.chain(eq).fold(0.0, f64::max)
    }

    /// When every member shares one positive definite `D`, substitutes
    /// `X = Y D^{-1/2}` and returns the type-2 problem in `Y` together with
    /// `D^{1/2}` (so `Y = X D^{1/2}`).
    pub fn whiten(&self) -> Option<(QMPProblem, HermitianMatrix)> {
        if self.kind == QmpKind::T2 {
            return Some((self.clone(), HermitianMatrix::identity(self.r)));
        }
        let d = &self.objective.d;
        let tol = 1e-12 * (1.0 + d.norm());
        if self
            .functions()
            .any(|f| (f.d.matrix() - d.matrix()).norm() > tol)
        {
            return None;
        }
        let inv_sqrt = d.inv_sqrt().ok()?;
        let sqrt = hermitian_sqrt(d).ok()?;
        let map = |f: &QMFunction| {
            let mut g = f.right_transform(&inv_sqrt);
            g.d = HermitianMatrix::identity(self.r);
            g
        };
        let p = QMPProblem {
            objective: map(&self.objective),
            inequalities: self.inequalities.iter().map(map).collect(),
            equalities: self.equalities.iter().map(map).collect(),
            n: self.n,
            r: self.r,
            kind: QmpKind::T2,
        };
        Some((p, sqrt))
    }
}
