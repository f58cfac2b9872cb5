use crate::error::{Error, Result};
use crate::matrix::{solve_hpd, ComplexMatrix, HermitianMatrix};
use crate::model::QMFunction;

use super::{SolvePath, SolveReport};

fn require_pd(a: &HermitianMatrix) -> Result<()> {
    let min = a.min_eigenvalue();
    if min <= 1e-10 * a.max_eigenvalue().abs().max(1.0) {
        return Err(Error::SingularA(min));
    }
    Ok(())
}

/// `X = -A^{-1} B D^{-1}`, the Wiener solution (`D = I` in the type-2 form).
pub fn solve_unconstrained(f: &QMFunction) -> Result<SolveReport> {
    require_pd(&f.a)?;
    let mut x = -solve_hpd(&f.a, &f.b)?;
    if !f.has_identity_d() {
        // X D = -A^{-1} B
        let d_inv =
            f.d.inverse_pd()
                .map_err(|_| Error::SingularA(f.d.min_eigenvalue()))?;
        x = x * d_inv.matrix();
    }
    Ok(SolveReport {
        kkt_residual: f.stationarity(&x).norm(),
        objective: f.eval(&x),
        x,
        multiplier: None,
        path: SolvePath::ClosedForm,
        iterations: 0,
        sdr_rank_gap: None,
        relaxation_bound: None,
    })
}

/// `Tr(W (X^H A X + X^H B + B^H X)) + c`, the weighted version of a type-2
/// function.
pub fn weighted_function(f: &QMFunction, w: &HermitianMatrix) -> Result<QMFunction> {
    QMFunction::new(f.a.clone(), &f.b * w.matrix(), w.clone(), f.c)
}

/// Minimizer of the weighted objective. Whatever the PSD weight, the Wiener
/// solution `-A^{-1} B` satisfies `A X W = -B W`, so it is returned for every
/// `W` (including singular ones, where the minimizer is not unique).
pub fn solve_weighted(f: &QMFunction, w: &HermitianMatrix) -> Result<SolveReport> {
    if w.dim() != f.r() {
        return Err(Error::ShapeMismatch(format!(
            "weight is {0}x{0}, expected {1}x{1}",
            w.dim(),
            f.r()
        )));
    }
    if w.min_eigenvalue() < -1e-10 * (1.0 + w.max_eigenvalue().abs()) {
        return Err(Error::NotPositiveSemidefinite(w.min_eigenvalue()));
    }
    require_pd(&f.a)?;
    let x: ComplexMatrix = -solve_hpd(&f.a, &f.b)?;
    let g = weighted_function(f, w)?;
    Ok(SolveReport {
        kkt_residual: g.stationarity(&x).norm(),
        objective: g.eval(&x),
        x,
        multiplier: None,
        path: SolvePath::ClosedForm,
        iterations: 0,
        sdr_rank_gap: None,
        relaxation_bound: None,
    })
}
