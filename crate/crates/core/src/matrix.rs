//! Dense complex linear algebra shared by every other module.
//!
//! Matrices are `nalgebra` dense matrices. `nalgebra` stores entries
//! column-major internally; all indexing in this crate goes through `(row, col)`
//! so the storage order never leaks. `vectorize` stacks columns top to bottom,
//! which is the convention fixed by `vec(AXB) = (B^T ⊗ A) vec(X)`.

use std::ops::Deref;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type RealMatrix = DMatrix<f64>;

/// Eigenvalues below `-PSD_CLIP` are treated as genuine negative curvature.
pub const PSD_CLIP: f64 = 1e-10;

/// A square complex matrix equal to its conjugate transpose.
///
/// Construction symmetrizes the input, `(M + M^H) / 2`, so the invariant
/// holds to rounding regardless of where the data came from.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

impl HermitianMatrix {
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self::symmetrize(m))
    }

    /// Symmetrizes without a shape check. Panics on non-square input.
    pub fn symmetrize(m: ComplexMatrix) -> Self {
        assert!(m.is_square(), "hermitian matrix must be square");
        let adj = m.adjoint();
        Self((m + adj).scale(0.5))
    }

    pub fn from_real(m: &RealMatrix) -> Self {
        Self::symmetrize(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        Self(ComplexMatrix::identity(n, n).scale(s))
    }

    /// `G G^H`, PSD by construction.
    pub fn gram(g: &ComplexMatrix) -> Self {
        Self::symmetrize(g * g.adjoint())
    }

    /// `L M L^H`.
    pub fn congruence(&self, l: &ComplexMatrix) -> Self {
        Self::symmetrize(l * &self.0 * l.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.scale(s))
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    pub fn trace_re(&self) -> f64 {
        self.0.trace().re
    }

    /// Transpose of a Hermitian matrix is its entrywise conjugate.
    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// Eigenvalues in ascending order with matching eigenvector columns.
    pub fn eigh(&self) -> (Vec<f64>, ComplexMatrix) {
        let n = self.dim();
        if n == 0 {
            return (Vec::new(), ComplexMatrix::zeros(0, 0));
        }
        let eig = SymmetricEigen::new(self.0.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let mut vectors = ComplexMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            vectors.set_column(dst, &eig.eigenvectors.column(src));
        }
        (values, vectors)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigh().0.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigh().0.last().copied().unwrap_or(0.0)
    }

    /// `(λ_min, λ_max)` from one decomposition.
    pub fn eig_range(&self) -> (f64, f64) {
        let v = self.eigh().0;
        (
            v.first().copied().unwrap_or(0.0),
            v.last().copied().unwrap_or(0.0),
        )
    }

    /// Applies `f` to the spectrum: `V f(Λ) V^H`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigh();
        Self::from_spectrum(&vals.iter().map(|&v| f(v)).collect::<Vec<_>>(), &vecs)
    }

    pub fn from_spectrum(values: &[f64], vectors: &ComplexMatrix) -> Self {
        let mut scaled = vectors.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        Self::symmetrize(scaled * vectors.adjoint())
    }

    /// Inverse of a positive definite matrix.
    pub fn inverse_pd(&self) -> Result<Self> {
        let min = self.min_eigenvalue();
        if min <= PSD_CLIP * (1.0 + self.0.norm()) {
            return Err(Error::NotPositiveDefinite(min));
        }
        Ok(self.spectral_map(|v| 1.0 / v))
    }

    /// Moore-Penrose pseudo-inverse with relative cutoff `rcond`.
    pub fn pinv(&self, rcond: f64) -> Self {
        let (vals, vecs) = self.eigh();
        let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let cut = rcond * scale.max(f64::MIN_POSITIVE);
        let inv: Vec<f64> = vals
            .iter()
            .map(|&v| if v.abs() > cut { 1.0 / v } else { 0.0 })
            .collect();
        Self::from_spectrum(&inv, &vecs)
    }

    /// `self^{-1/2}` for positive definite input.
    pub fn inv_sqrt(&self) -> Result<Self> {
        let (vals, vecs) = self.eigh();
        let min = vals.first().copied().unwrap_or(0.0);
        if min <= PSD_CLIP * (1.0 + self.0.norm()) {
            return Err(Error::NotPositiveDefinite(min));
        }
        Ok(Self::from_spectrum(
            &vals.iter().map(|v| 1.0 / v.sqrt()).collect::<Vec<_>>(),
            &vecs,
        ))
    }
}

impl Deref for HermitianMatrix {
    type Target = ComplexMatrix;

    fn deref(&self) -> &ComplexMatrix {
        &self.0
    }
}

/// Kronecker product, shape `(a.rows·b.rows, a.cols·b.cols)`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Stacks the columns of `m` into one column vector.
pub fn vectorize(m: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &ComplexMatrix, rows: usize, cols: usize) -> ComplexMatrix {
    assert_eq!(v.len(), rows * cols, "vector length must equal rows*cols");
    ComplexMatrix::from_iterator(rows, cols, v.iter().copied())
}

/// Hermitian square root of a PSD matrix; eigenvalues in `[-1e-10, 0)` are clipped.
pub fn hermitian_sqrt(m: &HermitianMatrix) -> Result<HermitianMatrix> {
    let (vals, vecs) = m.eigh();
    let scale = 1.0 + vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    if let Some(&min) = vals.first() {
        if min < -PSD_CLIP * scale {
            return Err(Error::NotPositiveSemidefinite(min));
        }
    }
    let roots: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    Ok(HermitianMatrix::from_spectrum(&roots, &vecs))
}

/// `[[Re m, -Im m], [Im m, Re m]]`; for Hermitian `m` this is real symmetric.
pub fn real_embed_general(m: &ComplexMatrix) -> RealMatrix {
    let (r, c) = m.shape();
    let mut out = RealMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let z = m[(i, j)];
            out[(i, j)] = z.re;
            out[(i, j + c)] = -z.im;
            out[(i + r, j)] = z.im;
            out[(i + r, j + c)] = z.re;
        }
    }
    out
}

/// Real symmetric embedding of a Hermitian matrix, dimension `2n`.
pub fn real_embed(h: &HermitianMatrix) -> RealMatrix {
    let e = real_embed_general(h.matrix());
    (&e + e.transpose()).scale(0.5)
}

/// `[Re v; Im v]` for a complex column vector.
pub fn real_stack(v: &ComplexMatrix) -> Vec<f64> {
    v.iter()
        .map(|z| z.re)
        .chain(v.iter().map(|z| z.im))
        .collect()
}

/// Inverse of [`real_stack`].
pub fn complex_unstack(x: &[f64]) -> ComplexMatrix {
    let n = x.len() / 2;
    ComplexMatrix::from_iterator(n, 1, (0..n).map(|i| C64::new(x[i], x[i + n])))
}

/// Hermitian matrix represented by a real PSD matrix `W` of dimension `2n`,
/// `Z = (W11 + W22)/2 + i (W21 - W12)/2`. Satisfies
/// `Tr(H Z) = Tr(real_embed(H) W) / 2` for every Hermitian `H`.
pub fn real_unembed(w: &RealMatrix) -> HermitianMatrix {
    let n = w.nrows() / 2;
    let mut z = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let re = 0.5 * (w[(i, j)] + w[(i + n, j + n)]);
            let im = 0.5 * (w[(i + n, j)] - w[(i, j + n)]);
            z[(i, j)] = C64::new(re, im);
        }
    }
    HermitianMatrix::symmetrize(z)
}

pub fn is_psd(m: &HermitianMatrix, tol: f64) -> bool {
    m.min_eigenvalue() >= -tol
}

/// `Re Tr(A^H B)`, the real inner product on complex matrices.
pub fn inner_re(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

pub fn frob(m: &ComplexMatrix) -> f64 {
    m.norm()
}

/// Relative Frobenius distance `‖a-b‖ / max(1, ‖b‖)`.
pub fn rel_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

/// Matrix with i.i.d. circularly symmetric unit-variance complex Gaussian
/// entries, `(x + i y)/√2` with `x, y` standard normal.
pub fn complex_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * s, im * s)
    })
}

/// Random Hermitian matrix `(G + G^H)/2`.
pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> HermitianMatrix {
    HermitianMatrix::symmetrize(complex_gaussian(n, n, rng))
}

/// Random PSD matrix of the given rank, `G G^H` with `G` of size `n×rank`.
pub fn random_psd<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> HermitianMatrix {
    HermitianMatrix::gram(&complex_gaussian(n, rank, rng))
}

/// Random positive definite matrix with eigenvalues bounded below by `floor`.
pub fn random_pd<R: Rng + ?Sized>(n: usize, floor: f64, rng: &mut R) -> HermitianMatrix {
    random_psd(n, n, rng).add(&HermitianMatrix::scaled_identity(n, floor))
}

/// Solves `A X = B` for Hermitian positive definite `A`.
/// [`solve_hpd`] without the diagnostic eigenvalue on failure.
pub fn try_solve_hpd(a: &HermitianMatrix, b: &ComplexMatrix) -> Option<ComplexMatrix> {
    a.matrix().clone().cholesky().map(|ch| ch.solve(b))
}

pub fn solve_hpd(a: &HermitianMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    match a.matrix().clone().cholesky() {
        Some(ch) => Ok(ch.solve(b)),
        None => Err(Error::NotPositiveDefinite(a.min_eigenvalue())),
    }
}

/// Embeds `m` into the top-left corner of a `rows×cols` zero matrix.
pub fn pad(m: &ComplexMatrix, rows: usize, cols: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(rows, cols);
    let r = m.nrows().min(rows);
    let c = m.ncols().min(cols);
    out.view_mut((0, 0), (r, c))
        .copy_from(&m.view((0, 0), (r, c)));
    out
}

/// `rows×cols` matrix with ones on the leading diagonal.
pub fn eye(rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::identity(rows, cols)
}
