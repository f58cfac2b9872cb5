use crate::error::{Error, Result};
use crate::matrix::{kron, vectorize, ComplexMatrix, HermitianMatrix, C64};

use super::{QMFunction, QMPProblem, QmpKind};

/// Lifted form of a QMP over `Z = [vec X; 1][vec X; 1]^H`, dimension `nr+1`.
///
/// Every member function satisfies `f(X) = Tr(Ω Z)`. Dropping the rank-one
/// requirement on `Z` (keeping `Z ⪰ 0` and the unit corner) gives the
/// semidefinite relaxation.
#[derive(Debug, Clone)]
pub struct LiftedSDP {
    pub objective: HermitianMatrix,
    pub inequalities: Vec<HermitianMatrix>,
    pub equalities: Vec<HermitianMatrix>,
    pub n: usize,
    pub r: usize,
}

impl LiftedSDP {
    pub fn dim(&self) -> usize {
        self.n * self.r + 1
    }

    /// Index of the corner entry pinned to one.
    pub fn corner(&self) -> usize {
        self.n * self.r
    }
}

/// `Ω = [[D^T ⊗ A, vec B], [vec(B)^H, c]]`.
pub fn omega(f: &QMFunction) -> HermitianMatrix {
    let nr = f.n() * f.r();
    let mut m = ComplexMatrix::zeros(nr + 1, nr + 1);
    m.view_mut((0, 0), (nr, nr))
        .copy_from(&kron(&f.d.matrix().transpose(), f.a.matrix()));
    let vb = vectorize(&f.b);
    m.view_mut((0, nr), (nr, 1)).copy_from(&vb);
    m.view_mut((nr, 0), (1, nr)).copy_from(&vb.adjoint());
    m[(nr, nr)] = C64::new(f.c, 0.0);
    HermitianMatrix::symmetrize(m)
}

pub fn lifted_point(x: &ComplexMatrix) -> HermitianMatrix {
    let nr = x.len();
    let mut v = ComplexMatrix::zeros(nr + 1, 1);
    v.view_mut((0, 0), (nr, 1)).copy_from(&vectorize(x));
    v[(nr, 0)] = C64::new(1.0, 0.0);
    HermitianMatrix::gram(&v)
}

pub fn lift_t1(p: &QMPProblem) -> LiftedSDP {
    LiftedSDP {
        objective: omega(&p.objective),
        inequalities: p.inequalities.iter().map(omega).collect(),
        equalities: p.equalities.iter().map(omega).collect(),
        n: p.n,
        r: p.r,
    }
}

/// Homogenized type-2 problem over `U = [Y; Z][Y; Z]^H`, dimension `n+r`,
/// with the lower-right `r×r` block of `U` pinned to `I_r`.
///
/// Constants are folded into `M`, so every right-hand side `α` is zero.
#[derive(Debug, Clone)]
pub struct HomogenizedSDP {
    pub objective: HermitianMatrix,
    pub inequalities: Vec<HermitianMatrix>,
    pub equalities: Vec<HermitianMatrix>,
    pub alpha_inequalities: Vec<f64>,
    pub alpha_equalities: Vec<f64>,
    pub n: usize,
    pub r: usize,
}

impl HomogenizedSDP {
    pub fn dim(&self) -> usize {
        self.n + self.r
    }
}

/// `M(f) = [[A, B], [B^H, (c/r) I_r]]`.
pub fn m_operator(f: &QMFunction) -> HermitianMatrix {
    let (n, r) = (f.n(), f.r());
    let mut m = ComplexMatrix::zeros(n + r, n + r);
    m.view_mut((0, 0), (n, n)).copy_from(f.a.matrix());
    m.view_mut((0, n), (n, r)).copy_from(&f.b);
    m.view_mut((n, 0), (r, n)).copy_from(&f.b.adjoint());
    let diag = C64::new(f.c / r as f64, 0.0);
    for i in 0..r {
        m[(n + i, n + i)] = diag;
    }
    HermitianMatrix::symmetrize(m)
}

/// `[X; I][X; I]^H`.
pub fn homogenized_point(x: &ComplexMatrix) -> HermitianMatrix {
    let (n, r) = x.shape();
    let mut v = ComplexMatrix::zeros(n + r, r);
    v.view_mut((0, 0), (n, r)).copy_from(x);
    v.view_mut((n, 0), (r, r)).fill_with_identity();
    HermitianMatrix::gram(&v)
}

pub fn homogenize_t2(p: &QMPProblem) -> Result<HomogenizedSDP> {
    if p.kind != QmpKind::T2 {
        return Err(Error::KindMismatch(
            "homogenization needs a type-2 problem".into(),
        ));
    }
    Ok(HomogenizedSDP {
        objective: m_operator(&p.objective),
        inequalities: p.inequalities.iter().map(m_operator).collect(),
        equalities: p.equalities.iter().map(m_operator).collect(),
        alpha_inequalities: vec![0.0; p.inequalities.len()],
        alpha_equalities: vec![0.0; p.equalities.len()],
        n: p.n,
        r: p.r,
    })
}

/// True when the homogenized relaxation is guaranteed tight: fewer than `2r`
/// constraints in total.
pub fn tightness_hint(p: &QMPProblem) -> bool {
    p.kind == QmpKind::T2 && p.constraint_count() < 2 * p.r
}
