//! Expectations over Kronecker-correlated channel estimation errors.
//!
//! A channel is `H = H̄ + Σ^{1/2} H_W Ψ^{1/2}` with `H_W` i.i.d. unit-variance
//! circular complex Gaussian. Only the second moments of `H_W` enter the
//! expectations below, so every result holds for any zero-mean inner matrix
//! with `E{vec(H_W) vec(H_W)^H} = I`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::{complex_gaussian, hermitian_sqrt, ComplexMatrix, HermitianMatrix, C64};
use crate::model::QMFunction;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelError {
    pub mean: ComplexMatrix,
    /// Row correlation, `rows × rows`.
    pub sigma: HermitianMatrix,
    /// Column correlation, `cols × cols`.
    pub psi: HermitianMatrix,
}

impl ChannelError {
    pub fn new(mean: ComplexMatrix, sigma: HermitianMatrix, psi: HermitianMatrix) -> Result<Self> {
        if sigma.dim() != mean.nrows() || psi.dim() != mean.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "channel is {}x{}, correlations are {} and {}",
                mean.nrows(),
                mean.ncols(),
                sigma.dim(),
                psi.dim()
            )));
        }
        for m in [&sigma, &psi] {
            let min = m.min_eigenvalue();
            if min < -1e-10 * (1.0 + m.max_eigenvalue().abs()) {
                return Err(Error::NotPositiveSemidefinite(min));
            }
        }
        Ok(Self { mean, sigma, psi })
    }

    /// A perfectly known channel.
    pub fn exact(mean: ComplexMatrix) -> Self {
        let (r, c) = mean.shape();
        Self {
            mean,
            sigma: HermitianMatrix::zeros(r),
            psi: HermitianMatrix::zeros(c),
        }
    }

    pub fn is_exact(&self) -> bool {
        self.sigma.norm() == 0.0 || self.psi.norm() == 0.0
    }

    pub fn sampler(&self) -> Result<ErrorSampler> {
        Ok(ErrorSampler {
            mean: self.mean.clone(),
            sigma_half: hermitian_sqrt(&self.sigma)?.into_inner(),
            psi_half: hermitian_sqrt(&self.psi)?.into_inner(),
        })
    }
}

/// Draws channel realizations `H̄ + Σ^{1/2} H_W Ψ^{1/2}`.
#[derive(Debug, Clone)]
pub struct ErrorSampler {
    mean: ComplexMatrix,
    sigma_half: ComplexMatrix,
    psi_half: ComplexMatrix,
}

impl ErrorSampler {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ComplexMatrix {
        let w = complex_gaussian(self.mean.nrows(), self.mean.ncols(), rng);
        self.perturb(&w)
    }

    /// `H̄ + Σ^{1/2} W Ψ^{1/2}` for a caller-supplied inner matrix.
    pub fn perturb(&self, w: &ComplexMatrix) -> ComplexMatrix {
        &self.mean + &self.sigma_half * w * &self.psi_half
    }
}

/// `E{Q R W^H} = B Tr(R A^T)` when `E{vec(Q) vec^H(W)} = A ⊗ B`.
pub fn matrix_integration(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    r: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    if !a.is_square() || !b.is_square() || r.shape() != a.shape() {
        return Err(Error::ShapeMismatch(format!(
            "A is {:?}, B is {:?}, R is {:?}",
            a.shape(),
            b.shape(),
            r.shape()
        )));
    }
    let t: C64 = (r * a.transpose()).trace();
    Ok(b * t)
}

fn check_right(e: &ChannelError, x: &ComplexMatrix) -> Result<()> {
    if e.mean.ncols() != x.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "channel has {} columns, operand has {} rows",
            e.mean.ncols(),
            x.nrows()
        )));
    }
    Ok(())
}

/// `E{H X} = H̄ X`.
pub fn expect_first_order(e: &ChannelError, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_right(e, x)?;
    Ok(&e.mean * x)
}

/// `E{H X X^H H^H} = H̄ X X^H H̄^H + Tr(X X^H Ψ) Σ`.
pub fn expect_second_order(e: &ChannelError, x: &ComplexMatrix) -> Result<HermitianMatrix> {
    check_right(e, x)?;
    expect_outer(e, &HermitianMatrix::gram(x))
}

/// `E{H S H^H} = H̄ S H̄^H + Tr(S Ψ) Σ` for Hermitian `S`.
pub fn expect_outer(e: &ChannelError, s: &HermitianMatrix) -> Result<HermitianMatrix> {
    if s.dim() != e.mean.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "S is {0}x{0}, channel has {1} columns",
            s.dim(),
            e.mean.ncols()
        )));
    }
    let nominal = s.congruence(&e.mean);
    if e.is_exact() {
        return Ok(nominal);
    }
    let t = (s.matrix() * e.psi.matrix()).trace().re;
    Ok(nominal.add(&e.sigma.scale(t)))
}

/// `E{H^H Q H} = H̄^H Q H̄ + Tr(Q Σ) Ψ` for Hermitian `Q`.
pub fn expect_inner(e: &ChannelError, q: &HermitianMatrix) -> Result<HermitianMatrix> {
    if q.dim() != e.mean.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "Q is {0}x{0}, channel has {1} rows",
            q.dim(),
            e.mean.nrows()
        )));
    }
    let nominal = q.congruence(&e.mean.adjoint());
    if e.is_exact() {
        return Ok(nominal);
    }
    let t = (q.matrix() * e.sigma.matrix()).trace().re;
    Ok(nominal.add(&e.psi.scale(t)))
}

/// One term of a QM function in `X` whose coefficients contain a random
/// channel `H`.
#[derive(Debug, Clone)]
pub enum Term {
    /// `Tr(W H X D X^H H^H)`, the channel acts on the variable's rows.
    Before {
        weight: HermitianMatrix,
        channel: String,
        d: HermitianMatrix,
    },
    /// `Tr(D X^H H S H^H X)`, the channel sits between two copies of `X^H`.
    After {
        inner: HermitianMatrix,
        channel: String,
        d: HermitianMatrix,
    },
    /// `2 Re Tr(L^H X)` with `L = pre H post`.
    Linear {
        pre: ComplexMatrix,
        channel: String,
        post: ComplexMatrix,
    },
    /// Channel-free `Tr(D X^H A X)`.
    Plain {
        a: HermitianMatrix,
        d: HermitianMatrix,
    },
    Constant(f64),
}

/// A nominal QM function of an `n×r` variable, kept as channel-bearing terms.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub n: usize,
    pub r: usize,
    pub terms: Vec<Term>,
}

impl Assembly {
    /// MSE of a point-to-point link as a function of the precoder `F`:
    /// `Tr(G H F F^H H^H G^H) - 2 Re Tr(G H F) + σ² Tr(G G^H) + Tr(I)` over
    /// unit-covariance symbols. The channel is named `"H"`.
    pub fn point_to_point_precoder(g: &ComplexMatrix, nt: usize, noise: f64) -> Self {
        let d = g.nrows();
        Self {
            n: nt,
            r: d,
            terms: vec![
                Term::Before {
                    weight: HermitianMatrix::gram(&g.adjoint()),
                    channel: "H".into(),
                    d: HermitianMatrix::identity(d),
                },
                // Re Tr(G H F) = Re Tr((H^H G^H)^H F)
                Term::Linear {
                    pre: ComplexMatrix::identity(nt, nt),
                    channel: "H^H".into(),
                    post: -g.adjoint(),
                },
                Term::Constant(noise * g.norm_squared() + d as f64),
            ],
        }
    }

    /// The same MSE as a function of `X = G^H` for a fixed precoder `F`.
    pub fn point_to_point_equalizer(f: &ComplexMatrix, nr: usize, noise: f64) -> Self {
        let d = f.ncols();
        Self {
            n: nr,
            r: d,
            terms: vec![
                Term::After {
                    inner: HermitianMatrix::gram(f),
                    channel: "H".into(),
                    d: HermitianMatrix::identity(d),
                },
                Term::Plain {
                    a: HermitianMatrix::scaled_identity(nr, noise),
                    d: HermitianMatrix::identity(d),
                },
                Term::Linear {
                    pre: -ComplexMatrix::identity(nr, nr),
                    channel: "H".into(),
                    post: f.clone(),
                },
                Term::Constant(d as f64),
            ],
        }
    }

    /// The assembly with every channel at its mean.
    pub fn nominal(&self, channels: &BTreeMap<String, ComplexMatrix>) -> Result<QMFunction> {
        let errors = channels
            .iter()
            .map(|(k, h)| (k.clone(), ChannelError::exact(h.clone())))
            .collect();
        robustify(self, &errors)
    }
}

/// Error model for a channel name. A trailing `^H` names the adjoint of a
/// channel, whose error swaps the roles of `Σ` and `Ψ` (transposed).
fn lookup(errors: &BTreeMap<String, ChannelError>, name: &str) -> Result<ChannelError> {
    if let Some(e) = errors.get(name) {
        return Ok(e.clone());
    }
    if let Some(base) = name.strip_suffix("^H") {
        if let Some(e) = errors.get(base) {
            // (Σ^{1/2} H_W Ψ^{1/2})^H = Ψ^{1/2} H_W^H Σ^{1/2}, and H_W^H is
            // again i.i.d. so the adjoint has row correlation Ψ and column
            // correlation Σ.
            return Ok(ChannelError {
                mean: e.mean.adjoint(),
                sigma: e.psi.clone(),
                psi: e.sigma.clone(),
            });
        }
    }
    Err(Error::MissingErrorModel(name.to_string()))
}

/// Replaces every term by its expectation over the channel errors. Second
/// order terms pick up the `Tr(·Ψ)Σ` residual, first order terms use the
/// mean channel, constants pass through.
pub fn robustify(asm: &Assembly, errors: &BTreeMap<String, ChannelError>) -> Result<QMFunction> {
    let mut a = HermitianMatrix::zeros(asm.n);
    let mut b = ComplexMatrix::zeros(asm.n, asm.r);
    let mut c = 0.0;
    let mut d: Option<HermitianMatrix> = None;
    let mut same_d = |t: &HermitianMatrix| -> Result<()> {
        match &d {
            Some(prev) if (prev.matrix() - t.matrix()).norm() > 1e-12 * (1.0 + prev.norm()) => Err(
                Error::InvalidParams("quadratic terms carry different right weights".into()),
            ),
            Some(_) => Ok(()),
            None => {
                d = Some(t.clone());
                Ok(())
            }
        }
    };
    for term in &asm.terms {
        match term {
            Term::Before {
                weight,
                channel,
                d: dt,
            } => {
                same_d(dt)?;
                a = a.add(&expect_inner(&lookup(errors, channel)?, weight)?);
            }
            Term::After {
                inner,
                channel,
                d: dt,
            } => {
                same_d(dt)?;
                a = a.add(&expect_outer(&lookup(errors, channel)?, inner)?);
            }
            Term::Linear { pre, channel, post } => {
                let e = lookup(errors, channel)?;
                b += pre * expect_first_order(&e, post)?;
            }
            Term::Plain { a: at, d: dt } => {
                same_d(dt)?;
                a = a.add(at);
            }
            Term::Constant(k) => c += k,
        }
    }
    let d = d.unwrap_or_else(|| HermitianMatrix::identity(asm.r));
    QMFunction::new(a, b, d, c)
}
