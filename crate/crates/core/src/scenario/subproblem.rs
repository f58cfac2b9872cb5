use crate::error::{Error, Result};
use crate::matrix::{kron, unvectorize, vectorize, ComplexMatrix, HermitianMatrix};
use crate::model::{QMFunction, QMPProblem};

use super::network::{Observation, Side, Transfers};
use super::{DesignState, NetworkScenario, Sense, VarId};

/// How the QMP variable `X` relates to the design matrix `V`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    /// `X = V`.
    Direct,
    /// `X = V^H` (equalizers).
    Adjoint,
    /// `X = vec(V)`, used when the terms of the objective carry different
    /// right weights (two-way relaying).
    Vectorized,
}

/// The QMP in one design variable with all others frozen.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub var: VarId,
    pub problem: QMPProblem,
    pub layout: Layout,
    pub shape: (usize, usize),
    /// Name of each inequality, in order.
    pub constraint_names: Vec<String>,
}

impl Subproblem {
    pub fn to_x(&self, v: &ComplexMatrix) -> ComplexMatrix {
        match self.layout {
            Layout::Direct => v.clone(),
            Layout::Adjoint => v.adjoint(),
            Layout::Vectorized => vectorize(v),
        }
    }

    pub fn from_x(&self, x: &ComplexMatrix) -> ComplexMatrix {
        match self.layout {
            Layout::Direct => x.clone(),
            Layout::Adjoint => x.adjoint(),
            Layout::Vectorized => unvectorize(x, self.shape.0, self.shape.1),
        }
    }
}

/// `Σ_t Tr(D_t V^H A_t V) + 2 Re Tr(B^H V)` before the constant is fixed.
struct Parts {
    quad: Vec<(HermitianMatrix, HermitianMatrix)>,
    b: ComplexMatrix,
}

impl Parts {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            quad: Vec::new(),
            b: ComplexMatrix::zeros(rows, cols),
        }
    }

    fn negate(&mut self) {
        for (a, _) in &mut self.quad {
            *a = a.scale(-1.0);
        }
        self.b = -&self.b;
    }

    fn eval(&self, v: &ComplexMatrix) -> f64 {
        let q: f64 = self
            .quad
            .iter()
            .map(|(a, d)| (d.matrix() * v.adjoint() * a.matrix() * v).trace().re)
            .sum();
        q + 2.0 * (self.b.adjoint() * v).trace().re
    }

    /// Right weights of the terms that actually contribute.
    fn weights(&self) -> impl Iterator<Item = &HermitianMatrix> {
        self.quad
            .iter()
            .filter(|(a, d)| a.norm() > 0.0 && d.norm() > 0.0)
            .map(|(_, d)| d)
    }

    fn build(&self, layout: Layout, d: &HermitianMatrix, c: f64) -> Result<QMFunction> {
        match layout {
            Layout::Vectorized => {
                let n = self.b.len();
                let mut a = ComplexMatrix::zeros(n, n);
                for (at, dt) in &self.quad {
                    a += kron(&dt.matrix().transpose(), at.matrix());
                }
                QMFunction::new(
                    HermitianMatrix::symmetrize(a),
                    vectorize(&self.b),
                    HermitianMatrix::identity(1),
                    c,
                )
            }
            _ => {
                let n = self.b.nrows();
                let a = self
                    .quad
                    .iter()
                    .filter(|(_, d)| d.norm() > 0.0)
                    .fold(HermitianMatrix::zeros(n), |acc, (a, _)| acc.add(a));
                QMFunction::new(a, self.b.clone(), d.clone(), c)
            }
        }
    }
}

impl NetworkScenario {
    /// The QMP solved when `var` is updated with everything else frozen. The
    /// objective equals `sum_mse` at every value of the variable, each
    /// inequality is `energy - bound ≤ 0` (or `bound - energy` for `AtLeast`
    /// meters) for the budgets and meters the variable can influence.
    pub fn qm_for_variable(&self, d: &DesignState, var: VarId) -> Result<Subproblem> {
        self.check_state(d)?;
        let shape = self.var_shape(var)?;
        let total = self.sum_mse(d)?;
        if let VarId::Equalizer(k) = var {
            return self.equalizer_problem(d, k, shape, total);
        }
        let v_node = self.var_node(var);
        let v_layer = self.nodes[v_node].layer;
        let current = d.get(var);
        let base = self.transfers(d, None);
        let zeroed = self.transfers(d, Some(var));
        let inj = self.injected(d, v_node);

        // input u of the variable (t = V u) and its masked second moment
        let (u_mean, input_moment): (ComplexMatrix, Box<dyn Fn(&[bool]) -> HermitianMatrix>) =
            match var {
                VarId::Precoder(s) => {
                    let st = &self.streams[s];
                    let mut sel = ComplexMatrix::zeros(st.count(), self.excitation_dim());
                    let o = self.stream_offset(s);
                    sel.view_mut((0, o), (st.count(), st.count()))
                        .fill_with_identity();
                    let cov = st.cov.clone();
                    (
                        sel,
                        Box::new(move |m: &[bool]| {
                            if m[s] {
                                cov.clone()
                            } else {
                                HermitianMatrix::zeros(cov.dim())
                            }
                        }),
                    )
                }
                VarId::Relay(j) => (
                    base.rx[j].clone(),
                    Box::new(move |m: &[bool]| self.moments(d, m).rx[j].clone()),
                ),
                VarId::Equalizer(_) => unreachable!(),
            };

        let contribute = |obs: &Observation, parts: &mut Parts| -> bool {
            let w = obs.node;
            let (phi, a) = if obs.side == Side::Tx && w == v_node {
                (obs.op.clone(), HermitianMatrix::gram(&obs.op.adjoint()))
            } else if self.nodes[w].layer > v_layer {
                // transmit-side observations of relays become receive-side ones
                let op = match obs.side {
                    Side::Tx => &obs.op * &d.relays[w],
                    Side::Rx => obs.op.clone(),
                };
                let phi = &op * &inj.rx[w];
                let joint = self.pull_back(d, w, &HermitianMatrix::gram(&op.adjoint()), v_layer);
                (phi, self.tx_block(&joint, v_node))
            } else {
                return false;
            };
            if phi.norm() == 0.0 && a.norm() == 0.0 {
                return false;
            }
            let z = match obs.side {
                Side::Rx => &zeroed.rx[w],
                Side::Tx => &zeroed.tx[w],
            };
            let mut resid = &obs.op * z;
            if let Some(e) = &obs.desired {
                resid -= e;
            }
            let r = self.excitation_cov(&obs.mask);
            parts.b += phi.adjoint() * resid * r.matrix() * u_mean.adjoint();
            parts.quad.push((a, input_moment(&obs.mask)));
            true
        };

        let mut objective = Parts::new(shape.0, shape.1);
        for &k in self.destinations() {
            contribute(&self.mse_observation(d, k), &mut objective);
        }
        let mut constraints = Vec::new();
        let all = vec![true; self.streams.len()];
        let t_all = &base;
        let m_all = self.moments(d, &all);
        for (name, obs, bound, sense) in self.energy_observations() {
            let mut parts = Parts::new(shape.0, shape.1);
            if contribute(&obs, &mut parts) {
                let energy = self.observe(&obs, t_all, &m_all);
                let value = match sense {
                    Sense::AtMost => energy - bound,
                    Sense::AtLeast => {
                        parts.negate();
                        bound - energy
                    }
                };
                constraints.push((name, parts, value));
            }
        }

        let weights: Vec<&HermitianMatrix> = objective
            .weights()
            .chain(constraints.iter().flat_map(|(_, p, _)| p.weights()))
            .collect();
        let common = weights.first().map(|w| (*w).clone());
        let same = weights.iter().all(|w| {
            (w.matrix() - weights[0].matrix()).norm() <= 1e-12 * (1.0 + weights[0].norm())
        });
        let (layout, dmat) = match common {
            Some(w) if same => (Layout::Direct, w),
            None => (Layout::Direct, HermitianMatrix::identity(shape.1)),
            _ => (Layout::Vectorized, HermitianMatrix::identity(1)),
        };
        let obj = objective.build(layout, &dmat, total - objective.eval(current))?;
        let mut names = Vec::new();
        let mut ineq = Vec::new();
        for (name, parts, value) in constraints {
            ineq.push(parts.build(layout, &dmat, value - parts.eval(current))?);
            names.push(name);
        }
        Ok(Subproblem {
            var,
            problem: QMPProblem::auto(obj, ineq, Vec::new())?,
            layout,
            shape,
            constraint_names: names,
        })
    }

    fn equalizer_problem(
        &self,
        d: &DesignState,
        k: usize,
        shape: (usize, usize),
        total: f64,
    ) -> Result<Subproblem> {
        let mask = self.mask(k);
        let t: Transfers = self.transfers(d, None);
        let m = self.moments(d, &mask);
        let r = self.excitation_cov(&mask);
        let e = self.desired_selector(k);
        let a = m.rx[k].clone();
        let b = -(&t.rx[k] * r.matrix() * e.adjoint());
        let x = d.equalizers[k].adjoint();
        let quad = (x.adjoint() * a.matrix() * &x).trace().re;
        let lin = 2.0 * (b.adjoint() * &x).trace().re;
        let obj = QMFunction::new(a, b, HermitianMatrix::identity(shape.0), total - quad - lin)?;
        if obj.n() != shape.1 {
            return Err(Error::ShapeMismatch("equalizer dimensions".into()));
        }
        Ok(Subproblem {
            var: VarId::Equalizer(k),
            problem: QMPProblem::unconstrained(obj)?,
            layout: Layout::Adjoint,
            shape,
            constraint_names: Vec::new(),
        })
    }
}
