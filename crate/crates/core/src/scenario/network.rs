use std::collections::BTreeMap;

use crate::error::Result;
use crate::matrix::{ComplexMatrix, HermitianMatrix, C64};

use super::{DesignState, NetworkScenario, Sense};

/// Mean linear maps from an input space to every node's received (`rx`) and
/// transmitted (`tx`) signal.
#[derive(Debug, Clone)]
pub struct Transfers {
    pub rx: Vec<ComplexMatrix>,
    pub tx: Vec<ComplexMatrix>,
    pub dim: usize,
}

/// Second moments `E{x x^H}` of every node's received and transmitted signal,
/// averaged over signals, noises and channel errors.
#[derive(Debug, Clone)]
pub struct Moments {
    pub rx: Vec<HermitianMatrix>,
    pub tx: Vec<HermitianMatrix>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Rx,
    Tx,
}

/// `E‖O z - E e‖²` where `z` is one node's received or transmitted signal
/// with the masked streams removed.
#[derive(Debug, Clone)]
pub(crate) struct Observation {
    pub node: usize,
    pub side: Side,
    pub op: ComplexMatrix,
    pub desired: Option<ComplexMatrix>,
    pub mask: Vec<bool>,
}

fn block(h: &HermitianMatrix, off: usize, len: usize) -> HermitianMatrix {
    HermitianMatrix::symmetrize(h.matrix().view((off, off), (len, len)).into_owned())
}

impl NetworkScenario {
    pub fn excitation_dim(&self) -> usize {
        let s: usize = self.streams.iter().map(|s| s.count()).sum();
        s + self
            .nodes
            .iter()
            .map(|n| if n.layer > 0 { n.rx } else { 0 })
            .sum::<usize>()
    }

    pub(crate) fn stream_offset(&self, s: usize) -> usize {
        self.streams[..s].iter().map(|s| s.count()).sum()
    }

    pub(crate) fn noise_offset(&self, node: usize) -> usize {
        let s: usize = self.streams.iter().map(|s| s.count()).sum();
        s + self.nodes[..node]
            .iter()
            .map(|n| if n.layer > 0 { n.rx } else { 0 })
            .sum::<usize>()
    }

    /// Covariance of the excitation with the streams outside `mask` zeroed.
    pub fn excitation_cov(&self, mask: &[bool]) -> HermitianMatrix {
        let n = self.excitation_dim();
        let mut r = ComplexMatrix::zeros(n, n);
        for (s, st) in self.streams.iter().enumerate() {
            if mask[s] {
                let o = self.stream_offset(s);
                r.view_mut((o, o), (st.count(), st.count()))
                    .copy_from(st.cov.matrix());
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(cov) = &node.noise {
                let o = self.noise_offset(i);
                r.view_mut((o, o), (node.rx, node.rx))
                    .copy_from(cov.matrix());
            }
        }
        HermitianMatrix::symmetrize(r)
    }

    /// Selects the stacked desired streams of destination `k` from `e`.
    pub fn desired_selector(&self, k: usize) -> ComplexMatrix {
        let mut e = ComplexMatrix::zeros(self.desired_len(k), self.excitation_dim());
        let mut row = 0;
        for s in self.desired(k) {
            let o = self.stream_offset(s);
            for t in 0..self.streams[s].count() {
                e[(row + t, o + t)] = C64::new(1.0, 0.0);
            }
            row += self.streams[s].count();
        }
        e
    }

    /// Row offsets of each node of layer `l` within the stacked layer signal.
    fn offsets(&self, l: usize, side: Side) -> (Vec<usize>, usize) {
        let mut off = Vec::new();
        let mut acc = 0;
        for &n in &self.layers[l] {
            off.push(acc);
            acc += match side {
                Side::Rx => self.nodes[n].rx,
                Side::Tx => self.nodes[n].tx,
            };
        }
        (off, acc)
    }

    /// Mean channel of the hop from layer `l` to layer `l + 1`, stacked.
    fn hop(&self, l: usize) -> ComplexMatrix {
        let (ro, rn) = self.offsets(l + 1, Side::Rx);
        let (co, cn) = self.offsets(l, Side::Tx);
        let mut h = ComplexMatrix::zeros(rn, cn);
        for link in &self.links {
            if self.nodes[link.from].layer == l {
                let a = self.layers[l].iter().position(|&n| n == link.from).unwrap();
                let b = self.layers[l + 1]
                    .iter()
                    .position(|&n| n == link.to)
                    .unwrap();
                h.view_mut((ro[b], co[a]), link.channel.mean.shape())
                    .copy_from(&link.channel.mean);
            }
        }
        h
    }

    /// `E{H S H^H}` for the stacked hop out of layer `l`.
    fn hop_outer(&self, l: usize, s: &HermitianMatrix) -> HermitianMatrix {
        let mut out = s.congruence(&self.hop(l)).into_inner();
        let (ro, _) = self.offsets(l + 1, Side::Rx);
        let (co, _) = self.offsets(l, Side::Tx);
        for link in self
            .links
            .iter()
            .filter(|k| self.nodes[k.from].layer == l && !k.channel.is_exact())
        {
            let a = self.layers[l].iter().position(|&n| n == link.from).unwrap();
            let b = self.layers[l + 1]
                .iter()
                .position(|&n| n == link.to)
                .unwrap();
            let saa = block(s, co[a], self.nodes[link.from].tx);
            let t = (saa.matrix() * link.channel.psi.matrix()).trace().re;
            let rb = self.nodes[link.to].rx;
            let mut v = out.view_mut((ro[b], ro[b]), (rb, rb));
            v += link.channel.sigma.matrix() * C64::new(t, 0.0);
        }
        HermitianMatrix::symmetrize(out)
    }

    /// `E{H^H Q H}` for the stacked hop out of layer `l`.
    fn hop_inner(&self, l: usize, q: &HermitianMatrix) -> HermitianMatrix {
        let mut out = q.congruence(&self.hop(l).adjoint()).into_inner();
        let (ro, _) = self.offsets(l + 1, Side::Rx);
        let (co, _) = self.offsets(l, Side::Tx);
        for link in self
            .links
            .iter()
            .filter(|k| self.nodes[k.from].layer == l && !k.channel.is_exact())
        {
            let a = self.layers[l].iter().position(|&n| n == link.from).unwrap();
            let b = self.layers[l + 1]
                .iter()
                .position(|&n| n == link.to)
                .unwrap();
            let qbb = block(q, ro[b], self.nodes[link.to].rx);
            let t = (qbb.matrix() * link.channel.sigma.matrix()).trace().re;
            let ta = self.nodes[link.from].tx;
            let mut v = out.view_mut((co[a], co[a]), (ta, ta));
            v += link.channel.psi.matrix() * C64::new(t, 0.0);
        }
        HermitianMatrix::symmetrize(out)
    }

    /// Block-diagonal forwarding matrix of relay layer `l`.
    fn layer_forward(&self, d: &DesignState, l: usize) -> ComplexMatrix {
        let (ro, rn) = self.offsets(l, Side::Rx);
        let (to, tn) = self.offsets(l, Side::Tx);
        let mut f = ComplexMatrix::zeros(tn, rn);
        for (i, &n) in self.layers[l].iter().enumerate() {
            f.view_mut((to[i], ro[i]), d.relays[n].shape())
                .copy_from(&d.relays[n]);
        }
        f
    }

    fn forward(
        &self,
        d: &DesignState,
        dim: usize,
        start: usize,
        mut tx: Vec<ComplexMatrix>,
        noise: bool,
        zero_relay: Option<usize>,
    ) -> Transfers {
        let mut rx: Vec<ComplexMatrix> = self
            .nodes
            .iter()
            .map(|n| ComplexMatrix::zeros(n.rx, dim))
            .collect();
        for l in start + 1..self.layers.len() {
            for &b in &self.layers[l] {
                let mut acc = ComplexMatrix::zeros(self.nodes[b].rx, dim);
                for link in self.links.iter().filter(|k| k.to == b) {
                    acc += &link.channel.mean * &tx[link.from];
                }
                if noise {
                    let o = self.noise_offset(b);
                    for t in 0..self.nodes[b].rx {
                        acc[(t, o + t)] += C64::new(1.0, 0.0);
                    }
                }
                if self.is_relay(b) && zero_relay != Some(b) {
                    tx[b] = &d.relays[b] * &acc;
                }
                rx[b] = acc;
            }
        }
        Transfers { rx, tx, dim }
    }

    /// Mean transfers from the excitation, optionally with one precoder or
    /// relay matrix replaced by zero.
    pub fn transfers(&self, d: &DesignState, zero: Option<super::VarId>) -> Transfers {
        use super::VarId;
        let dim = self.excitation_dim();
        let mut tx: Vec<ComplexMatrix> = self
            .nodes
            .iter()
            .map(|n| ComplexMatrix::zeros(n.tx, dim))
            .collect();
        for (s, st) in self.streams.iter().enumerate() {
            if zero == Some(VarId::Precoder(s)) {
                continue;
            }
            let o = self.stream_offset(s);
            let mut v = tx[st.source].view_mut((0, o), (self.nodes[st.source].tx, st.count()));
            v += &d.precoders[s];
        }
        let zr = match zero {
            Some(VarId::Relay(j)) => Some(j),
            _ => None,
        };
        self.forward(d, dim, 0, tx, true, zr)
    }

    /// Mean transfers from the transmit signal of `node` alone.
    pub(crate) fn injected(&self, d: &DesignState, node: usize) -> Transfers {
        let dim = self.nodes[node].tx;
        let mut tx: Vec<ComplexMatrix> = self
            .nodes
            .iter()
            .map(|n| ComplexMatrix::zeros(n.tx, dim))
            .collect();
        tx[node] = ComplexMatrix::identity(dim, dim);
        self.forward(d, dim, self.nodes[node].layer, tx, false, None)
    }

    /// Second moments with the streams outside `mask` switched off.
    pub fn moments(&self, d: &DesignState, mask: &[bool]) -> Moments {
        let mut rx: Vec<HermitianMatrix> = self
            .nodes
            .iter()
            .map(|n| HermitianMatrix::zeros(n.rx))
            .collect();
        let mut tx: Vec<HermitianMatrix> = self
            .nodes
            .iter()
            .map(|n| HermitianMatrix::zeros(n.tx))
            .collect();
        let (to, tn) = self.offsets(0, Side::Tx);
        let mut joint = ComplexMatrix::zeros(tn, tn);
        for (s, st) in self.streams.iter().enumerate() {
            if !mask[s] {
                continue;
            }
            let i = self.layers[0].iter().position(|&n| n == st.source).unwrap();
            let m = self.nodes[st.source].tx;
            let mut v = joint.view_mut((to[i], to[i]), (m, m));
            v += st.cov.congruence(&d.precoders[s]).matrix();
        }
        let mut joint = HermitianMatrix::symmetrize(joint);
        for (i, &n) in self.layers[0].iter().enumerate() {
            tx[n] = block(&joint, to[i], self.nodes[n].tx);
        }
        for l in 1..self.layers.len() {
            let mut k = self.hop_outer(l - 1, &joint).into_inner();
            let (ro, _) = self.offsets(l, Side::Rx);
            for (i, &n) in self.layers[l].iter().enumerate() {
                let r = self.nodes[n].rx;
                let mut v = k.view_mut((ro[i], ro[i]), (r, r));
                v += self.nodes[n].noise.as_ref().expect("validated").matrix();
            }
            let k = HermitianMatrix::symmetrize(k);
            for (i, &n) in self.layers[l].iter().enumerate() {
                rx[n] = block(&k, ro[i], self.nodes[n].rx);
            }
            if l + 1 < self.layers.len() {
                joint = k.congruence(&self.layer_forward(d, l));
                let (to, _) = self.offsets(l, Side::Tx);
                for (i, &n) in self.layers[l].iter().enumerate() {
                    tx[n] = block(&joint, to[i], self.nodes[n].tx);
                }
            }
        }
        Moments { rx, tx }
    }

    /// Pulls a receive-side weight `Q` of node `node` back to the transmit
    /// side of layer `target`: the joint `E{Φ^H Q Φ}` over that layer.
    pub(crate) fn pull_back(
        &self,
        d: &DesignState,
        node: usize,
        q: &HermitianMatrix,
        target: usize,
    ) -> HermitianMatrix {
        let l = self.nodes[node].layer;
        let (ro, rn) = self.offsets(l, Side::Rx);
        let i = self.layers[l].iter().position(|&n| n == node).unwrap();
        let mut joint = ComplexMatrix::zeros(rn, rn);
        joint
            .view_mut((ro[i], ro[i]), (q.dim(), q.dim()))
            .copy_from(q.matrix());
        let mut joint = HermitianMatrix::symmetrize(joint);
        let mut m = l;
        loop {
            let back = self.hop_inner(m - 1, &joint);
            if m - 1 == target {
                return back;
            }
            joint = back.congruence(&self.layer_forward(d, m - 1).adjoint());
            m -= 1;
        }
    }

    /// Block of a joint transmit-side matrix of `node`'s layer.
    pub(crate) fn tx_block(&self, joint: &HermitianMatrix, node: usize) -> HermitianMatrix {
        let l = self.nodes[node].layer;
        let (to, _) = self.offsets(l, Side::Tx);
        let i = self.layers[l].iter().position(|&n| n == node).unwrap();
        block(joint, to[i], self.nodes[node].tx)
    }

    pub(crate) fn mse_observation(&self, d: &DesignState, k: usize) -> Observation {
        Observation {
            node: k,
            side: Side::Rx,
            op: d.equalizers[k].clone(),
            desired: Some(self.desired_selector(k)),
            mask: self.mask(k),
        }
    }

    /// Transmit power of `node` and any meters on it, as observations.
    pub(crate) fn energy_observations(&self) -> Vec<(String, Observation, f64, Sense)> {
        let all = vec![true; self.streams.len()];
        let mut out = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Some(p) = node.budget {
                let obs = Observation {
                    node: i,
                    side: Side::Tx,
                    op: ComplexMatrix::identity(node.tx, node.tx),
                    desired: None,
                    mask: all.clone(),
                };
                out.push((format!("power[{}]", node.name), obs, p, Sense::AtMost));
            }
        }
        for m in &self.meters {
            let obs = Observation {
                node: m.node,
                side: Side::Tx,
                op: m.weight.clone(),
                desired: None,
                mask: all.clone(),
            };
            out.push((m.name.clone(), obs, m.threshold, m.sense));
        }
        out
    }

    pub(crate) fn observe(&self, obs: &Observation, t: &Transfers, mom: &Moments) -> f64 {
        let (z, k) = match obs.side {
            Side::Rx => (&t.rx[obs.node], &mom.rx[obs.node]),
            Side::Tx => (&t.tx[obs.node], &mom.tx[obs.node]),
        };
        let mut v = k.congruence(&obs.op).trace_re();
        if let Some(e) = &obs.desired {
            let r = self.excitation_cov(&obs.mask);
            v -= 2.0 * (&obs.op * z * r.matrix() * e.adjoint()).trace().re;
            v += r.congruence(e).trace_re();
        }
        v
    }

    fn moments_by_mask(
        &self,
        d: &DesignState,
        masks: impl Iterator<Item = Vec<bool>>,
    ) -> BTreeMap<Vec<bool>, Moments> {
        let mut out = BTreeMap::new();
        for m in masks {
            if !out.contains_key(&m) {
                let mom = self.moments(d, &m);
                out.insert(m, mom);
            }
        }
        out
    }

    /// `MSE_k` for every destination, in destination order.
    pub fn mse_per_destination(&self, d: &DesignState) -> Result<Vec<f64>> {
        self.check_state(d)?;
        let t = self.transfers(d, None);
        let moms = self.moments_by_mask(d, self.destinations().iter().map(|&k| self.mask(k)));
        Ok(self
            .destinations()
            .iter()
            .map(|&k| {
                let obs = self.mse_observation(d, k);
                self.observe(&obs, &t, &moms[&obs.mask])
            })
            .collect())
    }

    /// `Σ_k MSE_k`, averaged over symbols, noises and channel errors.
    pub fn sum_mse(&self, d: &DesignState) -> Result<f64> {
        Ok(self.mse_per_destination(d)?.iter().sum())
    }

    /// Transmit power of every node (zero at destinations).
    pub fn power_usage(&self, d: &DesignState) -> Vec<f64> {
        let m = self.moments(d, &vec![true; self.streams.len()]);
        m.tx.iter().map(HermitianMatrix::trace_re).collect()
    }

    /// Meter readings `E‖W t‖²`, in meter order.
    pub fn meter_values(&self, d: &DesignState) -> Vec<f64> {
        let m = self.moments(d, &vec![true; self.streams.len()]);
        self.meters
            .iter()
            .map(|mt| m.tx[mt.node].congruence(&mt.weight).trace_re())
            .collect()
    }

    /// Largest violation over power budgets and meters (zero when feasible).
    pub fn max_violation(&self, d: &DesignState) -> f64 {
        let p = self.power_usage(d);
        let mut worst: f64 = 0.0;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(b) = n.budget {
                worst = worst.max(p[i] - b);
            }
        }
        for (m, v) in self.meters.iter().zip(self.meter_values(d)) {
            worst = worst.max(match m.sense {
                Sense::AtMost => v - m.threshold,
                Sense::AtLeast => m.threshold - v,
            });
        }
        worst
    }
}
