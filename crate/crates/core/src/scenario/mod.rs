//! Layered linear networks: sources, optional relay layers, destinations.
//!
//! Every node sees the sum of its upstream neighbours' transmissions through
//! the link channels plus its own receive noise; relays forward `F x`. The
//! whole network is linear in the excitation vector
//! `e = [streams; relay noises; destination noises]`, which is how MSEs,
//! powers and per-variable QM functions are computed.

mod cases;
mod io;
mod network;
mod subproblem;
mod symbols;

pub use cases::{make_case, CaseParams, CaseTag};
pub use io::{read_scenario, ChannelSpec, ErrorSpec, ScenarioFile};
pub use network::{Moments, Transfers};
pub use subproblem::{Layout, Subproblem};
pub use symbols::{empirical_mse, qpsk};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{ComplexMatrix, HermitianMatrix};
use crate::robust::ChannelError;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub layer: usize,
    pub rx: usize,
    pub tx: usize,
    /// Receive noise covariance (absent at sources).
    pub noise: Option<HermitianMatrix>,
    /// Transmit power budget (absent at destinations).
    pub budget: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    /// Mean channel plus error correlations (zero for perfect knowledge).
    pub channel: ChannelError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub source: usize,
    pub dest: usize,
    pub cov: HermitianMatrix,
}

impl Stream {
    pub fn count(&self) -> usize {
        self.cov.dim()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    AtMost,
    AtLeast,
}

/// A received-energy requirement `E‖W t‖² ≤ γ` or `≥ γ` on a node's transmit
/// signal `t` (interference to a primary user, harvested energy).
#[derive(Debug, Clone, PartialEq)]
pub struct Meter {
    pub name: String,
    pub node: usize,
    pub weight: ComplexMatrix,
    pub threshold: f64,
    pub sense: Sense,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkScenario {
    pub case: CaseTag,
    pub nodes: Vec<Node>,
    pub layers: Vec<Vec<usize>>,
    pub links: Vec<Link>,
    pub streams: Vec<Stream>,
    pub meters: Vec<Meter>,
    /// `(destination, source)`: the destination knows and removes everything
    /// the source sent (two-way relaying).
    pub cancels: Vec<(usize, usize)>,
}

/// A design variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarId {
    /// Precoder of the stream with this index.
    Precoder(usize),
    /// Forwarding matrix of the relay node with this index.
    Relay(usize),
    /// Equalizer of the destination node with this index.
    Equalizer(usize),
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarId::Precoder(i) => write!(f, "P[{i}]"),
            VarId::Relay(j) => write!(f, "F[{j}]"),
            VarId::Equalizer(k) => write!(f, "G[{k}]"),
        }
    }
}

/// Precoders per stream, forwarding matrices and equalizers per node (empty
/// where a node has none).
#[derive(Debug, Clone, PartialEq)]
pub struct DesignState {
    pub precoders: Vec<ComplexMatrix>,
    pub relays: Vec<ComplexMatrix>,
    pub equalizers: Vec<ComplexMatrix>,
    pub iteration: usize,
    pub trace: Vec<f64>,
}

impl DesignState {
    pub fn get(&self, v: VarId) -> &ComplexMatrix {
        match v {
            VarId::Precoder(i) => &self.precoders[i],
            VarId::Relay(j) => &self.relays[j],
            VarId::Equalizer(k) => &self.equalizers[k],
        }
    }

    pub fn set(&mut self, v: VarId, m: ComplexMatrix) {
        match v {
            VarId::Precoder(i) => self.precoders[i] = m,
            VarId::Relay(j) => self.relays[j] = m,
            VarId::Equalizer(k) => self.equalizers[k] = m,
        }
    }
}

impl NetworkScenario {
    pub fn sources(&self) -> &[usize] {
        &self.layers[0]
    }

    pub fn destinations(&self) -> &[usize] {
        self.layers.last().expect("validated scenarios have layers")
    }

    /// Relay nodes, upstream first.
    pub fn relays(&self) -> Vec<usize> {
        self.layers[1..self.layers.len() - 1]
            .iter()
            .flatten()
            .copied()
            .collect()
    }

    pub fn is_relay(&self, node: usize) -> bool {
        let l = self.nodes[node].layer;
        l > 0 && l + 1 < self.layers.len()
    }

    pub fn is_destination(&self, node: usize) -> bool {
        self.nodes[node].layer + 1 == self.layers.len()
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Streams whose desired signal is recovered at destination `k`, in order.
    pub fn desired(&self, k: usize) -> Vec<usize> {
        (0..self.streams.len())
            .filter(|&s| self.streams[s].dest == k)
            .collect()
    }

    pub fn desired_len(&self, k: usize) -> usize {
        self.desired(k)
            .iter()
            .map(|&s| self.streams[s].count())
            .sum()
    }

    /// Streams visible at destination `k` after self-interference removal.
    pub fn mask(&self, k: usize) -> Vec<bool> {
        self.streams
            .iter()
            .map(|st| !self.cancels.contains(&(k, st.source)))
            .collect()
    }

    /// Every design variable, in the sweep order: equalizers, precoders
    /// (sources in order), relays upstream to downstream.
    pub fn variables(&self) -> Vec<VarId> {
        let mut v: Vec<VarId> = self
            .destinations()
            .iter()
            .map(|&k| VarId::Equalizer(k))
            .collect();
        v.extend((0..self.streams.len()).map(VarId::Precoder));
        v.extend(self.relays().into_iter().map(VarId::Relay));
        v
    }

    /// Shape of a variable, or `UnknownVariable`.
    pub fn var_shape(&self, v: VarId) -> Result<(usize, usize)> {
        let unknown = || Error::UnknownVariable(v.to_string());
        match v {
            VarId::Precoder(i) => {
                let st = self.streams.get(i).ok_or_else(unknown)?;
                Ok((self.nodes[st.source].tx, st.count()))
            }
            VarId::Relay(j) if j < self.nodes.len() && self.is_relay(j) => {
                Ok((self.nodes[j].tx, self.nodes[j].rx))
            }
            VarId::Equalizer(k) if k < self.nodes.len() && self.is_destination(k) => {
                Ok((self.desired_len(k), self.nodes[k].rx))
            }
            _ => Err(unknown()),
        }
    }

    /// Node whose transmit signal a variable shapes (the destination itself
    /// for equalizers).
    pub fn var_node(&self, v: VarId) -> usize {
        match v {
            VarId::Precoder(i) => self.streams[i].source,
            VarId::Relay(j) | VarId::Equalizer(j) => j,
        }
    }

    /// All-zero state of conforming dimensions.
    pub fn zero_state(&self) -> DesignState {
        let mut d = DesignState {
            precoders: Vec::new(),
            relays: vec![ComplexMatrix::zeros(0, 0); self.nodes.len()],
            equalizers: vec![ComplexMatrix::zeros(0, 0); self.nodes.len()],
            iteration: 0,
            trace: Vec::new(),
        };
        for st in &self.streams {
            d.precoders
                .push(ComplexMatrix::zeros(self.nodes[st.source].tx, st.count()));
        }
        for v in self.variables() {
            let (r, c) = self.var_shape(v).expect("enumerated variables exist");
            d.set(v, ComplexMatrix::zeros(r, c));
        }
        d
    }

    /// Checks dimensions of a state against the scenario.
    pub fn check_state(&self, d: &DesignState) -> Result<()> {
        if d.precoders.len() != self.streams.len()
            || d.relays.len() != self.nodes.len()
            || d.equalizers.len() != self.nodes.len()
        {
            return Err(Error::ShapeMismatch(
                "state does not list every variable".into(),
            ));
        }
        for v in self.variables() {
            let want = self.var_shape(v)?;
            if d.get(v).shape() != want {
                return Err(Error::ShapeMismatch(format!(
                    "{v} is {:?}, expected {want:?}",
                    d.get(v).shape()
                )));
            }
        }
        Ok(())
    }

    /// `AtMost` meters with a non-positive threshold: the only feasible
    /// transmit directions are those the meter cannot see.
    pub fn degenerate_meters(&self) -> Vec<&Meter> {
        self.meters
            .iter()
            .filter(|m| m.sense == Sense::AtMost && m.threshold <= 0.0)
            .collect()
    }

    pub fn has_channel_errors(&self) -> bool {
        self.links.iter().any(|l| !l.channel.is_exact())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.layers.len() < 2 {
            return bad("need at least a source and a destination layer".into());
        }
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.is_empty() {
                return bad(format!("layer {l} is empty"));
            }
            for &n in layer {
                let node = self
                    .nodes
                    .get(n)
                    .ok_or_else(|| Error::InvalidParams(format!("node {n} missing")))?;
                if node.layer != l {
                    return bad(format!(
                        "{} listed in layer {l} but tagged {}",
                        node.name, node.layer
                    ));
                }
                if (l == 0) != (node.rx == 0) || (l == last) != (node.tx == 0) {
                    return bad(format!(
                        "{} has the wrong antenna roles for layer {l}",
                        node.name
                    ));
                }
                if l > 0 {
                    match &node.noise {
                        Some(r) if r.dim() == node.rx => {
                            if r.min_eigenvalue() < -1e-12 {
                                return bad(format!("{} noise covariance is not PSD", node.name));
                            }
                        }
                        _ => {
                            return bad(format!(
                                "{} needs a {}x{} noise covariance",
                                node.name, node.rx, node.rx
                            ))
                        }
                    }
                }
                if l < last {
                    match node.budget {
                        Some(p) if p > 0.0 => {}
                        _ => return bad(format!("{} needs a positive power budget", node.name)),
                    }
                }
            }
        }
        if self.layers.iter().map(Vec::len).sum::<usize>() != self.nodes.len() {
            return bad("every node must sit in exactly one layer".into());
        }
        for link in &self.links {
            let (a, b) = (&self.nodes[link.from], &self.nodes[link.to]);
            if b.layer != a.layer + 1 {
                return bad(format!("link {} -> {} skips a layer", a.name, b.name));
            }
            if link.channel.mean.shape() != (b.rx, a.tx) {
                return bad(format!(
                    "channel {} -> {} is {:?}, expected {:?}",
                    a.name,
                    b.name,
                    link.channel.mean.shape(),
                    (b.rx, a.tx)
                ));
            }
        }
        for st in &self.streams {
            if self.nodes[st.source].layer != 0 || self.nodes[st.dest].layer != last {
                return bad("streams run from a source to a destination".into());
            }
            if st.cov.min_eigenvalue() < -1e-12 {
                return bad("stream covariance is not PSD".into());
            }
        }
        for m in &self.meters {
            if m.weight.ncols() != self.nodes[m.node].tx {
                return bad(format!("meter {} does not conform to its node", m.name));
            }
        }
        if self.has_channel_errors() {
            let multi = self.layers[1..last].iter().filter(|l| l.len() > 1).count();
            if last > 2 && multi > 0 {
                return bad(
                    "channel errors are supported with one relay layer or single-node relay layers"
                        .into(),
                );
            }
        }
        Ok(())
    }
}
