use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{complex_gaussian, HermitianMatrix};
use crate::robust::ChannelError;

use super::{Link, Meter, NetworkScenario, Node, Sense, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    #[serde(rename = "MU_DL")]
    MuDl,
    #[serde(rename = "MU_UL")]
    MuUl,
    MultiCell,
    CognitiveRadio,
    EnergyHarvest,
    AFRelayTwoHop,
    AFRelayMultiHop,
    Example1,
    Example2TwoWay,
}

/// Knobs shared by every case; each case reads the ones it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaseParams {
    /// Antennas per node (`N_t` in Example 1, `N_s` in Example 2).
    pub antennas: usize,
    /// Relay antennas in Example 2 (`N_r`); other cases use `antennas`.
    pub relay_antennas: usize,
    pub users: usize,
    /// Streams per source-destination pair.
    pub streams: usize,
    /// Number of hops for the multi-hop chain.
    pub hops: usize,
    pub source_power: f64,
    pub relay_power: f64,
    /// First-hop SNR `P_s / (N σ²)` in dB.
    pub esr_db: f64,
    /// SNR of the last hop (`E_rd`, `E_rs`) or of the single hop, in dB.
    pub snr_db: f64,
    /// Interference threshold of the cognitive radio case.
    pub gamma: f64,
    /// Energy the harvesting node must receive.
    pub harvest: f64,
    /// Variance of channel estimation errors (`Σ = σ_e² I`, `Ψ = I`), zero
    /// for perfect channel knowledge.
    pub error_variance: f64,
    pub seed: u64,
}

impl Default for CaseParams {
    fn default() -> Self {
        Self {
            antennas: 2,
            relay_antennas: 4,
            users: 2,
            streams: 2,
            hops: 3,
            source_power: 1.0,
            relay_power: 1.0,
            esr_db: 20.0,
            snr_db: 20.0,
            gamma: 0.1,
            harvest: 0.5,
            error_variance: 0.0,
            seed: 0,
        }
    }
}

fn noise_var(power: f64, antennas: usize, snr_db: f64) -> f64 {
    power / (antennas as f64 * 10f64.powf(snr_db / 10.0))
}

struct Builder {
    s: NetworkScenario,
    rng: ChaCha8Rng,
    error_variance: f64,
}

impl Builder {
    fn new(case: CaseTag, p: &CaseParams, layers: usize) -> Self {
        Self {
            s: NetworkScenario {
                case,
                nodes: Vec::new(),
                layers: vec![Vec::new(); layers],
                links: Vec::new(),
                streams: Vec::new(),
                meters: Vec::new(),
                cancels: Vec::new(),
            },
            rng: ChaCha8Rng::seed_from_u64(p.seed),
            error_variance: p.error_variance,
        }
    }

    fn node(
        &mut self,
        name: String,
        layer: usize,
        rx: usize,
        tx: usize,
        noise: f64,
        budget: Option<f64>,
    ) -> usize {
        let id = self.s.nodes.len();
        self.s.nodes.push(Node {
            name,
            layer,
            rx,
            tx,
            noise: (rx > 0).then(|| HermitianMatrix::scaled_identity(rx, noise)),
            budget,
        });
        self.s.layers[layer].push(id);
        id
    }

    fn link(&mut self, from: usize, to: usize) {
        let (rx, tx) = (self.s.nodes[to].rx, self.s.nodes[from].tx);
        let mean = complex_gaussian(rx, tx, &mut self.rng);
        let channel = if self.error_variance > 0.0 {
            ChannelError {
                mean,
                sigma: HermitianMatrix::scaled_identity(rx, self.error_variance),
                psi: HermitianMatrix::identity(tx),
            }
        } else {
            ChannelError::exact(mean)
        };
        self.s.links.push(Link { from, to, channel });
    }

    fn connect_layers(&mut self, l: usize) {
        let (a, b) = (self.s.layers[l].clone(), self.s.layers[l + 1].clone());
        for &i in &a {
            for &j in &b {
                self.link(i, j);
            }
        }
    }

    fn stream(&mut self, source: usize, dest: usize, count: usize) {
        self.s.streams.push(Stream {
            source,
            dest,
            cov: HermitianMatrix::identity(count),
        });
    }

    fn meter(&mut self, name: &str, node: usize, rows: usize, threshold: f64, sense: Sense) {
        let weight = complex_gaussian(rows, self.s.nodes[node].tx, &mut self.rng);
        self.s.meters.push(Meter {
            name: name.into(),
            node,
            weight,
            threshold,
            sense,
        });
    }

    fn finish(self) -> Result<NetworkScenario> {
        self.s.validate()?;
        Ok(self.s)
    }
}

/// Builds a scenario with i.i.d. unit-variance complex Gaussian channels.
pub fn make_case(tag: CaseTag, p: &CaseParams) -> Result<NetworkScenario> {
    let n = p.antennas;
    let d = p.streams;
    if n == 0 || d == 0 || p.users == 0 || p.relay_antennas == 0 {
        return Err(Error::InvalidParams(
            "antenna, stream and user counts must be positive".into(),
        ));
    }
    if p.source_power <= 0.0 || p.relay_power <= 0.0 {
        return Err(Error::InvalidParams(
            "power budgets must be positive".into(),
        ));
    }
    if p.error_variance < 0.0 {
        return Err(Error::InvalidParams(
            "error variance must be non-negative".into(),
        ));
    }
    let ps = p.source_power;
    let pr = p.relay_power;
    match tag {
        CaseTag::MuDl => {
            let mut b = Builder::new(tag, p, 2);
            let bs = b.node("bs".into(), 0, 0, n, 0.0, Some(ps));
            let sigma = noise_var(ps, n, p.snr_db);
            for k in 0..p.users {
                let u = b.node(format!("user{k}"), 1, n, 0, sigma, None);
                b.stream(bs, u, d);
            }
            b.connect_layers(0);
            b.finish()
        }
        CaseTag::MuUl => {
            let mut b = Builder::new(tag, p, 2);
            let users: Vec<usize> = (0..p.users)
                .map(|k| b.node(format!("user{k}"), 0, 0, n, 0.0, Some(ps)))
                .collect();
            let bs = b.node("bs".into(), 1, n, 0, noise_var(ps, n, p.snr_db), None);
            for u in users {
                b.stream(u, bs, d);
            }
            b.connect_layers(0);
            b.finish()
        }
        CaseTag::MultiCell => {
            let mut b = Builder::new(tag, p, 2);
            let sigma = noise_var(ps, n, p.snr_db);
            let src: Vec<usize> = (0..p.users)
                .map(|k| b.node(format!("mobile{k}"), 0, 0, n, 0.0, Some(ps)))
                .collect();
            for (k, &s) in src.iter().enumerate() {
                let bs = b.node(format!("bs{k}"), 1, n, 0, sigma, None);
                b.stream(s, bs, d);
            }
            b.connect_layers(0);
            b.finish()
        }
        CaseTag::CognitiveRadio | CaseTag::EnergyHarvest => {
            let mut b = Builder::new(tag, p, 2);
            let s = b.node("source".into(), 0, 0, n, 0.0, Some(ps));
            let dst = b.node("dest".into(), 1, n, 0, noise_var(ps, n, p.snr_db), None);
            b.stream(s, dst, d);
            b.connect_layers(0);
            if tag == CaseTag::CognitiveRadio {
                b.meter("interference", s, n, p.gamma, Sense::AtMost);
            } else {
                b.meter("harvest", s, n, p.harvest, Sense::AtLeast);
            }
            b.finish()
        }
        CaseTag::AFRelayTwoHop | CaseTag::AFRelayMultiHop => {
            let hops = if tag == CaseTag::AFRelayTwoHop {
                2
            } else {
                p.hops
            };
            if hops < 2 {
                return Err(Error::InvalidParams(
                    "a relay chain needs at least two hops".into(),
                ));
            }
            let mut b = Builder::new(tag, p, hops + 1);
            let s = b.node("source".into(), 0, 0, n, 0.0, Some(ps));
            let first = noise_var(ps, n, p.esr_db);
            for h in 1..hops {
                let sigma = if h == 1 {
                    first
                } else {
                    noise_var(pr, n, p.snr_db)
                };
                b.node(format!("relay{h}"), h, n, n, sigma, Some(pr));
            }
            let dst = b.node("dest".into(), hops, n, 0, noise_var(pr, n, p.snr_db), None);
            b.stream(s, dst, d);
            for l in 0..hops {
                b.connect_layers(l);
            }
            b.finish()
        }
        CaseTag::Example1 => {
            let mut b = Builder::new(tag, p, 3);
            let s1 = noise_var(ps, n, p.esr_db);
            let s2 = noise_var(pr, n, p.snr_db);
            let src: Vec<usize> = (0..2)
                .map(|i| b.node(format!("source{i}"), 0, 0, n, 0.0, Some(ps)))
                .collect();
            for j in 0..2 {
                b.node(format!("relay{j}"), 1, n, n, s1, Some(pr));
            }
            for (k, &s) in src.iter().enumerate() {
                let dst = b.node(format!("dest{k}"), 2, n, 0, s2, None);
                b.stream(s, dst, d);
            }
            b.connect_layers(0);
            b.connect_layers(1);
            b.finish()
        }
        CaseTag::Example2TwoWay => {
            let nr = p.relay_antennas;
            let mut b = Builder::new(tag, p, 3);
            let sr = noise_var(ps, n, p.esr_db);
            let ss = noise_var(pr, nr, p.snr_db);
            let src: Vec<usize> = (0..2)
                .map(|i| b.node(format!("terminal{i}.tx"), 0, 0, n, 0.0, Some(ps)))
                .collect();
            for j in 0..2 {
                b.node(format!("relay{j}"), 1, nr, nr, sr, Some(pr));
            }
            let dst: Vec<usize> = (0..2)
                .map(|i| b.node(format!("terminal{i}.rx"), 2, n, 0, ss, None))
                .collect();
            // each terminal sends to the other one and removes its own echo
            b.stream(src[0], dst[1], d);
            b.stream(src[1], dst[0], d);
            b.s.cancels = vec![(dst[0], src[0]), (dst[1], src[1])];
            b.connect_layers(0);
            b.connect_layers(1);
            b.finish()
        }
    }
}
