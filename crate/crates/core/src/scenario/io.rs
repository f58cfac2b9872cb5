//! Scenario files.
//!
//! ```json
//! { "case": "Example1",
//!   "params": { "antennas": 2, "esr_db": 20, "snr_db": 10, "seed": 7 },
//!   "channels": [ { "from": "source0", "to": "relay0", "h": [[[1,0],[0,0]],[[0,0],[1,0]]] } ],
//!   "errors":   [ { "from": "source0", "to": "relay0", "sigma": [...], "psi": [...] } ] }
//! ```
//!
//! Unlisted channels are drawn from `params.seed`; unlisted error models are
//! zero unless `params.error_variance` is set.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::HermitianMatrix;
use crate::model::io::{from_rows, MatrixRows};

use super::{make_case, CaseParams, CaseTag, NetworkScenario};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub from: String,
    pub to: String,
    pub h: MatrixRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSpec {
    pub from: String,
    pub to: String,
    pub sigma: MatrixRows,
    pub psi: MatrixRows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub case: CaseTag,
    #[serde(default)]
    pub params: CaseParams,
    #[serde(default)]
    pub channels: Vec<ChannelSpec>,
    #[serde(default)]
    pub errors: Vec<ErrorSpec>,
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigError(e.to_string()))
    }

    pub fn build(&self) -> Result<NetworkScenario> {
        self.build_with(&self.params)
    }

    /// Builds with overridden parameters (SNR point, trial seed), keeping the
    /// explicit channels and error models of the file.
    pub fn build_with(&self, params: &CaseParams) -> Result<NetworkScenario> {
        let mut s = make_case(self.case, params)?;
        let link = |s: &NetworkScenario, from: &str, to: &str| -> Result<usize> {
            let (a, b) = (s.node_index(from), s.node_index(to));
            s.links
                .iter()
                .position(|l| Some(l.from) == a && Some(l.to) == b)
                .ok_or_else(|| Error::ConfigError(format!("no link {from} -> {to}")))
        };
        for c in &self.channels {
            let i = link(&s, &c.from, &c.to)?;
            let (r, k) = s.links[i].channel.mean.shape();
            let h = from_rows(&c.h, r, k)?;
            if h.shape() != (r, k) {
                return Err(Error::ShapeMismatch(format!(
                    "channel {} -> {} must be {r}x{k}",
                    c.from, c.to
                )));
            }
            s.links[i].channel.mean = h;
        }
        for e in &self.errors {
            let i = link(&s, &e.from, &e.to)?;
            let (r, k) = s.links[i].channel.mean.shape();
            let sigma = HermitianMatrix::new(from_rows(&e.sigma, r, r)?)?;
            let psi = HermitianMatrix::new(from_rows(&e.psi, k, k)?)?;
            let mean = s.links[i].channel.mean.clone();
            s.links[i].channel = crate::robust::ChannelError::new(mean, sigma, psi)?;
        }
        s.validate()?;
        Ok(s)
    }
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    ScenarioFile::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::ComplexMatrix;
    use crate::model::io::to_rows;

    #[test]
    fn explicit_channels_override_draws() {
        let h = ComplexMatrix::identity(2, 2);
        let f = ScenarioFile {
            case: CaseTag::AFRelayTwoHop,
            params: CaseParams::default(),
            channels: vec![ChannelSpec {
                from: "source".into(),
                to: "relay1".into(),
                h: to_rows(&h),
            }],
            errors: Vec::new(),
        };
        let text = serde_json::to_string(&f).unwrap();
        let back = ScenarioFile::from_json(&text).unwrap();
        assert_eq!(back, f);
        let s = back.build().unwrap();
        assert_eq!(s.links[0].channel.mean, h);
    }

    #[test]
    fn unknown_link_and_fields_rejected() {
        let bad = r#"{"case":"Example1","channels":[{"from":"x","to":"y","h":[]}]}"#;
        assert!(matches!(
            ScenarioFile::from_json(bad).unwrap().build(),
            Err(Error::ConfigError(_))
        ));
        assert!(ScenarioFile::from_json(r#"{"case":"Example1","bogus":1}"#).is_err());
        assert!(ScenarioFile::from_json(r#"{"case":"Example9"}"#).is_err());
    }

    #[test]
    fn error_models_attach_to_links() {
        let text = r#"{"case":"CognitiveRadio","params":{"antennas":2},
            "errors":[{"from":"source","to":"dest",
              "sigma":[[[0.1,0],[0,0]],[[0,0],[0.1,0]]],
              "psi":[[[1,0],[0,0]],[[0,0],[1,0]]]}]}"#;
        let s = ScenarioFile::from_json(text).unwrap().build().unwrap();
        assert!(s.has_channel_errors());
    }
}
