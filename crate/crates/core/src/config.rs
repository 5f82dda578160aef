//! JSON configuration. Matrices are row-major arrays of arrays.
//!
//! ```json
//! {
//!   "plant": {"A": [[..]], "B": [[..]], "E": [[..]], "C": [[..]]},
//!   "controller": {"A": [[..]], "B": [[..]], "C": [[..]]},
//!   "wiring": "full",
//!   "network": {"nodes": [{"links": [{"success": 0.3}, {"success": 0.8}]}]},
//!   "channel": {"a": 1.0, "p_max": 70.0, "nodes": [{"gains": [[..]], "noise": [..]}]},
//!   "transmission": {"rate": 300.0},
//!   "protocol": {"kind": "round_robin"}
//! }
//! ```
//!
//! Every section except `protocol` is optional at parse time; commands that
//! need a missing section report it.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ChannelModel, Link, LoopWiring, LtiController, LtiPlant, LtiWncs, Matrix, NetworkTopology,
    Node, NodeChannel, ProtocolKind, TransmissionModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub success: f64,
    /// Error coordinates carried by the link (0-based). When omitted for
    /// every link, coordinates are assigned in node-then-link order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub links: Vec<LinkConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub nodes: Vec<NodeConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeChannelConfig {
    /// `gains[i][j]`: gain from link i's transmitter to link j's receiver.
    pub gains: Vec<Vec<f64>>,
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub a: f64,
    pub p_max: f64,
    pub nodes: Vec<NodeChannelConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmissionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_interval: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Growth constant multiplier of the deterministic condition; defaults
    /// to `sqrt(N)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub p1: (f64, f64),
    pub p2: (f64, f64),
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_bar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// `γ + L`; computed from the loop when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_plus_l: Option<f64>,
    /// Protocol contraction; defaults to the round-robin value for the
    /// number of channel nodes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Overrides the stability constant computed from the fields above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<RegionConfig>,
}

/// Where the simulated arrival rate comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RateSource {
    /// The `transmission` section.
    #[default]
    Transmission,
    /// The minimum stabilising rate computed for the configured protocol.
    OmegaStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e0: Option<Vec<f64>>,
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub rate_source: RateSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default)]
    pub wiring: LoopWiring,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmission: Option<TransmissionConfig>,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Config(format!("{what}: rows have different lengths")));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing `{section}` section"))
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
            other => other,
        })
    }

    pub fn plant(&self) -> Result<LtiPlant> {
        let p = self.plant.as_ref().ok_or_else(|| missing("plant"))?;
        let a = matrix(&p.a, "plant A")?;
        let b = matrix(&p.b, "plant B")?;
        let c = matrix(&p.c, "plant C")?;
        match &p.e {
            Some(e) => LtiPlant::new(a, b, matrix(e, "plant E")?, c),
            None => LtiPlant::undisturbed(a, b, c),
        }
    }

    pub fn controller(&self) -> Result<LtiController> {
        let k = self.controller.as_ref().ok_or_else(|| missing("controller"))?;
        LtiController::new(
            matrix(&k.a, "controller A")?,
            matrix(&k.b, "controller B")?,
            matrix(&k.c, "controller C")?,
        )
    }

    pub fn wncs(&self) -> Result<LtiWncs> {
        crate::model::build_loop(&self.plant()?, &self.controller()?, self.wiring)
    }

    pub fn has_network(&self) -> bool {
        self.network.is_some()
    }

    pub fn topology(&self) -> Result<NetworkTopology> {
        let net = self.network.as_ref().ok_or_else(|| missing("network"))?;
        let all_links = net.nodes.iter().flat_map(|n| &n.links);
        let explicit = all_links.clone().filter(|l| l.coords.is_some()).count();
        let total = all_links.count();
        if explicit != 0 && explicit != total {
            return Err(Error::Config(
                "give coords for every link or for none".into(),
            ));
        }
        let mut next = 0;
        let nodes = net
            .nodes
            .iter()
            .map(|n| Node {
                links: n
                    .links
                    .iter()
                    .map(|l| Link {
                        success: l.success,
                        coords: l.coords.clone().unwrap_or_else(|| {
                            next += 1;
                            vec![next - 1]
                        }),
                    })
                    .collect(),
            })
            .collect::<Vec<_>>();
        let n_e = if explicit == 0 {
            next
        } else {
            nodes
                .iter()
                .flat_map(|n: &Node| n.links.iter().flat_map(|l| l.coords.iter()))
                .count()
        };
        NetworkTopology::new(nodes, n_e)
    }

    pub fn channel(&self) -> Result<ChannelModel> {
        let ch = self.channel.as_ref().ok_or_else(|| missing("channel"))?;
        let nodes = ch
            .nodes
            .iter()
            .map(|n| NodeChannel::new(matrix(&n.gains, "channel gains")?, n.noise.clone()))
            .collect::<Result<Vec<_>>>()?;
        ChannelModel::new(nodes, ch.a, ch.p_max)
    }

    pub fn transmission(&self) -> Result<TransmissionModel> {
        let t = self.transmission.as_ref().ok_or_else(|| missing("transmission"))?;
        match (t.rate, t.mean_interval) {
            (Some(r), None) => TransmissionModel::new(r),
            (None, Some(m)) => TransmissionModel::from_mean_interval(m),
            _ => Err(Error::Config(
                "transmission needs exactly one of `rate` and `mean_interval`".into(),
            )),
        }
    }

    pub fn protocol(&self) -> ProtocolKind {
        self.protocol.kind
    }

    pub fn gain_tol(&self) -> f64 {
        self.analysis.gain_tol.unwrap_or(1e-6)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "plant": {"A": [[0.0]], "B": [[1.0]], "C": [[1.0]]},
        "controller": {"A": [[-1.0]], "B": [[-1.0]], "C": [[1.0]]},
        "network": {"nodes": [{"links": [{"success": 0.5}]}, {"links": [{"success": 1.0}]}]},
        "transmission": {"mean_interval": 0.01},
        "protocol": {"kind": "round_robin"}
    }"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = Config::from_json(MINIMAL).unwrap();
        let w = cfg.wncs().unwrap();
        assert_eq!(w.n_e(), 2);
        let t = cfg.topology().unwrap();
        assert_eq!(t.cumulative_successes(), vec![0.5, 1.0]);
        assert!((cfg.transmission().unwrap().rate() - 100.0).abs() < 1e-9);
        assert!(cfg.channel().is_err());
    }

    #[test]
    fn rejects_unknown_fields_and_ragged_rows() {
        let bad = MINIMAL.replace("\"protocol\"", "\"protocl\"");
        assert!(Config::from_json(&bad).is_err());
        let ragged = MINIMAL.replace("\"A\": [[0.0]]", "\"A\": [[0.0], [1.0, 2.0]]");
        let cfg = Config::from_json(&ragged).unwrap();
        assert!(matches!(cfg.plant(), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = Config::from_json(MINIMAL).unwrap();
        let again = Config::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }
}
