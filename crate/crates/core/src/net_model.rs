//! Network description: silos, links and the physical parameters of the
//! timing model.
//!
//! Units are fixed throughout the crate: time in milliseconds, capacity in
//! megabits per millisecond (numerically Gbps) and model size in megabits, so
//! `M / A` is already a duration in milliseconds.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{first_unreachable, EdgeKey, WeightedGraph};
use crate::timing::{self, Degrees};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("file not found: {}", path.display())]
    NotFound { path: PathBuf },
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> NetError {
    NetError::Invalid(msg.into())
}

/// Per-silo physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiloParams {
    pub id: usize,
    /// Time for one local update.
    #[serde(rename = "compute_ms")]
    pub compute_time_ms: f64,
    #[serde(rename = "up_gbps")]
    pub up_capacity: f64,
    #[serde(rename = "down_gbps")]
    pub down_capacity: f64,
}

/// One link record as it appears in a network file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub src: usize,
    pub dst: usize,
    pub latency_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    name: String,
    model_size_mbit: f64,
    local_updates: u32,
    silos: Vec<SiloParams>,
    links: Vec<LinkParams>,
}

/// A validated network: the connectivity graph plus timing parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    name: String,
    model_size_mbit: f64,
    local_updates: u32,
    silos: Vec<SiloParams>,
    latencies: BTreeMap<EdgeKey, f64>,
}

impl NetworkSpec {
    /// Builds and validates a spec. `links` may list a pair in one or both
    /// directions; both directions must then agree on latency.
    pub fn new(
        name: impl Into<String>,
        model_size_mbit: f64,
        local_updates: u32,
        mut silos: Vec<SiloParams>,
        links: &[LinkParams],
    ) -> Result<Self, NetError> {
        if !(model_size_mbit.is_finite() && model_size_mbit > 0.0) {
            return Err(invalid("model_size_mbit must be > 0"));
        }
        if local_updates < 1 {
            return Err(invalid("local_updates must be >= 1"));
        }
        if silos.is_empty() {
            return Err(invalid("network has no silos"));
        }
        silos.sort_by_key(|s| s.id);
        for (expected, s) in silos.iter().enumerate() {
            if s.id != expected {
                return Err(invalid(format!(
                    "silo ids must be dense 0..{} and unique (found id {} at position {expected})",
                    silos.len(),
                    s.id
                )));
            }
            for (field, v) in [
                ("compute_time_Tc", s.compute_time_ms),
                ("up_capacity", s.up_capacity),
                ("down_capacity", s.down_capacity),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(invalid(format!("silo {}: {field} must be > 0", s.id)));
                }
            }
        }

        let n = silos.len();
        let mut latencies = BTreeMap::new();
        for l in links {
            if l.src == l.dst {
                return Err(invalid(format!(
                    "link {}->{}: src must differ from dst",
                    l.src, l.dst
                )));
            }
            if l.src >= n || l.dst >= n {
                return Err(invalid(format!(
                    "link {}->{} references an unknown silo (N = {n})",
                    l.src, l.dst
                )));
            }
            if !(l.latency_ms.is_finite() && l.latency_ms >= 0.0) {
                return Err(invalid(format!(
                    "link {}->{}: latency must be >= 0",
                    l.src, l.dst
                )));
            }
            let key = EdgeKey::new(l.src, l.dst);
            if let Some(&prev) = latencies.get(&key) {
                if prev != l.latency_ms {
                    return Err(invalid(format!(
                        "asymmetric latency on link {key}: {prev} vs {}",
                        l.latency_ms
                    )));
                }
            }
            latencies.insert(key, l.latency_ms);
        }

        let spec = NetworkSpec {
            name: name.into(),
            model_size_mbit,
            local_updates,
            silos,
            latencies,
        };
        if let Some(v) = first_unreachable(n, |v| spec.neighbors(v).collect()) {
            return Err(invalid(format!("disconnected: silo {v} unreachable")));
        }
        Ok(spec)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn model_size_mbit(&self) -> f64 {
        self.model_size_mbit
    }

    pub fn local_updates(&self) -> u32 {
        self.local_updates
    }

    pub fn silo_count(&self) -> usize {
        self.silos.len()
    }

    pub fn silos(&self) -> &[SiloParams] {
        &self.silos
    }

    pub fn silo(&self, id: usize) -> &SiloParams {
        &self.silos[id]
    }

    pub fn latency(&self, i: usize, j: usize) -> Option<f64> {
        if i == j {
            return None;
        }
        self.latencies.get(&EdgeKey::new(i, j)).copied()
    }

    pub fn has_link(&self, i: usize, j: usize) -> bool {
        self.latency(i, j).is_some()
    }

    pub fn link_count(&self) -> usize {
        self.latencies.len()
    }

    /// Undirected links with `src < dst`, ascending.
    pub fn links(&self) -> impl Iterator<Item = LinkParams> + '_ {
        self.latencies.iter().map(|(k, &latency_ms)| LinkParams {
            src: k.lo(),
            dst: k.hi(),
            latency_ms,
        })
    }

    pub fn link_keys(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.latencies.keys().copied()
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.silos.len()).filter(move |&w| self.has_link(v, w))
    }

    pub fn with_local_updates(&self, u: u32) -> Result<Self, NetError> {
        if u < 1 {
            return Err(invalid("local_updates must be >= 1"));
        }
        let mut s = self.clone();
        s.local_updates = u;
        Ok(s)
    }

    /// Copy with every silo's up/down capacity replaced by `c`.
    pub fn with_homogeneous_capacity(&self, c: f64) -> Result<Self, NetError> {
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("capacity must be > 0"));
        }
        let mut s = self.clone();
        for silo in &mut s.silos {
            silo.up_capacity = c;
            silo.down_capacity = c;
        }
        Ok(s)
    }

    /// Copy where silo `hub` has up/down capacity `c`; other silos unchanged.
    pub fn with_orchestrator_capacity(&self, hub: usize, c: f64) -> Result<Self, NetError> {
        if hub >= self.silo_count() {
            return Err(invalid(format!("orchestrator silo {hub} does not exist")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(invalid("capacity must be > 0"));
        }
        let mut s = self.clone();
        s.silos[hub].up_capacity = c;
        s.silos[hub].down_capacity = c;
        Ok(s)
    }

    fn to_file(&self) -> NetworkFile {
        NetworkFile {
            name: self.name.clone(),
            model_size_mbit: self.model_size_mbit,
            local_updates: self.local_updates,
            silos: self.silos.clone(),
            links: self.links().collect(),
        }
    }
}

/// Access-link capacity override applied on top of a loaded network.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CapacityScenario {
    /// Capacities exactly as in the file.
    #[default]
    AsFile,
    /// Every silo gets up/down capacity `capacity`.
    Homogeneous { capacity: f64 },
    /// Silo `hub` gets up/down capacity `capacity`; the rest are unchanged.
    Orchestrator { hub: usize, capacity: f64 },
}

impl CapacityScenario {
    pub fn apply(&self, spec: &NetworkSpec) -> Result<NetworkSpec, NetError> {
        match *self {
            CapacityScenario::AsFile => Ok(spec.clone()),
            CapacityScenario::Homogeneous { capacity } => spec.with_homogeneous_capacity(capacity),
            CapacityScenario::Orchestrator { hub, capacity } => {
                spec.with_orchestrator_capacity(hub, capacity)
            }
        }
    }
}

impl fmt::Display for CapacityScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CapacityScenario::AsFile => f.write_str("as-file"),
            CapacityScenario::Homogeneous { capacity } => write!(f, "homogeneous:{capacity}"),
            CapacityScenario::Orchestrator { hub, capacity } => {
                write!(f, "orchestrator:{hub}:{capacity}")
            }
        }
    }
}

/// Parses `as-file`, `homogeneous:<gbps>` or `orchestrator:<silo>:<gbps>`.
impl FromStr for CapacityScenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| format!("bad capacity `{v}` in scenario `{s}`"))
        };
        match parts.as_slice() {
            ["as-file"] => Ok(CapacityScenario::AsFile),
            ["homogeneous", c] => Ok(CapacityScenario::Homogeneous { capacity: num(c)? }),
            ["orchestrator", hub, c] => Ok(CapacityScenario::Orchestrator {
                hub: hub
                    .parse()
                    .map_err(|_| format!("bad silo id `{hub}` in scenario `{s}`"))?,
                capacity: num(c)?,
            }),
            _ => Err(format!(
                "unknown capacity scenario `{s}` (expected as-file, homogeneous:<c> or orchestrator:<hub>:<c>)"
            )),
        }
    }
}

/// Parses a network document.
pub fn parse_network(text: &str) -> Result<NetworkSpec, NetError> {
    let file: NetworkFile = serde_json::from_str(text).map_err(|e| NetError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    NetworkSpec::new(
        file.name,
        file.model_size_mbit,
        file.local_updates,
        file.silos,
        &file.links,
    )
}

pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec, NetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            NetError::NotFound {
                path: path.to_path_buf(),
            }
        } else {
            NetError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    })?;
    parse_network(&text)
}

/// Serializes with sorted keys, one undirected link per pair.
pub fn network_to_string(spec: &NetworkSpec) -> String {
    // serde_json::Value maps are BTreeMap-backed, which sorts the keys.
    let value = serde_json::to_value(spec.to_file()).expect("network file serializes");
    let mut s = serde_json::to_string_pretty(&value).expect("json value serializes");
    s.push('\n');
    s
}

pub fn save_network(spec: &NetworkSpec, path: impl AsRef<Path>) -> Result<(), NetError> {
    let path = path.as_ref();
    fs::write(path, network_to_string(spec)).map_err(|source| NetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Connectivity graph weighted by the static delay of each link, with link
/// capacities shared over the full connectivity degrees. The weight of an
/// undirected link is the larger of its two directed delays.
pub fn connectivity_graph(spec: &NetworkSpec) -> WeightedGraph {
    let degrees = Degrees::from_edges(spec.silo_count(), spec.link_keys());
    let mut g = WeightedGraph::new(spec.silo_count());
    for key in spec.link_keys() {
        let w = timing::edge_static_delay(spec, key, &degrees)
            .expect("every link endpoint has degree >= 1");
        g.set(key.lo(), key.hi(), w);
    }
    g
}
