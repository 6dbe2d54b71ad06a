//! Synthetic network generator.
//!
//! Silos are scattered in the unit square (optionally around a few cluster
//! centres) and link latency grows linearly with distance, so complete
//! networks are metric. Presets copy only the silo and link counts of
//! well-known research topologies; every parameter value is synthetic.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{EdgeKey, WeightedGraph};
use crate::net_model::{CapacityScenario, LinkParams, NetError, NetworkSpec, SiloParams};
use crate::overlay;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    GaiaLike,
    AmazonLike,
    GeantLike,
    ExodusLike,
    EboneLike,
}

impl Preset {
    pub const ALL: [Preset; 5] = [
        Preset::GaiaLike,
        Preset::AmazonLike,
        Preset::GeantLike,
        Preset::ExodusLike,
        Preset::EboneLike,
    ];

    pub fn silos(self) -> usize {
        match self {
            Preset::GaiaLike => 11,
            Preset::AmazonLike => 22,
            Preset::GeantLike => 40,
            Preset::ExodusLike => 79,
            Preset::EboneLike => 87,
        }
    }

    pub fn links(self) -> usize {
        match self {
            Preset::GaiaLike => 55,
            Preset::AmazonLike => 231,
            Preset::GeantLike => 61,
            Preset::ExodusLike => 147,
            Preset::EboneLike => 161,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::GaiaLike => "gaia-like",
            Preset::AmazonLike => "amazon-like",
            Preset::GeantLike => "geant-like",
            Preset::ExodusLike => "exodus-like",
            Preset::EboneLike => "ebone-like",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Preset::ALL.iter().map(|p| p.name()).collect();
                format!(
                    "unknown preset `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub name: String,
    pub silos: usize,
    pub links: usize,
    /// Latency of the shortest and the longest possible link.
    pub latency_ms: (f64, f64),
    pub compute_ms: (f64, f64),
    pub clusters: usize,
    pub capacity: CapacityScenario,
    pub model_size_mbit: f64,
    pub local_updates: u32,
    pub seed: u64,
}

impl GenParams {
    /// Fully connected network of `silos` silos with default parameters.
    pub fn complete(silos: usize, seed: u64) -> Self {
        GenParams {
            name: format!("synthetic-{silos}"),
            silos,
            links: silos * silos.saturating_sub(1) / 2,
            latency_ms: (1.0, 50.0),
            compute_ms: (1.0, 3.0),
            clusters: 1,
            capacity: CapacityScenario::AsFile,
            model_size_mbit: 4.62,
            local_updates: 1,
            seed,
        }
    }

    pub fn from_preset(preset: Preset, seed: u64) -> Self {
        GenParams {
            name: format!("{preset} (synthetic)"),
            links: preset.links(),
            ..GenParams::complete(preset.silos(), seed)
        }
    }

    /// Link count from a density in (0, 1] of all possible pairs.
    pub fn with_density(mut self, density: f64) -> Self {
        let max = self.silos * self.silos.saturating_sub(1) / 2;
        self.links = (density * max as f64).round() as usize;
        self
    }
}

/// Generates a connected network: a Euclidean spanning tree of the silo
/// positions, topped up with random extra pairs until `links` is reached.
pub fn generate_network(p: &GenParams) -> Result<NetworkSpec, NetError> {
    let n = p.silos;
    if n < 3 {
        return Err(NetError::Invalid(format!("need at least 3 silos, got {n}")));
    }
    let max_links = n * (n - 1) / 2;
    if p.links < n - 1 || p.links > max_links {
        return Err(NetError::Invalid(format!(
            "cannot place {} links on {n} silos: need between {} and {max_links}",
            p.links,
            n - 1
        )));
    }
    let (lat_lo, lat_hi) = p.latency_ms;
    let (cmp_lo, cmp_hi) = p.compute_ms;
    if !(lat_lo >= 0.0 && lat_hi >= lat_lo && cmp_lo > 0.0 && cmp_hi >= cmp_lo) {
        return Err(NetError::Invalid(
            "latency/compute ranges must be ordered and positive".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let clusters = p.clusters.max(1);
    let centres: Vec<(f64, f64)> = (0..clusters)
        .map(|_| (rng.random(), rng.random()))
        .collect();
    let spread = if clusters == 1 { 1.0 } else { 0.08 };
    let points: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let (cx, cy) = centres[i % clusters];
            let x: f64 = rng.random::<f64>() - 0.5;
            let y: f64 = rng.random::<f64>() - 0.5;
            if clusters == 1 {
                (x + 0.5, y + 0.5)
            } else {
                (
                    (cx + spread * x).clamp(0.0, 1.0),
                    (cy + spread * y).clamp(0.0, 1.0),
                )
            }
        })
        .collect();
    let latency = |i: usize, j: usize| {
        let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
        let dist = (dx * dx + dy * dy).sqrt() / std::f64::consts::SQRT_2;
        // rounded to microseconds so files stay readable
        ((lat_lo + (lat_hi - lat_lo) * dist) * 1000.0).round() / 1000.0
    };

    let geometric = WeightedGraph::complete(n, latency);
    let mut chosen: Vec<EdgeKey> = overlay::build_mst(&geometric)
        .map_err(|e| NetError::Invalid(e.to_string()))?
        .edges()
        .iter()
        .copied()
        .collect();
    let mut rest: Vec<EdgeKey> = geometric
        .edges()
        .map(|(e, _)| e)
        .filter(|e| !chosen.contains(e))
        .collect();
    rest.shuffle(&mut rng);
    chosen.extend(rest.into_iter().take(p.links - (n - 1)));
    chosen.sort();

    let silos: Vec<SiloParams> = (0..n)
        .map(|id| {
            let c = cmp_lo + (cmp_hi - cmp_lo) * rng.random::<f64>();
            SiloParams {
                id,
                compute_time_ms: (c * 1000.0).round() / 1000.0,
                up_capacity: 1.0,
                down_capacity: 1.0,
            }
        })
        .collect();
    let links: Vec<LinkParams> = chosen
        .iter()
        .map(|e| LinkParams {
            src: e.lo(),
            dst: e.hi(),
            latency_ms: latency(e.lo(), e.hi()),
        })
        .collect();
    let spec = NetworkSpec::new(
        p.name.clone(),
        p.model_size_mbit,
        p.local_updates,
        silos,
        &links,
    )?;
    p.capacity.apply(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::{network_to_string, parse_network};

    #[test]
    fn presets_match_counts() {
        for preset in Preset::ALL {
            let spec = generate_network(&GenParams::from_preset(preset, 7)).unwrap();
            assert_eq!(spec.silo_count(), preset.silos(), "{preset}");
            assert_eq!(spec.link_count(), preset.links(), "{preset}");
        }
        assert_eq!("exodus-like".parse::<Preset>().unwrap().silos(), 79);
    }

    #[test]
    fn three_silo_full_is_a_triangle() {
        let spec = generate_network(&GenParams::complete(3, 1)).unwrap();
        assert_eq!(spec.link_count(), 3);
    }

    #[test]
    fn generated_file_reloads() {
        let spec = generate_network(&GenParams::from_preset(Preset::GeantLike, 3)).unwrap();
        assert_eq!(parse_network(&network_to_string(&spec)).unwrap(), spec);
    }

    #[test]
    fn unsatisfiable_density() {
        let p = GenParams::complete(10, 1).with_density(0.05);
        assert!(generate_network(&p)
            .unwrap_err()
            .to_string()
            .contains("cannot place"));
        let mut p = GenParams::complete(4, 1);
        p.links = 7;
        assert!(generate_network(&p).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let p = GenParams::from_preset(Preset::AmazonLike, 11);
        assert_eq!(generate_network(&p).unwrap(), generate_network(&p).unwrap());
    }

    #[test]
    fn capacity_scenario_applies() {
        let mut p = GenParams::complete(5, 2);
        p.capacity = CapacityScenario::Orchestrator {
            hub: 2,
            capacity: 10.0,
        };
        let spec = generate_network(&p).unwrap();
        assert_eq!(spec.silo(2).up_capacity, 10.0);
        assert_eq!(spec.silo(0).up_capacity, 1.0);
    }
}
