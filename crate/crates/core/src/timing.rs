//! Delay and cycle-time model.
//!
//! The static delay of a directed edge `(i, j)` is the time until `j` holds
//! the model sent by `i`:
//!
//! ```text
//! d(i,j) = u * Tc(i) + l(i,j) + M / A(i,j)
//! A(i,j) = min(C_up(i) / out_deg(i), C_dn(j) / in_deg(j))
//! ```
//!
//! Over training, each directed overlay edge carries a round-dependent delay
//! `d_k` driven by its strong/weak label history (see [`delay_branch`]). The
//! cycle time of a round is the largest `d_k` over strong edges.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::graph::EdgeKey;
use crate::multigraph::{GraphState, Label};
use crate::net_model::NetworkSpec;

#[derive(Debug, Error, PartialEq)]
pub enum TimingError {
    #[error("silo {silo} has zero {direction} degree")]
    ZeroDegree {
        silo: usize,
        direction: &'static str,
    },
    #[error("no link between silo {0} and silo {1}")]
    MissingLink(usize, usize),
    #[error("delay ledger not initialized for edge {from}->{to} before round {round}")]
    Uninitialized {
        from: usize,
        to: usize,
        round: usize,
    },
    #[error("edge {0}->{1} is not tracked by the delay ledger")]
    UntrackedEdge(usize, usize),
    #[error("delay ledger expected round {expected}, got {got}")]
    RoundOutOfOrder { expected: usize, got: usize },
    #[error("ledger needs at least one overlay edge")]
    EmptyOverlay,
    #[error("cycle statistics need at least one completed round")]
    EmptyRun,
}

/// Out/in degree of every silo in some directed view of an undirected edge
/// set. Undirected edges contribute to both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Degrees {
    out: Vec<usize>,
    inn: Vec<usize>,
}

impl Degrees {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = EdgeKey>) -> Self {
        let mut deg = vec![0; n];
        for e in edges {
            deg[e.lo()] += 1;
            deg[e.hi()] += 1;
        }
        Degrees {
            out: deg.clone(),
            inn: deg,
        }
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.out[i]
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.inn[j]
    }
}

/// Access-link capacity available to `i -> j` when `i` uploads to
/// `out_degree_i` peers and `j` downloads from `in_degree_j` peers.
pub fn traffic_capacity(
    spec: &NetworkSpec,
    i: usize,
    j: usize,
    out_degree_i: usize,
    in_degree_j: usize,
) -> Result<f64, TimingError> {
    if out_degree_i == 0 {
        return Err(TimingError::ZeroDegree {
            silo: i,
            direction: "out",
        });
    }
    if in_degree_j == 0 {
        return Err(TimingError::ZeroDegree {
            silo: j,
            direction: "in",
        });
    }
    let up = spec.silo(i).up_capacity / out_degree_i as f64;
    let down = spec.silo(j).down_capacity / in_degree_j as f64;
    Ok(up.min(down))
}

/// Directed static delay `i -> j`.
pub fn static_delay(
    spec: &NetworkSpec,
    i: usize,
    j: usize,
    degrees: &Degrees,
) -> Result<f64, TimingError> {
    let latency = spec.latency(i, j).ok_or(TimingError::MissingLink(i, j))?;
    let capacity = traffic_capacity(spec, i, j, degrees.out_degree(i), degrees.in_degree(j))?;
    Ok(local_compute_ms(spec, i) + latency + spec.model_size_mbit() / capacity)
}

/// Undirected weight of an edge: the slower of its two directions.
pub fn edge_static_delay(
    spec: &NetworkSpec,
    edge: EdgeKey,
    degrees: &Degrees,
) -> Result<f64, TimingError> {
    let a = static_delay(spec, edge.lo(), edge.hi(), degrees)?;
    let b = static_delay(spec, edge.hi(), edge.lo(), degrees)?;
    Ok(a.max(b))
}

/// Static delays of all overlay edges using overlay degrees; these are the
/// delays the multigraph is constructed from.
pub fn overlay_static_delays(
    spec: &NetworkSpec,
    edges: &BTreeSet<EdgeKey>,
) -> Result<BTreeMap<EdgeKey, f64>, TimingError> {
    let degrees = Degrees::from_edges(spec.silo_count(), edges.iter().copied());
    edges
        .iter()
        .map(|&e| edge_static_delay(spec, e, &degrees).map(|d| (e, d)))
        .collect()
}

/// `u * Tc(i)`: time for silo `i` to run its local updates.
pub fn local_compute_ms(spec: &NetworkSpec, i: usize) -> f64 {
    spec.local_updates() as f64 * spec.silo(i).compute_time_ms
}

/// Previous-round state of one directed edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeHistory {
    pub label: Label,
    pub delay_ms: f64,
}

/// One step of the round-recursive delay.
///
/// * `k == 0`, or strong after strong: the static delay.
/// * strong after weak: `max(receiver_compute_ms, static - d_{k-1})`, the
///   remaining transfer after the time already elapsed, floored at the
///   receiver's local compute time.
/// * weak after weak: `prev_cycle_ms + d_{k-1}`.
/// * weak after strong: `prev_cycle_ms`.
///
/// `prev_cycle_ms` is the realized cycle time of round `k - 1`.
pub fn delay_branch(
    k: usize,
    label: Label,
    prev: Option<EdgeHistory>,
    static_ms: f64,
    receiver_compute_ms: f64,
    prev_cycle_ms: f64,
) -> Option<f64> {
    if k == 0 {
        return Some(static_ms);
    }
    let prev = prev?;
    Some(match (label, prev.label) {
        (Label::Strong, Label::Strong) => static_ms,
        (Label::Strong, Label::Weak) => receiver_compute_ms.max(static_ms - prev.delay_ms),
        (Label::Weak, Label::Weak) => prev_cycle_ms + prev.delay_ms,
        (Label::Weak, Label::Strong) => prev_cycle_ms,
    })
}

/// How link capacities are shared when pricing a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegreeMode {
    /// Degrees of the overlay, fixed for the whole run.
    #[default]
    Overlay,
    /// Degrees of each state's strong subgraph (sensitivity analysis).
    PerState,
}

#[derive(Debug, Clone, PartialEq)]
struct LedgerEntry {
    current_ms: f64,
    history: Option<EdgeHistory>,
}

/// Per-directed-edge delay state for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLedger {
    n: usize,
    mode: DegreeMode,
    edges: BTreeSet<EdgeKey>,
    overlay_degrees: Degrees,
    entries: BTreeMap<(usize, usize), LedgerEntry>,
    prev_cycle_ms: f64,
    next_round: usize,
}

impl DelayLedger {
    /// Tracks both directions of every overlay edge, seeded with static
    /// delays. The cycle time before round 0 is the static maximum.
    pub fn new(
        spec: &NetworkSpec,
        edges: &BTreeSet<EdgeKey>,
        mode: DegreeMode,
    ) -> Result<Self, TimingError> {
        if edges.is_empty() {
            return Err(TimingError::EmptyOverlay);
        }
        let overlay_degrees = Degrees::from_edges(spec.silo_count(), edges.iter().copied());
        let mut entries = BTreeMap::new();
        let mut prev_cycle_ms = f64::NEG_INFINITY;
        for e in edges {
            for (i, j) in e.directions() {
                let d = static_delay(spec, i, j, &overlay_degrees)?;
                prev_cycle_ms = prev_cycle_ms.max(d);
                entries.insert(
                    (i, j),
                    LedgerEntry {
                        current_ms: d,
                        history: None,
                    },
                );
            }
        }
        Ok(DelayLedger {
            n: spec.silo_count(),
            mode,
            edges: edges.clone(),
            overlay_degrees,
            entries,
            prev_cycle_ms,
            next_round: 0,
        })
    }

    /// Current `d_k` of a directed edge.
    pub fn delay(&self, from: usize, to: usize) -> Option<f64> {
        self.entries.get(&(from, to)).map(|e| e.current_ms)
    }

    /// Cycle time of the last completed round (static maximum before any).
    pub fn prev_cycle_ms(&self) -> f64 {
        self.prev_cycle_ms
    }

    pub fn next_round(&self) -> usize {
        self.next_round
    }

    pub fn tracked_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.keys().copied()
    }

    /// Applies the delay recursion to one directed edge for round `k`.
    pub fn update_delay(
        &mut self,
        spec: &NetworkSpec,
        (from, to): (usize, usize),
        label: Label,
        k: usize,
        degrees: &Degrees,
    ) -> Result<f64, TimingError> {
        let prev_cycle_ms = self.prev_cycle_ms;
        let entry = self
            .entries
            .get_mut(&(from, to))
            .ok_or(TimingError::UntrackedEdge(from, to))?;
        if k > 0 && entry.history.is_none() {
            return Err(TimingError::Uninitialized { from, to, round: k });
        }
        let static_ms = static_delay(spec, from, to, degrees)?;
        let d = delay_branch(
            k,
            label,
            entry.history,
            static_ms,
            local_compute_ms(spec, to),
            prev_cycle_ms,
        )
        .expect("history checked above");
        entry.current_ms = d;
        entry.history = Some(EdgeHistory { label, delay_ms: d });
        Ok(d)
    }

    fn degrees_for(&self, state: &GraphState) -> Degrees {
        match self.mode {
            DegreeMode::Overlay => self.overlay_degrees.clone(),
            DegreeMode::PerState => {
                let strong = Degrees::from_edges(self.n, state.strong_edges());
                // Silos without strong edges keep their overlay share so weak
                // edges can still be priced at k = 0.
                let pick = |own: &[usize], fallback: &[usize]| -> Vec<usize> {
                    own.iter()
                        .zip(fallback)
                        .map(|(&a, &b)| if a == 0 { b } else { a })
                        .collect()
                };
                Degrees {
                    out: pick(&strong.out, &self.overlay_degrees.out),
                    inn: pick(&strong.inn, &self.overlay_degrees.inn),
                }
            }
        }
    }

    /// Runs round `k`: updates every tracked edge under `state`, then
    /// records and returns the round's cycle time.
    pub fn advance(
        &mut self,
        spec: &NetworkSpec,
        state: &GraphState,
        k: usize,
    ) -> Result<f64, TimingError> {
        if k != self.next_round {
            return Err(TimingError::RoundOutOfOrder {
                expected: self.next_round,
                got: k,
            });
        }
        let degrees = self.degrees_for(state);
        let edges: Vec<EdgeKey> = self.edges.iter().copied().collect();
        for e in edges {
            let label = state
                .label(e)
                .ok_or(TimingError::UntrackedEdge(e.lo(), e.hi()))?;
            for dir in e.directions() {
                self.update_delay(spec, dir, label, k, &degrees)?;
            }
        }
        let tau = round_cycle_time(state, self, spec);
        self.prev_cycle_ms = tau;
        self.next_round += 1;
        Ok(tau)
    }
}

/// Largest current delay over strong directed edges. A round without strong
/// edges costs only local computation, the slowest silo's `u * Tc`.
pub fn round_cycle_time(state: &GraphState, ledger: &DelayLedger, spec: &NetworkSpec) -> f64 {
    let strong_max = state
        .strong_edges()
        .flat_map(|e| e.directions())
        .filter_map(|(i, j)| ledger.delay(i, j))
        .fold(f64::NEG_INFINITY, f64::max);
    if strong_max.is_finite() {
        strong_max
    } else {
        (0..spec.silo_count())
            .map(|i| local_compute_ms(spec, i))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-round cycle times and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleStats {
    pub per_round_ms: Vec<f64>,
    pub mean_ms: f64,
}

pub fn mean_cycle_time(per_round_ms: &[f64]) -> Result<CycleStats, TimingError> {
    if per_round_ms.is_empty() {
        return Err(TimingError::EmptyRun);
    }
    let mean_ms = per_round_ms.iter().sum::<f64>() / per_round_ms.len() as f64;
    Ok(CycleStats {
        per_round_ms: per_round_ms.to_vec(),
        mean_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multigraph::GraphState;
    use crate::net_model::{LinkParams, SiloParams};

    fn silo(id: usize, compute_time_ms: f64, up: f64, down: f64) -> SiloParams {
        SiloParams {
            id,
            compute_time_ms,
            up_capacity: up,
            down_capacity: down,
        }
    }

    fn pair(model_size: f64, cap: f64) -> NetworkSpec {
        NetworkSpec::new(
            "pair",
            model_size,
            2,
            vec![silo(0, 5.0, cap, cap), silo(1, 5.0, cap, cap)],
            &[LinkParams {
                src: 0,
                dst: 1,
                latency_ms: 10.0,
            }],
        )
        .unwrap()
    }

    fn single_edge_degrees() -> Degrees {
        Degrees::from_edges(2, [EdgeKey::new(0, 1)])
    }

    #[test]
    fn capacity_takes_the_tighter_side() {
        let spec = pair(1.0, 1.0);
        assert_eq!(traffic_capacity(&spec, 0, 1, 2, 4).unwrap(), 0.25);
        assert_eq!(traffic_capacity(&spec, 0, 1, 1, 1).unwrap(), 1.0);
        assert!(matches!(
            traffic_capacity(&spec, 0, 1, 0, 1),
            Err(TimingError::ZeroDegree { silo: 0, .. })
        ));
    }

    #[test]
    fn orchestrator_download_is_not_the_bottleneck() {
        let base = NetworkSpec::new(
            "orch",
            1.0,
            1,
            vec![silo(0, 1.0, 10.0, 10.0), silo(1, 1.0, 1.0, 1.0)],
            &[LinkParams {
                src: 0,
                dst: 1,
                latency_ms: 1.0,
            }],
        )
        .unwrap();
        // peer uploads to the orchestrator that receives from 10 peers
        assert_eq!(traffic_capacity(&base, 1, 0, 1, 10).unwrap(), 1.0);
    }

    #[test]
    fn static_delay_arithmetic() {
        let d = static_delay(&pair(4.62, 1.0), 0, 1, &single_edge_degrees()).unwrap();
        assert!((d - 24.62).abs() < 1e-12);
        let d = static_delay(&pair(0.001, 1.0), 0, 1, &single_edge_degrees()).unwrap();
        assert!((d - 20.001).abs() < 1e-12);
        let d = static_delay(&pair(4.62, 0.5), 0, 1, &single_edge_degrees()).unwrap();
        assert!((d - 29.24).abs() < 1e-12);
    }

    #[test]
    fn static_delay_requires_a_link() {
        let spec = NetworkSpec::new(
            "path",
            1.0,
            1,
            (0..3).map(|i| silo(i, 1.0, 1.0, 1.0)).collect(),
            &[
                LinkParams {
                    src: 0,
                    dst: 1,
                    latency_ms: 1.0,
                },
                LinkParams {
                    src: 1,
                    dst: 2,
                    latency_ms: 1.0,
                },
            ],
        )
        .unwrap();
        let deg = Degrees::from_edges(3, [EdgeKey::new(0, 1), EdgeKey::new(1, 2)]);
        assert_eq!(
            static_delay(&spec, 0, 2, &deg),
            Err(TimingError::MissingLink(0, 2))
        );
    }

    fn hist(label: Label, delay_ms: f64) -> Option<EdgeHistory> {
        Some(EdgeHistory { label, delay_ms })
    }

    #[test]
    fn branch_table() {
        // k = 0 is always the static delay, whatever the label
        assert_eq!(
            delay_branch(0, Label::Weak, None, 24.62, 10.0, 99.0),
            Some(24.62)
        );
        // strong after strong
        assert_eq!(
            delay_branch(
                3,
                Label::Strong,
                hist(Label::Strong, 1.0),
                24.62,
                10.0,
                99.0
            ),
            Some(24.62)
        );
        // strong after weak with a large backlog hits the compute floor
        assert_eq!(
            delay_branch(3, Label::Strong, hist(Label::Weak, 30.0), 24.62, 10.0, 99.0),
            Some(10.0)
        );
        // weak after weak accumulates the previous cycle
        assert_eq!(
            delay_branch(3, Label::Weak, hist(Label::Weak, 20.0), 24.62, 10.0, 15.0),
            Some(35.0)
        );
        // weak after strong is the previous cycle
        assert_eq!(
            delay_branch(3, Label::Weak, hist(Label::Strong, 20.0), 24.62, 10.0, 15.0),
            Some(15.0)
        );
        assert_eq!(delay_branch(3, Label::Weak, None, 24.62, 10.0, 15.0), None);
    }

    #[test]
    fn ledger_rejects_uninitialized_and_untracked() {
        let spec = pair(4.62, 1.0);
        let edges = BTreeSet::from([EdgeKey::new(0, 1)]);
        let mut ledger = DelayLedger::new(&spec, &edges, DegreeMode::Overlay).unwrap();
        let deg = single_edge_degrees();
        assert_eq!(
            ledger.update_delay(&spec, (0, 1), Label::Strong, 1, &deg),
            Err(TimingError::Uninitialized {
                from: 0,
                to: 1,
                round: 1
            })
        );
        assert!(ledger
            .update_delay(&spec, (0, 1), Label::Strong, 0, &deg)
            .is_ok());
        let spec3 = NetworkSpec::new(
            "tri",
            1.0,
            1,
            (0..3).map(|i| silo(i, 1.0, 1.0, 1.0)).collect(),
            &[
                LinkParams {
                    src: 0,
                    dst: 1,
                    latency_ms: 1.0,
                },
                LinkParams {
                    src: 1,
                    dst: 2,
                    latency_ms: 1.0,
                },
            ],
        )
        .unwrap();
        let mut l3 = DelayLedger::new(
            &spec3,
            &BTreeSet::from([EdgeKey::new(0, 1)]),
            DegreeMode::Overlay,
        )
        .unwrap();
        assert_eq!(
            l3.update_delay(&spec3, (1, 2), Label::Strong, 0, &deg),
            Err(TimingError::UntrackedEdge(1, 2))
        );
    }

    #[test]
    fn ledger_advance_walks_the_branches() {
        let spec = pair(4.62, 1.0);
        let e = EdgeKey::new(0, 1);
        let edges = BTreeSet::from([e]);
        let mut ledger = DelayLedger::new(&spec, &edges, DegreeMode::Overlay).unwrap();
        assert!((ledger.prev_cycle_ms() - 24.62).abs() < 1e-12);
        let strong = GraphState::from_labels(2, [(e, Label::Strong)]);
        let weak = GraphState::from_labels(2, [(e, Label::Weak)]);

        let t0 = ledger.advance(&spec, &strong, 0).unwrap();
        assert!((t0 - 24.62).abs() < 1e-12);
        // weak after strong: delay = previous cycle; no strong edges, so the
        // round costs u * Tc = 10
        let t1 = ledger.advance(&spec, &weak, 1).unwrap();
        assert_eq!(t1, 10.0);
        assert!((ledger.delay(0, 1).unwrap() - 24.62).abs() < 1e-12);
        // weak after weak: 10 + 24.62
        ledger.advance(&spec, &weak, 2).unwrap();
        assert!((ledger.delay(0, 1).unwrap() - 34.62).abs() < 1e-12);
        // strong after weak: max(10, 24.62 - 34.62) = 10
        let t3 = ledger.advance(&spec, &strong, 3).unwrap();
        assert_eq!(t3, 10.0);
        assert_eq!(
            ledger.advance(&spec, &strong, 9),
            Err(TimingError::RoundOutOfOrder {
                expected: 4,
                got: 9
            })
        );
    }

    #[test]
    fn all_weak_round_costs_slowest_compute() {
        let spec = NetworkSpec::new(
            "pair",
            1.0,
            2,
            vec![silo(0, 5.0, 1.0, 1.0), silo(1, 8.0, 1.0, 1.0)],
            &[LinkParams {
                src: 0,
                dst: 1,
                latency_ms: 10.0,
            }],
        )
        .unwrap();
        let e = EdgeKey::new(0, 1);
        let ledger = DelayLedger::new(&spec, &BTreeSet::from([e]), DegreeMode::Overlay).unwrap();
        let weak = GraphState::from_labels(2, [(e, Label::Weak)]);
        assert_eq!(round_cycle_time(&weak, &ledger, &spec), 16.0);
    }

    #[test]
    fn per_state_degrees_widen_capacity() {
        // star 0-1, 0-2: with 1-0 weak, silo 0 uploads to one peer only
        let spec = NetworkSpec::new(
            "star",
            4.0,
            1,
            (0..3).map(|i| silo(i, 1.0, 1.0, 1.0)).collect(),
            &[
                LinkParams {
                    src: 0,
                    dst: 1,
                    latency_ms: 1.0,
                },
                LinkParams {
                    src: 0,
                    dst: 2,
                    latency_ms: 1.0,
                },
            ],
        )
        .unwrap();
        let (a, b) = (EdgeKey::new(0, 1), EdgeKey::new(0, 2));
        let edges = BTreeSet::from([a, b]);
        let state = GraphState::from_labels(3, [(a, Label::Weak), (b, Label::Strong)]);
        let mut fixed = DelayLedger::new(&spec, &edges, DegreeMode::Overlay).unwrap();
        let mut per_state = DelayLedger::new(&spec, &edges, DegreeMode::PerState).unwrap();
        let t_fixed = fixed.advance(&spec, &state, 0).unwrap();
        let t_state = per_state.advance(&spec, &state, 0).unwrap();
        // overlay: A = min(1/2, 1/1) = 0.5 -> 1 + 1 + 8 = 10
        assert_eq!(t_fixed, 10.0);
        // per state: A = 1 -> 1 + 1 + 4 = 6
        assert_eq!(t_state, 6.0);
    }

    #[test]
    fn mean_cycle() {
        assert_eq!(mean_cycle_time(&[10.0, 20.0]).unwrap().mean_ms, 15.0);
        assert_eq!(mean_cycle_time(&[]), Err(TimingError::EmptyRun));
    }
}
