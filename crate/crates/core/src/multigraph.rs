//! Multigraph construction from overlay delays, and parsing of the multigraph
//! into a periodic schedule of graph states.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::EdgeKey;
use crate::overlay::OverlayGraph;

/// Largest schedule period we agree to materialize.
pub const MAX_STATES: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq)]
pub enum MultigraphError {
    #[error("overlay has no edges")]
    EmptyOverlay,
    #[error("t must be >= 1")]
    ZeroCap,
    #[error("missing delay for overlay edge {0}")]
    MissingDelay(EdgeKey),
    #[error("delay of edge {0} must be > 0, got {1}")]
    NonPositiveDelay(EdgeKey, f64),
    #[error("multiplicity of edge {edge} is {n}, outside 1..={t}")]
    BadMultiplicity { edge: EdgeKey, n: u32, t: u32 },
    #[error("schedule period exceeds {MAX_STATES} states; use a smaller t")]
    TooManyStates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Strong,
    Weak,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Strong => "strong",
            Label::Weak => "weak",
        })
    }
}

/// Overlay edges with a multiplicity each: one strong copy plus `n - 1` weak
/// copies per pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Multigraph {
    n: usize,
    multiplicity: BTreeMap<EdgeKey, u32>,
    t_max: u32,
}

impl Multigraph {
    pub fn from_multiplicities(
        n: usize,
        multiplicity: BTreeMap<EdgeKey, u32>,
        t_max: u32,
    ) -> Result<Self, MultigraphError> {
        if t_max < 1 {
            return Err(MultigraphError::ZeroCap);
        }
        if multiplicity.is_empty() {
            return Err(MultigraphError::EmptyOverlay);
        }
        for (&edge, &m) in &multiplicity {
            if m < 1 || m > t_max {
                return Err(MultigraphError::BadMultiplicity {
                    edge,
                    n: m,
                    t: t_max,
                });
            }
        }
        Ok(Multigraph {
            n,
            multiplicity,
            t_max,
        })
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn multiplicities(&self) -> &BTreeMap<EdgeKey, u32> {
        &self.multiplicity
    }

    pub fn multiplicity(&self, e: EdgeKey) -> Option<u32> {
        self.multiplicity.get(&e).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.multiplicity.keys().copied()
    }

    /// The edge multiset: per pair, the strong copy followed by its weak copies.
    pub fn copies(&self) -> Vec<(EdgeKey, Label)> {
        self.multiplicity
            .iter()
            .flat_map(|(&e, &m)| {
                std::iter::once((e, Label::Strong))
                    .chain(std::iter::repeat_n((e, Label::Weak), m as usize - 1))
            })
            .collect()
    }

    /// Least common multiple of all multiplicities.
    pub fn period(&self) -> Result<u64, MultigraphError> {
        let mut l: u64 = 1;
        for &m in self.multiplicity.values() {
            l = l.lcm(&(m as u64));
            if l > MAX_STATES {
                return Err(MultigraphError::TooManyStates);
            }
        }
        Ok(l)
    }
}

/// Assigns each overlay edge `min(t, round(d / d_min))` parallel edges, with
/// `round` rounding half to even and the result clamped to at least 1.
pub fn construct_multigraph(
    overlay: &OverlayGraph,
    delays: &BTreeMap<EdgeKey, f64>,
    t: u32,
) -> Result<Multigraph, MultigraphError> {
    if t < 1 {
        return Err(MultigraphError::ZeroCap);
    }
    if overlay.edges().is_empty() {
        return Err(MultigraphError::EmptyOverlay);
    }
    let mut overlay_delays = Vec::with_capacity(overlay.edges().len());
    for &e in overlay.edges() {
        let d = *delays.get(&e).ok_or(MultigraphError::MissingDelay(e))?;
        if !(d.is_finite() && d > 0.0) {
            return Err(MultigraphError::NonPositiveDelay(e, d));
        }
        overlay_delays.push((e, d));
    }
    let d_min = overlay_delays
        .iter()
        .map(|&(_, d)| d)
        .fold(f64::INFINITY, f64::min);
    let multiplicity = overlay_delays
        .into_iter()
        .map(|(e, d)| {
            let ratio = (d / d_min).round_ties_even();
            let n = ratio.min(t as f64).max(1.0) as u32;
            (e, n)
        })
        .collect();
    Multigraph::from_multiplicities(overlay.node_count(), multiplicity, t)
}

/// One simple graph of the schedule: a strong/weak label per overlay edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphState {
    n: usize,
    labels: BTreeMap<EdgeKey, Label>,
}

impl GraphState {
    pub fn from_labels(n: usize, labels: impl IntoIterator<Item = (EdgeKey, Label)>) -> Self {
        GraphState {
            n,
            labels: labels.into_iter().collect(),
        }
    }

    pub fn all_strong(n: usize, edges: impl IntoIterator<Item = EdgeKey>) -> Self {
        Self::from_labels(n, edges.into_iter().map(|e| (e, Label::Strong)))
    }

    pub fn all_weak(n: usize, edges: impl IntoIterator<Item = EdgeKey>) -> Self {
        Self::from_labels(n, edges.into_iter().map(|e| (e, Label::Weak)))
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn label(&self, e: EdgeKey) -> Option<Label> {
        self.labels.get(&e).copied()
    }

    pub fn labels(&self) -> impl Iterator<Item = (EdgeKey, Label)> + '_ {
        self.labels.iter().map(|(&e, &l)| (e, l))
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.labels.keys().copied()
    }

    pub fn strong_edges(&self) -> impl Iterator<Item = EdgeKey> + '_ {
        self.labels
            .iter()
            .filter(|(_, &l)| l == Label::Strong)
            .map(|(&e, _)| e)
    }

    pub fn is_all_strong(&self) -> bool {
        self.labels.values().all(|&l| l == Label::Strong)
    }

    /// Strong neighbors of `v`, ascending.
    pub fn strong_neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .strong_edges()
            .filter(|e| e.contains(v))
            .map(|e| e.other(v))
            .collect();
        out.sort_unstable();
        out
    }

    /// Silos with no strong incident edge.
    pub fn isolated_nodes(&self) -> BTreeSet<usize> {
        let mut has_strong = vec![false; self.n];
        for e in self.strong_edges() {
            has_strong[e.lo()] = true;
            has_strong[e.hi()] = true;
        }
        (0..self.n).filter(|&v| !has_strong[v]).collect()
    }
}

/// Free-function form of [`GraphState::isolated_nodes`].
pub fn isolated_nodes(state: &GraphState) -> BTreeSet<usize> {
    state.isolated_nodes()
}

/// One period of graph states; round `k` uses `states[k % s_max]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSchedule {
    states: Vec<GraphState>,
}

impl StateSchedule {
    /// A period-1 schedule that always uses the overlay itself.
    pub fn constant(state: GraphState) -> Self {
        StateSchedule {
            states: vec![state],
        }
    }

    pub fn from_states(states: Vec<GraphState>) -> Self {
        assert!(!states.is_empty(), "schedule needs at least one state");
        StateSchedule { states }
    }

    pub fn s_max(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[GraphState] {
        &self.states
    }

    pub fn state(&self, index: usize) -> &GraphState {
        &self.states[index]
    }

    /// State used in round `k`.
    pub fn for_round(&self, k: usize) -> (usize, &GraphState) {
        let idx = k % self.states.len();
        (idx, &self.states[idx])
    }
}

/// Expands a multigraph into `lcm(n)` states. Each edge keeps a countdown
/// starting at its multiplicity; it is strong exactly when the countdown is
/// full, and the countdown wraps back to full after reaching 1.
pub fn parse_states(mg: &Multigraph) -> Result<StateSchedule, MultigraphError> {
    let s_max = mg.period()? as usize;
    let mut countdown: BTreeMap<EdgeKey, u32> = mg.multiplicity.clone();
    let mut states = Vec::with_capacity(s_max);
    for _ in 0..s_max {
        let mut labels = BTreeMap::new();
        for (&e, &full) in &mg.multiplicity {
            let c = countdown.get_mut(&e).expect("same key set");
            labels.insert(
                e,
                if *c == full {
                    Label::Strong
                } else {
                    Label::Weak
                },
            );
            *c = if *c == 1 { full } else { *c - 1 };
        }
        states.push(GraphState { n: mg.n, labels });
    }
    Ok(StateSchedule { states })
}
