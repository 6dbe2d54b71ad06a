//! Experiment orchestration: one network, one topology, one task, `K`
//! communication rounds of modelled time and training.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::EdgeKey;
use crate::learner::{self, LearnerError, ModelCache, SiloModel, SyntheticTask, TaskParams};
use crate::multigraph::{self, GraphState, Multigraph, MultigraphError, StateSchedule};
use crate::net_model::{self, CapacityScenario, NetError, NetworkSpec};
use crate::overlay::{self, OverlayError, OverlayGraph};
use crate::timing::{self, CycleStats, DegreeMode, DelayLedger, TimingError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Multigraph(#[from] MultigraphError),
    #[error(transparent)]
    Timing(#[from] TimingError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error("round {round}: {source}")]
    AtRound {
        round: usize,
        #[source]
        source: Box<SimError>,
    },
    #[error("training diverged: loss of silo {silo} is not finite")]
    Diverged { silo: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("cannot write {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl SimError {
    /// True for errors caused by bad input rather than by a failing run.
    pub fn is_validation(&self) -> bool {
        match self {
            SimError::Net(NetError::Io { .. }) => false,
            SimError::Net(_) | SimError::Overlay(_) | SimError::Config(_) => true,
            SimError::Multigraph(MultigraphError::TooManyStates) => true,
            SimError::Learner(LearnerError::InvalidTask(_)) => true,
            _ => false,
        }
    }

    fn at_round(round: usize) -> impl FnOnce(SimError) -> SimError {
        move |e| SimError::AtRound {
            round,
            source: Box::new(e),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Star,
    Mst,
    Ring,
    Multigraph,
}

impl Topology {
    pub const ALL: [Topology; 4] = [
        Topology::Star,
        Topology::Mst,
        Topology::Ring,
        Topology::Multigraph,
    ];
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Topology::Star => "star",
            Topology::Mst => "mst",
            Topology::Ring => "ring",
            Topology::Multigraph => "multigraph",
        })
    }
}

impl FromStr for Topology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Topology::ALL
            .into_iter()
            .find(|t| t.to_string() == s)
            .ok_or_else(|| {
                format!("unknown topology `{s}` (expected star, mst, ring or multigraph)")
            })
    }
}

fn default_t() -> u32 {
    5
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub network: PathBuf,
    pub topology: Topology,
    /// Cap on parallel edges per pair; only used by the multigraph.
    #[serde(default = "default_t")]
    pub t: u32,
    pub rounds: usize,
    /// Overrides the network file's local update count when set.
    #[serde(default)]
    pub local_updates: Option<u32>,
    #[serde(default)]
    pub task: TaskParams,
    pub seed: u64,
    #[serde(default)]
    pub capacity_scenario: CapacityScenario,
    /// Share capacity by per-state strong degrees instead of overlay degrees.
    #[serde(default)]
    pub per_state_degrees: bool,
}

impl ExperimentConfig {
    pub fn new(network: impl Into<PathBuf>, topology: Topology, rounds: usize, seed: u64) -> Self {
        ExperimentConfig {
            network: network.into(),
            topology,
            t: default_t(),
            rounds,
            local_updates: None,
            task: TaskParams::default(),
            seed,
            capacity_scenario: CapacityScenario::AsFile,
            per_state_degrees: false,
        }
    }

    /// Reads a JSON config; a relative network path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SimError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                SimError::Net(NetError::NotFound {
                    path: path.to_path_buf(),
                })
            } else {
                SimError::Net(NetError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| SimError::Config(format!("{}: line {}: {e}", path.display(), e.line())))?;
        if cfg.network.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.network = dir.join(&cfg.network);
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string_pretty(&value).expect("json value serializes")
    }

    /// Short stable hash of the config, used to name output directories.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_json().as_bytes());
        hex(&hash[..6])
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.rounds < 1 {
            return Err(SimError::Config("rounds must be >= 1".into()));
        }
        if self.t < 1 {
            return Err(SimError::Config("t must be >= 1".into()));
        }
        if self.local_updates == Some(0) {
            return Err(SimError::Config("local_updates must be >= 1".into()));
        }
        Ok(())
    }

    fn degree_mode(&self) -> DegreeMode {
        if self.per_state_degrees {
            DegreeMode::PerState
        } else {
            DegreeMode::Overlay
        }
    }

    /// Network after the capacity scenario and local-update override.
    pub fn effective_network(&self, base: &NetworkSpec) -> Result<NetworkSpec, SimError> {
        if let CapacityScenario::Orchestrator { hub, .. } = self.capacity_scenario {
            if hub >= base.silo_count() {
                return Err(SimError::Config(format!(
                    "capacity scenario references silo {hub}, network has {}",
                    base.silo_count()
                )));
            }
        }
        let mut spec = self.capacity_scenario.apply(base)?;
        if let Some(u) = self.local_updates {
            spec = spec.with_local_updates(u)?;
        }
        Ok(spec)
    }

    pub fn label(&self) -> String {
        match self.topology {
            Topology::Multigraph => format!("multigraph(t={})", self.t),
            other => other.to_string(),
        }
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Overlay, optional multigraph, and the state schedule of a topology.
#[derive(Debug, Clone)]
pub struct TopologyPlan {
    pub overlay: OverlayGraph,
    pub delays: BTreeMap<EdgeKey, f64>,
    pub multigraph: Option<Multigraph>,
    pub schedule: StateSchedule,
}

/// Builds the overlay for `topology` and its schedule. STAR, MST and RING use
/// their overlay in every round; the multigraph is built on the RING overlay.
pub fn plan_topology(
    spec: &NetworkSpec,
    topology: Topology,
    t: u32,
) -> Result<TopologyPlan, SimError> {
    let conn = net_model::connectivity_graph(spec);
    let overlay = match topology {
        Topology::Star => overlay::build_star(&conn)?,
        Topology::Mst => overlay::build_mst(&conn)?,
        Topology::Ring | Topology::Multigraph => overlay::build_ring(&conn)?,
    };
    overlay.check_subgraph_of(&conn)?;
    let delays = timing::overlay_static_delays(spec, overlay.edges())?;
    let (multigraph, schedule) = match topology {
        Topology::Multigraph => {
            let mg = multigraph::construct_multigraph(&overlay, &delays, t)?;
            let schedule = multigraph::parse_states(&mg)?;
            (Some(mg), schedule)
        }
        _ => (
            None,
            StateSchedule::constant(GraphState::all_strong(
                spec.silo_count(),
                overlay.edges().iter().copied(),
            )),
        ),
    };
    Ok(TopologyPlan {
        overlay,
        delays,
        multigraph,
        schedule,
    })
}

/// Metrics of one communication round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub state_index: usize,
    pub cycle_ms: f64,
    pub global_loss: f64,
    pub consensus_loss: f64,
    pub loss_min: f64,
    pub loss_median: f64,
    pub loss_max: f64,
}

#[derive(Debug, Clone)]
pub struct TrainRun {
    pub config: ExperimentConfig,
    pub network_name: String,
    pub plan: TopologyPlan,
    pub records: Vec<RoundRecord>,
    pub cycle: CycleStats,
    /// Modelled wall-clock time: the sum of all cycle times.
    pub total_time_ms: f64,
    pub final_models: Vec<SiloModel>,
    pub final_digest: String,
}

impl TrainRun {
    pub fn final_record(&self) -> &RoundRecord {
        self.records.last().expect("runs have at least one round")
    }

    /// Global objective at the mean model after the last round.
    pub fn final_loss(&self) -> f64 {
        self.final_record().consensus_loss
    }
}

fn quantiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    (v[0], median, v[n - 1])
}

fn models_digest(models: &[SiloModel]) -> String {
    let mut h = Sha256::new();
    for m in models {
        h.update((m.silo as u64).to_le_bytes());
        for w in &m.w {
            h.update(w.to_le_bytes());
        }
    }
    hex(&h.finalize())
}

/// Loads the configured network and runs the experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TrainRun, SimError> {
    let base = net_model::load_network(&config.network)?;
    run_on_network(config, &base)
}

/// Runs `config.rounds` rounds on an already loaded network. Each round
/// updates the delay ledger, records the cycle time, then trains.
pub fn run_on_network(config: &ExperimentConfig, base: &NetworkSpec) -> Result<TrainRun, SimError> {
    config.validate()?;
    let spec = config.effective_network(base)?;
    let plan = plan_topology(&spec, config.topology, config.t)?;
    let task = SyntheticTask::generate(&config.task, spec.silo_count(), config.seed)?;
    let u = spec.local_updates() as usize;

    let mut ledger = DelayLedger::new(&spec, plan.overlay.edges(), config.degree_mode())?;
    let mut models = learner::initial_models(&task);
    let mut cache = ModelCache::new(&models, plan.overlay.edges().iter().copied());
    let mut records = Vec::with_capacity(config.rounds);

    for k in 0..config.rounds {
        let (state_index, state) = plan.schedule.for_round(k);
        let cycle_ms = ledger
            .advance(&spec, state, k)
            .map_err(|e| SimError::at_round(k)(e.into()))?;
        let step = match config.topology {
            Topology::Multigraph => {
                learner::dpasgd_pp_round(&mut models, &mut cache, state, &task, k, u)
            }
            _ => learner::dpasgd_round(&mut models, &plan.overlay, &task, k, u),
        };
        step.map_err(|e| SimError::at_round(k)(e.into()))?;
        let loss = learner::global_loss(&models, &task);
        if let Some(silo) = loss.per_silo.iter().position(|l| !l.is_finite()) {
            return Err(SimError::at_round(k)(SimError::Diverged { silo }));
        }
        let (loss_min, loss_median, loss_max) = quantiles(&loss.per_silo);
        records.push(RoundRecord {
            round: k,
            state_index,
            cycle_ms,
            global_loss: loss.weighted,
            consensus_loss: loss.consensus,
            loss_min,
            loss_median,
            loss_max,
        });
    }

    let per_round: Vec<f64> = records.iter().map(|r| r.cycle_ms).collect();
    let cycle = timing::mean_cycle_time(&per_round)?;
    let total_time_ms = per_round.iter().sum();
    Ok(TrainRun {
        config: config.clone(),
        network_name: spec.name().to_string(),
        plan,
        records,
        cycle,
        total_time_ms,
        final_digest: models_digest(&models),
        final_models: models,
    })
}

/// Cycle times of `rounds` rounds without training.
pub fn simulate_cycle_times(
    spec: &NetworkSpec,
    plan: &TopologyPlan,
    rounds: usize,
    mode: DegreeMode,
) -> Result<Vec<f64>, SimError> {
    let mut ledger = DelayLedger::new(spec, plan.overlay.edges(), mode)?;
    (0..rounds)
        .map(|k| {
            let (_, state) = plan.schedule.for_round(k);
            ledger
                .advance(spec, state, k)
                .map_err(|e| SimError::at_round(k)(e.into()))
        })
        .collect()
}

/// Mean RING cycle time for the network and round count of `config`.
pub fn ring_baseline_cycle(config: &ExperimentConfig, base: &NetworkSpec) -> Result<f64, SimError> {
    let spec = config.effective_network(base)?;
    let plan = plan_topology(&spec, Topology::Ring, 1)?;
    let times = simulate_cycle_times(&spec, &plan, config.rounds.max(1), config.degree_mode())?;
    Ok(timing::mean_cycle_time(&times)?.mean_ms)
}

/// Like [`ring_baseline_cycle`], but `None` when the connectivity graph is
/// not complete.
pub fn ring_baseline_if_possible(
    config: &ExperimentConfig,
    base: &NetworkSpec,
) -> Result<Option<f64>, SimError> {
    match ring_baseline_cycle(config, base) {
        Ok(m) => Ok(Some(m)),
        Err(SimError::Overlay(OverlayError::NotComplete)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Full result file: config echo, overlay, schedule, per-round CSV, summary.
pub fn render_result(run: &TrainRun) -> String {
    let mut out = String::new();
    out.push_str("[config]\n");
    out.push_str(&run.config.to_json());
    out.push_str("\n\n[overlay]\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "edge", "delay_ms", "multiplicity"])
        .unwrap();
    for e in run.plan.overlay.edges() {
        let n = run
            .plan
            .multigraph
            .as_ref()
            .and_then(|mg| mg.multiplicity(*e))
            .unwrap_or(1);
        w.write_record([
            run.plan.overlay.kind().to_string(),
            e.to_string(),
            run.plan.delays[e].to_string(),
            n.to_string(),
        ])
        .unwrap();
    }
    out.push_str(&csv_string(w));
    out.push_str("\n[schedule]\n");
    out.push_str(&render_schedule(&run.plan.schedule));
    out.push_str("\n[rounds]\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "round",
        "state_index",
        "cycle_ms",
        "global_loss",
        "consensus_loss",
        "loss_min",
        "loss_median",
        "loss_max",
    ])
    .unwrap();
    for r in &run.records {
        w.write_record([
            r.round.to_string(),
            r.state_index.to_string(),
            r.cycle_ms.to_string(),
            r.global_loss.to_string(),
            r.consensus_loss.to_string(),
            r.loss_min.to_string(),
            r.loss_median.to_string(),
            r.loss_max.to_string(),
        ])
        .unwrap();
    }
    out.push_str(&csv_string(w));
    out.push_str("\n[summary]\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).unwrap();
    for (k, v) in [
        ("network", run.network_name.clone()),
        ("topology", run.config.label()),
        ("rounds", run.records.len().to_string()),
        ("s_max", run.plan.schedule.s_max().to_string()),
        ("mean_cycle_ms", run.cycle.mean_ms.to_string()),
        ("total_time_ms", run.total_time_ms.to_string()),
        (
            "final_global_loss",
            run.final_record().global_loss.to_string(),
        ),
        ("final_consensus_loss", run.final_loss().to_string()),
        ("final_models_sha256", run.final_digest.clone()),
    ] {
        w.write_record([k, v.as_str()]).unwrap();
    }
    out.push_str(&csv_string(w));
    out
}

/// Per-state edge labels and isolated silos as CSV.
pub fn render_schedule(schedule: &StateSchedule) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["state", "edge", "label"]).unwrap();
    for (s, state) in schedule.states().iter().enumerate() {
        for (e, label) in state.labels() {
            w.write_record([s.to_string(), e.to_string(), label.to_string()])
                .unwrap();
        }
    }
    csv_string(w)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn write_result(run: &TrainRun, path: impl AsRef<Path>) -> Result<(), SimError> {
    let path = path.as_ref();
    fs::write(path, render_result(run)).map_err(|source| SimError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// One row of a topology comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub label: String,
    pub topology: Topology,
    pub t: u32,
    pub mean_cycle_ms: f64,
    pub total_time_ms: f64,
    pub final_loss: f64,
    /// RING mean cycle time divided by this row's; `None` when the network
    /// cannot host a ring.
    pub reduction_vs_ring: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub runs: Vec<TrainRun>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "topology",
            "t",
            "mean_cycle_ms",
            "total_time_ms",
            "final_loss",
            "reduction_vs_ring",
        ])
        .unwrap();
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.t.to_string(),
                r.mean_cycle_ms.to_string(),
                r.total_time_ms.to_string(),
                r.final_loss.to_string(),
                r.reduction_vs_ring
                    .map(|f| format!("{f:.2}"))
                    .unwrap_or_default(),
            ])
            .unwrap();
        }
        csv_string(w)
    }
}

/// Runs every config (concurrently) and tabulates them against RING. The
/// configs must share network, task and seed.
pub fn compare_topologies(configs: &[ExperimentConfig]) -> Result<Comparison, SimError> {
    let first = configs
        .first()
        .ok_or_else(|| SimError::Config("comparison needs at least two configs".into()))?;
    if configs.len() < 2 {
        return Err(SimError::Config(
            "comparison needs at least two configs".into(),
        ));
    }
    for c in &configs[1..] {
        if c.network != first.network
            || c.task != first.task
            || c.seed != first.seed
            || c.capacity_scenario != first.capacity_scenario
            || c.local_updates != first.local_updates
        {
            return Err(SimError::Config(format!(
                "{} does not share network, task and seed with {}",
                c.label(),
                first.label()
            )));
        }
    }
    let base = net_model::load_network(&first.network)?;
    let runs: Vec<TrainRun> = configs
        .par_iter()
        .map(|c| run_on_network(c, &base))
        .collect::<Result<_, _>>()?;
    let ring_mean = match runs.iter().find(|r| r.config.topology == Topology::Ring) {
        Some(r) => Some(r.cycle.mean_ms),
        None => ring_baseline_if_possible(first, &base)?,
    };
    let rows = runs
        .iter()
        .map(|r| ComparisonRow {
            label: r.config.label(),
            topology: r.config.topology,
            t: r.config.t,
            mean_cycle_ms: r.cycle.mean_ms,
            total_time_ms: r.total_time_ms,
            final_loss: r.final_loss(),
            reduction_vs_ring: ring_mean.map(|m| m / r.cycle.mean_ms),
        })
        .collect();
    Ok(Comparison { rows, runs })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub t: u32,
    pub mean_cycle_ms: f64,
    pub total_time_ms: f64,
    pub final_loss: f64,
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "mean_cycle_ms", "total_time_ms", "final_loss"])
        .unwrap();
    for r in rows {
        w.write_record([
            r.t.to_string(),
            r.mean_cycle_ms.to_string(),
            r.total_time_ms.to_string(),
            r.final_loss.to_string(),
        ])
        .unwrap();
    }
    csv_string(w)
}

/// One multigraph run per `t`, sharing the base config's seed.
pub fn sweep_t(base: &ExperimentConfig, ts: &[u32]) -> Result<Vec<SweepRow>, SimError> {
    if let Some(&bad) = ts.iter().find(|&&t| t < 1) {
        return Err(SimError::Config(format!("t must be >= 1, got {bad}")));
    }
    let network = net_model::load_network(&base.network)?;
    ts.par_iter()
        .map(|&t| {
            let cfg = ExperimentConfig {
                topology: Topology::Multigraph,
                t,
                ..base.clone()
            };
            let run = run_on_network(&cfg, &network)?;
            Ok(SweepRow {
                t,
                mean_cycle_ms: run.cycle.mean_ms,
                total_time_ms: run.total_time_ms,
                final_loss: run.final_loss(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net_model::parse_network;

    fn triangle() -> NetworkSpec {
        parse_network(
            r#"{"name": "tri", "model_size_mbit": 0.001, "local_updates": 1,
            "silos": [
              {"id": 0, "compute_ms": 1, "up_gbps": 1, "down_gbps": 1},
              {"id": 1, "compute_ms": 1, "up_gbps": 1, "down_gbps": 1},
              {"id": 2, "compute_ms": 1, "up_gbps": 1, "down_gbps": 1}],
            "links": [
              {"src": 0, "dst": 1, "latency_ms": 9},
              {"src": 1, "dst": 2, "latency_ms": 19},
              {"src": 0, "dst": 2, "latency_ms": 49}]}"#,
        )
        .unwrap()
    }

    fn small_task() -> TaskParams {
        TaskParams {
            dim: 3,
            samples_per_silo: 16,
            batch: 4,
            ..TaskParams::default()
        }
    }

    #[test]
    fn triangle_plan_multiplicities() {
        let plan = plan_topology(&triangle(), Topology::Multigraph, 5).unwrap();
        let mg = plan.multigraph.unwrap();
        let n: Vec<u32> = mg.multiplicities().values().copied().collect();
        assert_eq!(n, vec![1, 5, 2]);
        assert_eq!(plan.schedule.s_max(), 10);
    }

    #[test]
    fn single_round_uses_state_zero() {
        let mut cfg = ExperimentConfig::new("unused", Topology::Multigraph, 1, 3);
        cfg.task = small_task();
        let run = run_on_network(&cfg, &triangle()).unwrap();
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.records[0].state_index, 0);
        assert!(run.plan.schedule.state(0).is_all_strong());
    }

    #[test]
    fn state_index_cycles_and_total_time_adds_up() {
        let mut cfg = ExperimentConfig::new("unused", Topology::Multigraph, 25, 3);
        cfg.task = small_task();
        let run = run_on_network(&cfg, &triangle()).unwrap();
        for r in &run.records {
            assert_eq!(r.state_index, r.round % 10);
        }
        let sum: f64 = run.records.iter().map(|r| r.cycle_ms).sum();
        assert_eq!(run.total_time_ms, sum);
    }

    #[test]
    fn errors_carry_round_context() {
        let mut cfg = ExperimentConfig::new("unused", Topology::Ring, 3, 3);
        cfg.task = TaskParams {
            lr: learner::LrSchedule::Constant { rate: 1e200 },
            ..small_task()
        };
        let err = run_on_network(&cfg, &triangle()).unwrap_err();
        assert!(matches!(err, SimError::AtRound { .. }), "{err}");
        assert!(!err.is_validation());
    }

    #[test]
    fn validation_errors_are_flagged() {
        let cfg = ExperimentConfig::new("unused", Topology::Ring, 0, 3);
        assert!(run_on_network(&cfg, &triangle())
            .unwrap_err()
            .is_validation());
        let mut cfg = ExperimentConfig::new("unused", Topology::Ring, 2, 3);
        cfg.capacity_scenario = CapacityScenario::Orchestrator {
            hub: 9,
            capacity: 10.0,
        };
        assert!(run_on_network(&cfg, &triangle())
            .unwrap_err()
            .is_validation());
    }

    #[test]
    fn homogeneous_scenario_changes_only_capacities() {
        let mut cfg = ExperimentConfig::new("unused", Topology::Ring, 2, 3);
        cfg.capacity_scenario = CapacityScenario::Homogeneous { capacity: 2.5 };
        let base = triangle();
        let eff = cfg.effective_network(&base).unwrap();
        assert!(eff
            .silos()
            .iter()
            .all(|s| s.up_capacity == 2.5 && s.down_capacity == 2.5));
        for (a, b) in eff.silos().iter().zip(base.silos()) {
            assert_eq!(a.compute_time_ms, b.compute_time_ms);
        }
        assert_eq!(
            eff.links().collect::<Vec<_>>(),
            base.links().collect::<Vec<_>>()
        );
        assert!(cfg.to_json().contains("\"capacity\": 2.5"));
    }

    #[test]
    fn config_json_round_trips() {
        let mut cfg = ExperimentConfig::new("net.json", Topology::Multigraph, 10, 42);
        cfg.capacity_scenario = CapacityScenario::Orchestrator {
            hub: 1,
            capacity: 10.0,
        };
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.digest().len(), 12);
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn quantiles_of_even_and_odd() {
        assert_eq!(quantiles(&[3.0, 1.0, 2.0]), (1.0, 2.0, 3.0));
        assert_eq!(quantiles(&[4.0, 1.0, 2.0, 3.0]), (1.0, 2.5, 4.0));
    }

    #[test]
    fn topology_names() {
        for t in Topology::ALL {
            assert_eq!(t.to_string().parse::<Topology>(), Ok(t));
        }
    }
}
