//! Multigraph topology design for cross-silo federated learning.
//!
//! The crate builds an overlay over a silo network, expands it into a
//! multigraph with strong and weak parallel edges, parses that multigraph
//! into a periodic schedule of graph states, prices each round with a
//! closed-form delay model, and trains a synthetic convex task with
//! DPASGD or DPASGD++.
//!
//! Module map:
//!
//! * [`net_model`]: network files, validation, connectivity graph
//! * [`overlay`]: Christofides ring, STAR and MST overlays
//! * [`multigraph`]: multigraph construction and state parsing
//! * [`timing`]: static delay, per-round delay ledger, cycle time
//! * [`learner`]: synthetic task, DPASGD and DPASGD++ rounds
//! * [`sim`]: experiment runs, comparisons and `t` sweeps
//! * [`netgen`]: synthetic network generator

pub mod graph;
pub mod learner;
pub mod multigraph;
pub mod net_model;
pub mod netgen;
pub mod overlay;
pub mod sim;
pub mod timing;

pub use graph::{EdgeKey, WeightedGraph};
pub use multigraph::{GraphState, Label, Multigraph, StateSchedule};
pub use net_model::{CapacityScenario, NetworkSpec};
pub use overlay::{OverlayGraph, OverlayKind};
pub use sim::{ExperimentConfig, Topology, TrainRun};
