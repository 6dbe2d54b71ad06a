//! DPASGD and DPASGD++ on a synthetic convex federated task.
//!
//! A communication round spans `u + 1` iterations. The first iteration of the
//! round is the aggregation slot; the remaining `u` are local SGD steps. In
//! DPASGD++ a silo with no strong in-neighbour in the round's state spends the
//! aggregation slot on one more local step instead.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::EdgeKey;
use crate::multigraph::{GraphState, Label};
use crate::overlay::OverlayGraph;

#[derive(Debug, Error, PartialEq)]
pub enum LearnerError {
    #[error("non-finite gradient at silo {silo}, iteration {iteration}")]
    NonFinite { silo: usize, iteration: usize },
    #[error("model cache has no entry for edge {from}->{to}")]
    CacheMiss { from: usize, to: usize },
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("normal equations are singular")]
    Singular,
    #[error("closed-form optimum only exists for least-squares tasks")]
    NoClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// `0.5 * (x.w - y)^2`
    LeastSquares,
    /// `log(1 + exp(x.w)) - y * x.w` with `y` in {0, 1}
    Logistic,
}

/// Learning rate as a function of the global iteration index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LrSchedule {
    Constant {
        rate: f64,
    },
    /// `initial / (1 + decay * k)`
    InverseDecay {
        initial: f64,
        decay: f64,
    },
}

impl LrSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        match *self {
            LrSchedule::Constant { rate } => rate,
            LrSchedule::InverseDecay { initial, decay } => {
                initial / (1.0 + decay * iteration as f64)
            }
        }
    }
}

/// Parameters of the synthetic task generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskParams {
    pub dim: usize,
    pub samples_per_silo: usize,
    /// Scale of each silo's deviation from the shared regressor.
    pub skew: f64,
    pub loss: LossKind,
    pub batch: usize,
    pub lr: LrSchedule,
    /// Standard deviation of the label noise (least squares only).
    pub noise: f64,
}

impl Default for TaskParams {
    fn default() -> Self {
        TaskParams {
            dim: 20,
            samples_per_silo: 200,
            skew: 0.5,
            loss: LossKind::LeastSquares,
            batch: 32,
            lr: LrSchedule::InverseDecay {
                initial: 0.05,
                decay: 0.002,
            },
            noise: 0.1,
        }
    }
}

/// Private data of one silo, row-major features.
#[derive(Debug, Clone, PartialEq)]
pub struct SiloData {
    features: Vec<f64>,
    targets: Vec<f64>,
}

impl SiloData {
    pub fn new(features: Vec<f64>, targets: Vec<f64>, dim: usize) -> Result<Self, LearnerError> {
        if dim == 0 || features.len() != targets.len() * dim {
            return Err(LearnerError::InvalidTask(format!(
                "{} feature values do not form {} rows of width {dim}",
                features.len(),
                targets.len()
            )));
        }
        Ok(SiloData { features, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    fn row(&self, r: usize, dim: usize) -> &[f64] {
        &self.features[r * dim..(r + 1) * dim]
    }
}

/// Federated task: one dataset per silo plus the optimisation settings shared
/// by every silo.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    dim: usize,
    loss: LossKind,
    batch: usize,
    lr: LrSchedule,
    seed: u64,
    silos: Vec<SiloData>,
    importance: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream per (seed, silo, round, slot).
pub fn step_rng(seed: u64, silo: usize, round: usize, slot: usize) -> ChaCha8Rng {
    let mut h = mix(seed);
    for part in [silo as u64, round as u64, slot as u64] {
        h = mix(h ^ part);
    }
    ChaCha8Rng::seed_from_u64(h)
}

impl SyntheticTask {
    pub fn from_data(
        silos: Vec<SiloData>,
        dim: usize,
        loss: LossKind,
        batch: usize,
        lr: LrSchedule,
        seed: u64,
    ) -> Result<Self, LearnerError> {
        if silos.is_empty() {
            return Err(LearnerError::InvalidTask("no silos".into()));
        }
        if batch == 0 {
            return Err(LearnerError::InvalidTask("batch size must be >= 1".into()));
        }
        for (i, s) in silos.iter().enumerate() {
            if s.len() < batch {
                return Err(LearnerError::InvalidTask(format!(
                    "silo {i} has {} samples, fewer than batch size {batch}",
                    s.len()
                )));
            }
            if s.features.len() != s.len() * dim {
                return Err(LearnerError::InvalidTask(format!(
                    "silo {i} rows do not have width {dim}"
                )));
            }
        }
        let total: usize = silos.iter().map(SiloData::len).sum();
        let importance = silos
            .iter()
            .map(|s| s.len() as f64 / total as f64)
            .collect();
        Ok(SyntheticTask {
            dim,
            loss,
            batch,
            lr,
            seed,
            silos,
            importance,
        })
    }

    /// Draws a non-IID task: each silo regresses on the shared vector plus a
    /// silo-specific perturbation scaled by `skew`.
    pub fn generate(params: &TaskParams, n_silos: usize, seed: u64) -> Result<Self, LearnerError> {
        if params.dim == 0 {
            return Err(LearnerError::InvalidTask("dim must be >= 1".into()));
        }
        if !(params.skew.is_finite() && params.skew >= 0.0) {
            return Err(LearnerError::InvalidTask("skew must be >= 0".into()));
        }
        let d = params.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 0x7a5c_0000));
        let shared: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let mut silos = Vec::with_capacity(n_silos);
        for _ in 0..n_silos {
            let local: Vec<f64> = shared
                .iter()
                .map(|&g| g + params.skew * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let n = params.samples_per_silo;
            let features: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
            let targets = (0..n)
                .map(|r| {
                    let z = dot(&features[r * d..(r + 1) * d], &local);
                    match params.loss {
                        LossKind::LeastSquares => {
                            z + params.noise * rng.sample::<f64, _>(StandardNormal)
                        }
                        LossKind::Logistic => {
                            if rng.random::<f64>() < sigmoid(z) {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    }
                })
                .collect();
            silos.push(SiloData::new(features, targets, d)?);
        }
        Self::from_data(silos, d, params.loss, params.batch, params.lr, seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn silo_count(&self) -> usize {
        self.silos.len()
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn lr(&self) -> LrSchedule {
        self.lr
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `p_i = n_i / sum_j n_j`
    pub fn importance(&self) -> &[f64] {
        &self.importance
    }

    pub fn silo_data(&self, silo: usize) -> &SiloData {
        &self.silos[silo]
    }

    fn sample_loss(&self, silo: usize, row: usize, w: &[f64]) -> f64 {
        let data = &self.silos[silo];
        let z = dot(data.row(row, self.dim), w);
        let y = data.targets[row];
        match self.loss {
            LossKind::LeastSquares => 0.5 * (z - y) * (z - y),
            LossKind::Logistic => softplus(z) - y * z,
        }
    }

    /// Mean loss over the given rows.
    pub fn batch_loss(&self, silo: usize, rows: &[usize], w: &[f64]) -> f64 {
        rows.iter()
            .map(|&r| self.sample_loss(silo, r, w))
            .sum::<f64>()
            / rows.len() as f64
    }

    /// Mean gradient over the given rows.
    pub fn batch_gradient(&self, silo: usize, rows: &[usize], w: &[f64]) -> Vec<f64> {
        let data = &self.silos[silo];
        let mut g = vec![0.0; self.dim];
        for &r in rows {
            let x = data.row(r, self.dim);
            let z = dot(x, w);
            let y = data.targets[r];
            let scale = match self.loss {
                LossKind::LeastSquares => z - y,
                LossKind::Logistic => sigmoid(z) - y,
            };
            for (gc, xc) in g.iter_mut().zip(x) {
                *gc += scale * xc;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        g.iter_mut().for_each(|v| *v *= inv);
        g
    }

    /// Mean loss of `w` over all of silo `silo`'s data.
    pub fn silo_loss(&self, silo: usize, w: &[f64]) -> f64 {
        let rows: Vec<usize> = (0..self.silos[silo].len()).collect();
        self.batch_loss(silo, &rows, w)
    }

    /// Minibatch rows for one iteration: the whole dataset when the batch
    /// covers it, otherwise `b` distinct rows in ascending order.
    pub fn draw_batch(&self, silo: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n = self.silos[silo].len();
        if self.batch >= n {
            return (0..n).collect();
        }
        let mut rows = index::sample(rng, n, self.batch).into_vec();
        rows.sort_unstable();
        rows
    }

    /// Minimiser of the importance-weighted least-squares objective from the
    /// pooled normal equations.
    pub fn least_squares_optimum(&self) -> Result<Vec<f64>, LearnerError> {
        if self.loss != LossKind::LeastSquares {
            return Err(LearnerError::NoClosedForm);
        }
        let d = self.dim;
        let mut gram = DMatrix::<f64>::zeros(d, d);
        let mut rhs = DVector::<f64>::zeros(d);
        // p_i / n_i is the same for every silo, so pooling the rows is exact
        for data in &self.silos {
            let x = DMatrix::from_row_slice(data.len(), d, &data.features);
            let y = DVector::from_column_slice(&data.targets);
            gram += x.transpose() * &x;
            rhs += x.transpose() * y;
        }
        let chol = gram.cholesky().ok_or(LearnerError::Singular)?;
        Ok(chol.solve(&rhs).iter().copied().collect())
    }
}

/// One silo's model.
#[derive(Debug, Clone, PartialEq)]
pub struct SiloModel {
    pub silo: usize,
    pub w: Vec<f64>,
}

/// Every silo starting from the zero vector.
pub fn initial_models(task: &SyntheticTask) -> Vec<SiloModel> {
    (0..task.silo_count())
        .map(|silo| SiloModel {
            silo,
            w: vec![0.0; task.dim()],
        })
        .collect()
}

/// One SGD step on silo data for `(round, slot)`:
/// `w <- w - alpha_k * mean minibatch gradient` with `k = round * (u + 1) + slot`.
pub fn local_sgd_step(
    model: &mut SiloModel,
    task: &SyntheticTask,
    round: usize,
    slot: usize,
    local_updates: usize,
) -> Result<(), LearnerError> {
    let iteration = round * (local_updates + 1) + slot;
    let mut rng = step_rng(task.seed(), model.silo, round, slot);
    let rows = task.draw_batch(model.silo, &mut rng);
    let grad = task.batch_gradient(model.silo, &rows, &model.w);
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(LearnerError::NonFinite {
            silo: model.silo,
            iteration,
        });
    }
    let alpha = task.lr().at(iteration);
    for (w, g) in model.w.iter_mut().zip(&grad) {
        *w -= alpha * g;
    }
    if model.w.iter().any(|w| !w.is_finite()) {
        return Err(LearnerError::NonFinite {
            silo: model.silo,
            iteration,
        });
    }
    Ok(())
}

fn local_phase(
    models: &mut [SiloModel],
    task: &SyntheticTask,
    round: usize,
    local_updates: usize,
) -> Result<(), LearnerError> {
    models.par_iter_mut().try_for_each(|m| {
        for slot in 1..=local_updates {
            local_sgd_step(m, task, round, slot, local_updates)?;
        }
        Ok(())
    })
}

/// Uniform average of `members` (ascending ids), summed in that order.
fn uniform_average<'a>(members: &[usize], model_of: impl Fn(usize) -> &'a [f64]) -> Vec<f64> {
    let dim = model_of(members[0]).len();
    let mut acc = vec![0.0; dim];
    for &j in members {
        for (a, v) in acc.iter_mut().zip(model_of(j)) {
            *a += v;
        }
    }
    let count = members.len() as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    acc
}

/// Row-stochastic consensus weights of one silo: uniform over itself and its
/// strong in-neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusWeights {
    pub silo: usize,
    pub weights: BTreeMap<usize, f64>,
}

pub fn consensus_weights(silo: usize, strong_neighbors: &[usize]) -> ConsensusWeights {
    let mut members: Vec<usize> = strong_neighbors.to_vec();
    members.push(silo);
    members.sort_unstable();
    members.dedup();
    let share = 1.0 / members.len() as f64;
    ConsensusWeights {
        silo,
        weights: members.into_iter().map(|j| (j, share)).collect(),
    }
}

/// One DPASGD round on a fixed overlay: every silo averages with its overlay
/// neighbours, then runs `u` local steps.
pub fn dpasgd_round(
    models: &mut [SiloModel],
    overlay: &OverlayGraph,
    task: &SyntheticTask,
    round: usize,
    local_updates: usize,
) -> Result<(), LearnerError> {
    let snapshot: Vec<Vec<f64>> = models.iter().map(|m| m.w.clone()).collect();
    for m in models.iter_mut() {
        let mut members = overlay.neighbors(m.silo);
        members.push(m.silo);
        members.sort_unstable();
        m.w = uniform_average(&members, |j| &snapshot[j]);
    }
    local_phase(models, task, round, local_updates)
}

/// Last model of `from` received by `to` over a strong connection.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub model: Vec<f64>,
    /// Round whose aggregation delivered the model; `None` for the initial one.
    pub captured_round: Option<usize>,
    /// Consecutive weak rounds since the model was delivered.
    pub staleness: usize,
}

/// Stale-model store indexed by directed overlay edge `(from, to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCache {
    entries: BTreeMap<(usize, usize), CacheEntry>,
}

impl ModelCache {
    /// Seeds both directions of every edge with the initial models.
    pub fn new(models: &[SiloModel], edges: impl IntoIterator<Item = EdgeKey>) -> Self {
        let mut entries = BTreeMap::new();
        for e in edges {
            for (from, to) in e.directions() {
                entries.insert(
                    (from, to),
                    CacheEntry {
                        model: models[from].w.clone(),
                        captured_round: None,
                        staleness: 0,
                    },
                );
            }
        }
        ModelCache { entries }
    }

    pub fn entry(&self, from: usize, to: usize) -> Option<&CacheEntry> {
        self.entries.get(&(from, to))
    }

    /// Staleness `h` of the edge `from -> to`.
    pub fn staleness(&self, from: usize, to: usize) -> Option<usize> {
        self.entry(from, to).map(|e| e.staleness)
    }

    fn model(&self, from: usize, to: usize) -> Result<&[f64], LearnerError> {
        self.entries
            .get(&(from, to))
            .map(|e| e.model.as_slice())
            .ok_or(LearnerError::CacheMiss { from, to })
    }

    /// Strong edges deliver the sender's current model; weak edges age by one.
    fn observe(
        &mut self,
        state: &GraphState,
        models: &[SiloModel],
        round: usize,
    ) -> Result<(), LearnerError> {
        for (e, label) in state.labels() {
            for (from, to) in e.directions() {
                let entry = self
                    .entries
                    .get_mut(&(from, to))
                    .ok_or(LearnerError::CacheMiss { from, to })?;
                match label {
                    Label::Strong => {
                        entry.model.clone_from(&models[from].w);
                        entry.captured_round = Some(round);
                        entry.staleness = 0;
                    }
                    Label::Weak => entry.staleness += 1,
                }
            }
        }
        Ok(())
    }
}

/// One DPASGD++ round under `state`. Silos with at least one strong
/// in-neighbour average uniformly over themselves and those neighbours'
/// delivered models; isolated silos take a local step in the aggregation
/// slot. All silos then run `u` local steps.
pub fn dpasgd_pp_round(
    models: &mut [SiloModel],
    cache: &mut ModelCache,
    state: &GraphState,
    task: &SyntheticTask,
    round: usize,
    local_updates: usize,
) -> Result<(), LearnerError> {
    cache.observe(state, models, round)?;
    let snapshot: Vec<Vec<f64>> = models.iter().map(|m| m.w.clone()).collect();
    for m in models.iter_mut() {
        let i = m.silo;
        let strong = state.strong_neighbors(i);
        if strong.is_empty() {
            local_sgd_step(m, task, round, 0, local_updates)?;
            continue;
        }
        for &j in &strong {
            cache.model(j, i)?;
        }
        let mut members = strong;
        members.push(i);
        members.sort_unstable();
        m.w = uniform_average(&members, |j| {
            if j == i {
                snapshot[i].as_slice()
            } else {
                cache.model(j, i).expect("checked above")
            }
        });
    }
    local_phase(models, task, round, local_updates)
}

/// Losses of a set of silo models.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalLoss {
    /// Loss of each silo's own model on its own data.
    pub per_silo: Vec<f64>,
    /// `sum_i p_i * per_silo[i]`
    pub weighted: f64,
    /// Global objective at the uniform mean of all silo models.
    pub consensus: f64,
}

/// Global objective `sum_i p_i * L_i(w)` at a single model.
pub fn objective(task: &SyntheticTask, w: &[f64]) -> f64 {
    task.importance()
        .iter()
        .enumerate()
        .map(|(i, p)| p * task.silo_loss(i, w))
        .sum()
}

pub fn mean_model(models: &[SiloModel]) -> Vec<f64> {
    let members: Vec<usize> = (0..models.len()).collect();
    uniform_average(&members, |j| &models[j].w)
}

pub fn global_loss(models: &[SiloModel], task: &SyntheticTask) -> GlobalLoss {
    let per_silo: Vec<f64> = models
        .iter()
        .map(|m| task.silo_loss(m.silo, &m.w))
        .collect();
    let weighted = per_silo
        .iter()
        .zip(task.importance())
        .map(|(l, p)| p * l)
        .sum();
    let consensus = objective(task, &mean_model(models));
    GlobalLoss {
        per_silo,
        weighted,
        consensus,
    }
}
