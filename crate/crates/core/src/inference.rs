//! Belief propagation on the bipartite graph, plus the label-propagation
//! baseline.
//!
//! Messages follow a synchronous (flooding) schedule: iteration `t`
//! computes every directed-edge message from iteration `t-1`'s table, so
//! results are independent of traversal order and worker count. Products
//! over neighborhoods are accumulated in log space; written out naively
//! they underflow on high-degree nodes, and each message is re-normalized
//! to sum 1, which preserves the ratios the fixed point depends on.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{BipartiteGraph, DeviceId, NodeRef, Side};
use crate::labeling::GroundTruth;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training device `{0}` not present in the graph")]
    TrainingDeviceNotInGraph(String),
    #[error("training device `{0}` has no ground-truth label")]
    TrainingDeviceUnlabeled(String),
    #[error("priors cover {got} {side} nodes, graph has {want}")]
    PriorCoverage { side: Side, got: usize, want: usize },
}

/// A node's `(P(Bad), P(Good))` pair. The components sum to 1; priors,
/// messages and final beliefs all use this shape.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeliefVector {
    p_bad: f64,
    p_good: f64,
}

impl BeliefVector {
    /// Builds from both components, which must already sum to 1.
    pub fn new(p_bad: f64, p_good: f64) -> Self {
        debug_assert!((p_bad + p_good - 1.0).abs() <= 1e-12, "components must sum to 1");
        debug_assert!((0.0..=1.0).contains(&p_bad) && (0.0..=1.0).contains(&p_good));
        BeliefVector { p_bad, p_good }
    }

    pub fn from_p_bad(p_bad: f64) -> Self {
        BeliefVector::new(p_bad, 1.0 - p_bad)
    }

    pub fn uniform() -> Self {
        BeliefVector { p_bad: 0.5, p_good: 0.5 }
    }

    pub fn p_bad(&self) -> f64 {
        self.p_bad
    }

    pub fn p_good(&self) -> f64 {
        self.p_good
    }

    fn as_array(&self) -> [f64; 2] {
        [self.p_bad, self.p_good]
    }
}

/// Belief-propagation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BpConfig {
    /// Initial-belief strength for labeled nodes.
    pub delta: f64,
    /// Homophily strength on the edge-potential diagonal.
    pub epsilon: f64,
    pub max_iterations: u32,
    pub convergence_tol: f64,
}

impl Default for BpConfig {
    fn default() -> Self {
        BpConfig { delta: 0.99, epsilon: 0.51, max_iterations: 100, convergence_tol: 1e-6 }
    }
}

impl BpConfig {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(self.delta > 0.5 && self.delta <= 1.0) {
            return Err(InferenceError::InvalidConfig(format!(
                "delta must be in (0.5, 1], got {}",
                self.delta
            )));
        }
        if !(self.epsilon >= 0.5 && self.epsilon < 1.0) {
            return Err(InferenceError::InvalidConfig(format!(
                "epsilon must be in [0.5, 1), got {}",
                self.epsilon
            )));
        }
        if self.max_iterations == 0 {
            return Err(InferenceError::InvalidConfig("max_iterations must be positive".into()));
        }
        if self.convergence_tol <= 0.0 {
            return Err(InferenceError::InvalidConfig("convergence_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Per-node initial beliefs, dense per side.
#[derive(Debug, Clone)]
pub struct Priors {
    pub device: Vec<BeliefVector>,
    pub app: Vec<BeliefVector>,
}

impl Priors {
    pub fn uniform(graph: &BipartiteGraph) -> Self {
        Priors {
            device: vec![BeliefVector::uniform(); graph.device_count()],
            app: vec![BeliefVector::uniform(); graph.app_count()],
        }
    }

    pub fn get(&self, n: NodeRef) -> BeliefVector {
        match n.side {
            Side::Device => self.device[n.index as usize],
            Side::App => self.app[n.index as usize],
        }
    }

    fn check_coverage(&self, graph: &BipartiteGraph) -> Result<(), InferenceError> {
        if self.device.len() != graph.device_count() {
            return Err(InferenceError::PriorCoverage {
                side: Side::Device,
                got: self.device.len(),
                want: graph.device_count(),
            });
        }
        if self.app.len() != graph.app_count() {
            return Err(InferenceError::PriorCoverage {
                side: Side::App,
                got: self.app.len(),
                want: graph.app_count(),
            });
        }
        Ok(())
    }
}

/// Assigns initial beliefs: training-bad devices get `(delta, 1-delta)`,
/// training-good devices the reverse, and every other device and every app
/// stays at `(0.5, 0.5)` — apps are treated as unknown during inference.
pub fn init_beliefs(
    graph: &BipartiteGraph,
    gt: &GroundTruth,
    training: &BTreeSet<DeviceId>,
    cfg: &BpConfig,
) -> Result<Priors, InferenceError> {
    cfg.validate()?;
    let mut priors = Priors::uniform(graph);
    for d in training {
        let idx = graph
            .device_index(d)
            .ok_or_else(|| InferenceError::TrainingDeviceNotInGraph(d.to_string()))?;
        let bad = gt
            .device_label(d)
            .ok_or_else(|| InferenceError::TrainingDeviceUnlabeled(d.to_string()))?;
        priors.device[idx as usize] = if bad {
            BeliefVector::new(cfg.delta, 1.0 - cfg.delta)
        } else {
            BeliefVector::new(1.0 - cfg.delta, cfg.delta)
        };
    }
    Ok(priors)
}

/// Final beliefs for every node plus convergence bookkeeping.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    device_beliefs: Vec<BeliefVector>,
    app_beliefs: Vec<BeliefVector>,
    pub iterations_run: u32,
    pub converged: bool,
}

impl InferenceResult {
    pub fn belief(&self, n: NodeRef) -> BeliefVector {
        match n.side {
            Side::Device => self.device_beliefs[n.index as usize],
            Side::App => self.app_beliefs[n.index as usize],
        }
    }

    pub fn device_beliefs(&self) -> &[BeliefVector] {
        &self.device_beliefs
    }

    pub fn app_beliefs(&self) -> &[BeliefVector] {
        &self.app_beliefs
    }
}

/// Applies the symmetric edge potential to an (unnormalized) state
/// distribution: psi(bad,bad) = psi(good,good) = epsilon, off-diagonal
/// 1 - epsilon.
#[inline]
fn apply_potential(pre: [f64; 2], epsilon: f64) -> [f64; 2] {
    [
        pre[0] * epsilon + pre[1] * (1.0 - epsilon),
        pre[0] * (1.0 - epsilon) + pre[1] * epsilon,
    ]
}

/// Emits one normalized message given the log of
/// `phi(x_i) * prod incoming(x_i)` per state.
#[inline]
fn emit_from_logsum(logsum: [f64; 2], epsilon: f64) -> [f64; 2] {
    let shift = logsum[0].max(logsum[1]);
    let pre = [(logsum[0] - shift).exp(), (logsum[1] - shift).exp()];
    let out = apply_potential(pre, epsilon);
    let z = out[0] + out[1];
    [out[0] / z, out[1] / z]
}

/// One message update: combines the sender's prior with the incoming
/// messages (already excluding the recipient's own) and pushes the result
/// through the edge potential, normalized to sum 1.
pub fn bp_message(prior: BeliefVector, incoming: &[BeliefVector], epsilon: f64) -> BeliefVector {
    let mut logsum = [prior.p_bad().ln(), prior.p_good().ln()];
    for m in incoming {
        logsum[0] += m.p_bad().ln();
        logsum[1] += m.p_good().ln();
    }
    let out = emit_from_logsum(logsum, epsilon);
    BeliefVector::new(out[0], out[1])
}

/// Computes all outgoing messages for one side. `out` holds that side's
/// outgoing message slots in CSR order; `incoming` is the opposite side's
/// previous-iteration table, reached through `twin`. Returns the largest
/// absolute per-component change.
#[allow(clippy::too_many_arguments)]
fn emit_side(
    offsets: impl Fn(u32) -> std::ops::Range<usize> + Sync,
    node_count: u32,
    priors: &[BeliefVector],
    twin: &[u32],
    incoming: &[[f64; 2]],
    previous: &[[f64; 2]],
    out: &mut [[f64; 2]],
    epsilon: f64,
) -> f64 {
    // Carve `out` into one mutable chunk per node so nodes can be processed
    // in parallel without overlapping writes.
    let mut chunks: Vec<(u32, &mut [[f64; 2]])> = Vec::with_capacity(node_count as usize);
    let mut rest = out;
    let mut consumed = 0usize;
    for node in 0..node_count {
        let range = offsets(node);
        debug_assert_eq!(range.start, consumed);
        let (chunk, tail) = rest.split_at_mut(range.len());
        consumed += range.len();
        rest = tail;
        chunks.push((node, chunk));
    }

    chunks
        .into_par_iter()
        .map_init(Vec::new, |scratch: &mut Vec<[f64; 2]>, (node, chunk)| {
            let range = offsets(node);
            let start = range.start;
            let prior = priors[node as usize].as_array();
            let mut logsum = [prior[0].ln(), prior[1].ln()];
            scratch.clear();
            for slot in range.clone() {
                let m = incoming[twin[slot] as usize];
                let lm = [m[0].ln(), m[1].ln()];
                logsum[0] += lm[0];
                logsum[1] += lm[1];
                scratch.push(lm);
            }
            let mut change = 0.0_f64;
            for (k, slot) in range.enumerate() {
                let lm = scratch[k];
                let msg = emit_from_logsum([logsum[0] - lm[0], logsum[1] - lm[1]], epsilon);
                let old = previous[slot];
                change = change
                    .max((msg[0] - old[0]).abs())
                    .max((msg[1] - old[1]).abs());
                chunk[slot - start] = msg;
            }
            change
        })
        .reduce(|| 0.0, f64::max)
}

fn beliefs_for_side(
    offsets: impl Fn(u32) -> std::ops::Range<usize> + Sync,
    node_count: u32,
    priors: &[BeliefVector],
    twin: &[u32],
    incoming: &[[f64; 2]],
) -> Vec<BeliefVector> {
    (0..node_count)
        .into_par_iter()
        .map(|node| {
            let prior = priors[node as usize].as_array();
            let mut logsum = [prior[0].ln(), prior[1].ln()];
            for slot in offsets(node) {
                let m = incoming[twin[slot] as usize];
                logsum[0] += m[0].ln();
                logsum[1] += m[1].ln();
            }
            let shift = logsum[0].max(logsum[1]);
            let b = [(logsum[0] - shift).exp(), (logsum[1] - shift).exp()];
            let z = b[0] + b[1];
            BeliefVector::new(b[0] / z, b[1] / z)
        })
        .collect()
}

/// Runs synchronous belief propagation to convergence (largest absolute
/// message change below `convergence_tol`) or to the iteration cap.
/// Non-convergence is reported through `converged`, not as an error.
pub fn run_bp(
    graph: &BipartiteGraph,
    priors: &Priors,
    cfg: &BpConfig,
) -> Result<InferenceResult, InferenceError> {
    cfg.validate()?;
    priors.check_coverage(graph)?;

    let n_edges = graph.edge_count();
    let n_dev = graph.device_count() as u32;
    let n_app = graph.app_count() as u32;

    // Directed-edge message tables, double-buffered. Device-to-app messages
    // live in device-CSR slot order, app-to-device messages in app-CSR
    // order; all start uniform.
    let mut d2a = vec![[0.5, 0.5]; n_edges];
    let mut a2d = vec![[0.5, 0.5]; n_edges];
    let mut d2a_next = vec![[0.5, 0.5]; n_edges];
    let mut a2d_next = vec![[0.5, 0.5]; n_edges];

    let mut iterations_run = 0;
    let mut converged = false;
    for _ in 0..cfg.max_iterations {
        iterations_run += 1;
        let change_dev = emit_side(
            |d| graph.device_edge_range(d),
            n_dev,
            &priors.device,
            graph.dev_twin(),
            &a2d,
            &d2a,
            &mut d2a_next,
            cfg.epsilon,
        );
        let change_app = emit_side(
            |a| graph.app_edge_range(a),
            n_app,
            &priors.app,
            graph.app_twin(),
            &d2a,
            &a2d,
            &mut a2d_next,
            cfg.epsilon,
        );
        std::mem::swap(&mut d2a, &mut d2a_next);
        std::mem::swap(&mut a2d, &mut a2d_next);
        if change_dev.max(change_app) < cfg.convergence_tol {
            converged = true;
            break;
        }
    }

    let device_beliefs = beliefs_for_side(
        |d| graph.device_edge_range(d),
        n_dev,
        &priors.device,
        graph.dev_twin(),
        &a2d,
    );
    let app_beliefs = beliefs_for_side(
        |a| graph.app_edge_range(a),
        n_app,
        &priors.app,
        graph.app_twin(),
        &d2a,
    );

    log::debug!("bp_iterations={iterations_run} converged={converged}");
    Ok(InferenceResult { device_beliefs, app_beliefs, iterations_run, converged })
}

/// Writes the belief dump CSV:
/// `node_id,side,p_bad,iterations,converged`.
pub fn write_beliefs_csv<W: std::io::Write>(
    graph: &BipartiteGraph,
    result: &InferenceResult,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "node_id,side,p_bad,iterations,converged")?;
    for (i, b) in result.device_beliefs.iter().enumerate() {
        writeln!(
            w,
            "{},device,{},{},{}",
            graph.device_id(i as u32),
            b.p_bad(),
            result.iterations_run,
            result.converged
        )?;
    }
    for (i, b) in result.app_beliefs.iter().enumerate() {
        writeln!(
            w,
            "{},app,{},{},{}",
            graph.app_id(i as u32),
            b.p_bad(),
            result.iterations_run,
            result.converged
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviceClass {
    Bad,
    Good,
}

impl std::fmt::Display for DeviceClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeviceClass::Bad => f.write_str("bad"),
            DeviceClass::Good => f.write_str("good"),
        }
    }
}

/// Thresholds final device beliefs: strictly above `threshold` is bad, a
/// tie classifies good (conservative on false positives). Apps are
/// excluded from the output.
pub fn classify(
    graph: &BipartiteGraph,
    result: &InferenceResult,
    threshold: f64,
) -> BTreeMap<DeviceId, DeviceClass> {
    result
        .device_beliefs
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let class = if b.p_bad() > threshold { DeviceClass::Bad } else { DeviceClass::Good };
            (graph.device_id(i as u32).clone(), class)
        })
        .collect()
}

/// Scores from the label-propagation baseline.
#[derive(Debug, Clone)]
pub struct LpResult {
    pub device_scores: Vec<f64>,
    pub app_scores: Vec<f64>,
    pub iterations_run: u32,
    pub converged: bool,
}

impl LpResult {
    pub fn score(&self, n: NodeRef) -> f64 {
        match n.side {
            Side::Device => self.device_scores[n.index as usize],
            Side::App => self.app_scores[n.index as usize],
        }
    }
}

/// Label propagation: training devices are clamped to 1 (bad) or 0 (good)
/// every iteration, every other node updates to the mean of its neighbors'
/// previous scores, and isolated unlabeled nodes keep 0.5.
pub fn run_lp(
    graph: &BipartiteGraph,
    gt: &GroundTruth,
    training: &BTreeSet<DeviceId>,
    max_iterations: u32,
    tol: f64,
) -> Result<LpResult, InferenceError> {
    let mut clamp: Vec<Option<f64>> = vec![None; graph.device_count()];
    for d in training {
        let idx = graph
            .device_index(d)
            .ok_or_else(|| InferenceError::TrainingDeviceNotInGraph(d.to_string()))?;
        let bad = gt
            .device_label(d)
            .ok_or_else(|| InferenceError::TrainingDeviceUnlabeled(d.to_string()))?;
        clamp[idx as usize] = Some(if bad { 1.0 } else { 0.0 });
    }

    let mut dev: Vec<f64> = clamp.iter().map(|c| c.unwrap_or(0.5)).collect();
    let mut app: Vec<f64> = vec![0.5; graph.app_count()];

    let mut iterations_run = 0;
    let mut converged = false;
    for _ in 0..max_iterations {
        iterations_run += 1;
        let new_dev: Vec<f64> = (0..graph.device_count() as u32)
            .into_par_iter()
            .map(|d| {
                if let Some(v) = clamp[d as usize] {
                    return v;
                }
                let neighbors = graph.device_neighbors(d);
                if neighbors.is_empty() {
                    return dev[d as usize];
                }
                neighbors.iter().map(|&a| app[a as usize]).sum::<f64>() / neighbors.len() as f64
            })
            .collect();
        let new_app: Vec<f64> = (0..graph.app_count() as u32)
            .into_par_iter()
            .map(|a| {
                let neighbors = graph.app_neighbors(a);
                if neighbors.is_empty() {
                    return app[a as usize];
                }
                neighbors.iter().map(|&d| dev[d as usize]).sum::<f64>() / neighbors.len() as f64
            })
            .collect();
        let change = new_dev
            .par_iter()
            .zip(&dev)
            .map(|(n, o)| (n - o).abs())
            .chain(new_app.par_iter().zip(&app).map(|(n, o)| (n - o).abs()))
            .reduce(|| 0.0, f64::max);
        dev = new_dev;
        app = new_app;
        if change < tol {
            converged = true;
            break;
        }
    }

    Ok(LpResult { device_scores: dev, app_scores: app, iterations_run, converged })
}
