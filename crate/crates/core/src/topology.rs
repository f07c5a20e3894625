//! Topology diagnostics: cluster distance statistics, closeness
//! centrality, and eigenvector centrality.
//!
//! These explain why inference accuracy reacts (or not) to the
//! edge-potential parameter: short inter-cluster paths and influential bad
//! nodes let beliefs bleed between clusters, long bridges insulate them.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::{BipartiteGraph, NodeRef, Side};
use crate::util::counts_cdf;

/// Marker for node pairs with no connecting path.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("distance class `{0}` has no node pairs")]
    EmptyClass(&'static str),
    #[error("node {0:?} is not a BFS source of this distance matrix")]
    MissingSource(NodeRef),
    #[error("power iteration did not converge within {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: u32, residual: f64 },
}

/// BFS hop distances from a set of source nodes to every node.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    sources: Vec<NodeRef>,
    rows: Vec<Vec<u32>>,
    device_count: u32,
}

impl DistanceMatrix {
    pub fn sources(&self) -> &[NodeRef] {
        &self.sources
    }

    fn column(&self, n: NodeRef) -> usize {
        match n.side {
            Side::Device => n.index as usize,
            Side::App => (self.device_count + n.index) as usize,
        }
    }

    /// Hop distance, or `None` when unreachable. `from` must be a source.
    pub fn distance(&self, from: NodeRef, to: NodeRef) -> Result<Option<u32>, TopologyError> {
        let row = self
            .sources
            .binary_search(&from)
            .map_err(|_| TopologyError::MissingSource(from))?;
        let d = self.rows[row][self.column(to)];
        Ok((d != UNREACHABLE).then_some(d))
    }
}

fn bfs(graph: &BipartiteGraph, start: NodeRef) -> Vec<u32> {
    let n_dev = graph.device_count();
    let mut dist = vec![UNREACHABLE; graph.node_count()];
    let index_of = |n: NodeRef| match n.side {
        Side::Device => n.index as usize,
        Side::App => n_dev + n.index as usize,
    };
    let mut queue = VecDeque::new();
    dist[index_of(start)] = 0;
    queue.push_back(start);
    while let Some(node) = queue.pop_front() {
        let d = dist[index_of(node)];
        match node.side {
            Side::Device => {
                for &a in graph.device_neighbors(node.index) {
                    let next = NodeRef::app(a);
                    if dist[index_of(next)] == UNREACHABLE {
                        dist[index_of(next)] = d + 1;
                        queue.push_back(next);
                    }
                }
            }
            Side::App => {
                for &dev in graph.app_neighbors(node.index) {
                    let next = NodeRef::device(dev);
                    if dist[index_of(next)] == UNREACHABLE {
                        dist[index_of(next)] = d + 1;
                        queue.push_back(next);
                    }
                }
            }
        }
    }
    dist
}

/// Unweighted BFS distances from every source to every node. Sources are
/// processed independently (in parallel); unreachable pairs carry the
/// marker and are excluded from averages downstream.
pub fn shortest_paths(graph: &BipartiteGraph, sources: &BTreeSet<NodeRef>) -> DistanceMatrix {
    let sources: Vec<NodeRef> = sources.iter().copied().collect();
    let rows: Vec<Vec<u32>> = sources.par_iter().map(|&s| bfs(graph, s)).collect();
    DistanceMatrix { sources, rows, device_count: graph.device_count() as u32 }
}

/// Which ground-truth clusters a node pair spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PairClass {
    GoodGood,
    BadBad,
    BadGood,
}

impl std::fmt::Display for PairClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairClass::GoodGood => f.write_str("GG"),
            PairClass::BadBad => f.write_str("BB"),
            PairClass::BadGood => f.write_str("BG"),
        }
    }
}

/// Distance summary for one pair class.
#[derive(Debug, Clone)]
pub struct ClassDistances {
    pub mean: f64,
    pub reachable_pairs: usize,
    pub unreachable_pairs: usize,
    /// Sorted `(length, cumulative_fraction)` steps over reachable pairs.
    pub cdf: Vec<(u64, f64)>,
}

#[derive(Debug, Clone)]
pub struct DistanceStats {
    pub per_class: BTreeMap<PairClass, ClassDistances>,
}

impl DistanceStats {
    pub fn mean(&self, class: PairClass) -> f64 {
        self.per_class[&class].mean
    }
}

fn summarize(lengths: Vec<u32>, unreachable: usize, class: &'static str) -> Result<ClassDistances, TopologyError> {
    if lengths.is_empty() && unreachable == 0 {
        return Err(TopologyError::EmptyClass(class));
    }
    let sum: u64 = lengths.iter().map(|&l| u64::from(l)).sum();
    let mean = if lengths.is_empty() { f64::NAN } else { sum as f64 / lengths.len() as f64 };
    let as_u64: Vec<u64> = lengths.iter().map(|&l| u64::from(l)).collect();
    Ok(ClassDistances {
        mean,
        reachable_pairs: lengths.len(),
        unreachable_pairs: unreachable,
        cdf: counts_cdf(&as_u64),
    })
}

/// Distance statistics for the bad/bad, good/good and bad/good pair
/// classes over ground-truth clusters `cb` and `cg`. Every member of both
/// clusters must be a source of `dm`; unreachable pairs are counted but
/// excluded from means and CDFs.
pub fn cluster_distance_stats(
    dm: &DistanceMatrix,
    cb: &BTreeSet<NodeRef>,
    cg: &BTreeSet<NodeRef>,
) -> Result<DistanceStats, TopologyError> {
    assert!(cb.is_disjoint(cg), "clusters must be disjoint");
    let mut per_class = BTreeMap::new();

    let within = |set: &BTreeSet<NodeRef>| -> Result<(Vec<u32>, usize), TopologyError> {
        let nodes: Vec<NodeRef> = set.iter().copied().collect();
        let mut lengths = Vec::new();
        let mut unreachable = 0usize;
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                match dm.distance(nodes[i], nodes[j])? {
                    Some(d) => lengths.push(d),
                    None => unreachable += 1,
                }
            }
        }
        Ok((lengths, unreachable))
    };

    let (bb, bb_un) = within(cb)?;
    per_class.insert(PairClass::BadBad, summarize(bb, bb_un, "BB")?);
    let (gg, gg_un) = within(cg)?;
    per_class.insert(PairClass::GoodGood, summarize(gg, gg_un, "GG")?);

    let mut bg = Vec::new();
    let mut bg_un = 0usize;
    for &b in cb {
        for &g in cg {
            match dm.distance(b, g)? {
                Some(d) => bg.push(d),
                None => bg_un += 1,
            }
        }
    }
    per_class.insert(PairClass::BadGood, summarize(bg, bg_un, "BG")?);

    Ok(DistanceStats { per_class })
}

/// Closeness centrality `(N - 1) / sum_v l(v, u)` where `N` and the sum
/// range over `u`'s connected component; nodes in singleton components get
/// 0 by convention. The formula assumes connectivity, so it is applied
/// per component rather than averaging over unreachable pairs.
pub fn closeness_centrality(
    graph: &BipartiteGraph,
    nodes: &BTreeSet<NodeRef>,
) -> BTreeMap<NodeRef, f64> {
    let nodes: Vec<NodeRef> = nodes.iter().copied().collect();
    let scores: Vec<f64> = nodes
        .par_iter()
        .map(|&u| {
            let dist = bfs(graph, u);
            let mut sum = 0u64;
            let mut reached = 0u64;
            for &d in &dist {
                if d != UNREACHABLE && d != 0 {
                    sum += u64::from(d);
                    reached += 1;
                }
            }
            if reached == 0 {
                0.0
            } else {
                reached as f64 / sum as f64
            }
        })
        .collect();
    nodes.into_iter().zip(scores).collect()
}

/// Dominant eigenpair of the adjacency matrix.
#[derive(Debug, Clone)]
pub struct EigenCentrality {
    device_scores: Vec<f64>,
    app_scores: Vec<f64>,
    /// Largest adjacency eigenvalue.
    pub kappa1: f64,
    pub iterations: u32,
}

impl EigenCentrality {
    pub fn score(&self, n: NodeRef) -> f64 {
        match n.side {
            Side::Device => self.device_scores[n.index as usize],
            Side::App => self.app_scores[n.index as usize],
        }
    }

    pub fn device_scores(&self) -> &[f64] {
        &self.device_scores
    }

    pub fn app_scores(&self) -> &[f64] {
        &self.app_scores
    }
}

fn adjacency_apply(graph: &BipartiteGraph, dev: &[f64], app: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let a_dev: Vec<f64> = (0..graph.device_count() as u32)
        .into_par_iter()
        .map(|d| graph.device_neighbors(d).iter().map(|&a| app[a as usize]).sum())
        .collect();
    let a_app: Vec<f64> = (0..graph.app_count() as u32)
        .into_par_iter()
        .map(|a| graph.app_neighbors(a).iter().map(|&d| dev[d as usize]).sum())
        .collect();
    (a_dev, a_app)
}

/// Eigenvector centrality by power iteration, scores normalized to unit
/// Euclidean norm. Bipartite adjacency spectra are symmetric about zero,
/// so the iteration runs on A + I, which has the same eigenvectors but a
/// unique dominant eigenvalue. Convergence is declared when the residual
/// `max |A x - kappa1 x|` drops below `tol`. The start vector is the
/// deterministic uniform vector, not a random draw.
pub fn eigenvector_centrality(
    graph: &BipartiteGraph,
    tol: f64,
    max_iter: u32,
) -> Result<EigenCentrality, TopologyError> {
    let n = graph.node_count();
    if n == 0 {
        return Err(TopologyError::EmptyGraph);
    }
    let norm0 = 1.0 / (n as f64).sqrt();
    let mut dev = vec![norm0; graph.device_count()];
    let mut app = vec![norm0; graph.app_count()];

    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let (a_dev, a_app) = adjacency_apply(graph, &dev, &app);

        // Rayleigh quotient with the current unit vector.
        let kappa: f64 = dev.iter().zip(&a_dev).map(|(x, ax)| x * ax).sum::<f64>()
            + app.iter().zip(&a_app).map(|(x, ax)| x * ax).sum::<f64>();
        residual = dev
            .iter()
            .zip(&a_dev)
            .map(|(x, ax)| (ax - kappa * x).abs())
            .chain(app.iter().zip(&a_app).map(|(x, ax)| (ax - kappa * x).abs()))
            .fold(0.0, f64::max);
        if residual < tol {
            return Ok(EigenCentrality { device_scores: dev, app_scores: app, kappa1: kappa, iterations: it });
        }

        // One (A + I) step, then renormalize.
        let mut norm_sq = 0.0;
        for (x, ax) in dev.iter_mut().zip(&a_dev) {
            *x += ax;
            norm_sq += *x * *x;
        }
        for (x, ax) in app.iter_mut().zip(&a_app) {
            *x += ax;
            norm_sq += *x * *x;
        }
        let norm = norm_sq.sqrt();
        dev.iter_mut().for_each(|x| *x /= norm);
        app.iter_mut().for_each(|x| *x /= norm);
    }
    Err(TopologyError::NotConverged { iterations: max_iter, residual })
}

/// Closeness and eigenvector centrality for a set of report nodes, plus
/// the dominant eigenvalue. Eigenvector scores are computed on the whole
/// graph and then restricted to `nodes`.
#[derive(Debug, Clone)]
pub struct CentralityReport {
    pub closeness: BTreeMap<NodeRef, f64>,
    pub eigenvector: BTreeMap<NodeRef, f64>,
    pub kappa1: f64,
}

pub fn centrality_report(
    graph: &BipartiteGraph,
    nodes: &BTreeSet<NodeRef>,
    tol: f64,
    max_iter: u32,
) -> Result<CentralityReport, TopologyError> {
    let closeness = closeness_centrality(graph, nodes);
    let eigen = eigenvector_centrality(graph, tol, max_iter)?;
    let eigenvector = nodes.iter().map(|&n| (n, eigen.score(n))).collect();
    Ok(CentralityReport { closeness, eigenvector, kappa1: eigen.kappa1 })
}
