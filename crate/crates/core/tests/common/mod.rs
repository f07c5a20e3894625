//! Independent oracles for the integration suites. Everything here
//! recomputes expected values by brute force (state enumeration, dense
//! linear algebra, all-pairs matrices) and never touches the optimized
//! paths it is used to check.

// Each integration-test binary compiles this module separately and uses a
// different subset of it.
#![allow(dead_code)]

use std::collections::BTreeSet;

use guiltgraph::graph::{build_graph, AppId, BipartiteGraph, DeviceId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Exact per-node marginals of the pairwise model by joint-state
/// enumeration: weight(x) = prod_i phi_i(x_i) * prod_(i,j) psi(x_i, x_j)
/// with the symmetric two-state potential. Nodes are 0-indexed; feasible
/// up to ~20 nodes.
pub fn exact_marginals(
    n_nodes: usize,
    edges: &[(usize, usize)],
    priors: &[[f64; 2]],
    epsilon: f64,
) -> Vec<[f64; 2]> {
    assert!(n_nodes <= 20, "enumeration is exponential");
    assert_eq!(priors.len(), n_nodes);
    let psi = |a: usize, b: usize| if a == b { epsilon } else { 1.0 - epsilon };
    let mut marginals = vec![[0.0f64; 2]; n_nodes];
    let mut total = 0.0f64;
    for state in 0..(1usize << n_nodes) {
        let x = |i: usize| (state >> i) & 1;
        let mut weight = 1.0;
        for (i, prior) in priors.iter().enumerate() {
            weight *= prior[x(i)];
        }
        for &(i, j) in edges {
            weight *= psi(x(i), x(j));
        }
        total += weight;
        for i in 0..n_nodes {
            marginals[i][x(i)] += weight;
        }
    }
    for m in &mut marginals {
        m[0] /= total;
        m[1] /= total;
    }
    marginals
}

/// Dense solve of the harmonic fixed point behind label propagation:
/// clamped nodes hold their value, every other node equals the mean of its
/// neighbors, and nodes in components without any clamped node stay at
/// 0.5 (the iteration's fixed start value).
pub fn harmonic_solve(
    n_nodes: usize,
    edges: &[(usize, usize)],
    clamped: &[(usize, f64)],
) -> Vec<f64> {
    let mut adj = vec![Vec::new(); n_nodes];
    for &(i, j) in edges {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut clamp = vec![None; n_nodes];
    for &(i, v) in clamped {
        clamp[i] = Some(v);
    }

    // Component labels to find nodes decoupled from every clamp.
    let mut component = vec![usize::MAX; n_nodes];
    let mut n_comp = 0;
    for start in 0..n_nodes {
        if component[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        component[start] = n_comp;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if component[v] == usize::MAX {
                    component[v] = n_comp;
                    stack.push(v);
                }
            }
        }
        n_comp += 1;
    }
    let mut comp_has_clamp = vec![false; n_comp];
    for i in 0..n_nodes {
        if clamp[i].is_some() {
            comp_has_clamp[component[i]] = true;
        }
    }

    let unknowns: Vec<usize> = (0..n_nodes)
        .filter(|&i| clamp[i].is_none() && comp_has_clamp[component[i]] && !adj[i].is_empty())
        .collect();
    let index_of = |i: usize| unknowns.iter().position(|&u| u == i);

    let n = unknowns.len();
    let mut a = vec![vec![0.0f64; n]; n];
    let mut b = vec![0.0f64; n];
    for (row, &u) in unknowns.iter().enumerate() {
        a[row][row] = adj[u].len() as f64;
        for &v in &adj[u] {
            if let Some(val) = clamp[v] {
                b[row] += val;
            } else if let Some(col) = index_of(v) {
                a[row][col] -= 1.0;
            } else {
                // Neighbor is an unclamped node outside the system, which
                // can only happen in clamp-free components; unreachable
                // here because u's component has a clamp.
                unreachable!("unclamped neighbor outside system");
            }
        }
    }

    // Gaussian elimination with partial pivoting.
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        assert!(diag.abs() > 1e-12, "harmonic system is singular");
        let pivot_row = a[col].clone();
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col] / diag;
            for (k, pv) in pivot_row.iter().enumerate().skip(col) {
                a[row][k] -= factor * pv;
            }
            b[row] -= factor * b[col];
        }
    }

    let mut scores = vec![0.5f64; n_nodes];
    for (i, v) in clamp.iter().enumerate() {
        if let Some(v) = v {
            scores[i] = *v;
        }
    }
    for (row, &u) in unknowns.iter().enumerate() {
        scores[u] = b[row] / a[row][row];
    }
    scores
}

pub const FW_UNREACHABLE: u32 = u32::MAX / 2;

/// All-pairs shortest paths by Floyd-Warshall over an explicit adjacency
/// list (node indices 0-based, undirected).
pub fn floyd_warshall(n_nodes: usize, edges: &[(usize, usize)]) -> Vec<Vec<u32>> {
    let mut dist = vec![vec![FW_UNREACHABLE; n_nodes]; n_nodes];
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(i, j) in edges {
        dist[i][j] = 1;
        dist[j][i] = 1;
    }
    for k in 0..n_nodes {
        for i in 0..n_nodes {
            for j in 0..n_nodes {
                let via = dist[i][k].saturating_add(dist[k][j]);
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }
    dist
}

/// Dominant eigenpair by full symmetric eigendecomposition (nalgebra),
/// eigenvector normalized to unit norm with non-negative orientation.
pub fn dense_dominant_eigenpair(n_nodes: usize, edges: &[(usize, usize)]) -> (f64, Vec<f64>) {
    let mut m = nalgebra::DMatrix::<f64>::zeros(n_nodes, n_nodes);
    for &(i, j) in edges {
        m[(i, j)] = 1.0;
        m[(j, i)] = 1.0;
    }
    let eigen = nalgebra::SymmetricEigen::new(m);
    let mut best = 0;
    for i in 0..n_nodes {
        if eigen.eigenvalues[i] > eigen.eigenvalues[best] {
            best = i;
        }
    }
    let mut v: Vec<f64> = eigen.eigenvectors.column(best).iter().copied().collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    (eigen.eigenvalues[best], v)
}

/// Rank-based AUC (Mann-Whitney with tie credit 1/2): the probability a
/// random positive outscores a random negative.
pub fn mann_whitney_auc(positives: &[f64], negatives: &[f64]) -> f64 {
    let mut wins = 0.0f64;
    for &p in positives {
        for &n in negatives {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    wins / (positives.len() as f64 * negatives.len() as f64)
}

/// A random tree on `n` nodes (edge list of (parent, child) pairs with
/// parent index < child index).
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    (1..n).map(|i| (rng.random_range(0..i), i)).collect()
}

/// Assigns tree nodes to graph sides by depth parity (root is a device)
/// and builds the bipartite graph. Returns the graph and, per tree node,
/// its node id string.
pub fn tree_as_bipartite(edges: &[(usize, usize)]) -> (BipartiteGraph, Vec<String>) {
    let n = edges.len() + 1;
    let mut depth = vec![0usize; n];
    for &(p, c) in edges {
        depth[c] = depth[p] + 1;
    }
    let ids: Vec<String> = (0..n)
        .map(|i| {
            if depth[i].is_multiple_of(2) {
                format!("10.0.{}.{}", i / 250, i % 250)
            } else {
                format!("com.node{i:03}")
            }
        })
        .collect();
    let edge_set: BTreeSet<(DeviceId, AppId)> = edges
        .iter()
        .map(|&(p, c)| {
            let (dev, app) = if depth[p].is_multiple_of(2) { (p, c) } else { (c, p) };
            (DeviceId::new(ids[dev].clone()), AppId::new(ids[app].clone()))
        })
        .collect();
    (build_graph(&edge_set), ids)
}

/// A random connected bipartite graph: every new node attaches to a
/// random already-placed node of the opposite side, then extra random
/// edges are sprinkled in. Edge indices are combined: device index, or
/// n_devices + app index.
pub fn random_connected_bipartite(
    rng: &mut ChaCha8Rng,
    n_devices: usize,
    n_apps: usize,
    extra_edges: usize,
) -> Vec<(usize, usize)> {
    assert!(n_devices >= 1 && n_apps >= 1);
    let mut edges: BTreeSet<(usize, usize)> = BTreeSet::new();
    edges.insert((0, n_devices));
    let mut placed_devices = 1;
    let mut placed_apps = 1;
    while placed_devices < n_devices || placed_apps < n_apps {
        let place_device =
            placed_devices < n_devices && (placed_apps >= n_apps || rng.random::<bool>());
        if place_device {
            let a = rng.random_range(0..placed_apps);
            edges.insert((placed_devices, n_devices + a));
            placed_devices += 1;
        } else {
            let d = rng.random_range(0..placed_devices);
            edges.insert((d, n_devices + placed_apps));
            placed_apps += 1;
        }
    }
    for _ in 0..extra_edges {
        let d = rng.random_range(0..n_devices);
        let a = rng.random_range(0..n_apps);
        edges.insert((d, n_devices + a));
    }
    edges.into_iter().collect()
}

/// Materializes combined-index bipartite edges into a graph with
/// deterministic ids; returns the graph plus per-combined-index id.
pub fn indexed_bipartite(n_devices: usize, edges: &[(usize, usize)]) -> (BipartiteGraph, Vec<String>) {
    let max_app = edges.iter().map(|&(_, a)| a).max().unwrap_or(n_devices);
    let n_apps = max_app + 1 - n_devices;
    let ids: Vec<String> = (0..n_devices + n_apps)
        .map(|i| {
            if i < n_devices {
                format!("10.0.{}.{}", i / 250, i % 250)
            } else {
                format!("com.node{:03}", i - n_devices)
            }
        })
        .collect();
    let edge_set: BTreeSet<(DeviceId, AppId)> = edges
        .iter()
        .map(|&(d, a)| (DeviceId::new(ids[d].clone()), AppId::new(ids[a].clone())))
        .collect();
    (build_graph(&edge_set), ids)
}
