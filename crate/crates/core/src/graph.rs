//! The device-app bipartite graph: storage, neighborhood queries, and
//! popularity filtering.
//!
//! The graph is immutable after construction and safe to share across
//! threads; filtering operations return new graphs. Nodes are indexed
//! densely per side, sorted lexicographically by id, so runs over the same
//! edge set always produce the same indexing.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A device identity: the source IP string, taken verbatim.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DeviceId(pub String);

/// An app identity: an app string or a destination IP, depending on the
/// extraction mode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppId(pub String);

impl DeviceId {
    pub fn new(id: impl Into<String>) -> Self {
        DeviceId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl AppId {
    pub fn new(id: impl Into<String>) -> Self {
        AppId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for AppId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which side of the bipartition a node lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Device,
    App,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Device => f.write_str("device"),
            Side::App => f.write_str("app"),
        }
    }
}

/// A side-tagged dense node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub side: Side,
    pub index: u32,
}

impl NodeRef {
    pub fn device(index: u32) -> Self {
        NodeRef { side: Side::Device, index }
    }

    pub fn app(index: u32) -> Self {
        NodeRef { side: Side::App, index }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{side} index {index} out of range ({count} {side} nodes)")]
    NodeOutOfRange { side: Side, index: u32, count: u32 },
    #[error("edge list line {line}: expected 2 tab-separated columns")]
    EdgeListFormat { line: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Undirected bipartite graph over devices and apps, stored as a pair of
/// CSR adjacency structures (one per direction) plus slot cross-references
/// so message-passing code can find the reverse edge in O(1).
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    devices: Vec<DeviceId>,
    apps: Vec<AppId>,
    dev_offsets: Vec<u32>,
    dev_adj: Vec<u32>,
    app_offsets: Vec<u32>,
    app_adj: Vec<u32>,
    // For edge slot s in the device CSR, dev_twin[s] is the slot of the same
    // undirected edge in the app CSR, and vice versa.
    dev_twin: Vec<u32>,
    app_twin: Vec<u32>,
}

/// Builds the graph from a deduplicated edge set. Node sets are exactly the
/// endpoints appearing in `edges`; indices are dense and assigned in
/// lexicographic id order.
pub fn build_graph(edges: &BTreeSet<(DeviceId, AppId)>) -> BipartiteGraph {
    BipartiteGraph::from_edges(edges)
}

impl BipartiteGraph {
    pub fn from_edges(edges: &BTreeSet<(DeviceId, AppId)>) -> Self {
        let device_set: BTreeSet<&DeviceId> = edges.iter().map(|(d, _)| d).collect();
        let app_set: BTreeSet<&AppId> = edges.iter().map(|(_, a)| a).collect();
        let devices: Vec<DeviceId> = device_set.into_iter().cloned().collect();
        let apps: Vec<AppId> = app_set.into_iter().cloned().collect();
        Self::assemble(devices, apps, edges)
    }

    /// Rebuilds CSR structures for a fixed node universe. `devices` and
    /// `apps` must be sorted and must cover every edge endpoint; nodes
    /// without edges are kept (isolated).
    fn assemble(devices: Vec<DeviceId>, apps: Vec<AppId>, edges: &BTreeSet<(DeviceId, AppId)>) -> Self {
        let find_dev = |id: &DeviceId| devices.binary_search(id).expect("edge device not in node set") as u32;
        let find_app = |id: &AppId| apps.binary_search(id).expect("edge app not in node set") as u32;

        let n_dev = devices.len();
        let n_app = apps.len();
        let n_edges = edges.len();

        let mut dev_deg = vec![0u32; n_dev];
        let mut app_deg = vec![0u32; n_app];
        let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(n_edges);
        for (d, a) in edges {
            let di = find_dev(d);
            let ai = find_app(a);
            dev_deg[di as usize] += 1;
            app_deg[ai as usize] += 1;
            pairs.push((di, ai));
        }
        // BTreeSet iterates sorted by (DeviceId, AppId); ids are sorted in the
        // index vectors, so `pairs` is sorted by (device index, app index).

        let mut dev_offsets = vec![0u32; n_dev + 1];
        for i in 0..n_dev {
            dev_offsets[i + 1] = dev_offsets[i] + dev_deg[i];
        }
        let mut app_offsets = vec![0u32; n_app + 1];
        for i in 0..n_app {
            app_offsets[i + 1] = app_offsets[i] + app_deg[i];
        }

        let mut dev_adj = vec![0u32; n_edges];
        let mut app_adj = vec![0u32; n_edges];
        let mut dev_twin = vec![0u32; n_edges];
        let mut app_twin = vec![0u32; n_edges];

        let mut dev_fill: Vec<u32> = dev_offsets[..n_dev].to_vec();
        let mut app_fill: Vec<u32> = app_offsets[..n_app].to_vec();
        for (di, ai) in pairs {
            let ds = dev_fill[di as usize];
            let as_ = app_fill[ai as usize];
            dev_adj[ds as usize] = ai;
            app_adj[as_ as usize] = di;
            dev_twin[ds as usize] = as_;
            app_twin[as_ as usize] = ds;
            dev_fill[di as usize] += 1;
            app_fill[ai as usize] += 1;
        }

        BipartiteGraph {
            devices,
            apps,
            dev_offsets,
            dev_adj,
            app_offsets,
            app_adj,
            dev_twin,
            app_twin,
        }
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn app_count(&self) -> usize {
        self.apps.len()
    }

    pub fn node_count(&self) -> usize {
        self.devices.len() + self.apps.len()
    }

    pub fn edge_count(&self) -> usize {
        self.dev_adj.len()
    }

    pub fn device_ids(&self) -> &[DeviceId] {
        &self.devices
    }

    pub fn app_ids(&self) -> &[AppId] {
        &self.apps
    }

    pub fn device_id(&self, index: u32) -> &DeviceId {
        &self.devices[index as usize]
    }

    pub fn app_id(&self, index: u32) -> &AppId {
        &self.apps[index as usize]
    }

    pub fn device_index(&self, id: &DeviceId) -> Option<u32> {
        self.devices.binary_search(id).ok().map(|i| i as u32)
    }

    pub fn app_index(&self, id: &AppId) -> Option<u32> {
        self.apps.binary_search(id).ok().map(|i| i as u32)
    }

    pub fn node_id(&self, n: NodeRef) -> &str {
        match n.side {
            Side::Device => self.devices[n.index as usize].as_str(),
            Side::App => self.apps[n.index as usize].as_str(),
        }
    }

    /// App indices adjacent to a device, ascending.
    pub fn device_neighbors(&self, device: u32) -> &[u32] {
        let lo = self.dev_offsets[device as usize] as usize;
        let hi = self.dev_offsets[device as usize + 1] as usize;
        &self.dev_adj[lo..hi]
    }

    /// Device indices adjacent to an app, ascending.
    pub fn app_neighbors(&self, app: u32) -> &[u32] {
        let lo = self.app_offsets[app as usize] as usize;
        let hi = self.app_offsets[app as usize + 1] as usize;
        &self.app_adj[lo..hi]
    }

    /// Sorted, duplicate-free neighbor list; neighbors of a device are all
    /// apps and vice versa.
    pub fn neighbors(&self, n: NodeRef) -> Result<Vec<NodeRef>, GraphError> {
        self.check(n)?;
        Ok(match n.side {
            Side::Device => self.device_neighbors(n.index).iter().map(|&a| NodeRef::app(a)).collect(),
            Side::App => self.app_neighbors(n.index).iter().map(|&d| NodeRef::device(d)).collect(),
        })
    }

    pub fn degree(&self, n: NodeRef) -> Result<usize, GraphError> {
        self.check(n)?;
        Ok(match n.side {
            Side::Device => self.device_neighbors(n.index).len(),
            Side::App => self.app_neighbors(n.index).len(),
        })
    }

    fn check(&self, n: NodeRef) -> Result<(), GraphError> {
        let count = match n.side {
            Side::Device => self.devices.len(),
            Side::App => self.apps.len(),
        } as u32;
        if n.index >= count {
            return Err(GraphError::NodeOutOfRange { side: n.side, index: n.index, count });
        }
        Ok(())
    }

    pub(crate) fn device_edge_range(&self, device: u32) -> std::ops::Range<usize> {
        self.dev_offsets[device as usize] as usize..self.dev_offsets[device as usize + 1] as usize
    }

    pub(crate) fn app_edge_range(&self, app: u32) -> std::ops::Range<usize> {
        self.app_offsets[app as usize] as usize..self.app_offsets[app as usize + 1] as usize
    }

    pub(crate) fn dev_twin(&self) -> &[u32] {
        &self.dev_twin
    }

    pub(crate) fn app_twin(&self) -> &[u32] {
        &self.app_twin
    }

    /// Edges in canonical order: sorted by (device id, app id).
    pub fn edges(&self) -> impl Iterator<Item = (&DeviceId, &AppId)> + '_ {
        (0..self.devices.len() as u32).flat_map(move |d| {
            self.device_neighbors(d)
                .iter()
                .map(move |&a| (&self.devices[d as usize], &self.apps[a as usize]))
        })
    }

    pub fn edge_set(&self) -> BTreeSet<(DeviceId, AppId)> {
        self.edges().map(|(d, a)| (d.clone(), a.clone())).collect()
    }

    /// Removes every app used by more than `n_p` devices, along with its
    /// incident edges. Devices are retained even when this isolates them;
    /// dropping them would silently change evaluation denominators.
    pub fn remove_popular_apps(&self, n_p: u32) -> BipartiteGraph {
        assert!(n_p >= 1, "popularity threshold must be at least 1");
        let retained: Vec<bool> = (0..self.apps.len() as u32)
            .map(|a| self.app_neighbors(a).len() as u32 <= n_p)
            .collect();
        let apps: Vec<AppId> = self
            .apps
            .iter()
            .zip(&retained)
            .filter(|&(_a, keep)| *keep).map(|(a, _keep)| a.clone())
            .collect();
        let edges: BTreeSet<(DeviceId, AppId)> = self
            .edges()
            .filter(|(_, a)| {
                let ai = self.apps.binary_search(a).expect("own app id");
                retained[ai]
            })
            .map(|(d, a)| (d.clone(), a.clone()))
            .collect();
        Self::assemble(self.devices.clone(), apps, &edges)
    }

    /// Canonical edge-list serialization: `device_id<TAB>app_id`, one edge
    /// per line, sorted by (device_id, app_id).
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<(), GraphError> {
        for (d, a) in self.edges() {
            writeln!(w, "{}\t{}", d, a)?;
        }
        Ok(())
    }

    pub fn write_edge_list_path(&self, path: &Path) -> Result<(), GraphError> {
        let file = std::fs::File::create(path)?;
        self.write_edge_list(std::io::BufWriter::new(file))
    }
}

/// Reads an edge-list file (TSV `device_id<TAB>app_id`) back into an edge set.
pub fn read_edge_list<R: BufRead>(reader: R) -> Result<BTreeSet<(DeviceId, AppId)>, GraphError> {
    let mut edges = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(d), Some(a), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(GraphError::EdgeListFormat { line: i + 1 });
        };
        edges.insert((DeviceId::new(d), AppId::new(a)));
    }
    Ok(edges)
}

pub fn read_edge_list_path(path: &Path) -> Result<BTreeSet<(DeviceId, AppId)>, GraphError> {
    let file = std::fs::File::open(path)?;
    read_edge_list(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edges(pairs: &[(&str, &str)]) -> BTreeSet<(DeviceId, AppId)> {
        pairs
            .iter()
            .map(|(d, a)| (DeviceId::new(*d), AppId::new(*a)))
            .collect()
    }

    #[test]
    fn single_edge_graph() {
        let g = build_graph(&edges(&[("d1", "a1")]));
        assert_eq!(g.device_count(), 1);
        assert_eq!(g.app_count(), 1);
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn empty_graph() {
        let g = build_graph(&BTreeSet::new());
        assert_eq!(g.device_count(), 0);
        assert_eq!(g.app_count(), 0);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn star_neighbors_sorted() {
        let g = build_graph(&edges(&[("d", "a1"), ("d", "a2"), ("d", "a3")]));
        let n = g.neighbors(NodeRef::device(0)).unwrap();
        assert_eq!(n, vec![NodeRef::app(0), NodeRef::app(1), NodeRef::app(2)]);
    }

    #[test]
    fn isolated_node_after_filtering_has_no_neighbors() {
        let g = build_graph(&edges(&[("d1", "a1"), ("d1", "a2"), ("d2", "a1")]));
        let filtered = g.remove_popular_apps(1);
        // a1 has degree 2 and is removed; d2 keeps no neighbors.
        let d2 = filtered.device_index(&DeviceId::new("d2")).unwrap();
        assert!(filtered.neighbors(NodeRef::device(d2)).unwrap().is_empty());
        assert_eq!(filtered.device_count(), 2);
        assert_eq!(filtered.app_count(), 1);
    }

    #[test]
    fn out_of_range_node_is_an_error() {
        let g = build_graph(&edges(&[("d1", "a1")]));
        assert!(g.neighbors(NodeRef::app(5)).is_err());
    }

    #[test]
    fn popularity_boundary_is_strictly_more_than() {
        let g = build_graph(&edges(&[("d1", "a"), ("d2", "a"), ("d3", "a")]));
        // degree 3, threshold 3: retained
        assert_eq!(g.remove_popular_apps(3).app_count(), 1);
        // threshold 2: removed
        assert_eq!(g.remove_popular_apps(2).app_count(), 0);
    }

    #[test]
    fn filter_at_max_degree_is_identity() {
        let e = edges(&[("d1", "a1"), ("d2", "a1"), ("d1", "a2")]);
        let g = build_graph(&e);
        let filtered = g.remove_popular_apps(2);
        assert_eq!(filtered.edge_set(), e);
    }

    #[test]
    fn filter_is_idempotent() {
        let g = build_graph(&edges(&[
            ("d1", "a1"),
            ("d2", "a1"),
            ("d3", "a1"),
            ("d1", "a2"),
        ]));
        let once = g.remove_popular_apps(2);
        let twice = once.remove_popular_apps(2);
        assert_eq!(once.edge_set(), twice.edge_set());
        assert_eq!(once.device_count(), twice.device_count());
        assert_eq!(once.app_count(), twice.app_count());
    }

    #[test]
    fn degree_sums_match_edge_count() {
        let e = edges(&[("d1", "a1"), ("d1", "a2"), ("d2", "a1"), ("d3", "a3")]);
        let g = build_graph(&e);
        let dev_sum: usize = (0..g.device_count() as u32).map(|d| g.device_neighbors(d).len()).sum();
        let app_sum: usize = (0..g.app_count() as u32).map(|a| g.app_neighbors(a).len()).sum();
        assert_eq!(dev_sum, g.edge_count());
        assert_eq!(app_sum, g.edge_count());
    }

    #[test]
    fn edge_list_round_trip_is_identity() {
        let e = edges(&[("d2", "a9"), ("d1", "a1"), ("d1", "a2")]);
        let g = build_graph(&e);
        let mut buf = Vec::new();
        g.write_edge_list(&mut buf).unwrap();
        let back = read_edge_list(&buf[..]).unwrap();
        assert_eq!(back, e);
    }

    #[test]
    fn twin_slots_invert_each_other() {
        let g = build_graph(&edges(&[
            ("d1", "a1"),
            ("d1", "a2"),
            ("d2", "a1"),
            ("d2", "a3"),
            ("d3", "a2"),
        ]));
        for s in 0..g.edge_count() {
            assert_eq!(g.app_twin()[g.dev_twin()[s] as usize], s as u32);
        }
    }
}
