//! Undirected attributed graphs with optional per-edge port numbers.
//!
//! A [`Graph`] is immutable after construction; every invariant (symmetry,
//! simplicity, uniform feature dimension, the port permutation property) is
//! checked in the constructor so downstream code can rely on it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// An undirected simple graph with per-node feature vectors and, optionally,
/// a port label on each directed edge.
///
/// Ports at a node `v` are a permutation of `0..deg(v)`: they let `v` tell
/// its incident edges apart, the extra power used by port-numbered message
/// passing.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    n: usize,
    adj: Vec<Vec<u32>>,
    features: Vec<Vec<f64>>,
    /// ports[v][i] is the label of the directed edge v -> adj[v][i].
    ports: Option<Vec<Vec<u32>>>,
}

impl Graph {
    /// Builds a graph from an undirected edge list and per-node features.
    pub fn new(n: usize, edges: &[(u32, u32)], features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != n {
            return Err(Error::InvalidGraph(format!(
                "{} feature vectors for {n} nodes",
                features.len()
            )));
        }
        let dim = features.first().map(|f| f.len()).unwrap_or(1);
        if dim == 0 || features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidGraph(
                "feature vectors must share one dimension >= 1".into(),
            ));
        }
        let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            let (ui, vi) = (u as usize, v as usize);
            if ui >= n || vi >= n {
                return Err(Error::InvalidGraph(format!("edge ({u},{v}) out of range")));
            }
            if ui == vi {
                return Err(Error::InvalidGraph(format!("self-loop at {u}")));
            }
            if adj[ui].contains(&v) {
                return Err(Error::InvalidGraph(format!("duplicate edge ({u},{v})")));
            }
            adj[ui].push(v);
            adj[vi].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Ok(Graph {
            n,
            adj,
            features,
            ports: None,
        })
    }

    /// Builds a graph whose nodes all carry the single feature `1.0`.
    pub fn uniform(n: usize, edges: &[(u32, u32)]) -> Result<Self> {
        Self::new(n, edges, vec![vec![1.0]; n])
    }

    /// Attaches port labels given as `(u, v, port_uv, port_vu)` per edge.
    pub fn with_ports(mut self, port_edges: &[(u32, u32, u32, u32)]) -> Result<Self> {
        let mut ports: Vec<Vec<u32>> = self
            .adj
            .iter()
            .map(|nbrs| vec![u32::MAX; nbrs.len()])
            .collect();
        let mut set = |u: u32, v: u32, p: u32| -> Result<()> {
            let slot = self.adj[u as usize]
                .iter()
                .position(|&w| w == v)
                .ok_or_else(|| Error::InvalidGraph(format!("port on missing edge ({u},{v})")))?;
            ports[u as usize][slot] = p;
            Ok(())
        };
        for &(u, v, puv, pvu) in port_edges {
            set(u, v, puv)?;
            set(v, u, pvu)?;
        }
        for (v, labels) in ports.iter().enumerate() {
            let mut sorted: Vec<u32> = labels.clone();
            sorted.sort_unstable();
            if sorted.iter().enumerate().any(|(i, &p)| p != i as u32) {
                return Err(Error::InvalidGraph(format!(
                    "ports at node {v} are not a permutation of 0..deg"
                )));
            }
        }
        self.ports = Some(ports);
        Ok(self)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map(|f| f.len()).unwrap_or(1)
    }

    pub fn neighbors(&self, v: u32) -> &[u32] {
        &self.adj[v as usize]
    }

    pub fn degree(&self, v: u32) -> usize {
        self.adj[v as usize].len()
    }

    pub fn feature(&self, v: u32) -> &[f64] {
        &self.features[v as usize]
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn has_ports(&self) -> bool {
        self.ports.is_some()
    }

    /// Port label of the directed edge `v -> w`, if ports are present.
    pub fn port(&self, v: u32, w: u32) -> Option<u32> {
        let ports = self.ports.as_ref()?;
        let slot = self.adj[v as usize].iter().position(|&x| x == w)?;
        Some(ports[v as usize][slot])
    }

    /// Undirected edge list with u < v, sorted.
    pub fn edges(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for v in 0..self.n as u32 {
            for &w in self.neighbors(v) {
                if v < w {
                    out.push((v, w));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|l| l.len()).sum::<usize>() / 2
    }

    /// Edge list annotated with both port labels, `(u, v, port_uv, port_vu)`.
    pub fn port_edges(&self) -> Option<Vec<(u32, u32, u32, u32)>> {
        self.ports.as_ref()?;
        Some(
            self.edges()
                .into_iter()
                .map(|(u, v)| (u, v, self.port(u, v).unwrap(), self.port(v, u).unwrap()))
                .collect(),
        )
    }

    fn check_node(&self, v: u32) -> Result<()> {
        if (v as usize) < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node: v as usize,
                node_count: self.n,
            })
        }
    }

    /// BFS distances from `u`; unreachable nodes get `usize::MAX`.
    pub fn distances(&self, u: u32) -> Result<Vec<usize>> {
        self.check_node(u)?;
        let mut dist = vec![usize::MAX; self.n];
        let mut queue = alloc::collections::VecDeque::new();
        dist[u as usize] = 0;
        queue.push_back(u);
        while let Some(v) = queue.pop_front() {
            for &w in self.neighbors(v) {
                if dist[w as usize] == usize::MAX {
                    dist[w as usize] = dist[v as usize] + 1;
                    queue.push_back(w);
                }
            }
        }
        Ok(dist)
    }

    /// The d-hop neighborhood of `u`: all nodes within distance `d`, and all
    /// induced edges except those whose endpoints are both at distance
    /// exactly `d`.
    ///
    /// Returns sorted node ids and sorted `(u, v)` edges (u < v).
    pub fn d_hop_neighborhood(&self, u: u32, d: usize) -> Result<(Vec<u32>, Vec<(u32, u32)>)> {
        let dist = self.distances(u)?;
        let nodes: Vec<u32> = (0..self.n as u32)
            .filter(|&v| dist[v as usize] <= d)
            .collect();
        let mut edges = Vec::new();
        for &v in &nodes {
            for &w in self.neighbors(v) {
                if v < w
                    && dist[w as usize] <= d
                    && !(dist[v as usize] == d && dist[w as usize] == d)
                {
                    edges.push((v, w));
                }
            }
        }
        edges.sort_unstable();
        Ok((nodes, edges))
    }

    /// Neighborhood-of-interest size: the d-hop node set minus `u` itself.
    pub fn gamma(&self, u: u32, d: usize) -> Result<usize> {
        Ok(self.d_hop_neighborhood(u, d)?.0.len() - 1)
    }

    /// The graph induced by a node subset and an edge subset, relabeled to
    /// `0..nodes.len()` in the order given. Ports are dropped (a subgraph
    /// generally breaks the permutation property). Returns the new graph and
    /// the old id of each new node.
    pub fn subgraph(&self, nodes: &[u32], edges: &[(u32, u32)]) -> Result<(Graph, Vec<u32>)> {
        let mut index = vec![u32::MAX; self.n];
        for (new, &old) in nodes.iter().enumerate() {
            self.check_node(old)?;
            index[old as usize] = new as u32;
        }
        let relabeled: Vec<(u32, u32)> = edges
            .iter()
            .map(|&(a, b)| (index[a as usize], index[b as usize]))
            .collect();
        if relabeled.iter().any(|&(a, b)| a == u32::MAX || b == u32::MAX) {
            return Err(Error::InvalidGraph("edge endpoint outside node subset".into()));
        }
        let features = nodes.iter().map(|&v| self.features[v as usize].clone()).collect();
        Ok((
            Graph::new(nodes.len(), &relabeled, features)?,
            nodes.to_vec(),
        ))
    }

    /// The graph with the given nodes (and their incident edges) removed,
    /// relabeled; ports are dropped. Returns the old id of each new node.
    pub fn remove_nodes(&self, removed: &[u32]) -> Result<(Graph, Vec<u32>)> {
        let mut keep = vec![true; self.n];
        for &v in removed {
            self.check_node(v)?;
            keep[v as usize] = false;
        }
        let nodes: Vec<u32> = (0..self.n as u32).filter(|&v| keep[v as usize]).collect();
        let edges: Vec<(u32, u32)> = self
            .edges()
            .into_iter()
            .filter(|&(a, b)| keep[a as usize] && keep[b as usize])
            .collect();
        self.subgraph(&nodes, &edges)
    }

    /// Relabels nodes by `perm` (new id of old node v is `perm[v]`),
    /// carrying features and ports along.
    pub fn permuted(&self, perm: &[u32]) -> Result<Graph> {
        if perm.len() != self.n {
            return Err(Error::InvalidArgument("permutation length mismatch".into()));
        }
        let mut seen = vec![false; self.n];
        for &p in perm {
            if (p as usize) >= self.n || seen[p as usize] {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            seen[p as usize] = true;
        }
        let edges: Vec<(u32, u32)> = self
            .edges()
            .into_iter()
            .map(|(a, b)| (perm[a as usize], perm[b as usize]))
            .collect();
        let mut features = vec![Vec::new(); self.n];
        for v in 0..self.n {
            features[perm[v] as usize] = self.features[v].clone();
        }
        let g = Graph::new(self.n, &edges, features)?;
        match &self.ports {
            None => Ok(g),
            Some(_) => {
                let port_edges: Vec<(u32, u32, u32, u32)> = self
                    .port_edges()
                    .unwrap()
                    .into_iter()
                    .map(|(a, b, pab, pba)| (perm[a as usize], perm[b as usize], pab, pba))
                    .collect();
                g.with_ports(&port_edges)
            }
        }
    }

    /// Number of triangles through node `v`.
    pub fn triangles_at(&self, v: u32) -> usize {
        let nbrs = self.neighbors(v);
        let mut count = 0;
        for (i, &a) in nbrs.iter().enumerate() {
            for &b in &nbrs[i + 1..] {
                if self.adj[a as usize].binary_search(&b).is_ok() {
                    count += 1;
                }
            }
        }
        count
    }

    /// Local clustering coefficient of `v` (0 for degree < 2).
    pub fn local_clustering(&self, v: u32) -> f64 {
        let deg = self.degree(v);
        if deg < 2 {
            return 0.0;
        }
        self.triangles_at(v) as f64 / (deg * (deg - 1) / 2) as f64
    }

    /// Whether the graph contains a simple cycle of length exactly `k`.
    ///
    /// Exhaustive DFS over simple paths; meant for small desk-scale graphs.
    pub fn has_cycle_of_length(&self, k: usize) -> bool {
        if k < 3 {
            return false;
        }
        let mut on_path = vec![false; self.n];
        // Anchor each candidate cycle at its minimum node to avoid re-walks.
        for start in 0..self.n as u32 {
            on_path[start as usize] = true;
            if self.cycle_dfs(start, start, 1, k, &mut on_path) {
                return true;
            }
            on_path[start as usize] = false;
        }
        false
    }

    fn cycle_dfs(&self, start: u32, v: u32, len: usize, k: usize, on_path: &mut Vec<bool>) -> bool {
        for &w in self.neighbors(v) {
            if w == start && len == k {
                return true;
            }
            if w > start && !on_path[w as usize] && len < k {
                on_path[w as usize] = true;
                if self.cycle_dfs(start, w, len + 1, k, on_path) {
                    return true;
                }
                on_path[w as usize] = false;
            }
        }
        false
    }

    /// Degree multiset, sorted ascending.
    pub fn degree_sequence(&self) -> Vec<usize> {
        let mut degs: Vec<usize> = (0..self.n as u32).map(|v| self.degree(v)).collect();
        degs.sort_unstable();
        degs
    }
}

/// A cycle graph on `0..n` with consecutive ids adjacent.
pub fn cycle_graph(n: usize) -> Graph {
    let edges: Vec<(u32, u32)> = (0..n as u32).map(|i| (i, (i + 1) % n as u32)).collect();
    Graph::uniform(n, &edges).expect("cycle graph is simple")
}

/// A disjoint union, nodes of `b` offset by `a.node_count()`. Ports carry over.
pub fn disjoint_union(a: &Graph, b: &Graph) -> Graph {
    let off = a.node_count() as u32;
    let mut edges = a.edges();
    edges.extend(b.edges().into_iter().map(|(u, v)| (u + off, v + off)));
    let mut features: Vec<Vec<f64>> = a.features().to_vec();
    features.extend(b.features().iter().cloned());
    let g = Graph::new(a.node_count() + b.node_count(), &edges, features)
        .expect("disjoint union of valid graphs");
    match (a.port_edges(), b.port_edges()) {
        (Some(mut pa), Some(pb)) => {
            pa.extend(pb.into_iter().map(|(u, v, x, y)| (u + off, v + off, x, y)));
            g.with_ports(&pa).expect("ports carry over")
        }
        _ => g,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_self_loops_and_duplicates() {
        assert!(Graph::uniform(2, &[(0, 0)]).is_err());
        assert!(Graph::uniform(2, &[(0, 1), (1, 0)]).is_err());
    }

    #[test]
    fn rejects_bad_ports() {
        let g = Graph::uniform(3, &[(0, 1), (0, 2)]).unwrap();
        // Node 0 has degree 2 but gets ports {0, 0}.
        assert!(g
            .clone()
            .with_ports(&[(0, 1, 0, 0), (0, 2, 0, 0)])
            .is_err());
        assert!(g.with_ports(&[(0, 1, 0, 0), (0, 2, 1, 0)]).is_ok());
    }

    #[test]
    fn d_hop_on_8_cycle() {
        let g = cycle_graph(8);
        for u in 0..8 {
            let (nodes, edges) = g.d_hop_neighborhood(u, 2).unwrap();
            assert_eq!(nodes.len(), 5, "u plus two per side");
            assert_eq!(edges.len(), 4);
            assert_eq!(g.gamma(u, 2).unwrap(), 4);
        }
    }

    #[test]
    fn d_hop_excludes_fringe_edges() {
        // Triangle: edge 1-2 joins two nodes at distance exactly 1 = d.
        let g = Graph::uniform(3, &[(0, 1), (0, 2), (1, 2)]).unwrap();
        let (nodes, edges) = g.d_hop_neighborhood(0, 1).unwrap();
        assert_eq!(nodes, vec![0, 1, 2]);
        assert_eq!(edges, vec![(0, 1), (0, 2)]);
    }

    #[test]
    fn node_out_of_range_is_an_error() {
        let g = cycle_graph(4);
        assert!(matches!(
            g.d_hop_neighborhood(4, 1),
            Err(Error::NodeOutOfRange { .. })
        ));
    }

    #[test]
    fn cycle_census() {
        let g = cycle_graph(16);
        assert!(g.has_cycle_of_length(16));
        assert!(!g.has_cycle_of_length(4));
        let two = disjoint_union(&cycle_graph(4), &cycle_graph(12));
        assert!(two.has_cycle_of_length(4));
        assert!(!two.has_cycle_of_length(16));
    }

    #[test]
    fn clustering_on_k4() {
        let g = Graph::uniform(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        for v in 0..4 {
            assert_eq!(g.local_clustering(v), 1.0);
            assert_eq!(g.triangles_at(v), 3);
        }
    }
}
