//! Port-number neighborhood reconstruction.
//!
//! With port numbers, the 0-dropout view plus every 1-dropout view of a
//! d-hop neighborhood determine it exactly: two port-identified edges lead
//! to the same node precisely when their far endpoints vanish from the
//! observations simultaneously. The reconstruction walks outward one hop at
//! a time, first recognizing edges between already-known boundary nodes,
//! then merging the remaining dangling ports into new outer nodes.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Graph, Result};

/// A depth-d unfolding tree annotated with ports: each child edge carries
/// the port at the parent (`down_port`) and at the child (`up_port`).
#[derive(Clone, Debug, PartialEq)]
pub struct PortTree {
    pub feature: Vec<f64>,
    pub children: Vec<PortChild>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PortChild {
    pub down_port: u32,
    pub up_port: u32,
    pub tree: PortTree,
}

/// Builds the port-annotated depth-d unfolding tree of `u` over the alive
/// nodes. The graph must carry ports.
pub fn port_unfolding_tree(g: &Graph, u: u32, d: usize, alive: &[bool]) -> Result<PortTree> {
    if !g.has_ports() {
        return Err(Error::InvalidArgument("graph has no ports".into()));
    }
    if !alive[u as usize] {
        return Err(Error::InvalidArgument("root is removed".into()));
    }
    fn rec(g: &Graph, v: u32, depth: usize, alive: &[bool]) -> PortTree {
        let mut children = Vec::new();
        if depth > 0 {
            for &w in g.neighbors(v) {
                if !alive[w as usize] {
                    continue;
                }
                children.push(PortChild {
                    down_port: g.port(v, w).unwrap(),
                    up_port: g.port(w, v).unwrap(),
                    tree: rec(g, w, depth - 1, alive),
                });
            }
            children.sort_by_key(|c| c.down_port);
        }
        PortTree {
            feature: g.feature(v).to_vec(),
            children,
        }
    }
    Ok(rec(g, u, d, alive))
}

/// The observations Theorem-style reconstruction consumes: the 0-dropout
/// tree and the tree of every 1-dropout of the d-hop neighborhood.
#[derive(Clone, Debug)]
pub struct PortObservation {
    pub zero_dropout: PortTree,
    pub one_dropouts: Vec<PortTree>,
}

/// Collects the idealized (true node removal) observation set of `u`.
pub fn observe_port_dropouts(g: &Graph, u: u32, d: usize) -> Result<PortObservation> {
    let (nodes, _) = g.d_hop_neighborhood(u, d)?;
    let all_alive = vec![true; g.node_count()];
    let zero_dropout = port_unfolding_tree(g, u, d, &all_alive)?;
    let mut one_dropouts = Vec::new();
    for &w in &nodes {
        if w == u {
            continue;
        }
        let mut alive = all_alive.clone();
        alive[w as usize] = false;
        one_dropouts.push(port_unfolding_tree(g, u, d, &alive)?);
    }
    Ok(PortObservation {
        zero_dropout,
        one_dropouts,
    })
}

fn navigate<'t>(tree: &'t PortTree, path: &[u32]) -> Option<&'t PortTree> {
    let mut node = tree;
    for &port in path {
        node = &node.children.iter().find(|c| c.down_port == port)?.tree;
    }
    Some(node)
}

fn child_edge<'t>(tree: &'t PortTree, path: &[u32], port: u32) -> Option<&'t PortChild> {
    navigate(tree, path)?.children.iter().find(|c| c.down_port == port)
}

/// Whether two port-identified edges always appear and vanish together
/// across all observations in which both anchor paths are visible.
fn same_target(obs: &PortObservation, a: (&[u32], u32), b: (&[u32], u32)) -> bool {
    let check = |tree: &PortTree| -> bool {
        match (navigate(tree, a.0), navigate(tree, b.0)) {
            (Some(na), Some(nb)) => {
                let pa = na.children.iter().any(|c| c.down_port == a.1);
                let pb = nb.children.iter().any(|c| c.down_port == b.1);
                pa == pb
            }
            // One of the anchors is itself gone: no information.
            _ => true,
        }
    };
    if !check(&obs.zero_dropout) {
        return false;
    }
    obs.one_dropouts.iter().all(|t| check(t))
}

struct RNode {
    path: Vec<u32>,
    feature: Vec<f64>,
    dist: usize,
    ports: Vec<u32>,
}

/// Reconstructs the d-hop neighborhood (nodes within distance d, all
/// induced edges except those between two distance-d nodes) from a
/// 1-complete port observation set. Node 0 of the result is `u`.
///
/// Conflicting merge evidence means some 1-dropout is missing from the
/// observations; that raises [`Error::NotOneComplete`] rather than guessing.
pub fn port_reconstruct(obs: &PortObservation, d: usize) -> Result<Graph> {
    let zero = &obs.zero_dropout;
    let mut nodes: Vec<RNode> = vec![RNode {
        path: Vec::new(),
        feature: zero.feature.clone(),
        dist: 0,
        ports: zero.children.iter().map(|c| c.down_port).collect(),
    }];
    let mut edges: Vec<(usize, usize, u32, u32)> = Vec::new();
    let mut matched: Vec<BTreeSet<u32>> = vec![BTreeSet::new()];
    let mut frontier: Vec<usize> = vec![0];

    for stage in 1..=d {
        // Dangling ports on the boundary, in deterministic order.
        let mut candidates: Vec<(usize, u32)> = Vec::new();
        for &v in &frontier {
            for &port in &nodes[v].ports {
                if !matched[v].contains(&port) {
                    candidates.push((v, port));
                }
            }
        }

        // Step A: edges between boundary nodes. A dangling port leads to a
        // known boundary node v3 iff it vanishes exactly when v3's own
        // parent edge does.
        let mut bound: BTreeSet<(usize, u32)> = BTreeSet::new();
        for &(v, port) in &candidates {
            if bound.contains(&(v, port)) {
                continue;
            }
            let mut hits: Vec<usize> = Vec::new();
            for &v3 in &frontier {
                if v3 == v || nodes[v3].dist == 0 {
                    continue;
                }
                let ident = parent_edge(&nodes[v3].path);
                if same_target(obs, (&nodes[v].path, port), ident) {
                    hits.push(v3);
                }
            }
            match hits.len() {
                0 => {}
                1 => {
                    let v3 = hits[0];
                    // Reciprocal port at v3: the dangling port of v3 that
                    // vanishes with v's parent edge.
                    if nodes[v].dist == 0 {
                        return Err(Error::NotOneComplete(
                            "root port matched a boundary node".into(),
                        ));
                    }
                    let v_ident = parent_edge(&nodes[v].path);
                    let recips: Vec<u32> = nodes[v3]
                        .ports
                        .iter()
                        .copied()
                        .filter(|p| !matched[v3].contains(p) && !bound.contains(&(v3, *p)))
                        .filter(|&p| same_target(obs, (&nodes[v3].path, p), v_ident))
                        .collect();
                    if recips.len() != 1 {
                        return Err(Error::NotOneComplete(alloc::format!(
                            "{} reciprocal ports for a boundary edge",
                            recips.len()
                        )));
                    }
                    edges.push((v, v3, port, recips[0]));
                    bound.insert((v, port));
                    bound.insert((v3, recips[0]));
                }
                _ => {
                    return Err(Error::NotOneComplete(
                        "port matched several boundary nodes".into(),
                    ))
                }
            }
        }
        for &(v, p) in &bound {
            matched[v].insert(p);
        }

        // Step B: group the remaining dangling ports into outer nodes.
        let outer: Vec<(usize, u32)> = candidates
            .into_iter()
            .filter(|c| !bound.contains(c))
            .collect();
        let mut groups: Vec<Vec<(usize, u32)>> = Vec::new();
        for &(v, port) in &outer {
            let mut joined: Option<usize> = None;
            for (gi, group) in groups.iter().enumerate() {
                let all = group
                    .iter()
                    .all(|&(w, q)| same_target(obs, (&nodes[v].path, port), (&nodes[w].path, q)));
                let any = group
                    .iter()
                    .any(|&(w, q)| same_target(obs, (&nodes[v].path, port), (&nodes[w].path, q)));
                if all != any {
                    return Err(Error::NotOneComplete(
                        "inconsistent outer-node merge evidence".into(),
                    ));
                }
                if all {
                    if joined.is_some() {
                        return Err(Error::NotOneComplete(
                            "port agrees with two distinct outer nodes".into(),
                        ));
                    }
                    if group.iter().any(|&(w, _)| w == v) {
                        return Err(Error::NotOneComplete(
                            "two ports of one node claim the same target".into(),
                        ));
                    }
                    joined = Some(gi);
                }
            }
            match joined {
                Some(gi) => groups[gi].push((v, port)),
                None => groups.push(vec![(v, port)]),
            }
        }

        let mut next_frontier = Vec::new();
        for group in groups {
            let (v0, p0) = group[0];
            let mut path = nodes[v0].path.clone();
            path.push(p0);
            let subtree = navigate(zero, &path).ok_or_else(|| {
                Error::NotOneComplete("outer node invisible in the 0-dropout view".into())
            })?;
            let ports = if stage < d {
                subtree.children.iter().map(|c| c.down_port).collect()
            } else {
                // Distance-d nodes are never expanded; only the arriving
                // ports are known.
                group
                    .iter()
                    .map(|&(v, p)| child_edge(zero, &nodes[v].path, p).unwrap().up_port)
                    .collect()
            };
            let x = nodes.len();
            nodes.push(RNode {
                path,
                feature: subtree.feature.clone(),
                dist: stage,
                ports,
            });
            matched.push(BTreeSet::new());
            for &(v, p) in &group {
                let edge = child_edge(zero, &nodes[v].path, p).ok_or_else(|| {
                    Error::NotOneComplete("edge invisible in the 0-dropout view".into())
                })?;
                if edge.tree.feature != nodes[x].feature {
                    return Err(Error::NotOneComplete(
                        "merged ports disagree on the target's feature".into(),
                    ));
                }
                edges.push((v, x, p, edge.up_port));
                matched[v].insert(p);
                matched[x].insert(edge.up_port);
            }
            next_frontier.push(x);
        }
        frontier = next_frontier;
    }

    let features: Vec<Vec<f64>> = nodes.iter().map(|n| n.feature.clone()).collect();
    let plain: Vec<(u32, u32)> = edges.iter().map(|&(a, b, _, _)| (a as u32, b as u32)).collect();
    Graph::new(nodes.len(), &plain, features)
}

fn parent_edge(path: &[u32]) -> (&[u32], u32) {
    let (last, head) = path.split_last().expect("non-root path");
    (head, *last)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{augment, Augmentation};
    use crate::iso::isomorphic_small;
    use crate::lab::theorem3_pair;

    fn true_neighborhood(g: &Graph, u: u32, d: usize) -> Graph {
        let (nodes, edges) = g.d_hop_neighborhood(u, d).unwrap();
        g.subgraph(&nodes, &edges).unwrap().0
    }

    #[test]
    fn tree_neighborhood_reconstructs_exactly() {
        // A small tree: no merges are ever needed.
        let g = Graph::uniform(7, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (5, 6)]).unwrap();
        let g = augment(&g, Augmentation::Ports, 3).unwrap();
        for d in 1..=3 {
            let obs = observe_port_dropouts(&g, 0, d).unwrap();
            let rec = port_reconstruct(&obs, d).unwrap();
            assert!(isomorphic_small(&rec, &true_neighborhood(&g, 0, d)).unwrap());
        }
    }

    #[test]
    fn cycle_wraparound_is_merged() {
        // In a 5-cycle at d = 3, both walk directions reach the same two
        // far nodes; reconstruction must merge them back.
        let g = augment(&crate::graph::cycle_graph(5), Augmentation::Ports, 1).unwrap();
        let obs = observe_port_dropouts(&g, 0, 3).unwrap();
        let rec = port_reconstruct(&obs, 3).unwrap();
        assert!(isomorphic_small(&rec, &true_neighborhood(&g, 0, 3)).unwrap());
        assert_eq!(rec.node_count(), 5);
    }

    #[test]
    fn theorem3_pair_separates_under_ports() {
        let (g1, g2, hub) = theorem3_pair(5).unwrap();
        let g1 = augment(&g1, Augmentation::Ports, 11).unwrap();
        let g2 = augment(&g2, Augmentation::Ports, 12).unwrap();
        let r1 = port_reconstruct(&observe_port_dropouts(&g1, hub, 2).unwrap(), 2).unwrap();
        let r2 = port_reconstruct(&observe_port_dropouts(&g2, hub, 2).unwrap(), 2).unwrap();
        // Reconstructions match their own graphs (the 2-hop view covers
        // everything) and differ from each other.
        assert!(isomorphic_small(&r1, &true_neighborhood(&g1, hub, 2)).unwrap());
        assert!(isomorphic_small(&r2, &true_neighborhood(&g2, hub, 2)).unwrap());
        assert!(!isomorphic_small(&r1, &r2).unwrap());
    }

    #[test]
    fn reconstruction_is_invariant_to_port_rerandomization() {
        let base = Graph::uniform(
            8,
            &[(0, 1), (0, 2), (1, 2), (1, 3), (2, 4), (3, 4), (4, 5), (5, 6), (6, 7), (7, 3)],
        )
        .unwrap();
        let mut reference = None;
        for seed in 0..5 {
            let g = augment(&base, Augmentation::Ports, seed).unwrap();
            let rec = port_reconstruct(&observe_port_dropouts(&g, 0, 2).unwrap(), 2).unwrap();
            match &reference {
                None => reference = Some(rec),
                Some(r) => assert!(isomorphic_small(r, &rec).unwrap()),
            }
        }
    }

    #[test]
    fn missing_one_dropout_is_detected_or_harmless() {
        // Dropping observations can only produce a NotOneComplete error or,
        // when the lost view carried no merge evidence, the same graph.
        let g = augment(&crate::graph::cycle_graph(6), Augmentation::Ports, 2).unwrap();
        let mut obs = observe_port_dropouts(&g, 0, 2).unwrap();
        let truth = port_reconstruct(&obs, 2).unwrap();
        obs.one_dropouts.remove(0);
        match port_reconstruct(&obs, 2) {
            Ok(rec) => assert!(isomorphic_small(&rec, &truth).unwrap()),
            Err(Error::NotOneComplete(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
    }
}
