//! Exact graph isomorphism for small graphs.
//!
//! Backtracking over candidate node maps, pruned by stable joint 1-WL colors
//! (which already encode degree and feature class). Feature vectors must
//! match bit-exactly across the mapping; port labels are ignored.

use alloc::vec;
use alloc::vec::Vec;

use crate::wl::wl_refine_joint;
use crate::{Error, Graph, Result};

/// Hard size guard for the backtracking search.
pub const ISO_NODE_LIMIT: usize = 16;

/// Exact isomorphism decision for graphs of at most [`ISO_NODE_LIMIT`] nodes.
pub fn isomorphic_small(g1: &Graph, g2: &Graph) -> Result<bool> {
    if g1.node_count() > ISO_NODE_LIMIT || g2.node_count() > ISO_NODE_LIMIT {
        return Err(Error::GuardExceeded(alloc::format!(
            "isomorphism search limited to {ISO_NODE_LIMIT} nodes"
        )));
    }
    if g1.node_count() != g2.node_count() || g1.edge_count() != g2.edge_count() {
        return Ok(false);
    }
    let n = g1.node_count();
    if n == 0 {
        return Ok(true);
    }

    // Stable joint refinement: a valid isomorphism must preserve colors.
    let rounds = 2 * n;
    let history = wl_refine_joint(&[g1, g2], rounds);
    let c1 = &history[0][rounds];
    let c2 = &history[1][rounds];
    if c1.histogram() != c2.histogram() {
        return Ok(false);
    }

    // Candidate targets per node of g1, most constrained first.
    let mut order: Vec<u32> = (0..n as u32).collect();
    let mut class_size = vec![0usize; n + 1];
    for &c in &c2.colors {
        class_size[c as usize] += 1;
    }
    order.sort_by_key(|&v| class_size[c1.colors[v as usize] as usize]);

    let mut mapping = vec![u32::MAX; n];
    let mut used = vec![false; n];
    Ok(extend(
        g1, g2, &c1.colors, &c2.colors, &order, 0, &mut mapping, &mut used,
    ))
}

#[allow(clippy::too_many_arguments)]
fn extend(
    g1: &Graph,
    g2: &Graph,
    c1: &[u32],
    c2: &[u32],
    order: &[u32],
    depth: usize,
    mapping: &mut Vec<u32>,
    used: &mut Vec<bool>,
) -> bool {
    if depth == order.len() {
        return true;
    }
    let v = order[depth];
    'candidates: for w in 0..g2.node_count() as u32 {
        if used[w as usize] || c1[v as usize] != c2[w as usize] {
            continue;
        }
        // Adjacency consistency with everything already mapped.
        for &x in g1.neighbors(v) {
            let mx = mapping[x as usize];
            if mx != u32::MAX && !g2.neighbors(w).contains(&mx) {
                continue 'candidates;
            }
        }
        for &y in g2.neighbors(w) {
            // Mapped-in-image neighbors of w must be neighbors of v.
            if let Some(x) = mapping.iter().position(|&m| m == y) {
                if !g1.neighbors(v).contains(&(x as u32)) {
                    continue 'candidates;
                }
            }
        }
        mapping[v as usize] = w;
        used[w as usize] = true;
        if extend(g1, g2, c1, c2, order, depth + 1, mapping, used) {
            return true;
        }
        mapping[v as usize] = u32::MAX;
        used[w as usize] = false;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{cycle_graph, disjoint_union};
    use crate::rng::Rng;

    #[test]
    fn relabeled_cycle_is_isomorphic() {
        let g = cycle_graph(4);
        let mut rng = Rng::from_seed(17);
        for _ in 0..10 {
            let h = g.permuted(&rng.permutation(4)).unwrap();
            assert!(isomorphic_small(&g, &h).unwrap());
        }
    }

    #[test]
    fn k4_vs_cycle4() {
        let k4 = Graph::uniform(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        assert!(!isomorphic_small(&k4, &cycle_graph(4)).unwrap());
    }

    #[test]
    fn regular_but_non_isomorphic() {
        // Both 2-regular on 8 nodes; WL colors agree, search must decide.
        let two_cycles = disjoint_union(&cycle_graph(4), &cycle_graph(4));
        let one_cycle = cycle_graph(8);
        assert!(!isomorphic_small(&two_cycles, &one_cycle).unwrap());
        assert!(isomorphic_small(&one_cycle, &cycle_graph(8)).unwrap());
    }

    #[test]
    fn features_must_match() {
        let a = Graph::new(2, &[(0, 1)], vec![vec![1.0], vec![2.0]]).unwrap();
        let b = Graph::new(2, &[(0, 1)], vec![vec![1.0], vec![1.0]]).unwrap();
        let c = Graph::new(2, &[(0, 1)], vec![vec![2.0], vec![1.0]]).unwrap();
        assert!(!isomorphic_small(&a, &b).unwrap());
        assert!(isomorphic_small(&a, &c).unwrap());
    }

    #[test]
    fn size_guard() {
        let g = cycle_graph(17);
        assert!(matches!(
            isomorphic_small(&g, &g),
            Err(Error::GuardExceeded(_))
        ));
    }
}
