//! Canonical signatures of depth-d unfolding trees.
//!
//! The unfolding tree of a node is its message-passing computation tree: the
//! children of a tree node are all alive graph neighbors of the corresponding
//! graph node (including the one it was reached from — messages flow back).
//! Two nodes get equal signatures exactly when a d-layer message-passing GNN
//! is forced to compute the same embedding for them.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Graph, Result};

/// Canonical encoding of a depth-d unfolding tree. Equal signatures iff the
/// rooted trees are identical under the WL view.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NeighborhoodSignature(pub String);

fn push_feature(out: &mut String, f: &[f64]) {
    use core::fmt::Write;
    for x in f {
        let _ = write!(out, "{:x};", x.to_bits());
    }
}

/// Signature of `u`'s depth-d unfolding tree in the graph restricted to
/// `alive` nodes. `alive[u]` must hold.
pub fn unfolding_signature_masked(
    g: &Graph,
    u: u32,
    d: usize,
    alive: &[bool],
) -> Result<NeighborhoodSignature> {
    if (u as usize) >= g.node_count() {
        return Err(Error::NodeOutOfRange {
            node: u as usize,
            node_count: g.node_count(),
        });
    }
    if alive.len() != g.node_count() {
        return Err(Error::InvalidArgument("alive mask length mismatch".into()));
    }
    if !alive[u as usize] {
        return Err(Error::InvalidArgument("root of unfolding tree is removed".into()));
    }
    // memo[depth][node]: signatures are shared heavily across the tree.
    let mut memo: Vec<Vec<Option<String>>> = vec![vec![None; g.node_count()]; d + 1];
    Ok(NeighborhoodSignature(sig_rec(g, u, d, alive, &mut memo)))
}

fn sig_rec(g: &Graph, v: u32, d: usize, alive: &[bool], memo: &mut Vec<Vec<Option<String>>>) -> String {
    if let Some(s) = &memo[d][v as usize] {
        return s.clone();
    }
    let mut s = String::from("(");
    push_feature(&mut s, g.feature(v));
    if d > 0 {
        let ported = g.has_ports();
        let mut children: Vec<String> = Vec::new();
        for &w in g.neighbors(v) {
            if !alive[w as usize] {
                continue;
            }
            let child = sig_rec(g, w, d - 1, alive, memo);
            if ported {
                use core::fmt::Write;
                let mut keyed = String::new();
                let _ = write!(
                    keyed,
                    "p{}:{}:",
                    g.port(v, w).unwrap(),
                    g.port(w, v).unwrap()
                );
                keyed.push_str(&child);
                children.push(keyed);
            } else {
                children.push(child);
            }
        }
        children.sort_unstable();
        s.push('[');
        for c in children {
            s.push_str(&c);
        }
        s.push(']');
    }
    s.push(')');
    memo[d][v as usize] = Some(s.clone());
    s
}

/// Signature of `u`'s depth-d unfolding tree with every node alive.
pub fn unfolding_signature(g: &Graph, u: u32, d: usize) -> Result<NeighborhoodSignature> {
    unfolding_signature_masked(g, u, d, &vec![true; g.node_count()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::cycle_graph;
    use crate::rng::Rng;

    #[test]
    fn isolated_node_is_a_leaf() {
        let g = Graph::new(1, &[], vec![vec![2.5]]).unwrap();
        let sig = unfolding_signature(&g, 0, 3).unwrap();
        let leaf = unfolding_signature(&g, 0, 0).unwrap();
        // Depth only adds empty child lists around the same feature.
        assert_ne!(sig, leaf);
        let again = unfolding_signature(&g, 0, 3).unwrap();
        assert_eq!(sig, again);
    }

    #[test]
    fn dropping_a_near_node_changes_the_view() {
        let g = cycle_graph(8);
        let base = unfolding_signature(&g, 0, 2).unwrap();
        let mut alive = vec![true; 8];
        alive[1] = false; // distance-1 node
        let dropped = unfolding_signature_masked(&g, 0, 2, &alive).unwrap();
        assert_ne!(base, dropped);
        // A node beyond the 2-hop horizon is invisible.
        let mut far = vec![true; 8];
        far[4] = false;
        assert_eq!(base, unfolding_signature_masked(&g, 0, 2, &far).unwrap());
    }

    #[test]
    fn signature_is_relabeling_invariant() {
        let g = Graph::uniform(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (0, 3)]).unwrap();
        let mut rng = Rng::from_seed(99);
        for _ in 0..20 {
            let perm = rng.permutation(6);
            let h = g.permuted(&perm).unwrap();
            for v in 0..6u32 {
                let a = unfolding_signature(&g, v, 3).unwrap();
                let b = unfolding_signature(&h, perm[v as usize], 3).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn ports_make_the_encoding_port_sensitive() {
        // Path 1-0-2 with two different port assignments at the center.
        let g = Graph::uniform(3, &[(0, 1), (0, 2)]).unwrap();
        let a = g
            .clone()
            .with_ports(&[(0, 1, 0, 0), (0, 2, 1, 0)])
            .unwrap();
        let b = g.with_ports(&[(0, 1, 1, 0), (0, 2, 0, 0)]).unwrap();
        // Leaves differ in the port pair leading to them.
        assert_ne!(
            unfolding_signature(&a, 1, 1).unwrap(),
            unfolding_signature(&b, 1, 1).unwrap()
        );
    }
}
