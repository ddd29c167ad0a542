//! 1-WL color refinement.
//!
//! Round 0 assigns a color per distinct feature vector (compared bit-exactly;
//! WL runs on discrete labels). Each later round recolors a node by the pair
//! (own color, sorted multiset of neighbor colors). Color ids are canonical:
//! assigned by first occurrence in node order, so colorings of different
//! graphs refined jointly are directly comparable as multisets.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::Graph;

/// A per-node coloring after some refinement round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<u32>,
    pub round: usize,
}

impl Coloring {
    /// Color histogram as a sorted (color, count) list.
    pub fn histogram(&self) -> Vec<(u32, usize)> {
        let mut map = BTreeMap::new();
        for &c in &self.colors {
            *map.entry(c).or_insert(0usize) += 1;
        }
        map.into_iter().collect()
    }

    pub fn class_count(&self) -> usize {
        self.histogram().len()
    }
}

fn feature_key(f: &[f64]) -> Vec<u64> {
    f.iter().map(|x| x.to_bits()).collect()
}

fn canonicalize<K: Ord + Clone>(keys: &[K]) -> Vec<u32> {
    let mut ids: BTreeMap<K, u32> = BTreeMap::new();
    let mut next = 0u32;
    let mut out = Vec::with_capacity(keys.len());
    for k in keys {
        let id = *ids.entry(k.clone()).or_insert_with(|| {
            let id = next;
            next += 1;
            id
        });
        out.push(id);
    }
    out
}

/// One refinement round over the concatenation of several graphs.
fn refine_step(graphs: &[&Graph], colors: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut keys: Vec<(u32, Vec<u32>)> = Vec::new();
    for (g, cols) in graphs.iter().zip(colors) {
        for v in 0..g.node_count() as u32 {
            let mut nbr: Vec<u32> = g.neighbors(v).iter().map(|&w| cols[w as usize]).collect();
            nbr.sort_unstable();
            keys.push((cols[v as usize], nbr));
        }
    }
    let flat = canonicalize(&keys);
    let mut out = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for g in graphs {
        out.push(flat[offset..offset + g.node_count()].to_vec());
        offset += g.node_count();
    }
    out
}

fn initial_colors(graphs: &[&Graph]) -> Vec<Vec<u32>> {
    let keys: Vec<Vec<u64>> = graphs
        .iter()
        .flat_map(|g| (0..g.node_count() as u32).map(|v| feature_key(g.feature(v))))
        .collect();
    let flat = canonicalize(&keys);
    let mut out = Vec::with_capacity(graphs.len());
    let mut offset = 0;
    for g in graphs {
        out.push(flat[offset..offset + g.node_count()].to_vec());
        offset += g.node_count();
    }
    out
}

/// Joint refinement of several graphs for `rounds` rounds; the returned
/// per-graph colors share one canonical id space per round index.
pub fn wl_refine_joint(graphs: &[&Graph], rounds: usize) -> Vec<Vec<Coloring>> {
    let mut colors = initial_colors(graphs);
    let mut history: Vec<Vec<Coloring>> = vec![Vec::new(); graphs.len()];
    for (i, c) in colors.iter().enumerate() {
        history[i].push(Coloring {
            colors: c.clone(),
            round: 0,
        });
    }
    for round in 1..=rounds {
        colors = refine_step(graphs, &colors);
        for (i, c) in colors.iter().enumerate() {
            history[i].push(Coloring {
                colors: c.clone(),
                round,
            });
        }
    }
    history
}

/// Refines a single graph for `rounds` rounds.
pub fn wl_refine(g: &Graph, rounds: usize) -> Coloring {
    let mut history = wl_refine_joint(&[g], rounds).remove(0);
    history.pop().expect("rounds+1 colorings")
}

/// Refines until the partition stops changing (at most node_count rounds);
/// returns the stable coloring.
pub fn wl_refine_stable(g: &Graph) -> Coloring {
    let mut history = wl_refine_joint(&[g], g.node_count()).remove(0);
    let mut stable = history.remove(0);
    for c in history {
        if c.class_count() == stable.class_count() {
            return Coloring {
                colors: stable.colors,
                round: c.round - 1,
            };
        }
        stable = c;
    }
    stable
}

/// Whether 1-WL separates the two graphs within `rounds` rounds: true iff the
/// canonical color multisets differ at some round <= rounds.
pub fn wl_distinguishable(g1: &Graph, g2: &Graph, rounds: usize) -> bool {
    let history = wl_refine_joint(&[g1, g2], rounds);
    for round in 0..=rounds {
        if history[0][round].histogram() != history[1][round].histogram() {
            return true;
        }
    }
    false
}

/// `wl_distinguishable` run to stabilization of the joint partition.
pub fn wl_distinguishable_stable(g1: &Graph, g2: &Graph) -> bool {
    wl_distinguishable(g1, g2, g1.node_count() + g2.node_count())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::cycle_graph;
    use crate::Graph;

    #[test]
    fn vertex_transitive_graph_stays_monochrome() {
        let g = cycle_graph(4);
        for rounds in 0..5 {
            let c = wl_refine(&g, rounds);
            assert_eq!(c.class_count(), 1);
        }
    }

    #[test]
    fn cycles_of_different_length_are_not_separated() {
        // The motivating failure case: 1-WL sees all 2-regular graphs alike.
        let g4 = cycle_graph(4);
        let g8 = cycle_graph(8);
        assert!(!wl_distinguishable_stable(&g4, &g8));
        for rounds in 0..6 {
            let h = wl_refine_joint(&[&g4, &g8], rounds);
            assert_eq!(h[0][rounds].histogram().len(), 1);
            assert_eq!(
                h[0][rounds].colors[0],
                h[1][rounds].colors[0],
                "same canonical color across both cycles"
            );
        }
    }

    #[test]
    fn star_splits_after_one_round() {
        let g = Graph::uniform(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let c = wl_refine(&g, 1);
        let hist = c.histogram();
        let mut counts: Vec<usize> = hist.iter().map(|&(_, n)| n).collect();
        counts.sort_unstable();
        assert_eq!(counts, vec![1, 3]);
    }

    #[test]
    fn triangle_vs_path_distinguishable() {
        let tri = Graph::uniform(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let path = Graph::uniform(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(wl_distinguishable(&tri, &path, 1));
        // Degree split shows up at round 1, not round 0.
        assert!(!wl_distinguishable(&tri, &path, 0));
    }

    #[test]
    fn refinement_is_idempotent_after_stabilization() {
        let mut edges = vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (3, 4), (4, 5)];
        edges.push((5, 3));
        let g = Graph::uniform(6, &edges).unwrap();
        let n = g.node_count();
        let history = wl_refine_joint(&[&g], n).remove(0);
        let stable_at = (0..n)
            .find(|&r| history[r].class_count() == history[r + 1].class_count())
            .expect("partition stabilizes within n rounds");
        for r in stable_at..n {
            assert_eq!(history[r].colors, history[stable_at].colors);
        }
    }
}
