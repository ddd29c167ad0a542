//! Input augmentations for the baseline comparisons: random port numbers,
//! one-hot node ids under a random permutation, and a standard-normal extra
//! feature. Each is resampled per dataset copy, which is exactly why the id
//! and random-feature baselines fail to generalize.

use alloc::vec::Vec;

use crate::rng::Rng;
use crate::{Graph, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Augmentation {
    None,
    Ports,
    NodeIds,
    RandomFeatures,
}

/// Applies an augmentation, deterministically in `seed`.
pub fn augment(g: &Graph, kind: Augmentation, seed: u64) -> Result<Graph> {
    match kind {
        Augmentation::None => Ok(g.clone()),
        Augmentation::Ports => random_ports(g, seed),
        Augmentation::NodeIds => one_hot_ids(g, seed),
        Augmentation::RandomFeatures => random_feature(g, seed),
    }
}

fn random_ports(g: &Graph, seed: u64) -> Result<Graph> {
    let mut rng = Rng::stream(seed, 0x706f7274);
    let perms: Vec<Vec<u32>> = (0..g.node_count() as u32)
        .map(|v| rng.permutation(g.degree(v)))
        .collect();
    let port_of = |v: u32, w: u32| -> u32 {
        let slot = g.neighbors(v).iter().position(|&x| x == w).unwrap();
        perms[v as usize][slot]
    };
    let port_edges: Vec<(u32, u32, u32, u32)> = g
        .edges()
        .into_iter()
        .map(|(u, v)| (u, v, port_of(u, v), port_of(v, u)))
        .collect();
    g.clone().with_ports(&port_edges)
}

fn one_hot_ids(g: &Graph, seed: u64) -> Result<Graph> {
    let n = g.node_count();
    let mut rng = Rng::stream(seed, 0x696473);
    let perm = rng.permutation(n);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            let mut f = g.feature(v as u32).to_vec();
            let mut onehot = alloc::vec![0.0; n];
            onehot[perm[v] as usize] = 1.0;
            f.extend(onehot);
            f
        })
        .collect();
    let g2 = Graph::new(n, &g.edges(), features)?;
    match g.port_edges() {
        Some(pe) => g2.with_ports(&pe),
        None => Ok(g2),
    }
}

fn random_feature(g: &Graph, seed: u64) -> Result<Graph> {
    let n = g.node_count();
    let mut rng = Rng::stream(seed, 0x726e64);
    let features: Vec<Vec<f64>> = (0..n)
        .map(|v| {
            let mut f = g.feature(v as u32).to_vec();
            f.push(rng.normal());
            f
        })
        .collect();
    let g2 = Graph::new(n, &g.edges(), features)?;
    match g.port_edges() {
        Some(pe) => g2.with_ports(&pe),
        None => Ok(g2),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ports_form_a_permutation_per_node() {
        let star = Graph::uniform(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let g = augment(&star, Augmentation::Ports, 5).unwrap();
        let mut center_ports: Vec<u32> = (1..4).map(|w| g.port(0, w).unwrap()).collect();
        center_ports.sort_unstable();
        assert_eq!(center_ports, vec![0, 1, 2]);
    }

    #[test]
    fn node_ids_grow_feature_dim_by_n() {
        let g = crate::graph::cycle_graph(16);
        let a = augment(&g, Augmentation::NodeIds, 1).unwrap();
        assert_eq!(a.feature_dim(), 1 + 16);
    }

    #[test]
    fn random_features_are_seed_reproducible() {
        let g = crate::graph::cycle_graph(5);
        let a = augment(&g, Augmentation::RandomFeatures, 9).unwrap();
        let b = augment(&g, Augmentation::RandomFeatures, 9).unwrap();
        let c = augment(&g, Augmentation::RandomFeatures, 10).unwrap();
        assert_eq!(a.features(), b.features());
        assert_ne!(a.features(), c.features());
        assert_eq!(a.feature_dim(), 2);
    }
}
