//! Hand-constructed networks with exactly known behavior, used as oracles.
//!
//! All three use true node removal and exact Heaviside steps (sigma(0) = 1),
//! so their outputs are integers or small dyadic rationals and can be
//! asserted bit-exactly.

use alloc::vec;
use alloc::vec::Vec;

use crate::tape::{Activation, AggKind, Params};
use crate::tensor::Matrix;

use super::{
    DropoutRealization, GnnModel, HeadDesc, LayerDesc, Readout, RunAggregation,
};

fn mat(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    Matrix::from_vec(rows, cols, data.to_vec()).expect("static shape")
}

struct FixedLayer {
    w1: Matrix,
    b1: Matrix,
    act1: Activation,
    w2: Matrix,
    b2: Matrix,
    act2: Activation,
    eps: f64,
}

fn assemble(
    layers: Vec<FixedLayer>,
    aggregation: AggKind,
    run_aggregation: RunAggregation,
    head_w: Matrix,
) -> GnnModel {
    let mut params = Params::new();
    let in_dim = layers[0].w1.rows;
    let descs: Vec<LayerDesc> = layers
        .into_iter()
        .map(|l| {
            let (din, dout) = (l.w1.rows, l.w2.cols);
            LayerDesc {
                w1: params.add(l.w1),
                b1: params.add(l.b1),
                act1: l.act1,
                w2: params.add(l.w2),
                b2: params.add(l.b2),
                act2: l.act2,
                eps: l.eps,
                bn: None,
                ports: None,
                in_dim: din,
                out_dim: dout,
            }
        })
        .collect();
    let classes = head_w.cols;
    let head = HeadDesc {
        w: params.add(head_w),
        b: params.add(Matrix::zeros(1, classes)),
    };
    GnnModel {
        params,
        layers: descs,
        aggregation,
        readout: Readout::NodeLevel,
        head,
        aux_head: None,
        run_aggregation,
        run_count: 1,
        dropout_p: 0.0,
        realization: DropoutRealization::RemoveNodes,
        in_dim,
        classes,
    }
}

fn identity_layer(eps: f64) -> FixedLayer {
    FixedLayer {
        w1: mat(1, 1, &[1.0]),
        b1: mat(1, 1, &[0.0]),
        act1: Activation::Identity,
        w2: mat(1, 1, &[1.0]),
        b2: mat(1, 1, &[0.0]),
        act2: Activation::Identity,
        eps,
    }
}

/// Pick one column (the final layer's scalar value) out of the concatenated
/// readout input.
fn pick_last(concat_dim: usize) -> Matrix {
    let mut w = Matrix::zeros(concat_dim, 1);
    w.set(concat_dim - 1, 0, 1.0);
    w
}

/// The d = 2 integer network: plain sum aggregation, additive update with no
/// non-linearity, all features starting at 1. With no dropout every node
/// reaches 3 after round one and 9 after round two; the run aggregation
/// `sum of step(x - 8)` counts the runs whose final value stayed that high.
pub fn analytic_example1() -> GnnModel {
    let layers = vec![identity_layer(0.0), identity_layer(0.0)];
    let mut tw = Matrix::zeros(3, 1);
    tw.set(2, 0, 1.0);
    assemble(
        layers,
        AggKind::Sum,
        RunAggregation::TransformedSum {
            w: tw,
            b: mat(1, 1, &[-8.0]),
            activation: Activation::Heaviside,
        },
        pick_last(3),
    )
}

/// The cycle detector. Values are always 0 or 1; a node keeps value 1 iff
/// its own value is 1 and exactly two of its alive neighbors have value 1,
/// so after three rounds a node is 1 iff its surviving component held it in
/// cycle-like position throughout.
///
/// Encoding into the GIN update shape: with (1 + eps) = 3 the pre-MLP scalar
/// x = 3 v_u + sum of neighbor values determines (v_u, sum) uniquely for
/// degrees up to 4, and x = 5 is exactly "own value 1, neighbor sum 2". The
/// 2-level step MLP sigma(sigma(x-5) + sigma(5-x) - 2) fires only on x = 5.
pub fn analytic_example2() -> GnnModel {
    let step_layer = || FixedLayer {
        w1: mat(1, 2, &[1.0, -1.0]),
        b1: mat(1, 2, &[-5.0, 5.0]),
        act1: Activation::Heaviside,
        w2: mat(2, 1, &[1.0, 1.0]),
        b2: mat(1, 1, &[-2.0]),
        act2: Activation::Heaviside,
        eps: 2.0,
    };
    let layers = vec![step_layer(), step_layer(), step_layer()];
    assemble(layers, AggKind::Sum, RunAggregation::Mean, pick_last(4))
}

/// The d = 1 mean-aggregation model: a node's value becomes the mean of its
/// alive neighbors' +-1 features (its own feature is dropped via eps = -1;
/// an empty neighborhood means 0). Run aggregation thresholds at 0.5.
pub fn analytic_example3() -> GnnModel {
    let layers = vec![identity_layer(-1.0)];
    let mut tw = Matrix::zeros(2, 1);
    tw.set(1, 0, 1.0);
    assemble(
        layers,
        AggKind::Mean,
        RunAggregation::TransformedSum {
            w: tw,
            b: mat(1, 1, &[-0.5]),
            activation: Activation::Heaviside,
        },
        pick_last(2),
    )
}

/// The two Example 2 graphs (gray nodes are the degree-3 ones, returned as
/// `(graph, gray_node)`): two triangles joined by an edge between the gray
/// nodes, versus a six-cycle with a chord between them. Uniform features.
pub fn example2_graphs() -> ((crate::Graph, u32), (crate::Graph, u32)) {
    let left = crate::Graph::uniform(
        6,
        &[(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5), (0, 3)],
    )
    .unwrap();
    let right = crate::Graph::uniform(
        6,
        &[(0, 1), (0, 2), (0, 3), (3, 4), (3, 5), (1, 4), (2, 5)],
    )
    .unwrap();
    ((left, 0), (right, 0))
}

/// The two Example 3 stars: the center with neighbors {+1, -1}, versus
/// {+1, +1, -1, -1}. Returns `(graph, center)`.
pub fn example3_graphs() -> ((crate::Graph, u32), (crate::Graph, u32)) {
    let left = crate::Graph::new(
        3,
        &[(0, 1), (0, 2)],
        vec![vec![1.0], vec![1.0], vec![-1.0]],
    )
    .unwrap();
    let right = crate::Graph::new(
        5,
        &[(0, 1), (0, 2), (0, 3), (0, 4)],
        vec![vec![1.0], vec![1.0], vec![1.0], vec![-1.0], vec![-1.0]],
    )
    .unwrap();
    ((left, 0), (right, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dropout::DropoutMask;
    use crate::engine::{gnn_forward, Mode};
    use crate::graph::cycle_graph;
    use crate::Graph;

    fn final_value(model: &GnnModel, g: &Graph, dropped: &[u32], u: u32) -> Option<f64> {
        let mut mask = DropoutMask::none(g.node_count());
        for &v in dropped {
            mask.dropped[v as usize] = true;
        }
        let out = gnn_forward(model, g, &mask, Mode::Eval).unwrap();
        out.final_embedding(u).map(|e| e[0])
    }

    #[test]
    fn example1_no_dropout_rounds() {
        let model = analytic_example1();
        let g = cycle_graph(8);
        let out = gnn_forward(&model, &g, &DropoutMask::none(8), Mode::Eval).unwrap();
        for v in 0..8 {
            assert_eq!(out.layers[1].row(v)[0], 3.0, "after round one");
            assert_eq!(out.layers[2].row(v)[0], 9.0, "after round two");
        }
    }

    #[test]
    fn example1_one_dropout_multisets() {
        let model = analytic_example1();
        // 4-cycle: u = 0, in-range nodes 1, 2, 3.
        let g4 = cycle_graph(4);
        let mut vals4: Vec<f64> = (1..4)
            .map(|v| final_value(&model, &g4, &[v], 0).unwrap())
            .collect();
        vals4.sort_by(f64::total_cmp);
        assert_eq!(vals4, vec![5.0, 5.0, 7.0]);
        // 8-cycle: u = 0, in-range nodes 1, 2 and 7, 6.
        let g8 = cycle_graph(8);
        let mut vals8: Vec<f64> = [1u32, 2, 6, 7]
            .iter()
            .map(|&v| final_value(&model, &g8, &[v], 0).unwrap())
            .collect();
        vals8.sort_by(f64::total_cmp);
        assert_eq!(vals8, vec![5.0, 5.0, 8.0, 8.0]);
    }

    #[test]
    fn example1_multi_dropouts_stay_at_most_7() {
        let model = analytic_example1();
        let g4 = cycle_graph(4);
        // Every non-empty dropout subset of the three in-range nodes.
        for mask_bits in 1u32..8 {
            let dropped: Vec<u32> = (0..3).filter(|i| mask_bits >> i & 1 == 1).map(|i| i + 1).collect();
            let v = final_value(&model, &g4, &dropped, 0).unwrap();
            assert!(v <= 7.0, "dropout {dropped:?} gave {v}");
        }
    }

    #[test]
    fn example2_separates_the_gray_nodes() {
        let model = analytic_example2();
        let ((left, ul), (right, ur)) = example2_graphs();
        // Left: dropping the other gray node puts u in a cycle.
        assert_eq!(final_value(&model, &left, &[3], ul).unwrap(), 1.0);
        // Right: no single dropout does.
        for v in 0..6 {
            if v == ur {
                continue;
            }
            assert_eq!(final_value(&model, &right, &[v], ur).unwrap(), 0.0, "drop {v}");
        }
        // Exactly two 2-dropouts leave u on a cycle in the right graph.
        let mut cycle_cases = 0;
        for a in 0..6u32 {
            for b in (a + 1)..6 {
                if a == ur || b == ur {
                    continue;
                }
                if final_value(&model, &right, &[a, b], ur).unwrap() == 1.0 {
                    cycle_cases += 1;
                }
            }
        }
        assert_eq!(cycle_cases, 2);
    }

    #[test]
    fn example2_fixed_point_on_intact_cycle() {
        let model = analytic_example2();
        for n in [3usize, 5, 8, 12] {
            let g = cycle_graph(n);
            let out = gnn_forward(&model, &g, &DropoutMask::none(n), Mode::Eval).unwrap();
            for layer in &out.layers {
                for v in 0..n {
                    assert_eq!(layer.row(v)[0], 1.0);
                }
            }
        }
    }

    #[test]
    fn example2_outputs_stay_binary_under_every_mask() {
        let model = analytic_example2();
        let ((left, _), (right, _)) = example2_graphs();
        for g in [&left, &right] {
            for bits in 0u32..64 {
                let dropped: Vec<u32> = (0..6).filter(|i| bits >> i & 1 == 1).collect();
                let mut mask = DropoutMask::none(6);
                for &v in &dropped {
                    mask.dropped[v as usize] = true;
                }
                let out = gnn_forward(&model, g, &mask, Mode::Eval).unwrap();
                for layer in &out.layers {
                    for i in 0..layer.rows {
                        let v = layer.row(i)[0];
                        assert!(v == 0.0 || v == 1.0, "non-binary value {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn example3_mean_distributions() {
        let model = analytic_example3();
        let ((left, ul), (right, ur)) = example3_graphs();
        let p: f64 = 0.25;

        // Exact enumeration over dropout subsets of the neighbors, u alive.
        let enumerate = |g: &Graph, u: u32| -> alloc::collections::BTreeMap<u64, f64> {
            let nbrs: Vec<u32> = g.neighbors(u).to_vec();
            let mut dist = alloc::collections::BTreeMap::new();
            for bits in 0u32..1 << nbrs.len() {
                let dropped: Vec<u32> = nbrs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| bits >> i & 1 == 1)
                    .map(|(_, &v)| v)
                    .collect();
                let prob = p.powi(dropped.len() as i32)
                    * (1.0 - p).powi((nbrs.len() - dropped.len()) as i32);
                let value = final_value(&model, g, &dropped, u).unwrap();
                *dist.entry(value.to_bits()).or_insert(0.0) += prob;
            }
            dist
        };

        let left_dist = enumerate(&left, ul);
        assert!((left_dist[&1.0f64.to_bits()] - 3.0 / 16.0).abs() < 1e-12);
        assert!((left_dist[&(-1.0f64).to_bits()] - 3.0 / 16.0).abs() < 1e-12);

        let right_dist = enumerate(&right, ur);
        assert!((right_dist[&1.0f64.to_bits()] - 15.0 / 256.0).abs() < 1e-12);
        let third = 1.0f64 / 3.0;
        assert!(
            (right_dist[&third.to_bits()] - 2.0 * 0.25 * 0.75f64.powi(3)).abs() < 1e-12,
            "P(mean = 1/3)"
        );
    }
}
