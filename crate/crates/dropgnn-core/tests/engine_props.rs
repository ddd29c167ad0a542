//! Engine-level properties: permutation equivariance, run-aggregation order
//! independence, the p = 0 degeneracy, the max-aggregation blind spot, and
//! the frequency-gap separation of the first analytic network.

use dropgnn_core::dropout::{sample_mask, subset_probability, DropoutMask};
use dropgnn_core::engine::{
    aggregate_run_embeddings, analytic_example1, build_gin, drop_gnn_forward, gnn_forward,
    Augmentation, GinConfig, Mode, Readout, RunAggregation, RunEmbedding,
};
use dropgnn_core::graph::cycle_graph;
use dropgnn_core::rng::Rng;
use dropgnn_core::tape::AggKind;
use dropgnn_core::tensor::Matrix;
use dropgnn_core::Graph;

fn small_model(in_dim: usize, agg: AggKind, seed: u64) -> dropgnn_core::engine::GnnModel {
    let mut cfg = GinConfig::new(in_dim, 6, 3, 2);
    cfg.aggregation = agg;
    cfg.readout = Readout::NodeLevel;
    cfg.seed = seed;
    build_gin(&cfg)
}

#[test]
fn forward_is_permutation_equivariant() {
    let g = Graph::uniform(8, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 0), (0, 4)])
        .unwrap();
    let mut rng = Rng::from_seed(31);
    for agg in [AggKind::Sum, AggKind::Mean, AggKind::Max] {
        let model = small_model(1, agg, 3);
        let base = gnn_forward(&model, &g, &DropoutMask::none(8), Mode::Eval).unwrap();
        for _ in 0..5 {
            let perm = rng.permutation(8);
            let h = g.permuted(&perm).unwrap();
            let out = gnn_forward(&model, &h, &DropoutMask::none(8), Mode::Eval).unwrap();
            let last = base.layers.last().unwrap();
            let plast = out.layers.last().unwrap();
            for v in 0..8usize {
                let expect = last.row(v);
                let got = plast.row(perm[v] as usize);
                for (a, b) in expect.iter().zip(got) {
                    assert!((a - b).abs() < 1e-12, "agg {agg:?}: node {v}");
                }
            }
        }
    }
}

#[test]
fn run_aggregation_is_order_independent_bitwise() {
    let mut rng = Rng::from_seed(9);
    let nodes = 6;
    let dim = 4;
    let runs: Vec<RunEmbedding> = (0..7u32)
        .map(|k| RunEmbedding {
            run_index: k,
            values: Matrix::from_vec(
                nodes,
                dim,
                (0..nodes * dim).map(|_| rng.normal()).collect(),
            )
            .unwrap(),
            alive: (0..nodes).map(|_| rng.bernoulli(0.8)).collect(),
        })
        .collect();
    for agg in [
        RunAggregation::Mean,
        RunAggregation::Sum,
        RunAggregation::TransformedSum {
            w: Matrix::from_vec(dim, 2, (0..dim * 2).map(|_| rng.normal()).collect()).unwrap(),
            b: Matrix::from_vec(1, 2, vec![0.1, -0.2]).unwrap(),
            activation: dropgnn_core::tape::Activation::Relu,
        },
    ] {
        let reference = aggregate_run_embeddings(&runs, &agg).unwrap();
        let mut shuffled = runs.clone();
        for _ in 0..10 {
            rng.shuffle(&mut shuffled);
            let again = aggregate_run_embeddings(&shuffled, &agg).unwrap();
            assert_eq!(reference.data, again.data, "bit-exact under reordering");
        }
    }
}

#[test]
fn p_zero_drop_gnn_equals_single_forward_bitwise() {
    let g = cycle_graph(10);
    let mut model = small_model(1, AggKind::Sum, 5);
    model.run_count = 17;
    model.dropout_p = 0.0;
    let dropped = drop_gnn_forward(&model, &g, 99).unwrap();
    let single = gnn_forward(&model, &g, &DropoutMask::none(10), Mode::Eval).unwrap();
    // The aggregate equals the lone run's concatenated embedding bit-exactly.
    let concat_dim = model.concat_dim();
    assert_eq!(dropped.aggregated.cols, concat_dim);
    for v in 0..10usize {
        let mut expect = Vec::new();
        for layer in &single.layers {
            expect.extend_from_slice(layer.row(v));
        }
        assert_eq!(dropped.aggregated.row(v), &expect[..], "node {v}");
    }
}

#[test]
fn r_one_aggregate_equals_the_single_run() {
    let g = cycle_graph(6);
    let mut model = small_model(1, AggKind::Sum, 8);
    model.run_count = 1;
    model.dropout_p = 0.25;
    let out = drop_gnn_forward(&model, &g, 123).unwrap();
    assert_eq!(out.masks.len(), 1);
    // With one run, mean aggregation divides by the alive count (1), so the
    // aggregate is exactly that run's embedding for surviving nodes.
    let mask = &out.masks[0];
    let single = gnn_forward(&model, &g, mask, Mode::Eval).unwrap();
    for (row, &v) in single.node_ids.iter().enumerate() {
        if mask.dropped[v as usize] {
            continue;
        }
        let mut expect = Vec::new();
        for layer in &single.layers {
            expect.extend_from_slice(layer.row(row));
        }
        assert_eq!(out.aggregated.row(v as usize), &expect[..]);
    }
}

#[test]
fn all_dropped_mask_is_finite_and_zero() {
    let g = cycle_graph(5);
    let model = small_model(1, AggKind::Sum, 2);
    let mask = DropoutMask {
        dropped: vec![true; 5],
        run_index: 0,
        seed_provenance: (0, 0),
    };
    // Feature zeroing keeps all rows; everything must stay finite.
    let out = gnn_forward(&model, &g, &mask, Mode::Eval).unwrap();
    for layer in &out.layers {
        assert!(layer.is_finite());
    }
    assert_eq!(out.layers[0].data, vec![0.0; 5]);
}

#[test]
fn max_aggregation_blind_spot_probability() {
    // Multisets differing only in the minimum element: a single run with max
    // aggregation differs only under the dropout pattern that removes all
    // gamma - 1 larger neighbors and keeps u and the minimum, whose
    // probability is p^(gamma-1) (1-p)^2. Verified by exact enumeration on
    // gamma = 4 stars.
    let gamma = 4;
    let star_edges: Vec<(u32, u32)> = (1..=gamma as u32).map(|v| (0, v)).collect();
    let features_low = vec![vec![0.0], vec![1.0], vec![5.0], vec![7.0], vec![9.0]];
    let features_high = vec![vec![0.0], vec![3.0], vec![5.0], vec![7.0], vec![9.0]];
    let g_low = Graph::new(5, &star_edges, features_low).unwrap();
    let g_high = Graph::new(5, &star_edges, features_high).unwrap();

    // A pure max readout of the neighbors after one round.
    use dropgnn_core::tape::Activation;
    let mut cfg = GinConfig::new(1, 1, 1, 1);
    cfg.aggregation = AggKind::Max;
    cfg.seed = 4;
    let mut model = build_gin(&cfg);
    // Identity layer with eps = -1: the update is just max over neighbors.
    model.layers[0].eps = -1.0;
    model.layers[0].bn = None;
    for pid in [model.layers[0].w1, model.layers[0].w2] {
        model.params.get_mut(pid).data[0] = 1.0;
    }
    for pid in [model.layers[0].b1, model.layers[0].b2] {
        model.params.get_mut(pid).data[0] = 0.0;
    }
    model.layers[0].act1 = Activation::Identity;
    model.layers[0].act2 = Activation::Identity;
    model.realization = dropgnn_core::engine::DropoutRealization::RemoveNodes;

    let p: f64 = 0.3;
    let mut differing_mass = 0.0;
    for bits in 0u32..1 << gamma {
        let dropped: Vec<u32> = (0..gamma as u32).filter(|i| bits >> i & 1 == 1).map(|i| i + 1).collect();
        let mut mask = DropoutMask::none(5);
        for &v in &dropped {
            mask.dropped[v as usize] = true;
        }
        let k = dropped.len();
        // Joint mass including u's own survival, the same accounting as
        // subset_probability.
        let mass = p.powi(k as i32) * (1.0 - p).powi((gamma + 1 - k) as i32);
        let lo = gnn_forward(&model, &g_low, &mask, Mode::Eval).unwrap();
        let hi = gnn_forward(&model, &g_high, &mask, Mode::Eval).unwrap();
        let vlo = lo.final_embedding(0).unwrap()[0];
        let vhi = hi.final_embedding(0).unwrap()[0];
        if vlo != vhi {
            differing_mass += mass;
        }
    }
    let closed = subset_probability(gamma, p, gamma - 1);
    assert!(
        (differing_mass - closed).abs() < 1e-12,
        "{differing_mass} vs p^(gamma-1)(1-p)^2 = {closed}"
    );
}

#[test]
fn example1_count_gap_scales_with_p_r() {
    // The transformed-sum aggregation counts runs whose final value stayed
    // at the no-dropout level; between the 4-cycle and the 8-cycle that
    // count differs in expectation by p (1-p)^4 r, observed over seeds.
    let mut model = analytic_example1();
    let r = 200usize;
    let p = 0.05;
    model.run_count = r;
    model.dropout_p = p;
    let g4 = cycle_graph(4);
    let g8 = cycle_graph(8);
    let mut gaps = Vec::new();
    for seed in 0..10u64 {
        let count9 = |g: &Graph, node: u32, seed: u64| -> usize {
            let mut n = 0;
            for k in 0..r as u32 {
                let mask = sample_mask(g.node_count(), p, seed, k);
                if mask.dropped[node as usize] {
                    continue;
                }
                let out = gnn_forward(&model, g, &mask, Mode::Eval).unwrap();
                if out.final_embedding(node).unwrap()[0] == 9.0 {
                    n += 1;
                }
            }
            n
        };
        let c4 = count9(&g4, 0, seed);
        let c8 = count9(&g8, 0, seed ^ 0xbeef);
        gaps.push(c4 as f64 - c8 as f64);
    }
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    // Expected gap: (1-p)^4 p r ~ 8.1; require at least half of p r.
    assert!(
        mean_gap >= 0.5 * p * r as f64,
        "mean gap {mean_gap} below 0.5 p r = {}",
        0.5 * p * r as f64
    );
}

#[test]
fn augmented_inputs_run_end_to_end() {
    let g = cycle_graph(6);
    for (kind, extra) in [
        (Augmentation::NodeIds, 6),
        (Augmentation::RandomFeatures, 1),
    ] {
        let ag = dropgnn_core::engine::augment(&g, kind, 7).unwrap();
        let model = small_model(1 + extra, AggKind::Sum, 11);
        let out = gnn_forward(&model, &ag, &DropoutMask::none(6), Mode::Eval).unwrap();
        assert!(out.layers.last().unwrap().is_finite());
    }
}
