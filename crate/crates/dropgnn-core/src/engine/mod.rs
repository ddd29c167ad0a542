//! The message-passing engine: GIN-style layers with sum/mean/max
//! aggregation, input augmentations, and multi-run dropout execution with
//! permutation-invariant run aggregation.

mod analytic;
mod augment;
mod forward;

pub use analytic::{
    analytic_example1, analytic_example2, analytic_example3, example2_graphs, example3_graphs,
};
pub use augment::{augment, Augmentation};
pub use forward::{
    aggregate_run_embeddings, build_batch, drop_gnn_forward, forward, gnn_forward, Batch,
    DropForward, EdgePlan, ForwardOutput, Mode, RunEmbedding, SingleForward,
};

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::tape::{Activation, AggKind, ParamId, Params};
use crate::tensor::Matrix;

/// How node dropout is realized in a forward pass.
///
/// `ZeroFeatures` zeroes the initial features of dropped nodes and keeps the
/// edge set intact (the stable-training realization used by the learnable
/// path). `RemoveNodes` deletes the nodes and their incident edges outright,
/// which is what the analytic networks and enumeration oracles assume.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DropoutRealization {
    ZeroFeatures,
    RemoveNodes,
}

/// Permutation-invariant merge of the r per-run embeddings.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum RunAggregation {
    /// Count-normalized mean over the runs in which the node is present.
    Mean,
    /// Plain sum over runs in which the node is present.
    Sum,
    /// `sum_r act(W x_r + b)`: transform each run embedding, then sum.
    TransformedSum {
        w: Matrix,
        b: Matrix,
        activation: Activation,
    },
}

/// Batch-norm parameters plus running statistics (updated by the trainer
/// after each train-mode forward; frozen in eval mode).
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BnDesc {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BnDesc {
    pub fn update(&mut self, batch_mean: &[f64], batch_var_unbiased: &[f64]) {
        for (r, &b) in self.running_mean.iter_mut().zip(batch_mean) {
            *r = (1.0 - self.momentum) * *r + self.momentum * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(batch_var_unbiased) {
            *r = (1.0 - self.momentum) * *r + self.momentum * b;
        }
    }
}

/// Per-directed-edge port embedding tables (one pair per layer) for the
/// port-augmented convolution: the message from w to v is
/// `relu(h_w + T_in[port(v->w)] + T_out[port(w->v)])`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PortEmbedDesc {
    pub table_in: ParamId,
    pub table_out: ParamId,
}

/// One GIN layer: `h' = act2(BN(W2 act1(W1 ((1+eps) h + AGG) + b1) + b2))`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LayerDesc {
    pub w1: ParamId,
    pub b1: ParamId,
    pub act1: Activation,
    pub w2: ParamId,
    pub b2: ParamId,
    pub act2: Activation,
    pub eps: f64,
    pub bn: Option<BnDesc>,
    pub ports: Option<PortEmbedDesc>,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// A dense head applied to the concatenated per-layer embeddings.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeadDesc {
    pub w: ParamId,
    pub b: ParamId,
}

/// Whether readout happens per node or per graph (sum-pooled).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Readout {
    NodeLevel,
    GraphLevel,
}

/// A layered model: parameters, layer specs, heads, and the dropout-run
/// execution settings.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct GnnModel {
    pub params: Params,
    pub layers: Vec<LayerDesc>,
    pub aggregation: AggKind,
    pub readout: Readout,
    pub head: HeadDesc,
    pub aux_head: Option<HeadDesc>,
    pub run_aggregation: RunAggregation,
    pub run_count: usize,
    pub dropout_p: f64,
    pub realization: DropoutRealization,
    pub in_dim: usize,
    pub classes: usize,
}

impl GnnModel {
    /// Input width of the concatenated readout (h0 plus every layer output).
    pub fn concat_dim(&self) -> usize {
        self.in_dim + self.layers.iter().map(|l| l.out_dim).sum::<usize>()
    }
}

/// Configuration for the learnable GIN variants.
#[derive(Clone, Debug)]
pub struct GinConfig {
    pub in_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub classes: usize,
    pub readout: Readout,
    pub aggregation: AggKind,
    pub run_count: usize,
    pub dropout_p: f64,
    pub aux_head: bool,
    /// Port-embedding table size (the maximum degree), when ports are used.
    pub port_count: Option<usize>,
    pub seed: u64,
}

impl GinConfig {
    pub fn new(in_dim: usize, hidden: usize, layers: usize, classes: usize) -> Self {
        GinConfig {
            in_dim,
            hidden,
            layers,
            classes,
            readout: Readout::NodeLevel,
            aggregation: AggKind::Sum,
            run_count: 1,
            dropout_p: 0.0,
            aux_head: false,
            port_count: None,
            seed: 0,
        }
    }
}

fn init_dense(params: &mut Params, rng: &mut Rng, rows: usize, cols: usize) -> (ParamId, ParamId) {
    // Uniform fan-in scaling, bound 1/sqrt(fan_in).
    let bound = 1.0 / libm::sqrt(rows as f64);
    let w = Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect(),
    )
    .expect("sized data");
    let b = Matrix::from_vec(1, cols, (0..cols).map(|_| rng.uniform(-bound, bound)).collect())
        .expect("sized data");
    (params.add(w), params.add(b))
}

/// Builds a trainable GIN with batch norm after every layer, epsilon fixed
/// at 0, and dense heads over the concatenated per-layer embeddings.
pub fn build_gin(cfg: &GinConfig) -> GnnModel {
    let mut params = Params::new();
    let mut rng = Rng::stream(cfg.seed, 0x6d6f64656c);
    let mut layers = Vec::with_capacity(cfg.layers);
    let mut dim = cfg.in_dim;
    for _ in 0..cfg.layers {
        let (w1, b1) = init_dense(&mut params, &mut rng, dim, cfg.hidden);
        let (w2, b2) = init_dense(&mut params, &mut rng, cfg.hidden, cfg.hidden);
        let gamma = params.add(Matrix::from_vec(1, cfg.hidden, vec![1.0; cfg.hidden]).unwrap());
        let beta = params.add(Matrix::zeros(1, cfg.hidden));
        let ports = cfg.port_count.map(|count| {
            let bound = 1.0 / libm::sqrt(dim.max(1) as f64);
            let table = |rng: &mut Rng| {
                Matrix::from_vec(
                    count,
                    dim,
                    (0..count * dim).map(|_| rng.uniform(-bound, bound)).collect(),
                )
                .unwrap()
            };
            let t_in = table(&mut rng);
            let t_out = table(&mut rng);
            PortEmbedDesc {
                table_in: params.add(t_in),
                table_out: params.add(t_out),
            }
        });
        layers.push(LayerDesc {
            w1,
            b1,
            act1: Activation::Relu,
            w2,
            b2,
            act2: Activation::Relu,
            eps: 0.0,
            bn: Some(BnDesc {
                gamma,
                beta,
                running_mean: vec![0.0; cfg.hidden],
                running_var: vec![1.0; cfg.hidden],
                momentum: 0.1,
                eps: 1e-5,
            }),
            ports,
            in_dim: dim,
            out_dim: cfg.hidden,
        });
        dim = cfg.hidden;
    }
    let concat_dim = cfg.in_dim + cfg.layers * cfg.hidden;
    let (hw, hb) = init_dense(&mut params, &mut rng, concat_dim, cfg.classes);
    let aux_head = cfg.aux_head.then(|| {
        let (w, b) = init_dense(&mut params, &mut rng, concat_dim, cfg.classes);
        HeadDesc { w, b }
    });
    GnnModel {
        params,
        layers,
        aggregation: cfg.aggregation,
        readout: cfg.readout,
        head: HeadDesc { w: hw, b: hb },
        aux_head,
        run_aggregation: RunAggregation::Mean,
        run_count: cfg.run_count,
        dropout_p: cfg.dropout_p,
        realization: DropoutRealization::ZeroFeatures,
        in_dim: cfg.in_dim,
        classes: cfg.classes,
    }
}

