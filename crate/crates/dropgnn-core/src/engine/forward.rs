//! Batched forward execution.
//!
//! A [`Batch`] replicates each input graph once per run and flattens all
//! replicas into one node-row matrix, so the r dropout runs of every graph
//! execute as a single sequence of dense ops. Run aggregation, graph pooling
//! and the readout heads are segment reductions over that row space, always
//! accumulated in construction order (graph-major, then run, then node id),
//! which keeps every result bit-reproducible.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::dropout::{sample_mask, DropoutMask};
use crate::tape::{Activation, Csr, NodeId, ScatterPlan, Tape};
use crate::tensor::Matrix;
use crate::{Error, Graph, Result};

use super::{DropoutRealization, GnnModel, Readout, RunAggregation};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Directed-edge message plan for the port-augmented convolution.
#[derive(Clone, Debug)]
pub struct EdgePlan {
    pub src_rows: Rc<Vec<u32>>,
    pub scatter: Rc<ScatterPlan>,
    pub port_in: Rc<Vec<u32>>,
    pub port_out: Rc<Vec<u32>>,
}

/// All graphs and runs of one forward pass flattened into rows.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Matrix,
    pub csr: Rc<Csr>,
    /// Per row: not dropped. Under node removal, dropped rows do not exist
    /// and this is all-true.
    pub alive: Vec<bool>,
    /// Per row: its (graph, node) entity, the unit of run aggregation.
    pub entity_of_row: Vec<u32>,
    pub entity_count: usize,
    /// Per row: its (graph, run) replica, the unit of per-run readouts.
    pub graphrun_of_row: Vec<u32>,
    pub graphrun_count: usize,
    /// entity -> graph, graphrun -> graph.
    pub entity_graph: Vec<u32>,
    pub graphrun_graph: Vec<u32>,
    pub graph_count: usize,
    pub runs: usize,
    pub node_of_row: Vec<u32>,
    pub run_of_row: Vec<u32>,
    pub edges: Option<EdgePlan>,
}

/// Builds a batch from `graphs` with `masks[g]` holding the per-run masks of
/// graph g (all graphs share the run count).
pub fn build_batch(
    graphs: &[&Graph],
    masks: &[Vec<DropoutMask>],
    realization: DropoutRealization,
) -> Result<Batch> {
    if graphs.is_empty() || masks.len() != graphs.len() {
        return Err(Error::InvalidArgument("graphs/masks mismatch".into()));
    }
    let runs = masks[0].len();
    if runs == 0 || masks.iter().any(|m| m.len() != runs) {
        return Err(Error::InvalidArgument("all graphs need the same positive run count".into()));
    }
    let dim = graphs[0].feature_dim();
    if graphs.iter().any(|g| g.feature_dim() != dim) {
        return Err(Error::DimensionMismatch("feature dims differ across graphs".into()));
    }
    let with_ports = graphs.iter().all(|g| g.has_ports());

    let mut entity_offset = vec![0u32; graphs.len()];
    let mut total_entities = 0u32;
    for (gi, g) in graphs.iter().enumerate() {
        entity_offset[gi] = total_entities;
        total_entities += g.node_count() as u32;
    }

    let mut xdata: Vec<f64> = Vec::new();
    let mut alive = Vec::new();
    let mut entity_of_row = Vec::new();
    let mut graphrun_of_row = Vec::new();
    let mut node_of_row = Vec::new();
    let mut run_of_row = Vec::new();
    let mut row_of: Vec<u32> = Vec::new(); // per (graph,run) scratch: node -> row

    let mut nbr_offsets = vec![0u32];
    let mut nbr_targets: Vec<u32> = Vec::new();
    let mut edge_src: Vec<u32> = Vec::new();
    let mut edge_dst: Vec<u32> = Vec::new();
    let mut edge_pin: Vec<u32> = Vec::new();
    let mut edge_pout: Vec<u32> = Vec::new();

    for (gi, g) in graphs.iter().enumerate() {
        let n = g.node_count();
        for (run, mask) in masks[gi].iter().enumerate() {
            if mask.dropped.len() != n {
                return Err(Error::DimensionMismatch("mask length".into()));
            }
            row_of.clear();
            row_of.resize(n, u32::MAX);
            let base = entity_of_row.len() as u32;
            let mut local = 0u32;
            for v in 0..n {
                let dropped = mask.dropped[v];
                if dropped && realization == DropoutRealization::RemoveNodes {
                    continue;
                }
                row_of[v] = base + local;
                local += 1;
                if dropped {
                    xdata.extend(core::iter::repeat(0.0).take(dim));
                } else {
                    xdata.extend_from_slice(g.feature(v as u32));
                }
                alive.push(!dropped);
                entity_of_row.push(entity_offset[gi] + v as u32);
                graphrun_of_row.push((gi * runs + run) as u32);
                node_of_row.push(v as u32);
                run_of_row.push(run as u32);
            }
            // Adjacency among the rows of this replica. Under feature
            // zeroing the full edge set stays; under removal only edges
            // between surviving nodes remain.
            for v in 0..n {
                let vr = row_of[v];
                if vr == u32::MAX {
                    continue;
                }
                for &w in g.neighbors(v as u32) {
                    let wr = row_of[w as usize];
                    if wr == u32::MAX {
                        continue;
                    }
                    nbr_targets.push(wr);
                    if with_ports {
                        edge_src.push(wr);
                        edge_dst.push(vr);
                        edge_pin.push(g.port(v as u32, w).unwrap());
                        edge_pout.push(g.port(w, v as u32).unwrap());
                    }
                }
                nbr_offsets.push(nbr_targets.len() as u32);
            }
        }
    }

    let rows = entity_of_row.len();
    let x = Matrix::from_vec(rows, dim, xdata)?;
    let edges = with_ports.then(|| EdgePlan {
        src_rows: Rc::new(edge_src),
        scatter: Rc::new(ScatterPlan {
            groups: edge_dst,
            weights: vec![1.0; edge_pin.len()],
            out_rows: rows,
        }),
        port_in: Rc::new(edge_pin),
        port_out: Rc::new(edge_pout),
    });
    Ok(Batch {
        x,
        csr: Rc::new(Csr {
            offsets: nbr_offsets,
            targets: nbr_targets,
        }),
        alive,
        entity_of_row,
        entity_count: total_entities as usize,
        graphrun_of_row,
        graphrun_count: graphs.len() * runs,
        entity_graph: (0..graphs.len() as u32)
            .flat_map(|gi| core::iter::repeat(gi).take(graphs[gi as usize].node_count()))
            .collect(),
        graphrun_graph: (0..graphs.len() as u32)
            .flat_map(|gi| core::iter::repeat(gi).take(runs))
            .collect(),
        graph_count: graphs.len(),
        runs,
        node_of_row,
        run_of_row,
        edges,
    })
}

impl Batch {
    /// Run-aggregation plan: mean over alive rows of each entity (weight 0
    /// for dead rows; an entity with no alive row aggregates to zero), or
    /// plain sum over alive rows.
    fn run_plan(&self, mean: bool) -> ScatterPlan {
        let mut counts = vec![0u32; self.entity_count];
        for (row, &e) in self.entity_of_row.iter().enumerate() {
            if self.alive[row] {
                counts[e as usize] += 1;
            }
        }
        let weights = self
            .entity_of_row
            .iter()
            .zip(&self.alive)
            .map(|(&e, &a)| {
                if !a {
                    0.0
                } else if mean {
                    1.0 / counts[e as usize] as f64
                } else {
                    1.0
                }
            })
            .collect();
        ScatterPlan {
            groups: self.entity_of_row.clone(),
            weights,
            out_rows: self.entity_count,
        }
    }

    fn pool_entities_plan(&self) -> ScatterPlan {
        ScatterPlan {
            groups: self.entity_graph.clone(),
            weights: vec![1.0; self.entity_count],
            out_rows: self.graph_count,
        }
    }

    fn pool_rows_per_run_plan(&self) -> ScatterPlan {
        ScatterPlan {
            groups: self.graphrun_of_row.clone(),
            weights: vec![1.0; self.graphrun_of_row.len()],
            out_rows: self.graphrun_count,
        }
    }
}

/// Forward results, still on the tape so the caller can attach a loss.
pub struct ForwardOutput {
    pub tape: Tape,
    /// h0 (input) through hL, one node per batch row.
    pub per_layer: Vec<NodeId>,
    /// Per-row concatenation of all layers.
    pub concat: NodeId,
    /// Run-aggregated per-entity embedding, entities x concat_dim.
    pub aggregated: NodeId,
    /// Main head output: entities x classes (node-level) or graphs x classes.
    pub logits: NodeId,
    /// Per-run readout: rows x classes (node-level) or graphruns x classes.
    pub per_run_logits: NodeId,
    /// Train-mode batch-norm nodes per layer, for running-stat updates.
    pub bn_nodes: Vec<Option<NodeId>>,
}

/// Runs the model on a prepared batch. Train mode normalizes with batch
/// statistics (exposed through `bn_nodes`); eval mode uses frozen stats.
pub fn forward(model: &GnnModel, batch: &Batch, mode: Mode) -> Result<ForwardOutput> {
    if batch.x.cols != model.in_dim {
        return Err(Error::DimensionMismatch(alloc::format!(
            "batch feature dim {} vs model input {}",
            batch.x.cols,
            model.in_dim
        )));
    }
    let mut tape = Tape::new();
    let mut h = tape.leaf(batch.x.clone());
    let mut per_layer = vec![h];
    let mut bn_nodes = Vec::new();
    for layer in &model.layers {
        let agg = match &layer.ports {
            Some(pe) => {
                let edges = batch
                    .edges
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("model uses ports but batch has none".into()))?;
                let src = tape.gather(h, edges.src_rows.clone())?;
                let tin = tape.param(&model.params, pe.table_in);
                let tout = tape.param(&model.params, pe.table_out);
                let ein = tape.gather(tin, edges.port_in.clone())?;
                let eout = tape.gather(tout, edges.port_out.clone())?;
                let msg = tape.add_n(&[src, ein, eout])?;
                let msg = tape.activation(msg, Activation::Relu);
                tape.scatter(msg, edges.scatter.clone())?
            }
            None => tape.neighbor_agg(h, model.aggregation, batch.csr.clone())?,
        };
        let z = tape.add_scaled(agg, h, 1.0 + layer.eps)?;
        let w1 = tape.param(&model.params, layer.w1);
        let b1 = tape.param(&model.params, layer.b1);
        let mut y = tape.matmul(z, w1)?;
        y = tape.add_bias(y, b1)?;
        y = tape.activation(y, layer.act1);
        let w2 = tape.param(&model.params, layer.w2);
        let b2 = tape.param(&model.params, layer.b2);
        y = tape.matmul(y, w2)?;
        y = tape.add_bias(y, b2)?;
        match &layer.bn {
            Some(bn) => {
                let gamma = tape.param(&model.params, bn.gamma);
                let beta = tape.param(&model.params, bn.beta);
                let frozen = match mode {
                    Mode::Train => None,
                    Mode::Eval => Some((&bn.running_mean[..], &bn.running_var[..])),
                };
                y = tape.batch_norm(y, gamma, beta, bn.eps, frozen)?;
                bn_nodes.push(matches!(mode, Mode::Train).then_some(y));
            }
            None => bn_nodes.push(None),
        }
        h = tape.activation(y, layer.act2);
        per_layer.push(h);
    }

    let concat = tape.concat_cols(&per_layer)?;
    let aggregated = match &model.run_aggregation {
        RunAggregation::Mean => tape.scatter(concat, Rc::new(batch.run_plan(true)))?,
        RunAggregation::Sum => tape.scatter(concat, Rc::new(batch.run_plan(false)))?,
        RunAggregation::TransformedSum { w, b, activation } => {
            let wn = tape.leaf(w.clone());
            let bn = tape.leaf(b.clone());
            let t = tape.matmul(concat, wn)?;
            let t = tape.add_bias(t, bn)?;
            let t = tape.activation(t, *activation);
            tape.scatter(t, Rc::new(batch.run_plan(false)))?
        }
    };

    let head_in = match model.readout {
        Readout::NodeLevel => aggregated,
        Readout::GraphLevel => tape.scatter(aggregated, Rc::new(batch.pool_entities_plan()))?,
    };
    let hw = tape.param(&model.params, model.head.w);
    let hb = tape.param(&model.params, model.head.b);
    let logits = tape.matmul(head_in, hw)?;
    let logits = tape.add_bias(logits, hb)?;

    // Per-run readouts feed the auxiliary loss; without a dedicated
    // auxiliary head the main head doubles for it.
    let aux_head = model.aux_head.as_ref().unwrap_or(&model.head);
    let aux_in = match model.readout {
        Readout::NodeLevel => concat,
        Readout::GraphLevel => tape.scatter(concat, Rc::new(batch.pool_rows_per_run_plan()))?,
    };
    let aw = tape.param(&model.params, aux_head.w);
    let ab = tape.param(&model.params, aux_head.b);
    let per_run_logits = tape.matmul(aux_in, aw)?;
    let per_run_logits = tape.add_bias(per_run_logits, ab)?;

    Ok(ForwardOutput {
        tape,
        per_layer,
        concat,
        aggregated,
        logits,
        per_run_logits,
        bn_nodes,
    })
}

/// One run's per-node embeddings, plus the pooled graph embedding when the
/// model reads out at graph level.
pub struct SingleForward {
    /// Original node id of each row (all nodes under feature zeroing; the
    /// survivors under removal — dropped nodes carry no embedding).
    pub node_ids: Vec<u32>,
    /// Per layer (h0..hL): rows x layer dim.
    pub layers: Vec<Matrix>,
    /// Concatenated per-layer embeddings summed over nodes.
    pub graph_embedding: Option<Vec<f64>>,
}

impl SingleForward {
    /// Final-layer embedding of original node `v`, if it has one.
    pub fn final_embedding(&self, v: u32) -> Option<&[f64]> {
        let row = self.node_ids.iter().position(|&x| x == v)?;
        Some(self.layers.last().unwrap().row(row))
    }
}

/// A single dropout run of the base GNN on one graph.
pub fn gnn_forward(
    model: &GnnModel,
    g: &Graph,
    mask: &DropoutMask,
    mode: Mode,
) -> Result<SingleForward> {
    let batch = build_batch(&[g], &[vec![mask.clone()]], model.realization)?;
    let out = forward(model, &batch, mode)?;
    let layers: Vec<Matrix> = out
        .per_layer
        .iter()
        .map(|&id| out.tape.value(id).clone())
        .collect();
    let graph_embedding = matches!(model.readout, Readout::GraphLevel).then(|| {
        let concat = out.tape.value(out.concat);
        let mut pooled = vec![0.0; concat.cols];
        for i in 0..concat.rows {
            for (p, &v) in pooled.iter_mut().zip(concat.row(i)) {
                *p += v;
            }
        }
        pooled
    });
    Ok(SingleForward {
        node_ids: batch.node_of_row,
        layers,
        graph_embedding,
    })
}

/// Output of a full multi-run DropGNN execution.
pub struct DropForward {
    pub masks: Vec<DropoutMask>,
    /// Run-aggregated per-node embedding, nodes x concat dim.
    pub aggregated: Matrix,
    /// Readout applied once to the aggregate.
    pub final_logits: Matrix,
    /// Each run's individual readout (rows follow the batch layout).
    pub per_run_logits: Matrix,
    /// Row metadata for `per_run_logits` under node-level readout.
    pub aux_row_node: Vec<u32>,
    pub aux_row_run: Vec<u32>,
    pub aux_row_alive: Vec<bool>,
}

/// Samples `model.run_count` masks from `master_seed`, executes the runs,
/// aggregates, and reads out. `p = 0` collapses to one run (all runs would
/// be identical), making the no-dropout degeneracy exact.
pub fn drop_gnn_forward(model: &GnnModel, g: &Graph, master_seed: u64) -> Result<DropForward> {
    if model.run_count < 1 {
        return Err(Error::InvalidArgument("run_count must be >= 1".into()));
    }
    let r = if model.dropout_p == 0.0 { 1 } else { model.run_count };
    let masks: Vec<DropoutMask> = (0..r as u32)
        .map(|k| sample_mask(g.node_count(), model.dropout_p, master_seed, k))
        .collect();
    let batch = build_batch(&[g], &[masks.clone()], model.realization)?;
    let out = forward(model, &batch, Mode::Eval)?;
    let aux_alive = match model.readout {
        Readout::NodeLevel => batch.alive.clone(),
        Readout::GraphLevel => vec![true; batch.graphrun_count],
    };
    let (aux_node, aux_run) = match model.readout {
        Readout::NodeLevel => (batch.node_of_row.clone(), batch.run_of_row.clone()),
        Readout::GraphLevel => (
            vec![0; batch.graphrun_count],
            (0..batch.graphrun_count as u32).collect(),
        ),
    };
    Ok(DropForward {
        masks,
        aggregated: out.tape.value(out.aggregated).clone(),
        final_logits: out.tape.value(out.logits).clone(),
        per_run_logits: out.tape.value(out.per_run_logits).clone(),
        aux_row_node: aux_node,
        aux_row_run: aux_run,
        aux_row_alive: aux_alive,
    })
}

/// One run's embeddings for order-independent aggregation.
#[derive(Clone, Debug)]
pub struct RunEmbedding {
    pub run_index: u32,
    /// nodes x dim; rows of absent nodes are ignored via `alive`.
    pub values: Matrix,
    pub alive: Vec<bool>,
}

/// Merges per-run embeddings in ascending `run_index` order, so the result
/// is bit-identical no matter how the input slice is ordered.
pub fn aggregate_run_embeddings(runs: &[RunEmbedding], agg: &RunAggregation) -> Result<Matrix> {
    if runs.is_empty() {
        return Err(Error::InvalidArgument("no runs".into()));
    }
    let mut order: Vec<usize> = (0..runs.len()).collect();
    order.sort_by_key(|&i| runs[i].run_index);
    let nodes = runs[0].values.rows;
    let transformed: Vec<Matrix> = match agg {
        RunAggregation::TransformedSum { w, b, activation } => order
            .iter()
            .map(|&i| {
                let mut t = crate::tensor::matmul(&runs[i].values, w)?;
                for row in 0..t.rows {
                    for (v, &bias) in t.row_mut(row).iter_mut().zip(&b.data) {
                        *v = activation.apply(*v + bias);
                    }
                }
                Ok(t)
            })
            .collect::<Result<_>>()?,
        _ => order.iter().map(|&i| runs[i].values.clone()).collect(),
    };
    let dim = transformed[0].cols;
    let mut out = Matrix::zeros(nodes, dim);
    let mut counts = vec![0u32; nodes];
    for (k, &i) in order.iter().enumerate() {
        let run = &runs[i];
        if run.values.rows != nodes || run.alive.len() != nodes {
            return Err(Error::DimensionMismatch("run embedding shape".into()));
        }
        for v in 0..nodes {
            if !run.alive[v] {
                continue;
            }
            counts[v] += 1;
            for (o, &x) in out.row_mut(v).iter_mut().zip(transformed[k].row(v)) {
                *o += x;
            }
        }
    }
    if matches!(agg, RunAggregation::Mean) {
        for v in 0..nodes {
            if counts[v] > 0 {
                let inv = 1.0 / counts[v] as f64;
                for o in out.row_mut(v) {
                    *o *= inv;
                }
            }
        }
    }
    Ok(out)
}
