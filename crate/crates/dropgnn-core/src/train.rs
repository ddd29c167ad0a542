//! Training: the combined main/auxiliary cross-entropy loss, Adam with step
//! decay, and the full-batch training loop for the synthetic benchmarks.
//!
//! Dropout masks are resampled every epoch and stay active at evaluation
//! time: a DropGNN removes nodes during both training and testing so the
//! observed dropout distributions match.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, Task};
use crate::dropout::{sample_mask, DropoutMask};
use crate::engine::{build_batch, forward, Batch, GnnModel, Mode};
use crate::rng::derive_seed;
use crate::tape::{NodeId, Params, Tape};
use crate::tensor::Matrix;
use crate::{Error, Result};

/// Hyperparameters of the synthetic-benchmark protocol.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiply the rate by `decay_factor` every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub epochs: usize,
    /// Weight of the per-run auxiliary loss within the total.
    pub aux_loss_weight: f64,
    pub seed: u64,
    /// Masks are resampled per epoch unless a fixed set is supplied
    /// (gradient tests want a frozen computation).
    pub fixed_masks: Option<Vec<Vec<DropoutMask>>>,
    /// Stop once training accuracy has been exactly 1.0 for this many
    /// consecutive epochs. `None` always runs the full budget.
    pub early_stop_after_perfect: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            decay_factor: 0.5,
            decay_every: 50,
            epochs: 1000,
            aux_loss_weight: 1.0 / 3.0,
            seed: 0,
            fixed_masks: None,
            early_stop_after_perfect: None,
        }
    }
}

impl TrainConfig {
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * libm::pow(self.decay_factor, (epoch / self.decay_every) as f64)
    }
}

/// Adam with the optimizer's standard moment constants.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(params: &Params) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut Params, grads: &[Matrix], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let bc2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        for idx in 0..grads.len() {
            let g = &grads[idx];
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            let p = params.get_mut(crate::tape::ParamId(idx));
            for k in 0..g.data.len() {
                let gk = g.data[k];
                m.data[k] = self.beta1 * m.data[k] + (1.0 - self.beta1) * gk;
                v.data[k] = self.beta2 * v.data[k] + (1.0 - self.beta2) * gk * gk;
                let mhat = m.data[k] / bc1;
                let vhat = v.data[k] / bc2;
                p.data[k] -= lr * mhat / (libm::sqrt(vhat) + self.eps);
            }
        }
    }
}

/// The dataset's labels in batch order: per entity for node tasks, per graph
/// otherwise.
fn target_labels(data: &Dataset) -> Vec<u32> {
    match data.task {
        Task::NodeClassification => data.flat_node_labels(),
        Task::GraphClassification => data.graph_labels.clone(),
    }
}

/// Builds the loss on the tape: `(1 - w) CE(final) + w mean_runs CE(run)`
/// when the model carries an auxiliary head, plain CE otherwise. Node rows
/// dropped in a run contribute nothing to that run's auxiliary CE.
fn attach_loss(
    tape: &mut Tape,
    logits: NodeId,
    per_run_logits: NodeId,
    batch: &Batch,
    data: &Dataset,
    aux_weight: f64,
    use_aux: bool,
) -> Result<(NodeId, f64, f64)> {
    let labels = target_labels(data);
    let main_rows = tape.value(logits).rows;
    if labels.len() != main_rows {
        return Err(Error::DimensionMismatch("label count".into()));
    }
    let main_w = Rc::new(vec![1.0 / main_rows as f64; main_rows]);
    let main = tape.softmax_cross_entropy(logits, Rc::new(labels.clone()), main_w)?;
    if !use_aux {
        let value = tape.value(main).data[0];
        return Ok((main, value, 0.0));
    }

    let (aux_labels, aux_weights) = match data.task {
        Task::NodeClassification => {
            // Per-run CE over the alive rows of that run, averaged over runs.
            let mut alive_per_run = vec![0usize; batch.runs];
            for (row, &alive) in batch.alive.iter().enumerate() {
                if alive {
                    alive_per_run[batch.run_of_row[row] as usize] += 1;
                }
            }
            let labels_per_row: Vec<u32> = batch
                .entity_of_row
                .iter()
                .map(|&e| labels[e as usize])
                .collect();
            let weights: Vec<f64> = (0..batch.alive.len())
                .map(|row| {
                    let run = batch.run_of_row[row] as usize;
                    if batch.alive[row] && alive_per_run[run] > 0 {
                        1.0 / (batch.runs as f64 * alive_per_run[run] as f64)
                    } else {
                        0.0
                    }
                })
                .collect();
            (labels_per_row, weights)
        }
        Task::GraphClassification => {
            let labels_per_run: Vec<u32> = batch
                .graphrun_graph
                .iter()
                .map(|&g| labels[g as usize])
                .collect();
            let w = 1.0 / (batch.runs as f64 * batch.graph_count as f64);
            (labels_per_run, vec![w; batch.graphrun_count])
        }
    };
    let aux = tape.softmax_cross_entropy(
        per_run_logits,
        Rc::new(aux_labels),
        Rc::new(aux_weights),
    )?;
    let total = tape.combine(&[(main, 1.0 - aux_weight), (aux, aux_weight)])?;
    Ok((total, tape.value(main).data[0], tape.value(aux).data[0]))
}

/// The spec-level loss surface over already-computed readouts:
/// `(1 - w) CE(final) + w mean_r CE(run r)`, where a node row absent from a
/// run (mask) is excluded from that run's CE.
pub fn combined_loss(
    final_readout: &Matrix,
    labels: &[u32],
    per_run_readouts: &[Matrix],
    per_run_alive: Option<&[Vec<bool>]>,
    aux_weight: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&aux_weight) {
        return Err(Error::InvalidArgument("aux weight outside [0,1]".into()));
    }
    let mut tape = Tape::new();
    let f = tape.leaf(final_readout.clone());
    let n = final_readout.rows;
    let main = tape.softmax_cross_entropy(
        f,
        Rc::new(labels.to_vec()),
        Rc::new(vec![1.0 / n as f64; n]),
    )?;
    let mut parts = vec![(main, 1.0 - aux_weight)];
    let runs = per_run_readouts.len();
    for (k, run) in per_run_readouts.iter().enumerate() {
        let alive: Vec<bool> = match per_run_alive {
            Some(a) => a[k].clone(),
            None => vec![true; run.rows],
        };
        let count = alive.iter().filter(|&&a| a).count();
        if count == 0 {
            continue;
        }
        let weights: Vec<f64> = alive
            .iter()
            .map(|&a| if a { 1.0 / count as f64 } else { 0.0 })
            .collect();
        let node = tape.leaf(run.clone());
        let ce = tape.softmax_cross_entropy(node, Rc::new(labels.to_vec()), Rc::new(weights))?;
        parts.push((ce, aux_weight / runs as f64));
    }
    let total = tape.combine(&parts)?;
    Ok(tape.value(total).data[0])
}

#[derive(Clone, Copy, Debug)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub main_loss: f64,
    pub aux_loss: f64,
    pub train_acc: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub metrics: Vec<EpochMetrics>,
    pub epochs_run: usize,
}

fn accuracy_from_logits(logits: &Matrix, labels: &[u32]) -> f64 {
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        if best == label as usize {
            correct += 1;
        }
    }
    correct as f64 / labels.len().max(1) as f64
}

fn masks_for_epoch(model: &GnnModel, data: &Dataset, seed: u64, epoch: usize) -> Vec<Vec<DropoutMask>> {
    let r = if model.dropout_p == 0.0 { 1 } else { model.run_count };
    data.graphs
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let master = derive_seed(seed, (epoch as u64) << 20 | gi as u64);
            (0..r as u32)
                .map(|k| sample_mask(g.node_count(), model.dropout_p, master, k))
                .collect()
        })
        .collect()
}

/// Full-batch training with Adam and step decay. Masks resample per epoch;
/// a non-finite loss aborts with a diagnostic.
pub fn train(model: &mut GnnModel, data: &Dataset, cfg: &TrainConfig) -> Result<TrainResult> {
    let graph_refs: Vec<&crate::Graph> = data.graphs.iter().collect();
    let labels = target_labels(data);
    let mut adam = Adam::new(&model.params);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut perfect_streak = 0usize;
    let use_aux = model.aux_head.is_some();

    for epoch in 0..cfg.epochs {
        let masks = match &cfg.fixed_masks {
            Some(fixed) => fixed.clone(),
            None => masks_for_epoch(model, data, cfg.seed, epoch),
        };
        let batch = build_batch(&graph_refs, &masks, model.realization)?;
        let out = forward(model, &batch, Mode::Train)?;
        let mut tape = out.tape;
        let (loss_node, main_loss, aux_loss) = attach_loss(
            &mut tape,
            out.logits,
            out.per_run_logits,
            &batch,
            data,
            cfg.aux_loss_weight,
            use_aux,
        )?;
        let loss = tape.value(loss_node).data[0];
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let grads = tape.backward(loss_node, &model.params)?;

        // Single-writer phase: commit batch-norm stats, then the Adam step.
        for (layer, bn_node) in model.layers.iter_mut().zip(&out.bn_nodes) {
            if let (Some(bn), Some(node)) = (layer.bn.as_mut(), *bn_node) {
                let (mean, var) = tape.bn_batch_stats(node).expect("train-mode bn node");
                bn.update(mean, var);
            }
        }
        adam.step(&mut model.params, &grads, cfg.lr_at(epoch));

        let train_acc = accuracy_from_logits(tape.value(out.logits), &labels);
        metrics.push(EpochMetrics {
            epoch,
            loss,
            main_loss,
            aux_loss,
            train_acc,
            lr: cfg.lr_at(epoch),
        });

        if train_acc == 1.0 {
            perfect_streak += 1;
        } else {
            perfect_streak = 0;
        }
        if let Some(patience) = cfg.early_stop_after_perfect {
            if perfect_streak >= patience {
                break;
            }
        }
    }
    let epochs_run = metrics.len();
    Ok(TrainResult {
        metrics,
        epochs_run,
    })
}

/// Dropout-active evaluation: runs `model.run_count` eval-mode forwards with
/// masks derived from `eval_seed` and scores argmax accuracy.
pub fn evaluate(model: &GnnModel, data: &Dataset, eval_seed: u64) -> Result<f64> {
    evaluate_with_runs(model, data, eval_seed, model.run_count)
}

/// Evaluation with an explicit run count. Runs are a prefix of the mask
/// stream, so accuracies at increasing r reuse the same randomness.
pub fn evaluate_with_runs(
    model: &GnnModel,
    data: &Dataset,
    eval_seed: u64,
    runs: usize,
) -> Result<f64> {
    let graph_refs: Vec<&crate::Graph> = data.graphs.iter().collect();
    let r = if model.dropout_p == 0.0 { 1 } else { runs.max(1) };
    let masks: Vec<Vec<DropoutMask>> = data
        .graphs
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let master = derive_seed(eval_seed, gi as u64);
            (0..r as u32)
                .map(|k| sample_mask(g.node_count(), model.dropout_p, master, k))
                .collect()
        })
        .collect();
    let batch = build_batch(&graph_refs, &masks, model.realization)?;
    let out = forward(model, &batch, Mode::Eval)?;
    let labels = target_labels(data);
    Ok(accuracy_from_logits(out.tape.value(out.logits), &labels))
}

/// Readout rows the evaluation scores, for callers that need the raw logits.
pub fn eval_logits(model: &GnnModel, data: &Dataset, eval_seed: u64) -> Result<Matrix> {
    let graph_refs: Vec<&crate::Graph> = data.graphs.iter().collect();
    let r = if model.dropout_p == 0.0 { 1 } else { model.run_count };
    let masks: Vec<Vec<DropoutMask>> = data
        .graphs
        .iter()
        .enumerate()
        .map(|(gi, g)| {
            let master = derive_seed(eval_seed, gi as u64);
            (0..r as u32)
                .map(|k| sample_mask(g.node_count(), model.dropout_p, master, k))
                .collect()
        })
        .collect();
    let batch = build_batch(&graph_refs, &masks, model.realization)?;
    let out = forward(model, &batch, Mode::Eval)?;
    Ok(out.tape.value(out.logits).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_limits1;
    use crate::engine::{build_gin, GinConfig, Readout as R};

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 0.01);
        assert_eq!(cfg.lr_at(49), 0.01);
        assert_eq!(cfg.lr_at(50), 0.005);
        assert_eq!(cfg.lr_at(120), 0.0025);
    }

    #[test]
    fn combined_loss_degenerates_to_plain_ce() {
        // r = 1, p = 0: the run readout equals the final readout, so the
        // (2/3 + 1/3) recombination gives CE exactly.
        let logits = Matrix::from_vec(2, 2, vec![2.0, -1.0, 0.5, 0.5]).unwrap();
        let labels = vec![0u32, 1];
        let l = combined_loss(&logits, &labels, &[logits.clone()], None, 1.0 / 3.0).unwrap();
        let plain = combined_loss(&logits, &labels, &[], None, 0.0).unwrap();
        assert!((l - plain).abs() < 1e-15);
    }

    #[test]
    fn uniform_binary_loss_is_ln2() {
        let logits = Matrix::zeros(4, 2);
        let labels = vec![0u32, 1, 0, 1];
        let l = combined_loss(&logits, &labels, &[], None, 0.0).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_drive_loss_to_zero() {
        let logits = Matrix::from_vec(2, 2, vec![50.0, -50.0, -50.0, 50.0]).unwrap();
        let labels = vec![0u32, 1];
        let l = combined_loss(&logits, &labels, &[logits.clone()], None, 1.0 / 3.0).unwrap();
        assert!(l < 1e-12);
    }

    #[test]
    fn training_is_bit_deterministic() {
        let data = gen_limits1(0).unwrap();
        let make = || {
            let mut cfg = GinConfig::new(1, 8, 2, 2);
            cfg.readout = R::NodeLevel;
            cfg.run_count = 4;
            cfg.dropout_p = data.default_p();
            cfg.aux_head = true;
            cfg.seed = 5;
            build_gin(&cfg)
        };
        let tcfg = TrainConfig {
            epochs: 30,
            seed: 9,
            ..TrainConfig::default()
        };
        let mut a = make();
        let mut b = make();
        train(&mut a, &data, &tcfg).unwrap();
        train(&mut b, &data, &tcfg).unwrap();
        for (x, y) in a.params.iter().zip(b.params.iter()) {
            assert_eq!(x.data, y.data, "parameters diverged across reruns");
        }
    }

    #[test]
    fn loss_decreases_on_limits1_for_most_seeds() {
        let mut wins = 0;
        for seed in 0..10u64 {
            let data = gen_limits1(seed).unwrap();
            let mut cfg = GinConfig::new(1, 16, 4, 2);
            cfg.run_count = 20;
            cfg.dropout_p = data.default_p();
            cfg.aux_head = true;
            cfg.seed = seed;
            let mut model = build_gin(&cfg);
            let tcfg = TrainConfig {
                epochs: 50,
                seed,
                ..TrainConfig::default()
            };
            let result = train(&mut model, &data, &tcfg).unwrap();
            if result.metrics.last().unwrap().loss < result.metrics[0].loss {
                wins += 1;
            }
        }
        assert!(wins >= 9, "loss decreased for only {wins}/10 seeds");
    }
}
