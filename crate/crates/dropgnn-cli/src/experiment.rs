//! The Table-1 experiment protocol: five method variants, per-seed dataset
//! regeneration, 1000-epoch full-batch training, and evaluation on a freshly
//! generated test copy with dropout active.

use std::path::Path;

use anyhow::{anyhow, Result};
use dropgnn_core::data::{generate, Dataset, Family, Task};
use dropgnn_core::engine::{augment, build_gin, Augmentation, GinConfig, GnnModel, Readout};
use dropgnn_core::rng::derive_seed;
use dropgnn_core::train::{evaluate, train, EpochMetrics, TrainConfig, TrainResult};

use crate::formats::TaggedCsv;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Gin,
    GinPorts,
    GinIds,
    GinRandom,
    DropGin,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Gin,
        Method::GinPorts,
        Method::GinIds,
        Method::GinRandom,
        Method::DropGin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Gin => "gin",
            Method::GinPorts => "gin+ports",
            Method::GinIds => "gin+ids",
            Method::GinRandom => "gin+random",
            Method::DropGin => "dropgin",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.iter().copied().find(|m| m.name() == s)
    }

    fn augmentation(&self) -> Augmentation {
        match self {
            Method::GinPorts => Augmentation::Ports,
            Method::GinIds => Augmentation::NodeIds,
            Method::GinRandom => Augmentation::RandomFeatures,
            _ => Augmentation::None,
        }
    }
}

/// Everything a single (family, method, seed) run needs.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub family: Family,
    pub method: Method,
    /// Message-passing layers: 4 by default, 9 for Skip-circles.
    pub layers: Option<usize>,
    /// Hidden units: 16 by default, 32 for Skip-circles.
    pub hidden: Option<usize>,
    pub run_count: usize,
    /// Dropout probability; defaults to 1/m with m the mean node count.
    pub p: Option<f64>,
    pub epochs: usize,
    /// Stop after this many consecutive epochs at train accuracy 1.0.
    pub early_stop: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(family: Family, method: Method) -> Self {
        ExperimentConfig {
            family,
            method,
            layers: None,
            hidden: None,
            run_count: 50,
            p: None,
            epochs: 1000,
            early_stop: None,
        }
    }

    pub fn layers_for(&self) -> usize {
        self.layers.unwrap_or(match self.family {
            Family::SkipCircles => 9,
            _ => 4,
        })
    }

    pub fn hidden_for(&self) -> usize {
        self.hidden.unwrap_or(match self.family {
            Family::SkipCircles => 32,
            _ => 16,
        })
    }
}

/// Generates the (seeded) dataset copy and applies the method's input
/// augmentation, re-randomized per copy.
pub fn prepare_dataset(
    family: Family,
    dataset_seed: u64,
    method: Method,
) -> Result<Dataset> {
    let mut data = generate(family, dataset_seed).map_err(|e| anyhow!("{e}"))?;
    let kind = method.augmentation();
    if kind != Augmentation::None {
        let graphs: dropgnn_core::Result<Vec<_>> = data
            .graphs
            .iter()
            .enumerate()
            .map(|(gi, g)| augment(g, kind, derive_seed(dataset_seed, 0xa06 + gi as u64)))
            .collect();
        data.graphs = graphs.map_err(|e| anyhow!("{e}"))?;
    }
    Ok(data)
}

/// Builds the method's model for a prepared dataset.
pub fn build_model(cfg: &ExperimentConfig, data: &Dataset, model_seed: u64) -> GnnModel {
    let mut gin = GinConfig::new(
        data.graphs[0].feature_dim(),
        cfg.hidden_for(),
        cfg.layers_for(),
        data.num_classes,
    );
    gin.readout = match data.task {
        Task::NodeClassification => Readout::NodeLevel,
        Task::GraphClassification => Readout::GraphLevel,
    };
    gin.seed = model_seed;
    if cfg.method == Method::DropGin {
        gin.run_count = cfg.run_count;
        gin.dropout_p = cfg.p.unwrap_or_else(|| data.default_p());
        gin.aux_head = true;
    }
    if cfg.method == Method::GinPorts {
        gin.port_count = Some(data.max_degree());
    }
    build_gin(&gin)
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub train_acc: f64,
    pub test_acc: f64,
    pub epochs_run: usize,
    pub metrics: Vec<EpochMetrics>,
    pub model: GnnModel,
    pub train_data: Dataset,
}

/// One (family, method, seed) cell: train on a seeded copy, evaluate on the
/// train copy and on a freshly generated test copy.
pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutcome> {
    let train_data = prepare_dataset(cfg.family, derive_seed(seed, 0x7261), cfg.method)?;
    let test_data = prepare_dataset(cfg.family, derive_seed(seed, 0x7465), cfg.method)?;
    let mut model = build_model(cfg, &train_data, derive_seed(seed, 0x6d6f));
    let tcfg = TrainConfig {
        epochs: cfg.epochs,
        seed: derive_seed(seed, 0x7472),
        early_stop_after_perfect: cfg.early_stop,
        ..TrainConfig::default()
    };
    let TrainResult {
        metrics,
        epochs_run,
    } = train(&mut model, &train_data, &tcfg).map_err(|e| anyhow!("{e}"))?;
    let train_acc =
        evaluate(&model, &train_data, derive_seed(seed, 0x6576)).map_err(|e| anyhow!("{e}"))?;
    let test_acc = test_accuracy(&model, &test_data, seed, 0)?;
    Ok(RunOutcome {
        train_acc,
        test_acc,
        epochs_run,
        metrics,
        model,
        train_data,
    })
}

/// Accuracy on a test copy; `test_index` varies the evaluation mask stream.
pub fn test_accuracy(
    model: &GnnModel,
    test_data: &Dataset,
    seed: u64,
    test_index: u64,
) -> Result<f64> {
    evaluate(model, test_data, derive_seed(seed, 0x6577 + test_index)).map_err(|e| anyhow!("{e}"))
}

#[derive(Clone, Debug)]
pub struct CellStats {
    pub mean: f64,
    pub std: f64,
    pub values: Vec<f64>,
}

impl CellStats {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        CellStats {
            mean,
            std: var.sqrt(),
            values,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TableRow {
    pub family: Family,
    pub method: Method,
    pub train: CellStats,
    pub test: CellStats,
    pub epochs_run: Vec<usize>,
}

/// Runs the full table: every (family, method) over the seed list, flushing
/// partial results to `table1.csv` after each cell.
pub fn run_table1(
    families: &[Family],
    methods: &[Method],
    seeds: &[u64],
    base: &ExperimentConfig,
    out_dir: &Path,
    mut progress: impl FnMut(&TableRow),
) -> Result<Vec<TableRow>> {
    let mut csv = TaggedCsv::new(
        &out_dir.join("table1.csv"),
        "dropgnn.table1.v1",
        "family,method,seeds,train_mean,train_std,test_mean,test_std",
    );
    let mut rows = Vec::new();
    for &family in families {
        for &method in methods {
            let mut cfg = base.clone();
            cfg.family = family;
            cfg.method = method;
            let mut train_vals = Vec::new();
            let mut test_vals = Vec::new();
            let mut epochs_run = Vec::new();
            for &seed in seeds {
                let out = run_single(&cfg, seed)?;
                train_vals.push(out.train_acc);
                test_vals.push(out.test_acc);
                epochs_run.push(out.epochs_run);
            }
            let row = TableRow {
                family,
                method,
                train: CellStats::from_values(train_vals),
                test: CellStats::from_values(test_vals),
                epochs_run,
            };
            csv.row(&[
                family.name().into(),
                method.name().into(),
                seeds.len().to_string(),
                format!("{:.4}", row.train.mean),
                format!("{:.4}", row.train.std),
                format!("{:.4}", row.test.mean),
                format!("{:.4}", row.test.std),
            ]);
            csv.flush()?;
            progress(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Renders rows as a fixed-width text table.
pub fn render_table(rows: &[TableRow]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "{:<12} {:<11} {:>14} {:>14}\n",
        "dataset", "method", "train", "test"
    ));
    for row in rows {
        s.push_str(&format!(
            "{:<12} {:<11} {:>6.2} ± {:>5.2} {:>6.2} ± {:>5.2}\n",
            row.family.name(),
            row.method.name(),
            row.train.mean,
            row.train.std,
            row.test.mean,
            row.test.std,
        ));
    }
    s
}

/// Writes per-epoch metrics in the metrics CSV schema.
pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics], test_acc: Option<f64>) -> Result<()> {
    let mut csv = TaggedCsv::new(
        path,
        "dropgnn.metrics.v1",
        "epoch,loss,aux_loss,train_acc,test_acc",
    );
    for m in metrics {
        csv.row(&[
            m.epoch.to_string(),
            format!("{:.6}", m.loss),
            format!("{:.6}", m.aux_loss),
            format!("{:.4}", m.train_acc),
            match test_acc {
                Some(t) if m.epoch == metrics.len() - 1 => format!("{t:.4}"),
                _ => String::new(),
            },
        ]);
    }
    csv.flush()?;
    Ok(())
}
