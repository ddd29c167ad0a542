//! On-disk formats: the graph JSON schema, dataset directories, model
//! checkpoints, and tagged CSV files.
//!
//! Graph JSON: `{"n": int, "edges": [[u,v],...], "features": [[f,...],...],
//! "ports": [[u,v,port_uv,port_vu],...]?}` with edges sorted, so
//! serialization is deterministic.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use dropgnn_core::data::{Dataset, Family, Task};
use dropgnn_core::engine::GnnModel;
use dropgnn_core::Graph;
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub edges: Vec<(u32, u32)>,
    pub features: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ports: Option<Vec<(u32, u32, u32, u32)>>,
}

impl GraphJson {
    pub fn from_graph(g: &Graph) -> Self {
        GraphJson {
            n: g.node_count(),
            edges: g.edges(),
            features: g.features().to_vec(),
            ports: g.port_edges(),
        }
    }

    pub fn into_graph(self) -> Result<Graph> {
        let g = Graph::new(self.n, &self.edges, self.features)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(match self.ports {
            Some(p) => g.with_ports(&p).map_err(|e| anyhow::anyhow!("{e}"))?,
            None => g,
        })
    }
}

pub fn write_graph(path: &Path, g: &Graph) -> Result<()> {
    let json = serde_json::to_string_pretty(&GraphJson::from_graph(g))?;
    fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    let data = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let json: GraphJson = serde_json::from_str(&data)?;
    json.into_graph()
}

#[derive(Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub family: String,
    pub seed: u64,
    pub task: String,
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub graph_count: usize,
}

/// Persists a dataset as a directory of graph JSON files plus labels.csv
/// and meta.json.
pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, g) in data.graphs.iter().enumerate() {
        write_graph(&dir.join(format!("graph_{i:03}.json")), g)?;
    }
    let mut labels = String::from("# dropgnn.labels.v1\n");
    match data.task {
        Task::NodeClassification => {
            labels.push_str("graph,node,label\n");
            for (gi, node_labels) in data.node_labels.iter().enumerate() {
                for (v, &l) in node_labels.iter().enumerate() {
                    labels.push_str(&format!("{gi},{v},{l}\n"));
                }
            }
        }
        Task::GraphClassification => {
            labels.push_str("graph,label\n");
            for (gi, &l) in data.graph_labels.iter().enumerate() {
                labels.push_str(&format!("{gi},{l}\n"));
            }
        }
    }
    fs::write(dir.join("labels.csv"), labels)?;
    let meta = DatasetMeta {
        format_version: 1,
        family: data.family.name().to_string(),
        seed: data.seed,
        task: match data.task {
            Task::NodeClassification => "node".into(),
            Task::GraphClassification => "graph".into(),
        },
        num_classes: data.num_classes,
        class_names: data.class_names.iter().map(|s| s.to_string()).collect(),
        graph_count: data.graphs.len(),
    };
    fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let family = Family::parse(&meta.family)
        .ok_or_else(|| anyhow::anyhow!("unknown family {}", meta.family))?;
    let mut graphs = Vec::with_capacity(meta.graph_count);
    for i in 0..meta.graph_count {
        graphs.push(read_graph(&dir.join(format!("graph_{i:03}.json")))?);
    }
    let labels_text = fs::read_to_string(dir.join("labels.csv"))?;
    let mut node_labels: Vec<Vec<u32>> = graphs.iter().map(|g| vec![0; g.node_count()]).collect();
    let mut graph_labels = vec![0u32; meta.graph_count];
    let task = if meta.task == "node" {
        Task::NodeClassification
    } else {
        Task::GraphClassification
    };
    for line in labels_text.lines().skip(2) {
        let fields: Vec<&str> = line.split(',').collect();
        match task {
            Task::NodeClassification => {
                let (gi, v, l): (usize, usize, u32) =
                    (fields[0].parse()?, fields[1].parse()?, fields[2].parse()?);
                node_labels[gi][v] = l;
            }
            Task::GraphClassification => {
                let (gi, l): (usize, u32) = (fields[0].parse()?, fields[1].parse()?);
                graph_labels[gi] = l;
            }
        }
    }
    if task == Task::GraphClassification {
        node_labels = vec![];
    } else {
        graph_labels = vec![];
    }
    Ok(Dataset {
        name: format!("{}-{}", meta.family, meta.seed),
        family,
        seed: meta.seed,
        graphs,
        node_labels,
        graph_labels,
        task,
        num_classes: meta.num_classes,
        class_names: meta.class_names,
    })
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub family: String,
    pub method: String,
    pub seed: u64,
    pub model: GnnModel,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, serde_json::to_string(ckpt)?)?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// A CSV file with a schema-tag comment line, written atomically at the end.
pub struct TaggedCsv {
    path: std::path::PathBuf,
    content: String,
}

impl TaggedCsv {
    pub fn new(path: &Path, schema: &str, header: &str) -> Self {
        TaggedCsv {
            path: path.to_path_buf(),
            content: format!("# {schema}\n{header}\n"),
        }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.content.push_str(&fields.join(","));
        self.content.push('\n');
    }

    /// Writes (or rewrites) the file with everything recorded so far.
    pub fn flush(&self) -> Result<()> {
        if let Some(parent) = self.path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(&self.path)?;
        f.write_all(self.content.as_bytes())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dropgnn_core::data::gen_limits1;
    use dropgnn_core::engine::augment;

    #[test]
    fn graph_roundtrip_with_ports() {
        let tmp = std::env::temp_dir().join("dropgnn-test-graph.json");
        let g = augment(
            &dropgnn_core::graph::cycle_graph(6),
            dropgnn_core::engine::Augmentation::Ports,
            4,
        )
        .unwrap();
        write_graph(&tmp, &g).unwrap();
        let back = read_graph(&tmp).unwrap();
        assert_eq!(g, back);
        let _ = fs::remove_file(tmp);
    }

    #[test]
    fn graph_serialization_is_deterministic() {
        let g = dropgnn_core::graph::cycle_graph(8);
        let a = serde_json::to_string(&GraphJson::from_graph(&g)).unwrap();
        let b = serde_json::to_string(&GraphJson::from_graph(&g)).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"n\":8"));
    }

    #[test]
    fn dataset_roundtrip() {
        let dir = std::env::temp_dir().join("dropgnn-test-dataset");
        let _ = fs::remove_dir_all(&dir);
        let data = gen_limits1(5).unwrap();
        write_dataset(&dir, &data).unwrap();
        let back = read_dataset(&dir).unwrap();
        assert_eq!(back.graphs.len(), 2);
        assert_eq!(back.node_labels, data.node_labels);
        assert_eq!(back.num_classes, 2);
        for (a, b) in back.graphs.iter().zip(&data.graphs) {
            assert_eq!(a, b);
        }
        let _ = fs::remove_dir_all(dir);
    }
}
