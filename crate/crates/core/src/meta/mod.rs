//! Meta classification (false-positive detection) and meta regression
//! (adjusted IoU estimation) on metric vectors.
//!
//! Model file layout (little-endian):
//!
//! ```text
//! magic b"SQMM"  u32 version (1)  u8 task (0 classify, 1 regress)
//! u8 kind (0 gbt, 1 linear)  u64 schema hash  u32 n_features
//! gbt:    f64 base_score  f64 learning_rate  u32 n_trees
//!         per tree: u32 n_nodes, per node: u8 tag
//!           tag 0 (split): u32 feature, f64 threshold, u32 left, u32 right
//!           tag 1 (leaf):  f64 value
//! linear: f64 bias, n_features × f64 means, scales, weights
//! ```

pub mod cv;
pub mod gbt;
pub mod linear;
pub mod metrics;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{MetaDataset, Reader};
use crate::error::{Error, Result};
use crate::par;

pub use cv::{cross_validate, CvOutput, EvalReport, MetricStat, ReportRow};
pub use gbt::{GbtFit, GbtModel, GbtParams};
pub use linear::{LinearModel, LinearParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Regress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gbt,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Hyperparams {
    #[serde(default)]
    pub gbt: GbtParams,
    #[serde(default)]
    pub linear: LinearParams,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Gbt(GbtModel),
    Linear(LinearModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaModel {
    pub task: Task,
    pub schema_hash: u64,
    pub n_features: usize,
    pub body: ModelBody,
}

/// Training targets: FP indicator (1 = false positive) or adjusted IoU.
pub fn targets(ds: &MetaDataset, task: Task) -> Result<Vec<f64>> {
    match task {
        Task::Classify => ds.fp_labels(),
        Task::Regress => ds.iou_adj(),
    }
}

/// Trains on every row of `ds`.
pub fn train(ds: &MetaDataset, task: Task, kind: ModelKind, hp: &Hyperparams) -> Result<MetaModel> {
    let y = targets(ds, task)?;
    train_on(ds, &y, task, kind, hp).map(|(m, _)| m)
}

/// Trains on explicit targets; also returns the gbt loss history (empty for linear).
pub fn train_on(
    ds: &MetaDataset,
    y: &[f64],
    task: Task,
    kind: ModelKind,
    hp: &Hyperparams,
) -> Result<(MetaModel, Vec<f64>)> {
    if ds.len() < 2 {
        return Err(Error::Degenerate(format!("need at least 2 rows, got {}", ds.len())));
    }
    if task == Task::Classify {
        let pos = y.iter().filter(|&&v| v > 0.5).count();
        if pos == 0 || pos == y.len() {
            return Err(Error::Degenerate("classification needs both classes".into()));
        }
    }
    let nf = ds.n_cols();
    let (body, history) = match kind {
        ModelKind::Gbt => {
            let fit = gbt::fit(&ds.features, nf, y, task, &hp.gbt);
            (ModelBody::Gbt(fit.model), fit.loss_history)
        }
        ModelKind::Linear => (ModelBody::Linear(linear::fit(&ds.features, nf, y, task, &hp.linear)), Vec::new()),
    };
    Ok((MetaModel { task, schema_hash: ds.schema_hash(), n_features: nf, body }, history))
}

impl MetaModel {
    pub fn kind(&self) -> ModelKind {
        match self.body {
            ModelBody::Gbt(_) => ModelKind::Gbt,
            ModelBody::Linear(_) => ModelKind::Linear,
        }
    }

    /// FP probability (classify) or adjusted IoU clamped to `[0, 1]` (regress).
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        match &self.body {
            ModelBody::Gbt(m) => m.predict(row),
            ModelBody::Linear(m) => m.predict(row),
        }
    }

    pub fn predict(&self, ds: &MetaDataset) -> Result<Vec<f64>> {
        let data = ds.schema_hash();
        if data != self.schema_hash || ds.n_cols() != self.n_features {
            return Err(Error::SchemaMismatch { model: self.schema_hash, data });
        }
        Ok(par::map_range(ds.len(), |i| self.predict_row(ds.row(i))))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"SQMM");
        out.extend_from_slice(&1u32.to_le_bytes());
        out.push(match self.task {
            Task::Classify => 0,
            Task::Regress => 1,
        });
        out.push(match self.kind() {
            ModelKind::Gbt => 0,
            ModelKind::Linear => 1,
        });
        out.extend_from_slice(&self.schema_hash.to_le_bytes());
        out.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        let f = |out: &mut Vec<u8>, v: f64| out.extend_from_slice(&v.to_le_bytes());
        match &self.body {
            ModelBody::Gbt(m) => {
                f(&mut out, m.base_score);
                f(&mut out, m.learning_rate);
                out.extend_from_slice(&(m.trees.len() as u32).to_le_bytes());
                for t in &m.trees {
                    out.extend_from_slice(&(t.nodes.len() as u32).to_le_bytes());
                    for node in &t.nodes {
                        match *node {
                            gbt::Node::Split { feature, threshold, left, right } => {
                                out.push(0);
                                out.extend_from_slice(&feature.to_le_bytes());
                                f(&mut out, threshold);
                                out.extend_from_slice(&left.to_le_bytes());
                                out.extend_from_slice(&right.to_le_bytes());
                            }
                            gbt::Node::Leaf { value } => {
                                out.push(1);
                                f(&mut out, value);
                            }
                        }
                    }
                }
            }
            ModelBody::Linear(m) => {
                f(&mut out, m.bias);
                for v in m.means.iter().chain(&m.scales).chain(&m.weights) {
                    f(&mut out, *v);
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != b"SQMM" {
            return Err(Error::Format("not a model file".into()));
        }
        let version = r.u32()?;
        if version != 1 {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let task = match r.take(1)?[0] {
            0 => Task::Classify,
            1 => Task::Regress,
            t => return Err(Error::Format(format!("bad task tag {t}"))),
        };
        let kind = r.take(1)?[0];
        let schema_hash = r.u64()?;
        let n_features = r.u32()? as usize;
        let body = match kind {
            0 => {
                let base_score = r.f64()?;
                let learning_rate = r.f64()?;
                let n_trees = r.u32()? as usize;
                let mut trees = Vec::with_capacity(n_trees);
                for _ in 0..n_trees {
                    let n_nodes = r.u32()? as usize;
                    let mut nodes = Vec::with_capacity(n_nodes);
                    for _ in 0..n_nodes {
                        nodes.push(match r.take(1)?[0] {
                            0 => gbt::Node::Split {
                                feature: r.u32()?,
                                threshold: r.f64()?,
                                left: r.u32()?,
                                right: r.u32()?,
                            },
                            1 => gbt::Node::Leaf { value: r.f64()? },
                            t => return Err(Error::Format(format!("bad node tag {t}"))),
                        });
                    }
                    for node in &nodes {
                        if let gbt::Node::Split { feature, left, right, .. } = *node {
                            if feature as usize >= n_features || left as usize >= n_nodes || right as usize >= n_nodes {
                                return Err(Error::Format("tree index out of range".into()));
                            }
                        }
                    }
                    trees.push(gbt::Tree { nodes });
                }
                ModelBody::Gbt(GbtModel { task, base_score, learning_rate, trees })
            }
            1 => {
                let bias = r.f64()?;
                let mut read_vec = || (0..n_features).map(|_| r.f64()).collect::<Result<Vec<_>>>();
                let means = read_vec()?;
                let scales = read_vec()?;
                let weights = read_vec()?;
                ModelBody::Linear(LinearModel { task, means, scales, weights, bias })
            }
            k => return Err(Error::Format(format!("bad model kind {k}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after model".into()));
        }
        Ok(Self { task, schema_hash, n_features, body })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{RowKey, Targets};

    fn separable(n: usize) -> MetaDataset {
        let mut features = Vec::new();
        let mut targets = Vec::new();
        for i in 0..n {
            let a = ((i * 37) % 100) as f64 / 100.0;
            let b = ((i * 71) % 100) as f64 / 100.0 + 0.005;
            features.extend([a, b]);
            let fp = a + b > 1.0;
            targets.push(Targets { iou: 0.0, iou_adj: if fp { 0.0 } else { 0.3 * a + 0.7 * b } });
        }
        MetaDataset {
            columns: vec!["a".into(), "b".into()],
            keys: (0..n).map(|i| RowKey { frame: i as u32, group: (i % 10) as u32, segment: 0, class: 1 }).collect(),
            features,
            targets: Some(targets),
        }
    }

    #[test]
    fn separable_classification() {
        let ds = separable(200);
        let y = ds.fp_labels().unwrap();
        for kind in [ModelKind::Gbt, ModelKind::Linear] {
            let m = train(&ds, Task::Classify, kind, &Hyperparams::default()).unwrap();
            let p = m.predict(&ds).unwrap();
            let acc = metrics::accuracy(&p, &y, 0.5).unwrap();
            assert!(acc >= 0.99, "{kind:?} acc {acc}");
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let ds = separable(120);
        for (task, kind) in [(Task::Classify, ModelKind::Gbt), (Task::Regress, ModelKind::Gbt), (Task::Regress, ModelKind::Linear)] {
            let m = train(&ds, task, kind, &Hyperparams::default()).unwrap();
            let back = MetaModel::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
            let (a, b) = (m.predict(&ds).unwrap(), back.predict(&ds).unwrap());
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn schema_mismatch_and_degenerate() {
        let ds = separable(50);
        let m = train(&ds, Task::Regress, ModelKind::Gbt, &Hyperparams::default()).unwrap();
        let other = ds.select_columns(&[0]);
        assert!(matches!(m.predict(&other), Err(Error::SchemaMismatch { .. })));
        let mut single = ds.clone();
        single.targets = Some(vec![Targets { iou: 0.5, iou_adj: 0.5 }; 50]);
        assert!(matches!(train(&single, Task::Classify, ModelKind::Gbt, &Hyperparams::default()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn regression_output_is_clamped() {
        let lm = LinearModel { task: Task::Regress, means: vec![0.0], scales: vec![1.0], weights: vec![1.0], bias: 0.07 };
        assert_eq!(lm.predict(&[1.0]), 1.0);
        assert_eq!(lm.predict(&[-2.0]), 0.0);
    }
}
