//! Grouped k-fold cross-validation. Folds are unions of whole groups so no
//! group straddles training and validation.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, auprc, auroc, naive_baseline, r2};
use super::{targets, train_on, Hyperparams, ModelKind, Task};
use crate::dataset::MetaDataset;
use crate::error::{Error, Result};
use crate::par;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    /// Sample standard deviation over folds (0 for a single fold).
    pub std: f64,
    /// Folds that produced a value; AUROC/AUPRC are skipped on one-class folds.
    pub folds: usize,
}

impl MetricStat {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let k = values.len() as f64;
        let mean = values.iter().sum::<f64>() / k;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std, folds: values.len() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// `ACC`, `AUROC`, `AUPRC`, `R2` or `ACC naive baseline`.
    pub metric: String,
    pub train: Option<MetricStat>,
    pub validation: Option<MetricStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub fold: usize,
    pub groups: Vec<u32>,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub train: Vec<(String, f64)>,
    pub validation: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub task: Task,
    pub kind: ModelKind,
    pub folds: usize,
    pub metrics: Vec<String>,
    pub rows: Vec<ReportRow>,
    pub per_fold: Vec<FoldScores>,
}

impl EvalReport {
    pub fn row(&self, metric: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn validation_mean(&self, metric: &str) -> Option<f64> {
        self.row(metric).and_then(|r| r.validation.as_ref()).map(|s| s.mean)
    }

    pub fn train_mean(&self, metric: &str) -> Option<f64> {
        self.row(metric).and_then(|r| r.train.as_ref()).map(|s| s.mean)
    }
}

/// Scores for one prediction set, named as in the report rows.
pub fn score_set(task: Task, pred: &[f64], y: &[f64]) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    match task {
        Task::Classify => {
            out.push(("ACC".to_string(), accuracy(pred, y, 0.5)?));
            if let Ok(a) = auroc(pred, y) {
                out.push(("AUROC".to_string(), a));
            }
            if let Ok(a) = auprc(pred, y) {
                out.push(("AUPRC".to_string(), a));
            }
            out.push(("ACC naive baseline".to_string(), naive_baseline(y)?));
        }
        Task::Regress => out.push(("R2".to_string(), r2(pred, y)?)),
    }
    Ok(out)
}

pub fn metric_names(task: Task) -> Vec<String> {
    match task {
        Task::Classify => vec!["ACC", "AUROC", "AUPRC", "ACC naive baseline"],
        Task::Regress => vec!["R2"],
    }
    .into_iter()
    .map(String::from)
    .collect()
}

/// Group-to-fold assignment: sorted distinct groups, group `i` → fold `i mod folds`.
pub fn fold_of_rows(groups: &[u32], folds: usize) -> Result<Vec<usize>> {
    let distinct: Vec<u32> = groups.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if folds < 2 || distinct.len() < folds {
        return Err(Error::TooFewGroups { groups: distinct.len(), folds });
    }
    Ok(groups.iter().map(|g| distinct.binary_search(g).unwrap() % folds).collect())
}

#[derive(Debug, Clone)]
pub struct CvOutput {
    pub report: EvalReport,
    /// Out-of-fold prediction per row.
    pub oof: Vec<f64>,
}

pub fn cross_validate(
    ds: &MetaDataset,
    task: Task,
    kind: ModelKind,
    hp: &Hyperparams,
    folds: usize,
) -> Result<CvOutput> {
    let y = targets(ds, task)?;
    let groups = ds.groups();
    let fold_of = fold_of_rows(&groups, folds)?;
    let results = par::map_range(folds, |k| -> Result<(FoldScores, Vec<(usize, f64)>)> {
        let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| fold_of[i] != k).collect();
        let val_idx: Vec<usize> = (0..ds.len()).filter(|&i| fold_of[i] == k).collect();
        let train_ds = ds.select_rows(&train_idx);
        let val_ds = ds.select_rows(&val_idx);
        let y_train: Vec<f64> = train_idx.iter().map(|&i| y[i]).collect();
        let y_val: Vec<f64> = val_idx.iter().map(|&i| y[i]).collect();
        let (model, _) = train_on(&train_ds, &y_train, task, kind, hp)?;
        let p_train = model.predict(&train_ds)?;
        let p_val = model.predict(&val_ds)?;
        let fold_groups: BTreeSet<u32> = val_idx.iter().map(|&i| groups[i]).collect();
        let scores = FoldScores {
            fold: k,
            groups: fold_groups.into_iter().collect(),
            train_rows: train_idx.len(),
            validation_rows: val_idx.len(),
            train: score_set(task, &p_train, &y_train)?,
            validation: score_set(task, &p_val, &y_val)?,
        };
        Ok((scores, val_idx.into_iter().zip(p_val).collect()))
    });
    let mut per_fold = Vec::with_capacity(folds);
    let mut oof = vec![f64::NAN; ds.len()];
    for r in results {
        let (scores, preds) = r?;
        for (i, p) in preds {
            oof[i] = p;
        }
        per_fold.push(scores);
    }
    let collect = |name: &str, pick: fn(&FoldScores) -> &Vec<(String, f64)>| -> Option<MetricStat> {
        let vals: Vec<f64> =
            per_fold.iter().filter_map(|f| pick(f).iter().find(|(n, _)| n == name).map(|(_, v)| *v)).collect();
        MetricStat::from_values(&vals)
    };
    let names = metric_names(task);
    let rows = names
        .iter()
        .map(|m| ReportRow {
            metric: m.clone(),
            train: collect(m, |f| &f.train),
            validation: collect(m, |f| &f.validation),
        })
        .collect();
    let report = EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        task,
        kind,
        folds,
        metrics: ds.columns.clone(),
        rows,
        per_fold,
    };
    Ok(CvOutput { report, oof })
}
