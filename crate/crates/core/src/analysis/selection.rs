//! Greedy forward selection: each step adds the metric whose inclusion gives
//! the best cross-validated objective (ACC for classification, R² for
//! regression).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::MetaDataset;
use crate::error::{Error, Result};
use crate::meta::{cross_validate, Hyperparams, ModelKind, Task};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub task: Task,
    pub kind: ModelKind,
    pub hyper: Hyperparams,
    pub folds: usize,
    pub max_metrics: usize,
    /// Score candidates on the training folds instead of validation.
    pub on_training: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub step: usize,
    pub added: String,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub task: Task,
    pub objective: String,
    pub steps: Vec<SelectionStep>,
}

impl SelectionTrace {
    pub fn to_csv(&self) -> String {
        let mut s = format!("step,added,{}\n", self.objective);
        for st in &self.steps {
            let _ = writeln!(s, "{},{},{}", st.step, st.added, st.objective);
        }
        s
    }
}

fn objective_name(task: Task) -> &'static str {
    match task {
        Task::Classify => "ACC",
        Task::Regress => "R2",
    }
}

pub fn greedy_select(ds: &MetaDataset, cfg: &SelectionConfig) -> Result<SelectionTrace> {
    if cfg.max_metrics == 0 {
        return Err(Error::Config("max_metrics must be at least 1".into()));
    }
    let name = objective_name(cfg.task);
    let mut selected: Vec<usize> = Vec::new();
    let mut remaining: Vec<usize> = (0..ds.n_cols()).collect();
    let mut steps = Vec::new();
    while steps.len() < cfg.max_metrics && !remaining.is_empty() {
        let scored = par::map_slice(&remaining, |&c| -> Result<f64> {
            let mut cols = selected.clone();
            cols.push(c);
            let sub = ds.select_columns(&cols);
            let report = cross_validate(&sub, cfg.task, cfg.kind, &cfg.hyper, cfg.folds)?.report;
            let v = if cfg.on_training { report.train_mean(name) } else { report.validation_mean(name) };
            Ok(v.unwrap_or(f64::NEG_INFINITY))
        });
        let mut best: Option<(usize, f64)> = None;
        for (pos, score) in scored.into_iter().enumerate() {
            let score = score?;
            let better = match best {
                None => true,
                Some((bp, bs)) => {
                    score > bs || (score == bs && ds.columns[remaining[pos]] < ds.columns[remaining[bp]])
                }
            };
            if better {
                best = Some((pos, score));
            }
        }
        let (pos, objective) = best.expect("remaining is non-empty");
        let col = remaining.remove(pos);
        selected.push(col);
        steps.push(SelectionStep { step: steps.len() + 1, added: ds.columns[col].clone(), objective });
    }
    Ok(SelectionTrace { task: cfg.task, objective: name.to_string(), steps })
}
