//! Per-frame chain: project, fill, heatmaps, components, match, aggregate.

use crate::cloud::{argmax_prediction, LabelVector, PointCloud, ProbMatrix, SensorSpec};
use crate::dataset::FrameRows;
use crate::dispersion::{measure_stack, Auxiliary, Heatmap, BASE_MEASURES};
use crate::error::Result;
use crate::features::{aggregate, metric_names, MetricVector};
use crate::par;
use crate::projection::{fill, project, FrameGrids};
use crate::segments::{connected_components, decompose_all, match_all, Adjacency, Components, GroundTruthMatch, Segment};

#[derive(Debug, Clone)]
pub struct FrameAnalysis {
    pub grids: FrameGrids,
    pub heatmaps: Vec<Heatmap>,
    pub components: Components,
    pub segments: Vec<Segment>,
    pub matches: Option<Vec<GroundTruthMatch>>,
    pub vectors: Vec<MetricVector>,
}

impl FrameAnalysis {
    pub fn into_rows(self, frame: u32) -> FrameRows {
        FrameRows { frame, segments: self.segments, vectors: self.vectors, matches: self.matches }
    }
}

/// Column names for a run with `n` classes and the given auxiliary names.
pub fn columns_for(n: usize, auxiliary_names: &[String]) -> Vec<String> {
    let mut measures: Vec<String> = BASE_MEASURES.iter().map(|s| s.to_string()).collect();
    measures.extend(auxiliary_names.iter().cloned());
    metric_names(&measures, n)
}

/// Runs the full per-frame chain. Ground truth only feeds the IoU targets.
pub fn analyze_frame(
    cloud: &PointCloud,
    probs: &ProbMatrix,
    gt: Option<&LabelVector>,
    sensor: &SensorSpec,
    adjacency: Adjacency,
    auxiliaries: &[Auxiliary],
) -> Result<FrameAnalysis> {
    let pred = argmax_prediction(probs);
    let grids = fill(project(cloud, probs, gt, &pred, sensor)?)?;
    let heatmaps = measure_stack(&grids, auxiliaries)?;
    let components = connected_components(&grids.pred_labels, grids.w, grids.h, adjacency);
    let segments = decompose_all(&components, &grids.mask);
    let matches = grids.gt_labels.as_ref().map(|gt| {
        let gt_comps = connected_components(gt, grids.w, grids.h, adjacency);
        match_all(&components, &gt_comps, &grids.mask)
    });
    let vectors = par::map_slice(&segments, |s| aggregate(s, &heatmaps, &grids));
    Ok(FrameAnalysis { grids, heatmaps, components, segments, matches, vectors })
}
