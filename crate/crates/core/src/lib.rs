//! Segment-wise prediction quality estimation for LiDAR semantic segmentation.
//!
//! A frame's softmax output is projected onto a range image, turned into
//! dispersion heatmaps, cut into connected segments and summarised as one
//! metric vector per segment. Meta models trained on those vectors predict
//! each segment's adjusted IoU or whether it is a false positive.

pub mod analysis;
pub mod cloud;
pub mod dataset;
pub mod dispersion;
pub mod error;
pub mod export;
pub mod features;
pub mod grid;
pub mod io;
pub mod meta;
pub mod par;
pub mod pipeline;
pub mod projection;
pub mod segments;
pub mod synth;

pub use cloud::{ClassId, ClassMap, LabelVector, Point, PointCloud, ProbMatrix, SensorSpec};
pub use dataset::{build_dataset, MetaDataset};
pub use error::{Error, Result};
pub use meta::{MetaModel, ModelKind, Task};
pub use pipeline::{analyze_frame, FrameAnalysis};
