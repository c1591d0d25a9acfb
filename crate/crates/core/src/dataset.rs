//! Tabular meta-dataset: one row per retained predicted segment.
//!
//! Binary layout (all little-endian):
//!
//! ```text
//! magic  b"SQDS"   u32 version (1)
//! u32 n_cols       u64 n_rows      u8 has_targets
//! n_cols × (u32 byte length, UTF-8 column name)
//! n_rows × (u32 frame, u32 group, u32 segment, u16 class,
//!           [f64 iou, f64 iou_adj if has_targets], n_cols × f64)
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::cloud::ClassId;
use crate::error::{Error, Result};
use crate::features::MetricVector;
use crate::segments::{GroundTruthMatch, Segment};

const MAGIC: &[u8; 4] = b"SQDS";
const VERSION: u32 = 1;

/// Default exclusion threshold: segments with fewer projected points are dropped.
pub const DEFAULT_SP_MIN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RowKey {
    pub frame: u32,
    pub group: u32,
    pub segment: u32,
    pub class: ClassId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Targets {
    pub iou: f64,
    pub iou_adj: f64,
}

impl Targets {
    /// False positive: no overlap with same-class ground truth.
    pub fn is_fp(&self) -> bool {
        self.iou_adj == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaDataset {
    pub columns: Vec<String>,
    pub keys: Vec<RowKey>,
    /// Row-major `keys.len() × columns.len()`.
    pub features: Vec<f64>,
    pub targets: Option<Vec<Targets>>,
}

/// Stable 64-bit hash of the column schema.
pub fn schema_hash<S: AsRef<str>>(columns: &[S]) -> u64 {
    let mut h = Sha256::new();
    for c in columns {
        h.update(c.as_ref().as_bytes());
        h.update([0u8]);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

impl MetaDataset {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.columns.len();
        &self.features[i * c..(i + 1) * c]
    }

    pub fn schema_hash(&self) -> u64 {
        schema_hash(&self.columns)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Keeps only the listed columns, in ascending column order.
    pub fn select_columns(&self, cols: &[usize]) -> MetaDataset {
        let mut cols = cols.to_vec();
        cols.sort_unstable();
        cols.dedup();
        let features = (0..self.len()).flat_map(|i| cols.iter().map(move |&c| self.row(i)[c])).collect();
        MetaDataset {
            columns: cols.iter().map(|&c| self.columns[c].clone()).collect(),
            keys: self.keys.clone(),
            features,
            targets: self.targets.clone(),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> MetaDataset {
        MetaDataset {
            columns: self.columns.clone(),
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            features: rows.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            targets: self.targets.as_ref().map(|t| rows.iter().map(|&i| t[i]).collect()),
        }
    }

    fn require_targets(&self) -> Result<&[Targets]> {
        self.targets.as_deref().ok_or_else(|| Error::Degenerate("dataset has no target columns".into()))
    }

    pub fn iou_adj(&self) -> Result<Vec<f64>> {
        Ok(self.require_targets()?.iter().map(|t| t.iou_adj).collect())
    }

    /// 1.0 for false positives, 0.0 otherwise.
    pub fn fp_labels(&self) -> Result<Vec<f64>> {
        Ok(self.require_targets()?.iter().map(|t| t.is_fp() as u8 as f64).collect())
    }

    pub fn groups(&self) -> Vec<u32> {
        self.keys.iter().map(|k| k.group).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,group,segment,class");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        if self.targets.is_some() {
            s.push_str(",iou,iou_adj,fp");
        }
        s.push('\n');
        for (i, k) in self.keys.iter().enumerate() {
            let _ = write!(s, "{},{},{},{}", k.frame, k.group, k.segment, k.class);
            for v in self.row(i) {
                let _ = write!(s, ",{v}");
            }
            if let Some(t) = &self.targets {
                let t = t[i];
                let _ = write!(s, ",{},{},{}", t.iou, t.iou_adj, t.is_fp() as u8);
            }
            s.push('\n');
        }
        s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.columns.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.push(self.targets.is_some() as u8);
        for c in &self.columns {
            out.extend_from_slice(&(c.len() as u32).to_le_bytes());
            out.extend_from_slice(c.as_bytes());
        }
        for (i, k) in self.keys.iter().enumerate() {
            out.extend_from_slice(&k.frame.to_le_bytes());
            out.extend_from_slice(&k.group.to_le_bytes());
            out.extend_from_slice(&k.segment.to_le_bytes());
            out.extend_from_slice(&k.class.to_le_bytes());
            if let Some(t) = &self.targets {
                out.extend_from_slice(&t[i].iou.to_le_bytes());
                out.extend_from_slice(&t[i].iou_adj.to_le_bytes());
            }
            for v in self.row(i) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a dataset table".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported dataset version {version}")));
        }
        let n_cols = r.u32()? as usize;
        let n_rows = r.u64()? as usize;
        let has_targets = r.take(1)?[0] != 0;
        let columns = (0..n_cols)
            .map(|_| {
                let len = r.u32()? as usize;
                String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Format("column name not UTF-8".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut keys = Vec::with_capacity(n_rows);
        let mut features = Vec::with_capacity(n_rows * n_cols);
        let mut targets = has_targets.then(Vec::new);
        for _ in 0..n_rows {
            let frame = r.u32()?;
            let group = r.u32()?;
            let segment = r.u32()?;
            let class = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
            keys.push(RowKey { frame, group, segment, class });
            if let Some(t) = targets.as_mut() {
                t.push(Targets { iou: r.f64()?, iou_adj: r.f64()? });
            }
            for _ in 0..n_cols {
                features.push(r.f64()?);
            }
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after dataset table".into()));
        }
        Ok(Self { columns, keys, features, targets })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Per-frame aggregation output fed into [`build_dataset`].
#[derive(Debug, Clone)]
pub struct FrameRows {
    pub frame: u32,
    pub segments: Vec<Segment>,
    pub vectors: Vec<MetricVector>,
    /// Present when ground truth was available.
    pub matches: Option<Vec<GroundTruthMatch>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub segments_total: usize,
    pub segments_retained: usize,
    pub points_total: usize,
    pub points_retained: usize,
}

impl DatasetStats {
    pub fn retained_point_fraction(&self) -> f64 {
        if self.points_total == 0 {
            0.0
        } else {
            self.points_retained as f64 / self.points_total as f64
        }
    }
}

/// Collects rows for all segments with `SP >= sp_min`. Targets are attached
/// only if every frame carries ground-truth matches.
pub fn build_dataset(
    columns: Vec<String>,
    frames: &[FrameRows],
    sp_min: usize,
    groups: &BTreeMap<u32, u32>,
) -> Result<(MetaDataset, DatasetStats)> {
    let mut seen = BTreeSet::new();
    for f in frames {
        if !seen.insert(f.frame) {
            return Err(Error::DuplicateFrame(f.frame));
        }
    }
    let with_targets = !frames.is_empty() && frames.iter().all(|f| f.matches.is_some());
    let mut ds = MetaDataset {
        columns,
        keys: Vec::new(),
        features: Vec::new(),
        targets: with_targets.then(Vec::new),
    };
    let mut stats = DatasetStats { segments_total: 0, segments_retained: 0, points_total: 0, points_retained: 0 };
    for f in frames {
        let group = *groups.get(&f.frame).ok_or_else(|| Error::Config(format!("frame {} has no group", f.frame)))?;
        for (i, (seg, mv)) in f.segments.iter().zip(&f.vectors).enumerate() {
            if mv.values.len() != ds.columns.len() {
                return Err(Error::Shape(format!(
                    "metric vector has {} values, schema has {}",
                    mv.values.len(),
                    ds.columns.len()
                )));
            }
            stats.segments_total += 1;
            stats.points_total += seg.sp;
            if seg.sp < sp_min {
                continue;
            }
            stats.segments_retained += 1;
            stats.points_retained += seg.sp;
            ds.keys.push(RowKey { frame: f.frame, group, segment: seg.id, class: seg.class });
            ds.features.extend_from_slice(&mv.values);
            if let (Some(t), Some(m)) = (ds.targets.as_mut(), f.matches.as_ref()) {
                t.push(Targets { iou: m[i].iou, iou_adj: m[i].iou_adj });
            }
        }
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok((ds, stats))
}
