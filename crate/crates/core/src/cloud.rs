//! Point-level domain types and the derived quantities that live on points.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|row sum - 1|` accepted (and renormalized) for probability rows.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;
/// Slack allowed on individual probability entries before they are rejected.
pub const ENTRY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

impl Point {
    pub fn new(x: f32, y: f32, z: f32, intensity: f32) -> Self {
        Self { x, y, z, intensity }
    }

    pub fn range(&self) -> f64 {
        let (x, y, z) = (self.x as f64, self.y as f64, self.z as f64);
        (x * x + y * y + z * z).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.intensity.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// 1-based class id in `1..=n`.
pub type ClassId = u16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<ClassId>,
}

impl LabelVector {
    pub fn new(labels: Vec<ClassId>, n: usize) -> Result<Self> {
        if let Some(&class) = labels.iter().find(|&&c| c == 0 || c as usize > n) {
            return Err(Error::ClassOutOfRange { class, n });
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Row-major `m × n` matrix of per-point class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
}

impl ProbMatrix {
    /// Validates entries and row sums; rows within tolerance are renormalized.
    pub fn new(rows: usize, cols: usize, mut values: Vec<f32>) -> Result<Self> {
        if cols == 0 || values.len() != rows * cols {
            return Err(Error::CountMismatch { expected: rows * cols, found: values.len() });
        }
        for (row, chunk) in values.chunks_mut(cols).enumerate() {
            let mut sum = 0.0f64;
            for v in chunk.iter_mut() {
                let x = *v as f64;
                if !x.is_finite() || x < -ENTRY_SLACK || x > 1.0 + ENTRY_SLACK {
                    return Err(Error::ProbRange { row, value: x });
                }
                *v = v.clamp(0.0, 1.0);
                sum += *v as f64;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::RowSum { row, sum });
            }
            if sum != 1.0 {
                for v in chunk.iter_mut() {
                    *v = (*v as f64 / sum) as f32;
                }
            }
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, j: usize) -> &[f32] {
        &self.values[j * self.cols..(j + 1) * self.cols]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Class of maximal probability per row; ties go to the smallest class id.
pub fn argmax_prediction(probs: &ProbMatrix) -> LabelVector {
    let labels = (0..probs.rows()).map(|j| argmax_row(probs.row(j))).collect();
    LabelVector { labels }
}

pub(crate) fn argmax_row(row: &[f32]) -> ClassId {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate().skip(1) {
        if p > row[best] {
            best = c;
        }
    }
    best as ClassId + 1
}

/// Sets each relabelled row to a one-hot vector at the given class.
pub fn overlay_onehot(probs: &ProbMatrix, relabels: &[(usize, ClassId)]) -> Result<ProbMatrix> {
    let mut out = probs.clone();
    for &(j, c) in relabels {
        if j >= probs.rows {
            return Err(Error::IndexOutOfRange { index: j, len: probs.rows });
        }
        if c == 0 || c as usize > probs.cols {
            return Err(Error::ClassOutOfRange { class: c, n: probs.cols });
        }
        let row = &mut out.values[j * out.cols..(j + 1) * out.cols];
        row.fill(0.0);
        row[c as usize - 1] = 1.0;
    }
    Ok(out)
}

/// LiDAR geometry that fixes the image size. Angles are in degrees;
/// `fov_down` is the magnitude of the downward field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub channels: usize,
    pub angular_resolution: f64,
    #[serde(default = "default_fov_hor")]
    pub fov_hor: f64,
    pub fov_up: f64,
    pub fov_down: f64,
}

fn default_fov_hor() -> f64 {
    360.0
}

impl SensorSpec {
    pub fn new(channels: usize, angular_resolution: f64, fov_up: f64, fov_down: f64) -> Result<Self> {
        let spec = Self { channels, angular_resolution, fov_hor: 360.0, fov_up, fov_down };
        spec.validate()?;
        Ok(spec)
    }

    /// HDL-64E as used for SemanticKITTI.
    pub fn semantic_kitti() -> Self {
        Self { channels: 64, angular_resolution: 0.08, fov_hor: 360.0, fov_up: 3.0, fov_down: 25.0 }
    }

    /// 32-beam sensor as used for nuScenes.
    pub fn nuscenes() -> Self {
        Self { channels: 32, angular_resolution: 0.33, fov_hor: 360.0, fov_up: 10.0, fov_down: 30.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSensor(msg.to_string()));
        if self.channels == 0 {
            return bad("channels must be positive");
        }
        if !(self.angular_resolution > 0.0) {
            return bad("angular resolution must be positive");
        }
        if !(self.fov_hor > 0.0 && self.fov_hor <= 360.0) {
            return bad("horizontal fov must be in (0, 360]");
        }
        if !(self.fov_up + self.fov_down > 0.0) {
            return bad("vertical fov must be positive");
        }
        if self.width() == 0 {
            return bad("width floor(fov_hor / resolution) is zero");
        }
        Ok(())
    }

    /// `floor(fov_hor / resolution)`, with a tiny slack for decimal resolutions
    /// such as 0.08 that are not exact in binary.
    pub fn width(&self) -> usize {
        (self.fov_hor / self.angular_resolution + 1e-9).floor() as usize
    }

    pub fn height(&self) -> usize {
        self.channels
    }

    pub fn fov_ver(&self) -> f64 {
        self.fov_up + self.fov_down
    }
}

/// Maps raw (file-level) class ids to `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassMap {
    n: usize,
    map: BTreeMap<u32, ClassId>,
}

impl ClassMap {
    pub fn new(map: BTreeMap<u32, ClassId>, n: usize) -> Result<Self> {
        if let Some((_, &c)) = map.iter().find(|(_, &c)| c == 0 || c as usize > n) {
            return Err(Error::ClassOutOfRange { class: c, n });
        }
        Ok(Self { n, map })
    }

    /// Raw id `c` maps to class `c` for `c in 1..=n`.
    pub fn identity(n: usize) -> Self {
        let map = (1..=n as u32).map(|c| (c, c as ClassId)).collect();
        Self { n, map }
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, raw: u32) -> Result<ClassId> {
        self.map.get(&raw).copied().ok_or(Error::UnmappedClass(raw))
    }

    /// Inverse lookup (smallest raw id for a class), used when writing labels.
    pub fn raw_of(&self, class: ClassId) -> Option<u32> {
        self.map.iter().find(|(_, &c)| c == class).map(|(&r, _)| r)
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, ClassId)> + '_ {
        self.map.iter().map(|(&r, &c)| (r, c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[&[f32]]) -> ProbMatrix {
        let n = rows[0].len();
        ProbMatrix::new(rows.len(), n, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_prediction(&probs(&[&[0.1, 0.7, 0.2]])).labels(), &[2]);
        assert_eq!(argmax_prediction(&probs(&[&[0.5, 0.5]])).labels(), &[1]);
        assert_eq!(argmax_prediction(&probs(&[&[1.0, 0.0], &[0.0, 1.0]])).labels(), &[1, 2]);
    }

    #[test]
    fn row_sum_checks() {
        assert!(ProbMatrix::new(1, 2, vec![0.25, 0.75]).is_ok());
        let err = ProbMatrix::new(1, 2, vec![0.6, 0.6]).unwrap_err();
        assert!(err.to_string().contains("row sum 1.2"), "{err}");
        let m = ProbMatrix::new(1, 2, vec![0.49995, 0.5]).unwrap();
        let s: f64 = m.row(0).iter().map(|&v| v as f64).sum();
        assert!((s - 1.0).abs() < 1e-6);
        assert!(ProbMatrix::new(1, 2, vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn overlay_examples() {
        let p = probs(&[&[0.4, 0.6], &[0.3, 0.7]]);
        let o = overlay_onehot(&p, &[(0, 1)]).unwrap();
        assert_eq!(o.row(0), &[1.0, 0.0]);
        assert_eq!(o.row(1), p.row(1));
        assert_eq!(argmax_prediction(&o).labels()[0], 1);
        assert_eq!(overlay_onehot(&p, &[]).unwrap(), p);
        assert!(matches!(overlay_onehot(&p, &[(2, 1)]), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(overlay_onehot(&p, &[(0, 3)]), Err(Error::ClassOutOfRange { .. })));
        let twice = overlay_onehot(&o, &[(0, 1)]).unwrap();
        assert_eq!(twice, o);
    }

    #[test]
    fn sensor_sizes() {
        let kitti = SensorSpec::semantic_kitti();
        assert_eq!((kitti.width(), kitti.height()), (4500, 64));
        let nus = SensorSpec::nuscenes();
        assert_eq!((nus.width(), nus.height()), (1090, 32));
        assert!(SensorSpec::new(16, 0.0, 10.0, 10.0).is_err());
        assert!(SensorSpec::new(16, 1.0, -5.0, 5.0).is_err());
    }

    #[test]
    fn label_range() {
        assert!(LabelVector::new(vec![1, 2, 3], 3).is_ok());
        assert!(LabelVector::new(vec![0], 3).is_err());
        assert!(LabelVector::new(vec![4], 3).is_err());
    }
}
