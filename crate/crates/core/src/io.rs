//! KITTI-style binary files: `.bin` clouds, `.label` ids and `.prob` matrices.
//!
//! All values are little-endian. A `.prob` file is accompanied by a text
//! sidecar `<file>.hdr` holding `m=<rows>` and `n=<cols>` lines.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cloud::{ClassMap, LabelVector, Point, PointCloud, ProbMatrix};
use crate::error::{Error, Result};

const POINT_BYTES: usize = 16;

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn f32_at(bytes: &[u8], offset: usize) -> f32 {
    f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap())
}

pub fn decode_pointcloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if bytes.len() % POINT_BYTES != 0 {
        return Err(Error::Truncated { len: bytes.len(), record: POINT_BYTES });
    }
    let points = bytes
        .chunks_exact(POINT_BYTES)
        .map(|c| Point::new(f32_at(c, 0), f32_at(c, 4), f32_at(c, 8), f32_at(c, 12)))
        .collect();
    PointCloud::new(points)
}

pub fn encode_pointcloud(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for p in cloud.points() {
        for v in [p.x, p.y, p.z, p.intensity] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn load_pointcloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    decode_pointcloud(&read(path.as_ref())?)
}

pub fn write_pointcloud(path: impl AsRef<Path>, cloud: &PointCloud) -> Result<()> {
    write(path.as_ref(), &encode_pointcloud(cloud))
}

/// Decodes `.label` words; only the low 16 bits carry the semantic id.
pub fn decode_labels(bytes: &[u8], m: usize, map: &ClassMap) -> Result<LabelVector> {
    if bytes.len() % 4 != 0 {
        return Err(Error::Truncated { len: bytes.len(), record: 4 });
    }
    let found = bytes.len() / 4;
    if found != m {
        return Err(Error::CountMismatch { expected: m, found });
    }
    let labels = bytes
        .chunks_exact(4)
        .map(|c| map.get(u32::from_le_bytes(c.try_into().unwrap()) & 0xFFFF))
        .collect::<Result<Vec<_>>>()?;
    LabelVector::new(labels, map.num_classes())
}

pub fn encode_labels(labels: &LabelVector, map: &ClassMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(labels.len() * 4);
    for &c in labels.labels() {
        let raw = map.raw_of(c).ok_or(Error::ClassOutOfRange { class: c, n: map.num_classes() })?;
        out.extend_from_slice(&raw.to_le_bytes());
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>, m: usize, map: &ClassMap) -> Result<LabelVector> {
    decode_labels(&read(path.as_ref())?, m, map)
}

pub fn write_labels(path: impl AsRef<Path>, labels: &LabelVector, map: &ClassMap) -> Result<()> {
    write(path.as_ref(), &encode_labels(labels, map)?)
}

pub fn decode_probabilities(bytes: &[u8], m: usize, n: usize) -> Result<ProbMatrix> {
    if bytes.len() != m * n * 4 {
        return Err(Error::CountMismatch { expected: m * n * 4, found: bytes.len() });
    }
    let values = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    ProbMatrix::new(m, n, values)
}

pub fn encode_probabilities(probs: &ProbMatrix) -> Vec<u8> {
    probs.values().iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn load_probabilities(path: impl AsRef<Path>, m: usize, n: usize) -> Result<ProbMatrix> {
    decode_probabilities(&read(path.as_ref())?, m, n)
}

pub fn sidecar_path(prob_path: &Path) -> PathBuf {
    let mut s = prob_path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

/// Writes the matrix and its `m`/`n` sidecar.
pub fn write_probabilities(path: impl AsRef<Path>, probs: &ProbMatrix) -> Result<()> {
    let path = path.as_ref();
    write(path, &encode_probabilities(probs))?;
    let hdr = format!("m={}\nn={}\n", probs.rows(), probs.cols());
    write(&sidecar_path(path), hdr.as_bytes())
}

/// Reads `(m, n)` from the sidecar of a `.prob` file.
pub fn read_prob_header(prob_path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = sidecar_path(prob_path.as_ref());
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let (mut m, mut n) = (None, None);
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Format(format!("bad header line {line:?}")))?;
        let v: usize = v.trim().parse().map_err(|_| Error::Format(format!("bad header value {line:?}")))?;
        match k.trim() {
            "m" => m = Some(v),
            "n" => n = Some(v),
            other => return Err(Error::Format(format!("unknown header key {other:?}"))),
        }
    }
    match (m, n) {
        (Some(m), Some(n)) => Ok((m, n)),
        _ => Err(Error::Format(format!("{} lacks m or n", path.display()))),
    }
}

/// Little-endian f32 per point, used for re-projected quality values.
pub fn write_point_values(path: impl AsRef<Path>, values: &[f32]) -> Result<()> {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    write(path.as_ref(), &bytes)
}

pub fn load_point_values(path: impl AsRef<Path>) -> Result<Vec<f32>> {
    let bytes = read(path.as_ref())?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Truncated { len: bytes.len(), record: 4 });
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}
