//! On-disk frame collections.
//!
//! ```text
//! <dir>/dataset.toml        sensor and raw-label → class map
//! <dir>/manifest.csv        frame,group,stem
//! <dir>/frames/<stem>.bin   points (x, y, z, intensity as f32 LE)
//! <dir>/frames/<stem>.label u32 LE per point, lower 16 bits = raw class
//! <dir>/frames/<stem>.prob  f32 LE, m × n row-major, with <stem>.prob.hdr
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use segquality::cloud::{ClassId, ClassMap, SensorSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub sensor: SensorSpec,
    pub classes: ClassesInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassesInfo {
    pub n: usize,
    /// Raw label id (as a string key) → class id in `1..=n`.
    pub map: BTreeMap<String, ClassId>,
    /// Optional class names, index `c − 1`.
    #[serde(default)]
    pub names: Vec<String>,
}

impl ClassesInfo {
    pub fn from_map(map: &ClassMap, names: Vec<String>) -> Self {
        Self { n: map.num_classes(), map: map.entries().map(|(r, c)| (r.to_string(), c)).collect(), names }
    }

    pub fn class_map(&self) -> Result<ClassMap> {
        let mut map = BTreeMap::new();
        for (raw, &c) in &self.map {
            let raw: u32 = raw.parse().with_context(|| format!("raw label id {raw:?} is not an integer"))?;
            map.insert(raw, c);
        }
        Ok(ClassMap::new(map, self.n)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub frame: u32,
    pub group: u32,
    pub stem: String,
}

pub struct Corpus {
    pub dir: PathBuf,
    pub info: DatasetInfo,
    pub entries: Vec<Entry>,
}

pub fn info_path(dir: &Path) -> PathBuf {
    dir.join("dataset.toml")
}

pub fn manifest_path(dir: &Path) -> PathBuf {
    dir.join("manifest.csv")
}

pub fn frame_path(dir: &Path, stem: &str, ext: &str) -> PathBuf {
    dir.join("frames").join(format!("{stem}.{ext}"))
}

pub fn manifest_csv(entries: &[Entry]) -> String {
    let mut s = String::from("frame,group,stem\n");
    for e in entries {
        writeln!(s, "{},{},{}", e.frame, e.group, e.stem).unwrap();
    }
    s
}

fn parse_manifest(text: &str) -> Result<Vec<Entry>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "frame,group,stem" => {}
        other => bail!("manifest header must be `frame,group,stem`, found {other:?}"),
    }
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            bail!("manifest line {}: expected 3 fields", i + 2);
        }
        entries.push(Entry {
            frame: parts[0].parse().with_context(|| format!("manifest line {}: frame id", i + 2))?,
            group: parts[1].parse().with_context(|| format!("manifest line {}: group", i + 2))?,
            stem: parts[2].to_string(),
        });
    }
    if entries.is_empty() {
        bail!("manifest lists no frames");
    }
    Ok(entries)
}

impl Corpus {
    pub fn open(dir: &Path, sensor_override: Option<SensorSpec>) -> Result<Self> {
        let info_file = info_path(dir);
        let text = std::fs::read_to_string(&info_file).with_context(|| format!("reading {}", info_file.display()))?;
        let mut info: DatasetInfo = toml::from_str(&text).with_context(|| format!("parsing {}", info_file.display()))?;
        if let Some(s) = sensor_override {
            info.sensor = s;
        }
        info.sensor.validate()?;
        let man = manifest_path(dir);
        let text = std::fs::read_to_string(&man).with_context(|| format!("reading {}", man.display()))?;
        let entries = parse_manifest(&text)?;
        Ok(Self { dir: dir.to_path_buf(), info, entries })
    }

    pub fn path(&self, stem: &str, ext: &str) -> PathBuf {
        frame_path(&self.dir, stem, ext)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let e = vec![Entry { frame: 0, group: 0, stem: "000000".into() }, Entry { frame: 1, group: 3, stem: "x".into() }];
        assert_eq!(parse_manifest(&manifest_csv(&e)).unwrap(), e);
        assert!(parse_manifest("frame,group,stem\n").is_err());
        assert!(parse_manifest("a,b\n1,2\n").is_err());
    }

    #[test]
    fn class_map_from_string_keys() {
        let info: ClassesInfo = toml::from_str("n = 2\n[map]\n\"40\" = 1\n\"10\" = 2\n").unwrap();
        let map = info.class_map().unwrap();
        assert_eq!(map.get(40).unwrap(), 1);
        assert_eq!(map.raw_of(2), Some(10));
    }
}
