//! Debug dumps of image grids: 8-bit PGM previews and full-precision CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Binary PGM (P5) with values min–max scaled to 0..=255. Non-finite values map to 0.
pub fn to_pgm(values: &[f64], w: usize, h: usize) -> Result<Vec<u8>> {
    if values.len() != w * h || values.is_empty() {
        return Err(Error::Shape(format!("{} values for a {w}x{h} image", values.len())));
    }
    let finite = values.iter().copied().filter(|v| v.is_finite());
    let lo = finite.clone().fold(f64::INFINITY, f64::min);
    let hi = finite.fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(values.iter().map(|&v| if v.is_finite() { ((v - lo) / span * 255.0).round() as u8 } else { 0 }));
    Ok(out)
}

/// One CSV row per image row.
pub fn to_csv(values: &[f64], w: usize, h: usize) -> Result<String> {
    if values.len() != w * h {
        return Err(Error::Shape(format!("{} values for a {w}x{h} image", values.len())));
    }
    let mut s = String::new();
    for row in values.chunks(w.max(1)) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_pgm(path: &Path, values: &[f64], w: usize, h: usize) -> Result<()> {
    std::fs::write(path, to_pgm(values, w, h)?).map_err(|e| Error::io(path, e))
}

pub fn write_csv(path: &Path, values: &[f64], w: usize, h: usize) -> Result<()> {
    std::fs::write(path, to_csv(values, w, h)?).map_err(|e| Error::io(path, e))
}
