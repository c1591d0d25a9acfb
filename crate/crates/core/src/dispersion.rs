//! Pixelwise dispersion heatmaps (entropy, probability difference,
//! variation ratio) and the full measure stack used for aggregation.

use crate::error::{Error, Result};
use crate::par;
use crate::projection::{FrameGrids, FEATURE_NAMES};

const LOG_FLOOR: f64 = 1e-12;

/// Names of the base measures, in stack order.
pub const BASE_MEASURES: [&str; 8] = ["E", "D", "V", "Fx", "Fy", "Fz", "Fi", "Fr"];

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub name: String,
    pub w: usize,
    pub h: usize,
    pub values: Vec<f64>,
}

/// Shannon entropy normalized by `ln n`, with `0 · ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    let n = p.len() as f64;
    // uniform is the maximum; summing n equal terms would round away from 1
    if p.windows(2).all(|w| w[0] == w[1]) {
        return 1.0;
    }
    let s: f64 = p.iter().map(|&x| if x > 0.0 { x * x.max(LOG_FLOOR).ln() } else { 0.0 }).sum();
    (-s / n.ln()).clamp(0.0, 1.0)
}

fn top_two(p: &[f64]) -> (f64, f64) {
    let (mut a, mut b) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &x in p {
        if x > a {
            b = a;
            a = x;
        } else if x > b {
            b = x;
        }
    }
    (a, b)
}

/// `1 − (top1 − top2)`.
pub fn probability_difference(p: &[f64]) -> f64 {
    let (a, b) = top_two(p);
    (1.0 - a + b).clamp(0.0, 1.0)
}

/// `1 − top1`.
pub fn variation_ratio(p: &[f64]) -> f64 {
    let (a, _) = top_two(p);
    (1.0 - a).clamp(0.0, 1.0)
}

fn pixel_map(grids: &FrameGrids, name: &str, f: fn(&[f64]) -> f64) -> Heatmap {
    let values = par::map_range(grids.len(), |l| {
        let p: Vec<f64> = grids.pixel_probs(l).iter().map(|&v| v as f64).collect();
        f(&p)
    });
    Heatmap { name: name.to_string(), w: grids.w, h: grids.h, values }
}

pub fn entropy_map(grids: &FrameGrids) -> Result<Heatmap> {
    if grids.n < 2 {
        return Err(Error::TooFewClasses(grids.n));
    }
    Ok(pixel_map(grids, "E", entropy))
}

pub fn probdiff_map(grids: &FrameGrids) -> Result<Heatmap> {
    if grids.n < 2 {
        return Err(Error::TooFewClasses(grids.n));
    }
    Ok(pixel_map(grids, "D", probability_difference))
}

pub fn varratio_map(grids: &FrameGrids) -> Heatmap {
    pixel_map(grids, "V", variation_ratio)
}

/// External per-pixel values (e.g. MC-dropout uncertainties) to aggregate
/// alongside the base measures.
#[derive(Debug, Clone, PartialEq)]
pub struct Auxiliary {
    pub name: String,
    pub values: Vec<f64>,
}

/// E, D, V, then the five feature channels x, y, z, i, r, then auxiliaries
/// in the given order.
pub fn measure_stack(grids: &FrameGrids, auxiliaries: &[Auxiliary]) -> Result<Vec<Heatmap>> {
    let size = grids.len();
    for aux in auxiliaries {
        if aux.values.len() != size {
            return Err(Error::Shape(format!(
                "auxiliary {} has {} values, grid has {size}",
                aux.name,
                aux.values.len()
            )));
        }
        if let Some(v) = aux.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("auxiliary {} holds non-finite value {v}", aux.name)));
        }
    }
    let mut out = vec![entropy_map(grids)?, probdiff_map(grids)?, varratio_map(grids)];
    for (ch, name) in grids.features.iter().zip(FEATURE_NAMES) {
        out.push(Heatmap { name: format!("F{name}"), w: grids.w, h: grids.h, values: ch.clone() });
    }
    for aux in auxiliaries {
        out.push(Heatmap { name: aux.name.clone(), w: grids.w, h: grids.h, values: aux.values.clone() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert!((entropy(&[0.25; 4]) - 1.0).abs() < 1e-15);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.7, 0.1, 0.1, 0.1]) - 0.67843).abs() < 1e-4);
    }

    #[test]
    fn log_base_cancels() {
        let p = [0.5, 0.3, 0.2];
        let log2: f64 = -p.iter().map(|x: &f64| x * x.log2()).sum::<f64>() / 3f64.log2();
        assert!((entropy(&p) - log2).abs() < 1e-14);
    }

    #[test]
    fn difference_and_ratio_examples() {
        assert_eq!(probability_difference(&[0.0, 1.0]), 0.0);
        assert_eq!(probability_difference(&[0.25; 4]), 1.0);
        assert!((probability_difference(&[0.5, 0.3, 0.2]) - 0.8).abs() < 1e-15);
        assert_eq!(variation_ratio(&[1.0, 0.0]), 0.0);
        assert_eq!(variation_ratio(&[0.5, 0.5]), 0.5);
        assert_eq!(variation_ratio(&[0.5, 0.3, 0.2]), 0.5);
    }

    #[test]
    fn mixing_with_uniform_is_monotone() {
        let n = 5;
        let mut prev = (0.0, 0.0, 0.0);
        for k in 0..=20 {
            let lam = k as f64 / 20.0;
            let p: Vec<f64> = (0..n).map(|c| (1.0 - lam) * (c == 2) as u8 as f64 + lam / n as f64).collect();
            let cur = (entropy(&p), probability_difference(&p), variation_ratio(&p));
            assert!(cur.0 >= prev.0 - 1e-12 && cur.1 >= prev.1 - 1e-12 && cur.2 >= prev.2 - 1e-12);
            prev = cur;
        }
    }
}
