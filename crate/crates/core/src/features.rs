//! Segmentwise aggregation of heatmaps into metric vectors.
//!
//! Column order is fixed: for every measure (E, D, V, Fx, Fy, Fz, Fi, Fr,
//! then auxiliaries) the ten statistics
//! `mu, mu_in, mu_bd, mu_rel, mu_rel_in, var, var_in, var_bd, var_rel, var_rel_in`,
//! then the sizes `S, S_in, S_bd, S_rel, S_rel_in, SP`, then `N_1..N_n` and
//! `P_1..P_n`. Without auxiliaries that is `86 + 2n` columns.

use crate::dispersion::Heatmap;
use crate::projection::FrameGrids;
use crate::segments::Segment;

const STATS: [&str; 5] = ["", "_in", "_bd", "_rel", "_rel_in"];
pub const SIZE_NAMES: [&str; 6] = ["S", "S_in", "S_bd", "S_rel", "S_rel_in", "SP"];

/// Column names for the given measure names and class count.
pub fn metric_names<S: AsRef<str>>(measures: &[S], n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(measures.len() * 10 + 6 + 2 * n);
    for m in measures {
        for tau in ["mu", "var"] {
            for s in STATS {
                out.push(format!("{tau}_{}{s}", m.as_ref()));
            }
        }
    }
    out.extend(SIZE_NAMES.iter().map(|s| s.to_string()));
    out.extend((1..=n).map(|c| format!("N_{c}")));
    out.extend((1..=n).map(|c| format!("P_{c}")));
    out
}

/// One row of aggregated metrics, in [`metric_names`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricVector {
    pub values: Vec<f64>,
}

fn mean_var(values: &[f64], pixels: &[usize]) -> (f64, f64) {
    if pixels.is_empty() {
        return (0.0, 0.0);
    }
    let k = pixels.len() as f64;
    // moments shifted by the first value: exact zero variance on constant input
    let x0 = values[pixels[0]];
    let (s, s2) = pixels.iter().fold((0.0, 0.0), |(s, s2), &l| {
        let d = values[l] - x0;
        (s + d, s2 + d * d)
    });
    let mu = x0 + s / k;
    let var = ((s2 - s * s / k) / k).max(0.0);
    (mu, var)
}

/// Aggregates all heatmaps over one decomposed segment. `pred_labels` and the
/// probabilities come from `grids`; the ground truth is never read.
pub fn aggregate(seg: &Segment, heatmaps: &[Heatmap], grids: &FrameGrids) -> MetricVector {
    let n = grids.n;
    let (s, s_in, s_bd) = (seg.size() as f64, seg.size_in() as f64, seg.size_bd() as f64);
    let s_rel = s / s_bd;
    let s_rel_in = s_in / s_bd;
    let mut values = Vec::with_capacity(heatmaps.len() * 10 + 6 + 2 * n);
    for hm in heatmaps {
        let whole = mean_var(&hm.values, &seg.pixels);
        let inner = mean_var(&hm.values, &seg.interior);
        let bd = mean_var(&hm.values, &seg.boundary);
        for pick in [|t: (f64, f64)| t.0, |t: (f64, f64)| t.1] {
            let tau = pick(whole);
            values.extend([tau, pick(inner), pick(bd), tau * s_rel, tau * s_rel_in]);
        }
    }
    values.extend([s, s_in, s_bd, s_rel, s_rel_in, seg.sp as f64]);

    let mut counts = vec![0usize; n];
    for &l in &seg.boundary {
        counts[grids.pred_labels[l] as usize - 1] += 1;
    }
    let nb = seg.neighbours.len();
    values.extend(counts.iter().map(|&c| if nb == 0 { 0.0 } else { c as f64 / nb as f64 }));

    let mut probs = vec![0.0f64; n];
    for &l in &seg.pixels {
        for (acc, &p) in probs.iter_mut().zip(grids.pixel_probs(l)) {
            *acc += p as f64;
        }
    }
    values.extend(probs.iter().map(|p| p / s));
    MetricVector { values }
}
