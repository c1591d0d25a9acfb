//! Reliability bins over `(0, 0.1], …, (0.9, 1.0]` with MCE and ECE.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// Confidence `max(p, 1 − p)` of the predicted class, correct when the
    /// prediction at 0.5 matches the label.
    PredictedClass,
    /// Raw FP probability `p`; bin accuracy is the positive rate.
    RawProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    /// `None` for an empty bin.
    pub confidence: Option<f64>,
    pub accuracy: Option<f64>,
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub mode: ConfidenceMode,
    pub samples: usize,
    pub bins: Vec<CalibrationBin>,
    pub mce: f64,
    pub ece: f64,
}

/// Index of the right-closed bin containing `c`; 0 lands in the first bin.
pub fn bin_index(c: f64) -> usize {
    (0..N_BINS).find(|&k| c <= (k + 1) as f64 / N_BINS as f64).unwrap_or(N_BINS - 1)
}

pub fn calibration(probabilities: &[f64], labels: &[f64], mode: ConfidenceMode) -> Result<CalibrationReport> {
    if probabilities.is_empty() {
        return Err(Error::EmptyInput);
    }
    if probabilities.len() != labels.len() {
        return Err(Error::CountMismatch { expected: probabilities.len(), found: labels.len() });
    }
    let mut count = [0usize; N_BINS];
    let mut conf_sum = [0.0f64; N_BINS];
    let mut hits = [0usize; N_BINS];
    for (&p, &y) in probabilities.iter().zip(labels) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbRange { row: 0, value: p });
        }
        let positive = y > 0.5;
        let (conf, hit) = match mode {
            ConfidenceMode::PredictedClass => (p.max(1.0 - p), (p >= 0.5) == positive),
            ConfidenceMode::RawProbability => (p, positive),
        };
        let b = bin_index(conf);
        count[b] += 1;
        conf_sum[b] += conf;
        hits[b] += hit as usize;
    }
    let n = probabilities.len();
    let mut bins = Vec::with_capacity(N_BINS);
    let (mut mce, mut weighted) = (0.0f64, 0.0f64);
    for b in 0..N_BINS {
        let (lower, upper) = (b as f64 / N_BINS as f64, (b + 1) as f64 / N_BINS as f64);
        if count[b] == 0 {
            bins.push(CalibrationBin { lower, upper, count: 0, confidence: None, accuracy: None, gap: None });
            continue;
        }
        let conf = conf_sum[b] / count[b] as f64;
        let acc = hits[b] as f64 / count[b] as f64;
        // from the sums, so integer-valued totals give exact gaps
        let abs_diff = (hits[b] as f64 - conf_sum[b]).abs();
        let gap = abs_diff / count[b] as f64;
        mce = mce.max(gap);
        weighted += abs_diff;
        bins.push(CalibrationBin { lower, upper, count: count[b], confidence: Some(conf), accuracy: Some(acc), gap: Some(gap) });
    }
    // a weighted mean cannot exceed the max; min() only absorbs rounding
    let ece = (weighted / n as f64).min(mce);
    Ok(CalibrationReport { mode, samples: n, bins, mce, ece })
}

impl CalibrationReport {
    /// Reliability-diagram JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let r = calibration(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0], ConfidenceMode::PredictedClass).unwrap();
        assert_eq!((r.mce, r.ece), (0.0, 0.0));
        assert_eq!(r.bins[9].count, 3);
    }

    #[test]
    fn single_bin_gap() {
        let p = vec![0.75; 100];
        let y: Vec<f64> = (0..100).map(|i| (i < 55) as u8 as f64).collect();
        let r = calibration(&p, &y, ConfidenceMode::PredictedClass).unwrap();
        assert_eq!(r.bins[7].count, 100);
        assert_eq!((r.mce, r.ece), (0.2, 0.2));
    }

    #[test]
    fn right_closed_edges() {
        assert_eq!(bin_index(0.1), 0);
        assert_eq!(bin_index(0.7), 6);
        assert_eq!(bin_index(0.7000001), 7);
        assert_eq!(bin_index(1.0), 9);
        assert_eq!(bin_index(0.0), 0);
    }

    #[test]
    fn json_round_trip_with_empty_bins() {
        let r = calibration(&[0.9, 0.2, 0.65], &[1.0, 0.0, 0.0], ConfidenceMode::PredictedClass).unwrap();
        let json = r.to_json();
        assert!(json.contains("\"accuracy\": null"));
        assert_eq!(CalibrationReport::from_json(&json).unwrap(), r);
        assert_eq!(r.bins.len(), 10);
        assert!(calibration(&[], &[], ConfidenceMode::RawProbability).is_err());
    }
}
