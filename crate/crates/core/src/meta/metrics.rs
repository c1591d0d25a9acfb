//! Evaluation metrics for meta classification and regression.

use crate::error::{Error, Result};

/// Fraction of samples whose thresholded score (`score >= threshold` → 1)
/// equals the 0/1 label.
pub fn accuracy(scores: &[f64], labels: &[f64], threshold: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correct = scores.iter().zip(labels).filter(|(&s, &y)| (s >= threshold) == (y > 0.5)).count();
    Ok(correct as f64 / scores.len() as f64)
}

/// Majority-class rate, the accuracy of always guessing the larger class.
pub fn naive_baseline(labels: &[f64]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let pos = labels.iter().filter(|&&y| y > 0.5).count() as f64 / labels.len() as f64;
    Ok(pos.max(1.0 - pos))
}

/// Score-descending groups of tied scores as `(positives, negatives)`.
fn tie_groups(scores: &[f64], labels: &[f64]) -> Vec<(u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(u64, u64)> = Vec::new();
    let mut last = None;
    for i in order {
        if last != Some(scores[i]) {
            groups.push((0, 0));
            last = Some(scores[i]);
        }
        let g = groups.last_mut().unwrap();
        if labels[i] > 0.5 {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    groups
}

/// Area under the ROC curve by a threshold sweep with trapezoidal steps.
/// Summed in integers, it equals `P(s+ > s-) + ½ P(s+ = s-)` exactly.
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let groups = tie_groups(scores, labels);
    let (p, n) = groups.iter().fold((0, 0), |(p, n), g| (p + g.0, n + g.1));
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    let mut tp = 0u64;
    let mut twice_area = 0u128;
    for (gp, gn) in groups {
        twice_area += gn as u128 * (2 * tp + gp) as u128;
        tp += gp;
    }
    Ok(twice_area as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Step-wise area under the precision–recall curve: `Σ (R_i − R_{i−1}) P_i`
/// over descending distinct score thresholds. Label 1 is the positive class.
pub fn auprc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let groups = tie_groups(scores, labels);
    let p: u64 = groups.iter().map(|g| g.0).sum();
    if p == 0 {
        return Err(Error::NoPositives);
    }
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area = 0.0;
    for (gp, gn) in groups {
        tp += gp;
        fp += gn;
        if gp > 0 {
            area += (gp as f64 / p as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(area)
}

/// Coefficient of determination; a constant target gives 0.
pub fn r2(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = predictions.iter().zip(targets).map(|(p, y)| (y - p) * (y - p)).sum();
    if ss_tot == 0.0 {
        return Ok(0.0);
    }
    Ok(1.0 - ss_res / ss_tot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[f64]) -> f64 {
        let (mut num, mut den) = (0u64, 0u64);
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] > 0.5 && labels[j] < 0.5 {
                    den += 2;
                    num += if si > sj { 2 } else if si == sj { 1 } else { 0 };
                }
            }
        }
        num as f64 / den as f64
    }

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert_eq!(auroc(&[0.3; 6], &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap(), 0.5);
        assert!(matches!(auroc(&[0.1, 0.2], &[1.0, 1.0]), Err(Error::SingleClass)));
    }

    #[test]
    fn auprc_examples() {
        assert_eq!(auprc(&[0.9, 0.8, 0.2], &[1.0, 1.0, 0.0]).unwrap(), 1.0);
        let a = auprc(&[0.9, 0.8, 0.7, 0.6], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!((a - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
        assert!(matches!(auprc(&[0.5], &[0.0]), Err(Error::NoPositives)));
    }

    #[test]
    fn r2_examples() {
        assert_eq!(r2(&[0.2, 0.4], &[0.2, 0.4]).unwrap(), 1.0);
        assert_eq!(r2(&[0.5, 0.5], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((r2(&[0.25, 0.75], &[0.0, 1.0]).unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(r2(&[0.1, 0.9], &[0.3, 0.3]).unwrap(), 0.0);
        assert!(r2(&[], &[]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0.9, 0.1], &[1.0, 0.0], 0.5).unwrap(), 1.0);
        assert_eq!(accuracy(&[0.9, 0.9], &[1.0, 0.0], 0.5).unwrap(), 0.5);
        assert!(accuracy(&[], &[], 0.5).is_err());
        let labels: Vec<f64> = (0..10000).map(|i| if i < 8453 { 0.0 } else { 1.0 }).collect();
        assert!((naive_baseline(&labels).unwrap() - 0.8453).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn auroc_equals_pairwise(data in proptest::collection::vec((0u8..20, any::<bool>()), 2..200)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 20.0).collect();
            let labels: Vec<f64> = data.iter().map(|d| d.1 as u8 as f64).collect();
            prop_assume!(labels.iter().any(|&y| y > 0.5) && labels.iter().any(|&y| y < 0.5));
            prop_assert_eq!(auroc(&scores, &labels).unwrap(), pairwise(&scores, &labels));
        }

        #[test]
        fn monotone_transform_invariance(data in proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..100)) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<f64> = data.iter().map(|d| d.1 as u8 as f64).collect();
            prop_assume!(labels.iter().any(|&y| y > 0.5) && labels.iter().any(|&y| y < 0.5));
            let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
            prop_assert_eq!(auroc(&scores, &labels).unwrap(), auroc(&squashed, &labels).unwrap());
            prop_assert_eq!(auprc(&scores, &labels).unwrap(), auprc(&squashed, &labels).unwrap());
        }
    }
}
