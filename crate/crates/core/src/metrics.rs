//! ROC AUC and equal error rate. Labels are `true` for outliers (the
//! positive class); larger scores mean "more anomalous".

use crate::error::{OledError, Result};

fn validate(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(OledError::Metric(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(OledError::Metric("NaN score".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(OledError::Metric("both classes must be present".into()));
    }
    Ok((pos, neg))
}

/// Mann–Whitney statistic P(s_out > s_in) + ½·P(s_out = s_in), computed from
/// mid-ranks in O(n log n).
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = validate(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        rank_sum += mid * order[i..j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// Decision thresholds in decreasing order (score ≥ threshold ⇒ outlier).
    /// The first point (0, 0) has threshold +∞.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
    pub eer: f64,
}

pub fn roc_curve(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let (pos, neg) = validate(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut thresholds = vec![f64::INFINITY];
    let mut fpr = vec![0.0];
    let mut tpr = vec![0.0];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        thresholds.push(s);
        fpr.push(fp as f64 / neg as f64);
        tpr.push(tp as f64 / pos as f64);
    }
    let eer = eer_from_points(&fpr, &tpr);
    Ok(RocCurve {
        thresholds,
        fpr,
        tpr,
        auc: auc(scores, labels)?,
        eer,
    })
}

/// Walks the ROC polyline to the first point where FPR ≥ FNR and linearly
/// interpolates the crossing with the previous point.
pub(crate) fn eer_from_points(fpr: &[f64], tpr: &[f64]) -> f64 {
    let gap = |i: usize| fpr[i] - (1.0 - tpr[i]);
    for i in 1..fpr.len() {
        let (d0, d1) = (gap(i - 1), gap(i));
        if d1 >= 0.0 {
            if d0 >= 0.0 || d1 == d0 {
                return fpr[i - 1];
            }
            let lambda = -d0 / (d1 - d0);
            return fpr[i - 1] + lambda * (fpr[i] - fpr[i - 1]);
        }
    }
    fpr[fpr.len() - 1]
}

pub fn eer(scores: &[f64], labels: &[bool]) -> Result<f64> {
    Ok(roc_curve(scores, labels)?.eer)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.9], &[false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.1], &[false, true]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5, 0.7], &[false, true, true]).unwrap(), 0.75);
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
        assert!(eer(&[0.1, 0.2], &[false, false]).is_err());
        assert!(auc(&[0.1], &[true, false]).is_err());
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(eer(&[0.3; 6], &[false, true, false, true, true, false]).unwrap(), 0.5);
        assert_eq!(eer(&[1.0, 2.0, 3.0, 4.0], &[false, true, false, true]).unwrap(), 0.5);
    }

    #[test]
    fn roc_is_monotone_and_anchored() {
        let scores = [0.2, 0.4, 0.4, 0.9, 0.1, 0.5];
        let labels = [false, true, false, true, false, true];
        let roc = roc_curve(&scores, &labels).unwrap();
        assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
        assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
        assert!(roc.fpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(roc.tpr.windows(2).all(|w| w[0] <= w[1]));
        assert!(roc.thresholds.windows(2).all(|w| w[0] > w[1]));
    }
}
