use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::argmax;

/// 0.0, 0.1, ..., 1.0.
pub fn thresholds() -> [f64; 11] {
    std::array::from_fn(|i| i as f64 / 10.0)
}

fn check_aligned(scores: &[Vec<f32>], truth: &[usize]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} score rows for {} truth labels",
            scores.len(),
            truth.len()
        )));
    }
    Ok(())
}

fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Window-level precision and recall for one label. A window is predicted
/// positive when its score is at least `threshold` and above zero, so a hard
/// 0 is a negative even at threshold 0.0. 0/0 counts as 1.
pub fn precision_recall_at_threshold(
    scores: &[Vec<f32>],
    truth: &[usize],
    label: usize,
    threshold: f64,
) -> Result<(f64, f64)> {
    check_aligned(scores, truth)?;
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (row, &t) in scores.iter().zip(truth) {
        let s = *row
            .get(label)
            .ok_or_else(|| Error::Shape(format!("score row has no label {label}")))?;
        match (s > 0.0 && s as f64 >= threshold, t == label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    Ok((ratio_or_one(tp, tp + fp), ratio_or_one(tp, tp + fn_)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn pr_curve(scores: &[Vec<f32>], truth: &[usize], label: usize) -> Result<Vec<PrPoint>> {
    thresholds()
        .into_iter()
        .map(|t| {
            let (precision, recall) = precision_recall_at_threshold(scores, truth, label, t)?;
            Ok(PrPoint {
                threshold: t,
                precision,
                recall,
            })
        })
        .collect()
}

/// Mean of the 11 threshold precisions.
pub fn average_precision(scores: &[Vec<f32>], truth: &[usize], label: usize) -> Result<f64> {
    let curve = pr_curve(scores, truth, label)?;
    Ok(curve.iter().map(|p| p.precision).sum::<f64>() / curve.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapResult {
    pub map: f64,
    /// `None` for labels with no positive window.
    pub per_label: Vec<Option<f64>>,
}

/// Unweighted mean over labels of the threshold-averaged precision. Labels
/// absent from `truth` are skipped.
pub fn mean_average_precision(scores: &[Vec<f32>], truth: &[usize], class_count: usize) -> Result<MapResult> {
    check_aligned(scores, truth)?;
    let mut per_label = Vec::with_capacity(class_count);
    for label in 0..class_count {
        if truth.contains(&label) {
            per_label.push(Some(average_precision(scores, truth, label)?));
        } else {
            tracing::debug!(label, "no positive windows; label left out of mAP");
            per_label.push(None);
        }
    }
    let aps: Vec<f64> = per_label.iter().flatten().copied().collect();
    if aps.is_empty() {
        return Err(Error::Empty("evaluable labels"));
    }
    Ok(MapResult {
        map: aps.iter().sum::<f64>() / aps.len() as f64,
        per_label,
    })
}

/// `matrix[true][predicted]` window counts and the trace fraction.
pub fn confusion_and_accuracy(scores: &[Vec<f32>], truth: &[usize], class_count: usize) -> Result<(Vec<Vec<u64>>, f64)> {
    check_aligned(scores, truth)?;
    let mut m = vec![vec![0u64; class_count]; class_count];
    for (row, &t) in scores.iter().zip(truth) {
        if row.len() != class_count || t >= class_count {
            return Err(Error::Shape(format!(
                "score row of {} or truth {t} outside {class_count} classes",
                row.len()
            )));
        }
        m[t][argmax(row)] += 1;
    }
    let diag: u64 = (0..class_count).map(|i| m[i][i]).sum();
    Ok((m, diag as f64 / scores.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f32]) -> Vec<Vec<f32>> {
        v.iter().map(|&s| vec![1.0 - s, s]).collect()
    }

    #[test]
    fn hand_case() {
        let scores = col(&[0.9, 0.8, 0.4, 0.3, 0.75, 0.2]);
        let truth = [1, 1, 0, 0, 0, 1];
        let (p, r) = precision_recall_at_threshold(&scores, &truth, 1, 0.5).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-12 && (r - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn boundaries() {
        let scores = vec![vec![1.0f32]; 4];
        let truth = [0; 4];
        for t in thresholds() {
            assert_eq!(precision_recall_at_threshold(&scores, &truth, 0, t).unwrap(), (1.0, 1.0));
        }
        let mixed = col(&[0.01, 0.3, 1e-6]);
        let (p, r) = precision_recall_at_threshold(&mixed, &[1, 0, 1], 1, 0.0).unwrap();
        assert_eq!((p, r), (2.0 / 3.0, 1.0));
        // a hard zero is never a positive prediction
        let (p, r) = precision_recall_at_threshold(&col(&[0.0, 0.0]), &[1, 0], 1, 0.0).unwrap();
        assert_eq!((p, r), (1.0, 0.0));
        assert!(precision_recall_at_threshold(&[], &[], 0, 0.5).is_err());
        assert!(precision_recall_at_threshold(&mixed, &[1, 0], 1, 0.5).is_err());
    }

    #[test]
    fn perfect_predictions() {
        let truth: Vec<usize> = (0..28).map(|i| i % 14).collect();
        let scores: Vec<Vec<f32>> = truth
            .iter()
            .map(|&t| (0..14).map(|j| if j == t { 1.0 } else { 0.0 }).collect())
            .collect();
        assert_eq!(mean_average_precision(&scores, &truth, 14).unwrap().map, 1.0);
        let (m, acc) = confusion_and_accuracy(&scores, &truth, 14).unwrap();
        assert_eq!(acc, 1.0);
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row.iter().sum::<u64>(), 2);
            assert_eq!(row[i], 2);
        }
    }

    #[test]
    fn uniform_scores_single_label() {
        // 3 positives in 10 windows for label 0; label 1 never true.
        let scores = vec![vec![0.5f32, 0.5]; 10];
        let truth = [0, 0, 0, 1, 1, 1, 1, 1, 1, 1];
        let ap0 = average_precision(&scores, &truth, 0).unwrap();
        let expected = (6.0 * 0.3 + 5.0 * 1.0) / 11.0;
        assert!((ap0 - expected).abs() < 1e-12);
        let (_, acc) = confusion_and_accuracy(&scores, &truth, 2).unwrap();
        assert!((acc - 0.3).abs() < 1e-12);
    }

    #[test]
    fn skips_labels_without_positives() {
        let scores = col(&[0.9, 0.1]);
        let r = mean_average_precision(&scores, &[1, 1], 2).unwrap();
        assert_eq!(r.per_label[0], None);
        assert_eq!(r.map, r.per_label[1].unwrap());
    }
}
