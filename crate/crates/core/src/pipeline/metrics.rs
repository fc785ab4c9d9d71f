use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::UNLABELED;

/// Confusion-matrix summary. Rows are truth, columns are predictions.
///
/// Classes with no support are left out of `macc`; classes absent from both
/// truth and prediction are left out of `miou`. Their per-class entries are
/// `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Vec<Vec<u64>>,
    pub oa: f64,
    pub macc: f64,
    pub miou: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub per_class_recall: Vec<Option<f64>>,
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let c = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..c).map(|i| confusion[i][i]).sum();
        let support = |i: usize| confusion[i].iter().sum::<u64>();
        let predicted = |i: usize| confusion.iter().map(|row| row[i]).sum::<u64>();
        let per_class_recall: Vec<Option<f64>> = (0..c)
            .map(|i| (support(i) > 0).then(|| confusion[i][i] as f64 / support(i) as f64))
            .collect();
        let per_class_iou: Vec<Option<f64>> = (0..c)
            .map(|i| {
                let union = support(i) + predicted(i) - confusion[i][i];
                (union > 0).then(|| confusion[i][i] as f64 / union as f64)
            })
            .collect();
        let mean = |v: &[Option<f64>]| {
            let present: Vec<f64> = v.iter().flatten().copied().collect();
            if present.is_empty() {
                0.0
            } else {
                present.iter().sum::<f64>() / present.len() as f64
            }
        };
        Self {
            oa: if total > 0 { trace as f64 / total as f64 } else { 0.0 },
            macc: mean(&per_class_recall),
            miou: mean(&per_class_iou),
            confusion,
            per_class_iou,
            per_class_recall,
        }
    }

    /// Sums the confusion matrices of several evaluations.
    pub fn pooled(parts: &[Metrics]) -> Result<Self> {
        let Some(first) = parts.first() else {
            return Err(Error::Argument("nothing to pool".into()));
        };
        let c = first.confusion.len();
        let mut confusion = vec![vec![0u64; c]; c];
        for m in parts {
            if m.confusion.len() != c {
                return Err(Error::LengthMismatch {
                    what: "confusion matrix classes",
                    got: m.confusion.len(),
                    expected: c,
                });
            }
            for (acc, row) in confusion.iter_mut().zip(&m.confusion) {
                for (a, b) in acc.iter_mut().zip(row) {
                    *a += b;
                }
            }
        }
        Ok(Self::from_confusion(confusion))
    }
}

/// Scores dense predictions against ground truth. Unlabeled truth entries are skipped.
pub fn compute_metrics(pred: &[u32], truth: &[u32], num_classes: usize) -> Result<Metrics> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch {
            what: "predictions",
            got: pred.len(),
            expected: truth.len(),
        });
    }
    let mut confusion = vec![vec![0u64; num_classes]; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        if t == UNLABELED {
            continue;
        }
        if p as usize >= num_classes || t as usize >= num_classes {
            return Err(Error::Argument(format!(
                "label {} out of range for {num_classes} classes",
                p.max(t)
            )));
        }
        confusion[t as usize][p as usize] += 1;
    }
    Ok(Metrics::from_confusion(confusion))
}
