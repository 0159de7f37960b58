//! Segmentation evaluation: confusion matrices, IoU and class distributions.
//!
//! Clouds are pooled into one confusion matrix; per-class IoU is
//! `TP / (TP + FP + FN)` and mIoU is the unweighted mean over classes that
//! occur in either ground truth or prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lidar::LabeledPointCloud;

/// `C × C` counts, row = ground truth, column = prediction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let c = class_names.len();
        ConfusionMatrix {
            class_names,
            counts: vec![0; c * c],
        }
    }

    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes() + pred]
    }

    /// Rows of the matrix.
    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes().max(1)).map(<[u64]>::to_vec).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn accumulate(&mut self, gt: &[u16], pred: &[u16]) -> Result<()> {
        if gt.len() != pred.len() {
            return Err(Error::Labels(format!(
                "{} ground-truth labels vs {} predictions",
                gt.len(),
                pred.len()
            )));
        }
        let c = self.classes();
        if let Some(bad) = gt.iter().chain(pred).find(|&&l| l as usize >= c) {
            return Err(Error::Labels(format!("label {bad} out of range for {c} classes")));
        }
        for (&g, &p) in gt.iter().zip(pred) {
            self.counts[g as usize * c + p as usize] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.class_names != other.class_names {
            return Err(Error::Labels("cannot merge matrices over different classes".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Per-class true positives, false positives and false negatives.
    pub fn tp_fp_fn(&self, class: usize) -> (u64, u64, u64) {
        let c = self.classes();
        let tp = self.get(class, class);
        let col: u64 = (0..c).map(|g| self.get(g, class)).sum();
        let row: u64 = (0..c).map(|p| self.get(class, p)).sum();
        (tp, col - tp, row - tp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoUReport {
    pub class_names: Vec<String>,
    /// `None` for classes absent from both ground truth and prediction.
    pub per_class_iou: Vec<Option<f64>>,
    /// Mean over the defined classes; `None` if no class is defined.
    pub miou: Option<f64>,
    pub undefined_classes: Vec<String>,
}

pub fn iou_report(cm: &ConfusionMatrix) -> IoUReport {
    let per_class_iou: Vec<Option<f64>> = (0..cm.classes())
        .map(|c| {
            let (tp, fp, fn_) = cm.tp_fp_fn(c);
            let denom = tp + fp + fn_;
            (denom > 0).then(|| tp as f64 / denom as f64)
        })
        .collect();
    let defined: Vec<f64> = per_class_iou.iter().flatten().copied().collect();
    let undefined_classes = per_class_iou
        .iter()
        .zip(&cm.class_names)
        .filter(|(iou, _)| iou.is_none())
        .map(|(_, n)| n.clone())
        .collect();
    IoUReport {
        class_names: cm.class_names.clone(),
        miou: mean_iou(&defined),
        per_class_iou,
        undefined_classes,
    }
}

/// Unweighted mean of class IoUs.
pub fn mean_iou(ious: &[f64]) -> Option<f64> {
    (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64)
}

/// `100 · count / total` per class; all zeros when the total is zero.
pub fn percentages(histogram: &[u64]) -> Vec<f64> {
    let total: u64 = histogram.iter().sum();
    histogram
        .iter()
        .map(|&c| {
            if total == 0 {
                0.0
            } else {
                100.0 * c as f64 / total as f64
            }
        })
        .collect()
}

/// Percentage of points per class over a set of clouds sharing one class
/// table.
pub fn class_distribution(clouds: &[LabeledPointCloud]) -> Result<Vec<f64>> {
    let first = clouds
        .first()
        .ok_or_else(|| Error::Labels("class distribution of an empty cloud list".into()))?;
    let mut hist = vec![0u64; first.class_names.len()];
    for c in clouds {
        if c.class_names != first.class_names {
            return Err(Error::Labels("clouds use different class tables".into()));
        }
        for (h, n) in hist.iter_mut().zip(c.class_histogram()) {
            *h += n;
        }
    }
    Ok(percentages(&hist))
}

/// Rounds a percentage to one decimal for reporting.
pub fn round_tenth(p: f64) -> f64 {
    (p * 10.0).round() / 10.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn cm(n: usize, gt: &[u16], pred: &[u16]) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::new(names(n));
        m.accumulate(gt, pred).unwrap();
        m
    }

    #[test]
    fn diagonal_and_off_diagonal() {
        let m = cm(3, &[0, 1, 2], &[0, 1, 2]);
        assert_eq!(m.rows(), vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        let m = cm(2, &[0], &[1]);
        assert_eq!(m.get(0, 1), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn accumulate_errors() {
        let mut m = ConfusionMatrix::new(names(2));
        assert!(m.accumulate(&[0, 1], &[0]).is_err());
        assert!(m.accumulate(&[0, 2], &[0, 1]).is_err());
        assert_eq!(m.total(), 0);
    }

    #[test]
    fn hand_computed_report() {
        // class 0: TP 1, FN 1 → 1/2; class 1: TP 2, FP 1 → 2/3; class 2: 1.
        let r = iou_report(&cm(3, &[0, 0, 1, 1, 2], &[0, 1, 1, 1, 2]));
        let iou: Vec<f64> = r.per_class_iou.iter().map(|x| x.unwrap()).collect();
        assert!((iou[0] - 0.5).abs() < 1e-15);
        assert!((iou[1] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(iou[2], 1.0);
        assert!((r.miou.unwrap() - 0.7222).abs() < 5e-5);
    }

    #[test]
    fn undefined_classes_are_flagged_and_skipped() {
        let r = iou_report(&cm(3, &[0, 0], &[0, 0]));
        assert_eq!(r.per_class_iou, vec![Some(1.0), None, None]);
        assert_eq!(r.miou, Some(1.0));
        assert_eq!(r.undefined_classes, vec!["c1", "c2"]);
        assert_eq!(iou_report(&ConfusionMatrix::new(names(2))).miou, None);
    }

    #[test]
    fn distribution() {
        let mut c = LabeledPointCloud::new(names(2));
        c.points = vec![Vec3::zeros(); 4];
        c.labels = vec![0, 0, 1, 1];
        assert_eq!(class_distribution(&[c.clone()]).unwrap(), vec![50.0, 50.0]);
        let mut one = LabeledPointCloud::new(names(3));
        one.points = vec![Vec3::zeros(); 3];
        one.labels = vec![2, 2, 2];
        assert_eq!(class_distribution(&[one]).unwrap(), vec![0.0, 0.0, 100.0]);
        assert!(class_distribution(&[]).is_err());
        assert_eq!(round_tenth(88.34), 88.3);
        assert_eq!(round_tenth(6.66), 6.7);
    }

    fn labels(n: usize, c: u16) -> impl Strategy<Value = (Vec<u16>, Vec<u16>)> {
        (prop::collection::vec(0..c, n), prop::collection::vec(0..c, n))
    }

    proptest! {
        #[test]
        fn perfect_prediction_scores_one(gt in prop::collection::vec(0u16..4, 1..200)) {
            let r = iou_report(&cm(4, &gt, &gt));
            prop_assert_eq!(r.miou, Some(1.0));
            prop_assert!(r.per_class_iou.iter().flatten().all(|&x| x == 1.0));
        }

        #[test]
        fn merge_equals_concatenation((g1, p1) in labels(60, 4), (g2, p2) in labels(90, 4)) {
            let mut a = cm(4, &g1, &p1);
            let b = cm(4, &g2, &p2);
            let mut ba = b.clone();
            ba.merge(&a).unwrap();
            a.merge(&b).unwrap();
            prop_assert_eq!(&a, &ba);
            let cat = cm(4, &[g1, g2].concat(), &[p1, p2].concat());
            prop_assert_eq!(iou_report(&a), iou_report(&cat));
        }

        #[test]
        fn relabeling_permutes_report((g, p) in labels(120, 4), perm in Just([2u16, 0, 3, 1])) {
            let r = iou_report(&cm(4, &g, &p));
            let pg: Vec<u16> = g.iter().map(|&l| perm[l as usize]).collect();
            let pp: Vec<u16> = p.iter().map(|&l| perm[l as usize]).collect();
            let rp = iou_report(&cm(4, &pg, &pp));
            for c in 0..4 {
                prop_assert_eq!(r.per_class_iou[c], rp.per_class_iou[perm[c] as usize]);
            }
            let (m, mp) = (r.miou.unwrap(), rp.miou.unwrap());
            prop_assert!((m - mp).abs() < 1e-12);
        }

        #[test]
        fn miou_within_class_range((g, p) in labels(80, 3)) {
            let r = iou_report(&cm(3, &g, &p));
            let d: Vec<f64> = r.per_class_iou.iter().flatten().copied().collect();
            let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let m = r.miou.unwrap();
            prop_assert!(m >= lo - 1e-12 && m <= hi + 1e-12);
        }
    }
}
