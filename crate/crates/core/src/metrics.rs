//! Binary segmentation metrics and the Known/Unknown split report.
//!
//! Masks are `true` for traversable pixels. Every "m" metric is the macro
//! average over the two classes (traversable, non-traversable) of a
//! per-class quantity taken from the 2×2 confusion matrix:
//!
//! - accuracy: `TP / (TP + FP)`, the fraction of pixels assigned to the
//!   class that truly belong to it
//! - recall: `TP / (TP + FN)`
//! - F1: `2TP / (2TP + FP + FN)`
//! - IoU: `TP / (TP + FP + FN)`
//!
//! A class absent from both prediction and target scores 100 on every
//! metric; an empty denominator otherwise scores 0.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{shape, Error, Result};
use crate::scene::SceneCombination;

/// Counts indexed `[truth][prediction]`, index 1 = traversable.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 2]; 2],
}

impl ConfusionMatrix {
    pub fn from_masks(pred: &[bool], target: &[bool]) -> Result<Self> {
        if pred.len() != target.len() {
            return Err(shape(format!("prediction has {} pixels, target {}", pred.len(), target.len())));
        }
        let mut counts = [[0u64; 2]; 2];
        for (p, t) in pred.iter().zip(target) {
            counts[usize::from(*t)][usize::from(*p)] += 1;
        }
        Ok(Self { counts })
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for t in 0..2 {
            for p in 0..2 {
                self.counts[t][p] += other.counts[t][p];
            }
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    fn class_scores(&self, class: usize) -> [f64; 4] {
        let other = 1 - class;
        let tp = self.counts[class][class] as f64;
        let fp = self.counts[other][class] as f64;
        let fn_ = self.counts[class][other] as f64;
        if tp + fp + fn_ == 0.0 {
            return [100.0; 4];
        }
        let ratio = |num: f64, den: f64| if den > 0.0 { 100.0 * num / den } else { 0.0 };
        [ratio(tp, tp + fp), ratio(tp, tp + fn_), ratio(2.0 * tp, 2.0 * tp + fp + fn_), ratio(tp, tp + fp + fn_)]
    }

    pub fn metrics(&self) -> SegmentationMetrics {
        let a = self.class_scores(0);
        let b = self.class_scores(1);
        let mean = |i: usize| (a[i] + b[i]) / 2.0;
        SegmentationMetrics { macc: mean(0), mrecall: mean(1), mf1: mean(2), miou: mean(3) }
    }
}

/// Macro-averaged metrics, as percentages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentationMetrics {
    pub macc: f64,
    pub mrecall: f64,
    pub mf1: f64,
    pub miou: f64,
}

impl SegmentationMetrics {
    pub fn as_array(&self) -> [f64; 4] {
        [self.macc, self.mrecall, self.mf1, self.miou]
    }

    /// `self − other` per metric.
    pub fn minus(&self, other: &SegmentationMetrics) -> SegmentationMetrics {
        SegmentationMetrics {
            macc: self.macc - other.macc,
            mrecall: self.mrecall - other.mrecall,
            mf1: self.mf1 - other.mf1,
            miou: self.miou - other.miou,
        }
    }
}

pub fn segmentation_metrics(pred: &[bool], target: &[bool]) -> Result<SegmentationMetrics> {
    Ok(ConfusionMatrix::from_masks(pred, target)?.metrics())
}

/// One evaluated prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalSample {
    pub combination: SceneCombination,
    pub confusion: ConfusionMatrix,
}

impl EvalSample {
    pub fn from_masks(combination: SceneCombination, pred: &[bool], target: &[bool]) -> Result<Self> {
        Ok(Self { combination, confusion: ConfusionMatrix::from_masks(pred, target)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitMetrics {
    pub samples: usize,
    pub metrics: SegmentationMetrics,
}

/// Overall / Known / Unknown metrics with the Unknown − Known delta.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub overall: SplitMetrics,
    pub known: Option<SplitMetrics>,
    pub unknown: Option<SplitMetrics>,
    /// Present only when both splits are.
    pub delta: Option<SegmentationMetrics>,
}

pub const REPORT_HEADER: &str = "overall_macc,overall_mrecall,overall_mf1,overall_miou,\
known_macc,known_mrecall,known_mf1,known_miou,\
unknown_macc,unknown_mrecall,unknown_mf1,unknown_miou,\
delta_macc,delta_mrecall,delta_mf1,delta_miou,\
known_samples,unknown_samples";

impl EvalReport {
    /// Header plus one data row; absent splits leave their cells empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        let mut cells: Vec<String> = Vec::with_capacity(18);
        let mut push = |m: Option<SegmentationMetrics>| match m {
            Some(m) => cells.extend(m.as_array().iter().map(|v| format!("{v:.4}"))),
            None => cells.extend(std::iter::repeat_n(String::new(), 4)),
        };
        push(Some(self.overall.metrics));
        push(self.known.map(|s| s.metrics));
        push(self.unknown.map(|s| s.metrics));
        push(self.delta);
        cells.push(self.known.map_or(0, |s| s.samples).to_string());
        cells.push(self.unknown.map_or(0, |s| s.samples).to_string());
        let _ = writeln!(out, "{}", cells.join(","));
        out
    }
}

/// Splits samples by whether their combination was seen in training and
/// evaluates each split on its pooled confusion counts.
pub fn split_evaluate(samples: &[EvalSample], train_combinations: &HashSet<SceneCombination>) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data("no samples to evaluate".into()));
    }
    let mut overall = ConfusionMatrix::default();
    let mut known = (ConfusionMatrix::default(), 0usize);
    let mut unknown = (ConfusionMatrix::default(), 0usize);
    for s in samples {
        overall.merge(&s.confusion);
        let bucket = if train_combinations.contains(&s.combination) { &mut known } else { &mut unknown };
        bucket.0.merge(&s.confusion);
        bucket.1 += 1;
    }
    let split = |(cm, n): (ConfusionMatrix, usize)| (n > 0).then(|| SplitMetrics { samples: n, metrics: cm.metrics() });
    let known = split(known);
    let unknown = split(unknown);
    let delta = match (&known, &unknown) {
        (Some(k), Some(u)) => Some(u.metrics.minus(&k.metrics)),
        _ => None,
    };
    Ok(EvalReport {
        overall: SplitMetrics { samples: samples.len(), metrics: overall.metrics() },
        known,
        unknown,
        delta,
    })
}
