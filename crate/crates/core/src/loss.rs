//! Training objectives: per-layer segmentation losses, vision-language
//! regularisation and the weighted total.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::tensor::{log_sum_exp, Matrix};

/// Predictions are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` inside the log.
pub const BCE_CLAMP: f64 = 1e-7;
pub const DEFAULT_DICE_SMOOTH: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_cls: f64,
    pub lambda_bce: f64,
    pub lambda_dice: f64,
    /// Weight of the segmentation term in the total objective.
    pub lambda_1: f64,
    /// Weight of the vision-language regulariser.
    pub lambda_2: f64,
    /// Weight of the scene classification loss.
    pub lambda_3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_cls: 2.0, lambda_bce: 5.0, lambda_dice: 5.0, lambda_1: 1.0, lambda_2: 1.0, lambda_3: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_cls, self.lambda_bce, self.lambda_dice, self.lambda_1, self.lambda_2, self.lambda_3];
        if all.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Parameter { name: "loss weights", reason: "must be finite and nonnegative".into() });
        }
        Ok(())
    }
}

fn check_pair(pred: &[f64], target: &[bool]) -> Result<()> {
    if pred.len() != target.len() {
        return Err(shape(format!("prediction has {} pixels, target {}", pred.len(), target.len())));
    }
    if pred.is_empty() {
        return Err(shape("empty mask"));
    }
    Ok(())
}

/// Mean binary cross-entropy over pixels.
pub fn bce_loss(pred: &[f64], target: &[bool]) -> Result<f64> {
    check_pair(pred, target)?;
    let total: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if *t {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / pred.len() as f64)
}

/// `∂ bce_loss / ∂ pred_i`; zero where the clamp is active.
pub fn bce_gradient(pred: &[f64], target: &[bool]) -> Result<Vec<f64>> {
    check_pair(pred, target)?;
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            if *p < BCE_CLAMP || *p > 1.0 - BCE_CLAMP {
                0.0
            } else if *t {
                -1.0 / (p * n)
            } else {
                1.0 / ((1.0 - p) * n)
            }
        })
        .collect())
}

/// `1 − (2 Σ p·t + s) / (Σ p + Σ t + s)`.
pub fn dice_loss(pred: &[f64], target: &[bool], smooth: f64) -> Result<f64> {
    check_pair(pred, target)?;
    if !(smooth > 0.0) {
        return Err(Error::Parameter { name: "smooth", reason: format!("must be positive, got {smooth}") });
    }
    let inter: f64 = pred.iter().zip(target).filter(|(_, t)| **t).map(|(p, _)| p).sum();
    let pred_sum: f64 = pred.iter().sum();
    let target_sum = target.iter().filter(|t| **t).count() as f64;
    Ok(1.0 - (2.0 * inter + smooth) / (pred_sum + target_sum + smooth))
}

/// Predictions of one decoder layer: class logits and a soft mask per query.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerPrediction {
    /// `queries × classes`.
    pub class_logits: Matrix,
    pub masks: Vec<Vec<f64>>,
}

/// Matched ground truth for the queries of a layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SegTarget {
    pub class_labels: Vec<usize>,
    pub masks: Vec<Vec<bool>>,
}

/// Unweighted loss terms of one layer, each averaged over queries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerLosses {
    pub cls: f64,
    pub bce: f64,
    pub dice: f64,
}

pub fn layer_losses(pred: &LayerPrediction, target: &SegTarget) -> Result<LayerLosses> {
    let q = pred.class_logits.rows();
    if q == 0 || pred.masks.len() != q || target.class_labels.len() != q || target.masks.len() != q {
        return Err(shape(format!(
            "{q} query logits, {} masks, {} labels, {} target masks",
            pred.masks.len(),
            target.class_labels.len(),
            target.masks.len()
        )));
    }
    let mut out = LayerLosses { cls: 0.0, bce: 0.0, dice: 0.0 };
    for (i, logits) in pred.class_logits.row_iter().enumerate() {
        let label = target.class_labels[i];
        if label >= logits.len() {
            return Err(Error::Data(format!("class label {label} out of range")));
        }
        out.cls += log_sum_exp(logits.iter().copied()) - logits[label];
        out.bce += bce_loss(&pred.masks[i], &target.masks[i])?;
        out.dice += dice_loss(&pred.masks[i], &target.masks[i], DEFAULT_DICE_SMOOTH)?;
    }
    let n = q as f64;
    Ok(LayerLosses { cls: out.cls / n, bce: out.bce / n, dice: out.dice / n })
}

/// `Σ_l λ_cls·CE_l + λ_bce·BCE_l + λ_dice·Dice_l` over decoder layers.
pub fn seg_loss(layers: &[LayerPrediction], targets: &[SegTarget], weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    if layers.is_empty() {
        return Err(shape("segmentation loss needs at least one layer"));
    }
    if layers.len() != targets.len() {
        return Err(shape(format!("{} layers but {} targets", layers.len(), targets.len())));
    }
    layers.iter().zip(targets).try_fold(0.0, |acc, (p, t)| {
        let l = layer_losses(p, t)?;
        Ok(acc + weights.lambda_cls * l.cls + weights.lambda_bce * l.bce + weights.lambda_dice * l.dice)
    })
}

fn log_softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row.iter().copied());
    row.iter().map(|v| v - lse).collect()
}

/// `‖cls − cls_frozen‖² + mean_k CE(softmax(frozen_k), softmax(anchor_k))`.
///
/// Both anchor rows are softmax-normalised before the cross-entropy; the
/// frozen row is the reference distribution.
pub fn vl_regularization(cls: &[f64], cls_frozen: &[f64], anchor: &Matrix, anchor_frozen: &Matrix) -> Result<f64> {
    if cls.len() != cls_frozen.len() {
        return Err(shape("live and frozen CLS embeddings differ in length"));
    }
    if anchor.shape() != anchor_frozen.shape() || anchor.rows() == 0 {
        return Err(shape(format!("anchor {:?} vs frozen {:?}", anchor.shape(), anchor_frozen.shape())));
    }
    let v2v: f64 = cls.iter().zip(cls_frozen).map(|(a, b)| (a - b).powi(2)).sum();
    let mut l2l = 0.0;
    for (live, frozen) in anchor.row_iter().zip(anchor_frozen.row_iter()) {
        let log_q = log_softmax(live);
        let log_p = log_softmax(frozen);
        l2l -= log_p.iter().zip(&log_q).map(|(lp, lq)| lp.exp() * lq).sum::<f64>();
    }
    Ok(v2v + l2l / anchor.rows() as f64)
}

/// `λ₁·seg + λ₂·reg + λ₃·scene_cls`.
pub fn total_loss(seg: f64, reg: f64, scene_cls: f64, weights: &LossWeights) -> Result<f64> {
    if ![seg, reg, scene_cls].iter().all(|v| v.is_finite()) {
        return Err(Error::Domain("loss components must be finite".into()));
    }
    Ok(weights.lambda_1 * seg + weights.lambda_2 * reg + weights.lambda_3 * scene_cls)
}
