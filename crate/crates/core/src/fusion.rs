//! Two-branch optimal-transport fusion and the cosine mask head.
//!
//! Image and surface-normal feature maps are each treated as a uniform
//! distribution over the pixel grid and transported onto the scene anchors,
//! whose masses come from the max-pooled pre-segmentation probabilities of
//! the two branches. Both branches are projected barycentrically onto the
//! anchors and blended with weight `λ`.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::ot::{barycentric_project, build_cost_matrix, sinkhorn, ProjectionMode, SinkhornConfig, TransportPlan};
use crate::tensor::{dot, norm, DiscreteDistribution, Matrix};

/// Fusion weight used when none is configured.
pub const DEFAULT_LAMBDA: f64 = 0.5;
/// Guard added to the cosine denominator of the mask head.
pub const DEFAULT_EPS_NORM: f64 = 1e-8;
pub const MASK_THRESHOLD: f64 = 0.5;
const PROB_SUM_TOLERANCE: f64 = 1e-6;

/// Dense `height × width × channels` tensor, row-major and channel-last.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(shape(format!("feature data has {} values, expected {height}x{width}x{channels}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature map has non-finite entries".into()));
        }
        Ok(Self { height, width, channels, data })
    }

    /// Reshapes an `(height·width) × channels` matrix.
    pub fn from_matrix(height: usize, width: usize, m: Matrix) -> Result<Self> {
        if m.rows() != height * width {
            return Err(shape(format!("{} rows cannot fill a {height}x{width} grid", m.rows())));
        }
        let channels = m.cols();
        Self::new(height, width, channels, m.into_vec())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Pixel vectors in `y·width + x` order.
    pub fn pixel_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.channels.max(1))
    }

    /// `(height·width) × channels` view as an owned matrix.
    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_raw(self.pixels(), self.channels, self.data.clone())
    }
}

/// Per-pixel class probabilities, stored channel-last like [`FeatureMap`].
#[derive(Clone, Debug, PartialEq)]
pub struct PreSegProbs {
    height: usize,
    width: usize,
    classes: usize,
    data: Vec<f64>,
}

impl PreSegProbs {
    pub fn new(height: usize, width: usize, classes: usize, data: Vec<f64>) -> Result<Self> {
        if classes == 0 || data.len() != height * width * classes {
            return Err(shape(format!(
                "probability data has {} values, expected {height}x{width}x{classes}",
                data.len()
            )));
        }
        if data.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Data("probabilities must lie in [0, 1]".into()));
        }
        for (i, px) in data.chunks_exact(classes).enumerate() {
            let s: f64 = px.iter().sum();
            if (s - 1.0).abs() > PROB_SUM_TOLERANCE {
                return Err(Error::Data(format!("pixel {i} class probabilities sum to {s}")));
            }
        }
        Ok(Self { height, width, classes, data })
    }

    /// One-hot probabilities from per-pixel labels.
    pub fn from_labels(height: usize, width: usize, classes: usize, labels: &[usize]) -> Result<Self> {
        if labels.len() != height * width {
            return Err(shape("label count does not match grid"));
        }
        let mut data = vec![0.0; labels.len() * classes];
        for (i, &l) in labels.iter().enumerate() {
            if l >= classes {
                return Err(Error::Data(format!("label {l} out of range")));
            }
            data[i * classes + l] = 1.0;
        }
        Self::new(height, width, classes, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn prob(&self, pixel: usize, class: usize) -> f64 {
        self.data[pixel * self.classes + class]
    }

    /// Spatial mean of the class-`k` map.
    pub fn class_mean(&self, k: usize) -> f64 {
        let n = self.height * self.width;
        (0..n).map(|i| self.prob(i, k)).sum::<f64>() / n as f64
    }
}

/// How the two branches' probability maps reduce to per-class masses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPooling {
    /// Spatial mean per branch, then the max of the two means.
    #[default]
    AggregateThenMax,
    /// Per-pixel max of the two branches, then the spatial mean.
    PixelMaxThenAggregate,
}

/// Uniform mass `1/N` on the `N = H′·W′` pixels, plus the flattened rows.
pub fn build_source(features: &FeatureMap) -> Result<(DiscreteDistribution, Matrix)> {
    Ok((DiscreteDistribution::uniform(features.pixels())?, features.to_matrix()))
}

/// Target masses `m_k ∝ max(agg_I^k, agg_N^k)` over the `K` anchors.
pub fn build_target(
    probs_img: &PreSegProbs,
    probs_normal: &PreSegProbs,
    pooling: TargetPooling,
) -> Result<DiscreteDistribution> {
    if probs_img.classes != probs_normal.classes {
        return Err(shape(format!("branches have {} and {} classes", probs_img.classes, probs_normal.classes)));
    }
    if (probs_img.height, probs_img.width) != (probs_normal.height, probs_normal.width) {
        return Err(shape("branch probability maps differ in size"));
    }
    let k = probs_img.classes;
    let pooled: Vec<f64> = match pooling {
        TargetPooling::AggregateThenMax => {
            (0..k).map(|c| probs_img.class_mean(c).max(probs_normal.class_mean(c))).collect()
        }
        TargetPooling::PixelMaxThenAggregate => {
            let n = probs_img.height * probs_img.width;
            (0..k)
                .map(|c| (0..n).map(|i| probs_img.prob(i, c).max(probs_normal.prob(i, c))).sum::<f64>() / n as f64)
                .collect()
        }
    };
    let total: f64 = pooled.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    DiscreteDistribution::from_weights(&pooled)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Weight of the image branch.
    pub lambda: f64,
    pub sinkhorn: SinkhornConfig,
    pub projection: ProjectionMode,
    pub pooling: TargetPooling,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            sinkhorn: SinkhornConfig::default(),
            projection: ProjectionMode::default(),
            pooling: TargetPooling::default(),
        }
    }
}

/// Everything one fusion pass produces.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionOutput {
    pub fused: FeatureMap,
    pub projected_image: Matrix,
    pub projected_normal: Matrix,
    pub target: DiscreteDistribution,
    pub image_plan: TransportPlan,
    pub normal_plan: TransportPlan,
}

fn transport_branch(
    features: &FeatureMap,
    target: &DiscreteDistribution,
    anchors: &Matrix,
    cfg: &FusionConfig,
) -> Result<(TransportPlan, Matrix)> {
    let (mu, rows) = build_source(features)?;
    let anchor_rows: Vec<&[f64]> = anchors.row_iter().collect();
    let feature_rows: Vec<&[f64]> = rows.row_iter().collect();
    let cost = build_cost_matrix(&feature_rows, &anchor_rows)?;
    let plan = sinkhorn(&mu, target, &cost, &cfg.sinkhorn)?;
    let projected = barycentric_project(&plan, anchors, cfg.projection)?.features;
    Ok((plan, projected))
}

/// `F_fusion = λ·F̃_I + (1 − λ)·F̃_N`, where each `F̃` is a branch
/// transported onto `anchors` and projected back to pixel space.
pub fn fuse(
    features_img: &FeatureMap,
    features_normal: &FeatureMap,
    probs_img: &PreSegProbs,
    probs_normal: &PreSegProbs,
    anchors: &Matrix,
    cfg: &FusionConfig,
) -> Result<FusionOutput> {
    if !(0.0..=1.0).contains(&cfg.lambda) {
        return Err(Error::Parameter { name: "lambda", reason: format!("must lie in [0, 1], got {}", cfg.lambda) });
    }
    let grid = (features_img.height, features_img.width);
    if grid != (features_normal.height, features_normal.width) || grid != (probs_img.height, probs_img.width) {
        return Err(shape("feature maps and probability maps must share one grid"));
    }
    if features_img.channels != anchors.cols() || features_normal.channels != anchors.cols() {
        return Err(shape(format!(
            "feature channels ({}, {}) differ from anchor dimension {}",
            features_img.channels,
            features_normal.channels,
            anchors.cols()
        )));
    }
    if probs_img.classes != anchors.rows() {
        return Err(shape(format!("{} probability classes for {} anchors", probs_img.classes, anchors.rows())));
    }
    let target = build_target(probs_img, probs_normal, cfg.pooling)?;
    let (img, normal) = rayon::join(
        || transport_branch(features_img, &target, anchors, cfg),
        || transport_branch(features_normal, &target, anchors, cfg),
    );
    let (image_plan, projected_image) = img?;
    let (normal_plan, projected_normal) = normal?;

    let (w_img, w_normal) = (cfg.lambda, 1.0 - cfg.lambda);
    let data: Vec<f64> = projected_image
        .as_slice()
        .iter()
        .zip(projected_normal.as_slice())
        .map(|(a, b)| w_img * a + w_normal * b)
        .collect();
    let fused = FeatureMap::new(grid.0, grid.1, anchors.cols(), data)?;
    Ok(FusionOutput { fused, projected_image, projected_normal, target, image_plan, normal_plan })
}

/// `Q⁽⁰⁾ = T̄_S + Q_pos`.
pub fn init_queries(anchors: &Matrix, positional: &Matrix) -> Result<Matrix> {
    anchors.add(positional)
}

/// Hook for replacing queries before the mask head (e.g. by external
/// decoder layers).
pub trait QueryRefiner {
    fn refine(&self, queries: Matrix, mask_features: &FeatureMap) -> Result<Matrix>;
}

/// Passes queries through untouched.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRefiner;

impl QueryRefiner for IdentityRefiner {
    fn refine(&self, queries: Matrix, _: &FeatureMap) -> Result<Matrix> {
        Ok(queries)
    }
}

/// Soft and thresholded mask for one class.
#[derive(Clone, Debug, PartialEq)]
pub struct TraversabilityMask {
    pub height: usize,
    pub width: usize,
    /// Sigmoid outputs in `(0, 1)`, row-major.
    pub soft: Vec<f64>,
    /// `soft ≥ 0.5`.
    pub binary: Vec<bool>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per class `k` and pixel `i`: `σ(Q_k·F_i / (‖Q_k‖‖F_i‖ + ε))`.
pub fn predict_mask(queries: &Matrix, mask_features: &FeatureMap, eps_norm: f64) -> Result<Vec<TraversabilityMask>> {
    if queries.cols() != mask_features.channels {
        return Err(shape(format!(
            "queries have {} channels, mask features {}",
            queries.cols(),
            mask_features.channels
        )));
    }
    if !(eps_norm > 0.0) {
        return Err(Error::Parameter { name: "eps_norm", reason: format!("must be positive, got {eps_norm}") });
    }
    let pixel_norms: Vec<f64> = mask_features.pixel_iter().map(norm).collect();
    let masks = queries
        .row_iter()
        .map(|q| {
            let qn = norm(q);
            let soft: Vec<f64> = mask_features
                .pixel_iter()
                .zip(&pixel_norms)
                .map(|(f, fnorm)| sigmoid(dot(q, f) / (qn * fnorm + eps_norm)))
                .collect();
            let binary = soft.iter().map(|s| *s >= MASK_THRESHOLD).collect();
            TraversabilityMask { height: mask_features.height, width: mask_features.width, soft, binary }
        })
        .collect();
    Ok(masks)
}

/// Runs `refiner` on the initial queries, then the mask head.
pub fn refine_and_predict<R: QueryRefiner + ?Sized>(
    refiner: &R,
    queries: Matrix,
    mask_features: &FeatureMap,
    eps_norm: f64,
) -> Result<Vec<TraversabilityMask>> {
    let refined = refiner.refine(queries, mask_features)?;
    predict_mask(&refined, mask_features, eps_norm)
}

/// Metric depth on a pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width || height == 0 || width == 0 {
            return Err(shape(format!("depth data has {} values for {height}x{width}", data.len())));
        }
        Ok(Self { height, width, data })
    }

    fn at(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Derivative along one axis: central in the interior, one-sided at the
/// borders, zero when the axis has a single sample.
fn axis_derivative(len: usize, i: usize, sample: impl Fn(usize) -> f64) -> f64 {
    if len < 2 {
        0.0
    } else if i == 0 {
        sample(1) - sample(0)
    } else if i == len - 1 {
        sample(len - 1) - sample(len - 2)
    } else {
        0.5 * (sample(i + 1) - sample(i - 1))
    }
}

/// Unit surface normals `∝ (−fx·∂z/∂u, −fy·∂z/∂v, 1)` from finite
/// differences of depth over pixel coordinates `(u, v)`.
///
/// Lateral coordinates are measured at unit depth, so a plane whose depth
/// is linear in pixel coordinates gets one constant normal everywhere.
pub fn depth_to_normal(depth: &DepthMap, fx: f64, fy: f64) -> Result<FeatureMap> {
    if !(fx > 0.0 && fy > 0.0) {
        return Err(Error::Parameter { name: "focal length", reason: format!("fx = {fx}, fy = {fy}") });
    }
    if let Some(bad) = depth.data.iter().find(|z| !(**z > 0.0) || !z.is_finite()) {
        return Err(Error::Data(format!("depth {bad} is not positive")));
    }
    let mut data = Vec::with_capacity(depth.height * depth.width * 3);
    for y in 0..depth.height {
        for x in 0..depth.width {
            let dz_du = axis_derivative(depth.width, x, |u| depth.at(y, u));
            let dz_dv = axis_derivative(depth.height, y, |v| depth.at(v, x));
            let n = [-fx * dz_du, -fy * dz_dv, 1.0];
            let len = norm(&n);
            data.extend(n.iter().map(|c| c / len));
        }
    }
    FeatureMap::new(depth.height, depth.width, 3, data)
}
