//! Scene-conditioned optimal-transport fusion for traversability
//! segmentation.
//!
//! The crate covers the numerical core: discrete distributions and dense
//! matrices, an entropic OT solver with an exact small-instance reference,
//! scene-anchor synthesis from attribute posteriors, the two-branch fusion
//! pipeline with mask prediction, training losses, split evaluation metrics
//! and the on-disk formats shared with the command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod fusion;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod oracle;
pub mod ot;
pub mod scene;
pub mod tensor;

pub use error::{Error, Result};
pub use fusion::{
    depth_to_normal, fuse, predict_mask, refine_and_predict, DepthMap, FeatureMap, FusionConfig, FusionOutput,
    IdentityRefiner, PreSegProbs, QueryRefiner, TargetPooling, TraversabilityMask,
};
pub use metrics::{split_evaluate, ConfusionMatrix, EvalReport, EvalSample, SegmentationMetrics};
pub use ot::{sinkhorn, CostMatrix, SinkhornConfig, TransportPlan};
pub use scene::{
    infer_scene_posterior, synthesize_anchor, AttributeSpace, PrototypeTable, SceneCombination, SceneHeads,
    ScenePosterior,
};
pub use tensor::{DiscreteDistribution, Matrix};
