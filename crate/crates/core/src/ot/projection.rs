use serde::{Deserialize, Serialize};

use super::sinkhorn::TransportPlan;
use crate::error::{shape, Result};
use crate::tensor::Matrix;

/// How plan rows weight the anchor rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProjectionMode {
    /// `Σ_k π_ik T_k / Σ_k π_ik`: every output row is a convex combination
    /// of anchors.
    #[default]
    RowNormalized,
    /// `π · T` as written, so outputs carry the source mass.
    Raw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// One projected feature per source point.
    pub features: Matrix,
    /// Source rows with zero transported mass; their output is the zero vector.
    pub empty_rows: Vec<usize>,
}

/// Maps every source point to the plan-weighted combination of anchor rows.
pub fn barycentric_project(plan: &TransportPlan, anchors: &Matrix, mode: ProjectionMode) -> Result<Projection> {
    if plan.cols() != anchors.rows() {
        return Err(shape(format!("plan has {} targets but {} anchor rows were given", plan.cols(), anchors.rows())));
    }
    let dim = anchors.cols();
    let mut data = vec![0.0; plan.rows() * dim];
    let mut empty_rows = Vec::new();
    for (i, weights) in plan.plan.row_iter().enumerate() {
        let mass: f64 = weights.iter().sum();
        if mass <= 0.0 {
            empty_rows.push(i);
            continue;
        }
        let out = &mut data[i * dim..(i + 1) * dim];
        for (w, anchor) in weights.iter().zip(anchors.row_iter()) {
            for (o, t) in out.iter_mut().zip(anchor) {
                *o += w * t;
            }
        }
        if mode == ProjectionMode::RowNormalized {
            out.iter_mut().for_each(|o| *o /= mass);
        }
    }
    Ok(Projection { features: Matrix::from_raw(plan.rows(), dim, data), empty_rows })
}
