use crate::error::{shape, Error, Result};
use crate::tensor::{cosine_distance, Matrix};

/// Upper end of the cosine-distance range; also the cost assigned to any
/// pairing that involves a zero-norm vector.
pub const MAX_COST: f64 = 2.0;

/// Source-by-target cost matrix with entries in `[0, 2]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    /// Wraps `m`, rejecting entries outside `[0, MAX_COST]`.
    pub fn new(m: Matrix) -> Result<Self> {
        if m.rows() == 0 || m.cols() == 0 {
            return Err(shape("cost matrix must be nonempty"));
        }
        if let Some((idx, v)) = m.as_slice().iter().enumerate().find(|(_, v)| !(0.0..=MAX_COST).contains(*v)) {
            return Err(Error::Domain(format!(
                "cost entry ({}, {}) = {v} outside [0, {MAX_COST}]",
                idx / m.cols(),
                idx % m.cols()
            )));
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0.get(r, c)
    }
}

/// `C[i][k] = cosine_distance(features[i], anchors[k])`.
///
/// Rows or columns with zero norm get cost [`MAX_COST`] against everything.
pub fn build_cost_matrix<F, A>(features: &[F], anchors: &[A]) -> Result<CostMatrix>
where
    F: AsRef<[f64]>,
    A: AsRef<[f64]>,
{
    if features.is_empty() || anchors.is_empty() {
        return Err(shape("feature and anchor sets must be nonempty"));
    }
    let dim = anchors[0].as_ref().len();
    let lengths = anchors.iter().map(|a| a.as_ref().len()).chain(features.iter().map(|f| f.as_ref().len()));
    for len in lengths {
        if len != dim {
            return Err(shape(format!("embedding dimension {len} differs from {dim}")));
        }
    }
    let mut data = Vec::with_capacity(features.len() * anchors.len());
    for f in features {
        for a in anchors {
            let c = match cosine_distance(f.as_ref(), a.as_ref()) {
                Ok(c) => c,
                Err(Error::DegenerateVector) => MAX_COST,
                Err(e) => return Err(e),
            };
            data.push(c);
        }
    }
    CostMatrix::new(Matrix::new(features.len(), anchors.len(), data)?)
}
