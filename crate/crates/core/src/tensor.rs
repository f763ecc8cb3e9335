//! Dense primitives shared by every other module: row-major matrices,
//! probability vectors on a finite support, and the small set of
//! elementary maps (tempered softmax, cosine distance, tensor product)
//! the fusion pipeline is built from.
//!
//! All arithmetic is `f64`. Embedding vectors are plain `&[f64]` slices.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};

/// Tolerance on the total mass of a [`DiscreteDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Nonnegative mass vector over a finite support, summing to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct DiscreteDistribution {
    mass: Vec<f64>,
}

impl DiscreteDistribution {
    /// Validates `mass` (nonempty, finite, nonnegative, total within
    /// [`MASS_TOLERANCE`] of one) without renormalising it.
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::Domain("distribution has empty support".into()));
        }
        if let Some(bad) = mass.iter().find(|m| !m.is_finite() || **m < 0.0) {
            return Err(Error::Domain(format!("mass entry {bad} is not a finite nonnegative real")));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::Domain(format!("masses sum to {total}, expected 1")));
        }
        Ok(Self { mass })
    }

    /// Normalises nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Domain("distribution has empty support".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("weights sum to zero".into()));
        }
        Ok(Self { mass: weights.iter().map(|w| w / total).collect() })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("distribution has empty support".into()));
        }
        Ok(Self { mass: vec![1.0 / n as f64; n] })
    }

    /// Point mass at `index` on a support of size `n`.
    pub fn one_hot(n: usize, index: usize) -> Result<Self> {
        if index >= n {
            return Err(Error::Domain(format!("index {index} outside support of size {n}")));
        }
        let mut mass = vec![0.0; n];
        mass[index] = 1.0;
        Ok(Self { mass })
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mass
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.mass
    }

    /// Index of the largest mass; ties resolve to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, m) in self.mass.iter().enumerate() {
            if *m > self.mass[best] {
                best = i;
            }
        }
        best
    }
}

impl std::ops::Index<usize> for DiscreteDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.mass[i]
    }
}

impl TryFrom<Vec<f64>> for DiscreteDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<DiscreteDistribution> for Vec<f64> {
    fn from(d: DiscreteDistribution) -> Self {
        d.mass
    }
}

/// Row-major dense matrix with finite entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape(format!("matrix data has {} entries, expected {rows}x{cols}", data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Stacks equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(shape(format!("row {i} has length {}, expected {cols}", r.len())));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.row_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (s, v) in sums.iter_mut().zip(r) {
                *s += v;
            }
        }
        sums
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    /// Frobenius inner product ⟨self, other⟩.
    pub fn frobenius_dot(&self, other: &Matrix) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(shape(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(dot(&self.data, &other.data))
    }

    /// Matrix product `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(shape(format!("cannot multiply {}x{} by {}x{}", self.rows, self.cols, rhs.rows, rhs.cols)));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for r in 0..self.rows {
            let dst = &mut out[r * rhs.cols..(r + 1) * rhs.cols];
            for (k, a) in self.row(r).iter().enumerate() {
                for (d, b) in dst.iter_mut().zip(rhs.row(k)) {
                    *d += a * b;
                }
            }
        }
        Ok(Matrix::from_raw(self.rows, rhs.cols, out))
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(shape(format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix::from_raw(self.rows, self.cols, data))
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `log Σ exp(x_i)`, shifted by the maximum. Returns `-inf` when every
/// entry is `-inf` (or the slice is empty).
pub fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `exp(l_i/τ) / Σ_j exp(l_j/τ)` with max-subtraction.
pub fn softmax_with_temperature(logits: &[f64], tau: f64) -> Result<DiscreteDistribution> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Parameter { name: "tau", reason: format!("must be positive, got {tau}") });
    }
    if logits.is_empty() {
        return Err(Error::Domain("softmax of empty logits".into()));
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Domain("logits must be finite".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| ((l - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(DiscreteDistribution { mass: exps.into_iter().map(|e| e / total).collect() })
}

/// Joint over the composed scene index `(w, d, r)` flattened weather-major:
/// `index = (w·|D| + d)·|R| + r`.
pub fn tensor_product_joint(
    weather: &DiscreteDistribution,
    time_of_day: &DiscreteDistribution,
    road: &DiscreteDistribution,
) -> Result<DiscreteDistribution> {
    if weather.is_empty() || time_of_day.is_empty() || road.is_empty() {
        return Err(Error::Domain("zero-length marginal".into()));
    }
    let mut mass = Vec::with_capacity(weather.len() * time_of_day.len() * road.len());
    for pw in weather.as_slice() {
        for pd in time_of_day.as_slice() {
            let pwd = pw * pd;
            for pr in road.as_slice() {
                mass.push(pwd * pr);
            }
        }
    }
    Ok(DiscreteDistribution { mass })
}

/// `1 − a·b / (‖a‖‖b‖)`, in `[0, 2]`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape(format!("vector lengths {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateVector);
    }
    Ok((1.0 - dot(a, b) / (na * nb)).clamp(0.0, 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_equal_logits_is_uniform() {
        let p = softmax_with_temperature(&[1.0, 1.0, 1.0], 0.5).unwrap();
        for v in p.as_slice() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_log_three() {
        let p = softmax_with_temperature(&[0.0, 3f64.ln()], 1.0).unwrap();
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
    }

    #[test]
    fn softmax_matches_high_precision_values() {
        // Reference computed at 40 significant digits with mpmath.
        let expected = [
            0.999_954_296_256_844_623_546_263_9,
            0.000_045_397_854_815_755_714_796_809_18,
            0.000_000_305_888_339_620_738_939_276_867_8,
        ];
        let p = softmax_with_temperature(&[2.0, 1.0, 0.5], 0.1).unwrap();
        for (got, want) in p.as_slice().iter().zip(expected) {
            assert!((got - want).abs() <= 1e-15 * want.max(1e-300) + 1e-18, "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(softmax_with_temperature(&[1.0], 0.0), Err(Error::Parameter { .. })));
        assert!(matches!(softmax_with_temperature(&[1.0], -1.0), Err(Error::Parameter { .. })));
        assert!(matches!(softmax_with_temperature(&[], 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let p = softmax_with_temperature(&[1000.0, 0.0], 0.01).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn joint_forced_product() {
        let w = DiscreteDistribution::new(vec![0.7, 0.3]).unwrap();
        let d = DiscreteDistribution::new(vec![0.6, 0.4]).unwrap();
        let r = DiscreteDistribution::new(vec![1.0]).unwrap();
        let j = tensor_product_joint(&w, &d, &r).unwrap();
        for (got, want) in j.as_slice().iter().zip([0.42, 0.28, 0.18, 0.12]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn joint_of_one_hots_is_one_hot_at_composed_index() {
        let w = DiscreteDistribution::one_hot(3, 2).unwrap();
        let d = DiscreteDistribution::one_hot(2, 1).unwrap();
        let r = DiscreteDistribution::one_hot(4, 3).unwrap();
        let j = tensor_product_joint(&w, &d, &r).unwrap();
        let idx = (2 * 2 + 1) * 4 + 3;
        assert_eq!(j[idx], 1.0);
        assert_eq!(j.as_slice().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn cosine_distance_basic_cases() {
        assert_eq!(cosine_distance(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(cosine_distance(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(cosine_distance(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::DegenerateVector)));
        assert!(matches!(cosine_distance(&[1.0], &[1.0, 0.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(DiscreteDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![0.25; 4]).is_ok());
        let d: DiscreteDistribution = serde_json::from_str("[0.5, 0.5]").unwrap();
        assert_eq!(d.len(), 2);
        assert!(serde_json::from_str::<DiscreteDistribution>("[0.5, 0.6]").is_err());
    }

    #[test]
    fn matmul_and_transpose() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap();
        let b = Matrix::from_rows(&[[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 2.0, 4.0, 3.0, 4.0, 10.0, 5.0, 6.0, 16.0]);
        assert_eq!(a.transpose().as_slice(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
        assert!(b.matmul(&b).is_err());
    }

    fn dist(n: std::ops::Range<usize>) -> impl Strategy<Value = DiscreteDistribution> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|w| DiscreteDistribution::from_weights(&w).unwrap())
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            logits in prop::collection::vec(-20.0f64..20.0, 1..12),
            shift in -50.0f64..50.0,
            tau in 0.05f64..5.0,
        ) {
            let p = softmax_with_temperature(&logits, tau).unwrap();
            prop_assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
            let q = softmax_with_temperature(&shifted, tau).unwrap();
            for (a, b) in p.as_slice().iter().zip(q.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn joint_marginalizes_back(w in dist(1..5), d in dist(1..5), r in dist(1..5)) {
            let j = tensor_product_joint(&w, &d, &r).unwrap();
            let (nw, nd, nr) = (w.len(), d.len(), r.len());
            prop_assert!((j.as_slice().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for a in 0..nw {
                let s: f64 = (0..nd).flat_map(|b| (0..nr).map(move |c| (b, c)))
                    .map(|(b, c)| j[(a * nd + b) * nr + c]).sum();
                prop_assert!((s - w[a]).abs() <= 1e-12);
            }
            for b in 0..nd {
                let s: f64 = (0..nw).flat_map(|a| (0..nr).map(move |c| (a, c)))
                    .map(|(a, c)| j[(a * nd + b) * nr + c]).sum();
                prop_assert!((s - d[b]).abs() <= 1e-12);
            }
            for c in 0..nr {
                let s: f64 = (0..nw).flat_map(|a| (0..nd).map(move |b| (a, b)))
                    .map(|(a, b)| j[(a * nd + b) * nr + c]).sum();
                prop_assert!((s - r[c]).abs() <= 1e-12);
            }
        }

        #[test]
        fn cosine_distance_is_scale_invariant(
            a in prop::collection::vec(-5.0f64..5.0, 4),
            b in prop::collection::vec(-5.0f64..5.0, 4),
            s in 0.01f64..100.0,
            t in 0.01f64..100.0,
        ) {
            prop_assume!(norm(&a) > 1e-3 && norm(&b) > 1e-3);
            let base = cosine_distance(&a, &b).unwrap();
            let sa: Vec<f64> = a.iter().map(|x| x * s).collect();
            let tb: Vec<f64> = b.iter().map(|x| x * t).collect();
            let scaled = cosine_distance(&sa, &tb).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-12);
            prop_assert!((0.0..=2.0).contains(&base));
        }
    }
}
