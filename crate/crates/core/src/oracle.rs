//! Independent reference computations used to cross-check the solvers.
//!
//! Nothing here shares code with the production paths it verifies: the
//! integer-coupling search does not use the assignment solver, the hull test
//! does not use barycentric projection, and the confusion counter does not
//! use the metrics module.

use crate::error::{shape, Error, Result};
use crate::tensor::{dot, Matrix};

/// Minimum of `Σ C_ij x_ij` over all nonnegative integer matrices `x` with
/// row sums `a` and column sums `b`, by exhaustive depth-first search.
///
/// `reverse` walks cells and candidate values in the opposite order; both
/// orders must agree. Only meant for tiny instances.
pub fn min_cost_integer_coupling(a: &[u32], b: &[u32], cost: &Matrix, reverse: bool) -> Result<f64> {
    if cost.shape() != (a.len(), b.len()) {
        return Err(shape("marginal lengths do not match cost"));
    }
    if a.iter().sum::<u32>() != b.iter().sum::<u32>() {
        return Err(Error::Domain("integer marginals have different totals".into()));
    }
    let (n, m) = cost.shape();
    let mut cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    if reverse {
        cells.reverse();
    }
    let plan = SearchPlan {
        last_in_row: cells.iter().enumerate().map(|(p, &(i, _))| cells[p + 1..].iter().all(|c| c.0 != i)).collect(),
        last_in_col: cells.iter().enumerate().map(|(p, &(_, j))| cells[p + 1..].iter().all(|c| c.1 != j)).collect(),
        prune_on_cost: cost.as_slice().iter().all(|c| *c >= 0.0),
        cells,
        reverse,
    };
    let mut rows = a.to_vec();
    let mut cols = b.to_vec();
    let mut best = f64::INFINITY;
    search(&plan, 0, cost, &mut rows, &mut cols, 0.0, &mut best);
    Ok(best)
}

struct SearchPlan {
    cells: Vec<(usize, usize)>,
    /// Whether the cell at each position is the last one visited in its row
    /// (column); its value is then forced by the remaining marginal.
    last_in_row: Vec<bool>,
    last_in_col: Vec<bool>,
    /// With nonnegative costs a partial sum already above the best total
    /// cannot improve on it.
    prune_on_cost: bool,
    reverse: bool,
}

fn search(plan: &SearchPlan, pos: usize, cost: &Matrix, rows: &mut [u32], cols: &mut [u32], acc: f64, best: &mut f64) {
    if plan.prune_on_cost && acc >= *best {
        return;
    }
    if pos == plan.cells.len() {
        if rows.iter().all(|r| *r == 0) && cols.iter().all(|c| *c == 0) {
            *best = acc;
        }
        return;
    }
    let (i, j) = plan.cells[pos];
    let cap = rows[i].min(cols[j]);
    let (lo, hi) = match (plan.last_in_row[pos], plan.last_in_col[pos]) {
        (true, true) if rows[i] != cols[j] => return,
        (true, _) => (rows[i], rows[i]),
        (_, true) => (cols[j], cols[j]),
        _ => (0, cap),
    };
    if hi > cap {
        return;
    }
    let values: Box<dyn Iterator<Item = u32>> =
        if plan.reverse { Box::new((lo..=hi).rev()) } else { Box::new(lo..=hi) };
    for x in values {
        rows[i] -= x;
        cols[j] -= x;
        search(plan, pos + 1, cost, rows, cols, acc + cost.get(i, j) * x as f64, best);
        rows[i] += x;
        cols[j] += x;
    }
}

/// Euclidean distance from `point` to the convex hull of the rows of
/// `vertices`, by least squares over every face (at most 6 vertices).
pub fn convex_hull_residual(point: &[f64], vertices: &Matrix) -> Result<f64> {
    let k = vertices.rows();
    if k == 0 || k > 6 {
        return Err(Error::Capacity(format!("hull oracle supports 1..=6 vertices, got {k}")));
    }
    if vertices.cols() != point.len() {
        return Err(shape("point and vertex dimensions differ"));
    }
    let mut best = f64::INFINITY;
    for subset in 1u32..(1 << k) {
        let idx: Vec<usize> = (0..k).filter(|b| subset & (1 << b) != 0).collect();
        if let Some(weights) = affine_least_squares(point, vertices, &idx) {
            if weights.iter().all(|w| *w >= -1e-10) {
                let mut combo = vec![0.0; point.len()];
                for (w, &v) in weights.iter().zip(&idx) {
                    for (c, x) in combo.iter_mut().zip(vertices.row(v)) {
                        *c += w * x;
                    }
                }
                let r: f64 = combo.iter().zip(point).map(|(c, p)| (c - p).powi(2)).sum::<f64>().sqrt();
                best = best.min(r);
            }
        }
    }
    Ok(best)
}

/// Affine weights (summing to one) of the least-squares projection of
/// `point` onto the affine hull of the selected vertices. `None` when the
/// selected vertices are affinely dependent.
fn affine_least_squares(point: &[f64], vertices: &Matrix, idx: &[usize]) -> Option<Vec<f64>> {
    let origin = vertices.row(idx[0]);
    let dirs: Vec<Vec<f64>> =
        idx[1..].iter().map(|&v| vertices.row(v).iter().zip(origin).map(|(a, b)| a - b).collect()).collect();
    let target: Vec<f64> = point.iter().zip(origin).map(|(a, b)| a - b).collect();
    let d = dirs.len();
    let mut aug = vec![vec![0.0; d + 1]; d];
    for r in 0..d {
        for c in 0..d {
            aug[r][c] = dot(&dirs[r], &dirs[c]);
        }
        aug[r][d] = dot(&dirs[r], &target);
    }
    let scale = aug.iter().map(|r| r[..d].iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max);
    for col in 0..d {
        let pivot = (col..d).max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))?;
        if aug[pivot][col].abs() <= 1e-12 * scale.max(1e-300) {
            return None;
        }
        aug.swap(col, pivot);
        let pivot_row = aug[col].clone();
        for (r, row) in aug.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot_row[col];
                for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let t: Vec<f64> = (0..d).map(|r| aug[r][d] / aug[r][r]).collect();
    let mut w = Vec::with_capacity(d + 1);
    w.push(1.0 - t.iter().sum::<f64>());
    w.extend(t);
    Some(w)
}

/// 2×2 confusion counts `[[tn, fp], [fn, tp]]` (rows = truth) by a single
/// pass with explicit branching.
pub fn count_confusion(pred: &[bool], target: &[bool]) -> Result<[[u64; 2]; 2]> {
    if pred.len() != target.len() {
        return Err(shape("mask lengths differ"));
    }
    let mut counts = [[0u64; 2]; 2];
    for i in 0..pred.len() {
        let t = if target[i] { 1 } else { 0 };
        let p = if pred[i] { 1 } else { 0 };
        counts[t][p] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hull_inside_and_outside() {
        let tri = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(convex_hull_residual(&[0.2, 0.3], &tri).unwrap() < 1e-12);
        let r = convex_hull_residual(&[1.0, 1.0], &tri).unwrap();
        assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        let r = convex_hull_residual(&[-1.0, -1.0], &tri).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn hull_in_higher_dimension() {
        let seg = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]).unwrap();
        assert!(convex_hull_residual(&[0.5, 0.5, 0.0, 0.0], &seg).unwrap() < 1e-12);
        assert!((convex_hull_residual(&[0.5, 0.5, 1.0, 0.0], &seg).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integer_coupling_small_case() {
        let c = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(min_cost_integer_coupling(&[2, 2], &[3, 1], &c, false).unwrap(), 1.0);
        assert_eq!(min_cost_integer_coupling(&[2, 2], &[3, 1], &c, true).unwrap(), 1.0);
    }

    #[test]
    fn confusion_counts() {
        let c = count_confusion(&[true, false, false, false], &[true, true, false, false]).unwrap();
        assert_eq!(c, [[2, 0], [1, 1]]);
    }
}
