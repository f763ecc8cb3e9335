//! Exact discrete transport for desk-scale instances.
//!
//! Rational masses are scaled to integers over a common denominator `D`,
//! each unit of mass becomes one row or column of a `D × D` assignment
//! problem, and that problem is solved to optimality with the
//! shortest-augmenting-path Hungarian method. Unit assignments are then
//! folded back into an integer coupling divided by `D`.

use super::cost::CostMatrix;
use super::sinkhorn::{marginal_violation, TransportPlan};
use crate::error::{shape, Error, Result};
use crate::tensor::{DiscreteDistribution, Matrix};

/// Largest support size the oracle accepts on either side.
pub const MAX_SUPPORT: usize = 8;
/// Largest common denominator of the masses.
pub const MAX_DENOMINATOR: u32 = 64;

const RATIONAL_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ExactSolution {
    pub plan: TransportPlan,
    /// `⟨C, π⟩` of the optimal plan.
    pub cost: f64,
    /// Common denominator the masses were scaled by.
    pub denominator: u32,
}

/// Smallest `D ≤ MAX_DENOMINATOR` that turns every mass of both
/// distributions into an integer, with those integers.
pub fn rationalize(mu: &DiscreteDistribution, nu: &DiscreteDistribution) -> Result<(u32, Vec<u32>, Vec<u32>)> {
    let all: Vec<f64> = mu.as_slice().iter().chain(nu.as_slice()).copied().collect();
    let denom = (1..=MAX_DENOMINATOR)
        .find(|&d| {
            all.iter().all(|m| {
                let scaled = m * d as f64;
                (scaled - scaled.round()).abs() <= RATIONAL_TOLERANCE * d as f64
            })
        })
        .ok_or_else(|| Error::Capacity(format!("masses are not rational with denominator <= {MAX_DENOMINATOR}")))?;
    let scale = |d: &DiscreteDistribution| -> Vec<u32> {
        d.as_slice().iter().map(|m| (m * denom as f64).round() as u32).collect()
    };
    let (a, b) = (scale(mu), scale(nu));
    if a.iter().sum::<u32>() != denom || b.iter().sum::<u32>() != denom {
        return Err(Error::Capacity("scaled masses do not sum to the common denominator".into()));
    }
    Ok((denom, a, b))
}

/// Optimal (unregularised) coupling of `mu` and `nu` under `cost`.
pub fn exact_transport(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &CostMatrix,
) -> Result<ExactSolution> {
    let (n, m) = cost.shape();
    if mu.len() != n || nu.len() != m {
        return Err(shape(format!("marginals of length {} and {} do not match a {n}x{m} cost", mu.len(), nu.len())));
    }
    if n > MAX_SUPPORT || m > MAX_SUPPORT {
        return Err(Error::Capacity(format!("support {n}x{m} exceeds the oracle limit of {MAX_SUPPORT}")));
    }
    let (denom, a, b) = rationalize(mu, nu)?;

    let source_of: Vec<usize> = a.iter().enumerate().flat_map(|(i, &k)| std::iter::repeat_n(i, k as usize)).collect();
    let target_of: Vec<usize> = b.iter().enumerate().flat_map(|(j, &k)| std::iter::repeat_n(j, k as usize)).collect();
    let units = source_of.len();
    let unit_cost: Vec<f64> =
        source_of.iter().flat_map(|&i| target_of.iter().map(move |&j| (i, j))).map(|(i, j)| cost.get(i, j)).collect();
    let assignment = hungarian(units, &unit_cost);

    let mut counts = vec![0u32; n * m];
    for (u, &v) in assignment.iter().enumerate() {
        counts[source_of[u] * m + target_of[v]] += 1;
    }
    let data: Vec<f64> = counts.iter().map(|&c| c as f64 / denom as f64).collect();
    let plan = Matrix::new(n, m, data)?;
    let total = plan.frobenius_dot(cost.matrix())?;
    let violation = marginal_violation(&plan, mu.as_slice(), nu.as_slice());
    Ok(ExactSolution {
        plan: TransportPlan { plan, violation, iterations: 0, converged: true },
        cost: total,
        denominator: denom,
    })
}

/// Minimum-cost perfect matching on a dense `size × size` cost.
/// Returns `assignment[row] = col`.
fn hungarian(size: usize, cost: &[f64]) -> Vec<usize> {
    // 1-based potentials; index 0 is the virtual root column.
    let mut u = vec![0.0; size + 1];
    let mut v = vec![0.0; size + 1];
    let mut matched_row = vec![0usize; size + 1];
    let mut way = vec![0usize; size + 1];
    for row in 1..=size {
        matched_row[0] = row;
        let mut col0 = 0;
        let mut min_slack = vec![f64::INFINITY; size + 1];
        let mut used = vec![false; size + 1];
        loop {
            used[col0] = true;
            let r0 = matched_row[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=size {
                if used[col] {
                    continue;
                }
                let reduced = cost[(r0 - 1) * size + (col - 1)] - u[r0] - v[col];
                if reduced < min_slack[col] {
                    min_slack[col] = reduced;
                    way[col] = col0;
                }
                if min_slack[col] < delta {
                    delta = min_slack[col];
                    col1 = col;
                }
            }
            for col in 0..=size {
                if used[col] {
                    u[matched_row[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_slack[col] -= delta;
                }
            }
            col0 = col1;
            if matched_row[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            matched_row[col0] = matched_row[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; size];
    for col in 1..=size {
        assignment[matched_row[col] - 1] = col - 1;
    }
    assignment
}
