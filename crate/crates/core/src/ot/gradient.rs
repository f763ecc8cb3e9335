use super::cost::CostMatrix;
use super::sinkhorn::{solve_log_domain, SinkhornConfig};
use crate::error::Result;
use crate::tensor::{DiscreteDistribution, Matrix};

/// Central-difference step for the gradient check.
pub const FD_STEP: f64 = 1e-5;

const CHECK_TOLERANCE: f64 = 1e-13;
const CHECK_MAX_ITERS: usize = 200_000;

/// `⟨C, π⟩ − ε H(π)` with `H(π) = −Σ π log π`.
pub fn entropic_objective(cost: &Matrix, plan: &Matrix, epsilon: f64) -> Result<f64> {
    let linear = cost.frobenius_dot(plan)?;
    let neg_entropy: f64 = plan.as_slice().iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum();
    Ok(linear + epsilon * neg_entropy)
}

/// Compares `∂V/∂C_ij` of the optimal entropic value `V(C)`, taken by
/// central differences, against the solved plan `π*_ij` (envelope
/// property). Returns the largest absolute deviation.
///
/// The inner solves run at a tighter tolerance than `cfg` so that the
/// finite differences are not dominated by solver residue.
pub fn ot_objective_gradient_check(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    let tight = SinkhornConfig {
        epsilon: cfg.epsilon,
        max_iters: cfg.max_iters.max(CHECK_MAX_ITERS),
        tolerance: cfg.tolerance.min(CHECK_TOLERANCE),
    };
    let value = |c: &Matrix| -> Result<f64> {
        let p = solve_log_domain(mu.as_slice(), nu.as_slice(), c, &tight)?;
        entropic_objective(c, &p.plan, tight.epsilon)
    };
    let base = cost.matrix();
    let plan = solve_log_domain(mu.as_slice(), nu.as_slice(), base, &tight)?;
    let (rows, cols) = base.shape();
    let mut worst: f64 = 0.0;
    for idx in 0..rows * cols {
        let mut data = base.as_slice().to_vec();
        data[idx] += FD_STEP;
        let up = value(&Matrix::new(rows, cols, data.clone())?)?;
        data[idx] -= 2.0 * FD_STEP;
        let down = value(&Matrix::new(rows, cols, data)?)?;
        let fd = (up - down) / (2.0 * FD_STEP);
        worst = worst.max((fd - plan.plan.as_slice()[idx]).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ot::build_cost_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_cost_gradient_is_outer_product() {
        let mu = DiscreteDistribution::new(vec![0.3, 0.7]).unwrap();
        let nu = DiscreteDistribution::new(vec![0.1, 0.5, 0.4]).unwrap();
        let c = CostMatrix::new(Matrix::new(2, 3, vec![1.0; 6]).unwrap()).unwrap();
        let dev = ot_objective_gradient_check(&mu, &nu, &c, &SinkhornConfig::default()).unwrap();
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn symmetric_two_by_two() {
        let u = DiscreteDistribution::new(vec![0.5, 0.5]).unwrap();
        let c = CostMatrix::new(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
        let cfg = SinkhornConfig { epsilon: 0.25, ..Default::default() };
        assert!(ot_objective_gradient_check(&u, &u, &c, &cfg).unwrap() < 1e-4);
    }

    #[test]
    fn random_four_by_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let vecs = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vec<f64>> {
            (0..k).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
        };
        let c = build_cost_matrix(&vecs(&mut rng, 4), &vecs(&mut rng, 3)).unwrap();
        let w = |rng: &mut ChaCha8Rng, k: usize| {
            let v: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
            DiscreteDistribution::from_weights(&v).unwrap()
        };
        let mu = w(&mut rng, 4);
        let nu = w(&mut rng, 3);
        let cfg = SinkhornConfig { epsilon: 0.1, ..Default::default() };
        let dev = ot_objective_gradient_check(&mu, &nu, &c, &cfg).unwrap();
        assert!(dev <= 1e-4, "{dev}");
    }
}
