use serde::{Deserialize, Serialize};

use super::cost::CostMatrix;
use crate::error::{shape, Error, Result};
use crate::tensor::{log_sum_exp, DiscreteDistribution, Matrix};

/// Parameters of the entropic solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornConfig {
    /// Entropic regularisation strength ε.
    pub epsilon: f64,
    pub max_iters: usize,
    /// Stop once the max-norm marginal violation drops to this value.
    pub tolerance: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { epsilon: 0.05, max_iters: 1000, tolerance: 1e-6 }
    }
}

impl SinkhornConfig {
    pub fn with_epsilon(self, epsilon: f64) -> Self {
        Self { epsilon, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Parameter {
                name: "epsilon",
                reason: format!("must be positive and finite, got {}", self.epsilon),
            });
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Parameter {
                name: "tolerance",
                reason: format!("must be positive and finite, got {}", self.tolerance),
            });
        }
        if self.max_iters == 0 {
            return Err(Error::Parameter { name: "max_iters", reason: "must be at least 1".into() });
        }
        Ok(())
    }
}

/// Coupling between a source and a target distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub plan: Matrix,
    /// Achieved `max(‖rows − μ‖∞, ‖cols − ν‖∞)`.
    pub violation: f64,
    pub iterations: usize,
    /// Whether `violation` met the requested tolerance.
    pub converged: bool,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.plan.rows()
    }

    pub fn cols(&self) -> usize {
        self.plan.cols()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.plan.get(r, c)
    }

    /// `⟨C, π⟩`.
    pub fn transport_cost(&self, cost: &CostMatrix) -> Result<f64> {
        self.plan.frobenius_dot(cost.matrix())
    }
}

/// Max-norm deviation of the plan's marginals from `mu` and `nu`.
pub(crate) fn marginal_violation(plan: &Matrix, mu: &[f64], nu: &[f64]) -> f64 {
    let row = plan.row_sums().iter().zip(mu).map(|(r, m)| (r - m).abs()).fold(0.0, f64::max);
    let col = plan.col_sums().iter().zip(nu).map(|(c, n)| (c - n).abs()).fold(0.0, f64::max);
    row.max(col)
}

/// Entropic OT plan `π_ij = exp(a_i + b_j − C_ij/ε)` by alternating
/// log-domain scaling of the dual potentials `a`, `b`.
///
/// Running out of iterations is not an error: the plan comes back with
/// `converged == false` and its achieved violation.
pub fn sinkhorn(
    mu: &DiscreteDistribution,
    nu: &DiscreteDistribution,
    cost: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    solve_log_domain(mu.as_slice(), nu.as_slice(), cost.matrix(), cfg)
}

/// Sweeps between stall checks.
const STALL_WINDOW: usize = 20;
/// A window that shrinks the violation by less than this factor counts as
/// a stall and hands over to Newton steps.
const STALL_RATIO: f64 = 0.1;
const INITIAL_DAMPING: f64 = 1e-2;
const MIN_DAMPING: f64 = 1e-12;
const MAX_DAMPING: f64 = 1e8;

/// Log-kernel and marginals of one problem, with the supports of `mu` and
/// `nu` (zero-mass entries keep potential −∞ and take no part).
struct Problem<'a> {
    n: usize,
    m: usize,
    kernel: Vec<f64>,
    mu: &'a [f64],
    nu: &'a [f64],
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Problem<'_> {
    fn entry(&self, a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
        (a[i] + b[j] + self.kernel[i * self.m + j]).exp()
    }

    fn sweep(&self, a: &mut [f64], b: &mut [f64], log_mu: &[f64], log_nu: &[f64]) {
        let (n, m) = (self.n, self.m);
        for i in 0..n {
            a[i] = if log_mu[i] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                let row = &self.kernel[i * m..(i + 1) * m];
                log_mu[i] - log_sum_exp(row.iter().zip(b.iter()).map(|(k, bj)| k + bj))
            };
        }
        for j in 0..m {
            b[j] = if log_nu[j] == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                log_nu[j] - log_sum_exp((0..n).map(|i| self.kernel[i * m + j] + a[i]))
            };
        }
    }

    /// Row sums, column sums and the max-norm violation of both.
    fn marginals(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
        let mut r = vec![0.0; self.n];
        let mut c = vec![0.0; self.m];
        for &i in &self.rows {
            for &j in &self.cols {
                let p = self.entry(a, b, i, j);
                r[i] += p;
                c[j] += p;
            }
        }
        let v = self
            .rows
            .iter()
            .map(|&i| (r[i] - self.mu[i]).abs())
            .chain(self.cols.iter().map(|&j| (c[j] - self.nu[j]).abs()));
        let violation = v.fold(0.0, f64::max);
        (r, c, violation)
    }

    /// Damped Newton direction for the concave dual
    /// `Φ(a, b) = Σμa + Σνb − Σ exp(a + b + K)`: solves
    /// `(H + δ·diag H) d = ∇Φ`, where `H = [[diag r, P], [Pᵀ, diag c]]`.
    ///
    /// For `δ > 0` the matrix is strictly diagonally dominant, so the
    /// column-side Schur complement is an M-matrix and elimination needs no
    /// pivoting. Its diagonal is assembled from off-diagonal row mass to
    /// avoid cancellation when the plan is nearly block-diagonal.
    fn damped_direction(&self, a: &[f64], b: &[f64], r: &[f64], c: &[f64], delta: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let k = self.cols.len();
        let grow = 1.0 + delta;
        let shrink = delta * (2.0 + delta) / grow;
        let ga: Vec<f64> = (0..self.n).map(|i| self.mu[i] - r[i]).collect();
        let mut s = vec![0.0; k * k];
        let mut rhs: Vec<f64> = self.cols.iter().map(|&j| self.nu[j] - c[j]).collect();
        let mut pi = vec![0.0; k];
        for &i in &self.rows {
            for (p, &j) in self.cols.iter().enumerate() {
                pi[p] = self.entry(a, b, i, j);
            }
            let inv = 1.0 / (grow * r[i]);
            for p in 0..k {
                rhs[p] -= pi[p] * ga[i] * inv;
                s[p * k + p] += pi[p] * (shrink + (r[i] - pi[p]) * inv);
                for q in 0..k {
                    if q != p {
                        s[p * k + q] -= pi[p] * pi[q] * inv;
                    }
                }
            }
        }
        let y = solve_diagonally_dominant(k, s, rhs)?;
        let mut db = vec![0.0; self.m];
        for (p, &j) in self.cols.iter().enumerate() {
            db[j] = y[p];
        }
        let mut da = vec![0.0; self.n];
        for &i in &self.rows {
            let cross: f64 = self.cols.iter().map(|&j| self.entry(a, b, i, j) * db[j]).sum();
            da[i] = (ga[i] - cross) / (grow * r[i]);
        }
        Some((da, db))
    }

    /// `Φ(a + da, b + db) − Φ(a, b)`, evaluated without cancellation.
    fn dual_gain(&self, a: &[f64], b: &[f64], da: &[f64], db: &[f64]) -> f64 {
        let linear: f64 = self.rows.iter().map(|&i| self.mu[i] * da[i]).sum::<f64>()
            + self.cols.iter().map(|&j| self.nu[j] * db[j]).sum::<f64>();
        let mut mass = 0.0;
        for &i in &self.rows {
            for &j in &self.cols {
                mass += self.entry(a, b, i, j) * (da[i] + db[j]).exp_m1();
            }
        }
        linear - mass
    }

    /// Levenberg–Marquardt iterations on the dual from `(a, b)`. Stops at
    /// the tolerance, when the damping grows past any useful value, or
    /// when `budget` trial steps are spent. Returns the trials used.
    fn polish(&self, a: &mut [f64], b: &mut [f64], tolerance: f64, budget: usize, violation: &mut f64) -> usize {
        let mut delta = INITIAL_DAMPING;
        let mut used = 0;
        let (mut r, mut c, _) = self.marginals(a, b);
        while used < budget && *violation > tolerance && delta <= MAX_DAMPING {
            used += 1;
            let Some((da, db)) = self.damped_direction(a, b, &r, &c, delta) else { break };
            let gain = self.dual_gain(a, b, &da, &db);
            if gain > 0.0 && gain.is_finite() {
                for &i in &self.rows {
                    a[i] += da[i];
                }
                for &j in &self.cols {
                    b[j] += db[j];
                }
                let (nr, nc, v) = self.marginals(a, b);
                (r, c, *violation) = (nr, nc, v);
                delta = (delta * 0.1).max(MIN_DAMPING);
            } else {
                delta *= 10.0;
            }
        }
        used
    }
}

/// Forward elimination without pivoting, then back substitution; valid for
/// the strictly diagonally dominant systems built above.
fn solve_diagonally_dominant(k: usize, mut a: Vec<f64>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    for col in 0..k {
        let pivot = a[col * k + col];
        if !(pivot > 0.0) {
            return None;
        }
        for row in col + 1..k {
            let f = a[row * k + col] / pivot;
            if f != 0.0 {
                for c in col..k {
                    a[row * k + c] -= f * a[col * k + c];
                }
                rhs[row] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; k];
    for row in (0..k).rev() {
        let tail: f64 = (row + 1..k).map(|c| a[row * k + c] * x[c]).sum();
        x[row] = (rhs[row] - tail) / a[row * k + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solver core. Accepts any finite cost so the gradient check can perturb
/// entries past the cosine range.
///
/// Alternating log-domain sweeps run until the tolerance is met. When a
/// window of sweeps barely reduces the violation (typical of degenerate
/// marginals at small ε), damped Newton steps on the same dual take over
/// until they stop making progress, then sweeps resume.
pub(crate) fn solve_log_domain(mu: &[f64], nu: &[f64], cost: &Matrix, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    let (n, m) = cost.shape();
    if mu.len() != n || nu.len() != m {
        return Err(shape(format!("marginals of length {} and {} do not match a {n}x{m} cost", mu.len(), nu.len())));
    }
    let eps = cfg.epsilon;
    let problem = Problem {
        n,
        m,
        kernel: cost.as_slice().iter().map(|c| -c / eps).collect(),
        mu,
        nu,
        rows: (0..n).filter(|&i| mu[i] > 0.0).collect(),
        cols: (0..m).filter(|&j| nu[j] > 0.0).collect(),
    };
    let log_mu: Vec<f64> = mu.iter().map(|x| x.ln()).collect();
    let log_nu: Vec<f64> = nu.iter().map(|x| x.ln()).collect();

    let mut a = vec![0.0; n];
    let mut b = vec![0.0; m];
    let mut violation = f64::INFINITY;
    let mut window_start = f64::INFINITY;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        iterations += 1;
        problem.sweep(&mut a, &mut b, &log_mu, &log_nu);
        if a.iter().chain(&b).any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::Numeric(format!(
                "log-domain potentials overflowed at iteration {iterations} (epsilon = {eps})"
            )));
        }
        violation = problem.marginals(&a, &b).2;
        if violation <= cfg.tolerance {
            break;
        }
        if iterations % STALL_WINDOW == 0 {
            if violation > STALL_RATIO * window_start {
                iterations += problem.polish(&mut a, &mut b, cfg.tolerance, cfg.max_iters - iterations, &mut violation);
                if violation <= cfg.tolerance {
                    break;
                }
            }
            window_start = violation;
        }
    }

    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            data.push((a[i] + b[j] + problem.kernel[i * m + j]).exp());
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("plan entries not finite (epsilon = {eps})")));
    }
    let plan = Matrix::new(n, m, data)?;
    let violation = violation.max(marginal_violation(&plan, mu, nu));
    Ok(TransportPlan { plan, violation, iterations, converged: violation <= cfg.tolerance })
}
