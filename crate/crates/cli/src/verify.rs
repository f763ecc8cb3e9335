//! Invariant suite behind `otfuse verify`.

use std::fmt::Write as _;

use otfuse_core::metrics::{segmentation_metrics, ConfusionMatrix};
use otfuse_core::oracle::{convex_hull_residual, count_confusion, min_cost_integer_coupling};
use otfuse_core::ot::{
    barycentric_project, build_cost_matrix, exact_transport, ot_objective_gradient_check, rationalize, ProjectionMode,
};
use otfuse_core::scene::Attribute;
use otfuse_core::tensor::tensor_product_joint;
use otfuse_core::{sinkhorn, CostMatrix, DiscreteDistribution, Matrix, ScenePosterior, SinkhornConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliResult;

pub const EPS_SWEEP: [f64; 7] = [0.01, 0.02, 0.05, 0.1, 0.25, 0.5, 1.0];
pub const EPS_SWEEP_FILE: &str = "eps_sweep.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    pub sinkhorn: SinkhornConfig,
    /// Writes 3 into one cost entry before validation.
    pub corrupt_cost: bool,
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub eps_sweep_csv: String,
}

impl VerifyReport {
    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "[{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let _ = writeln!(out, "{} of {} checks passed", self.checks.len() - self.failures(), self.checks.len());
        out
    }
}

fn random_dist(rng: &mut ChaCha8Rng, n: usize) -> DiscreteDistribution {
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    DiscreteDistribution::from_weights(&w).expect("positive weights")
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn random_cost(rng: &mut ChaCha8Rng, n: usize, m: usize) -> CliResult<CostMatrix> {
    let dim = rng.gen_range(2..6);
    Ok(build_cost_matrix(&random_vectors(rng, n, dim), &random_vectors(rng, m, dim))?)
}

/// `total` units split over `n` bins, each at least one.
fn random_composition(rng: &mut ChaCha8Rng, n: usize, total: u32) -> Vec<u32> {
    let mut bins = vec![1u32; n];
    for _ in n as u32..total {
        bins[rng.gen_range(0..n)] += 1;
    }
    bins
}

fn rational_dist(units: &[u32], denom: u32) -> DiscreteDistribution {
    DiscreteDistribution::new(units.iter().map(|u| *u as f64 / denom as f64).collect()).expect("sums to one")
}

fn tight(eps: f64) -> SinkhornConfig {
    SinkhornConfig { epsilon: eps, max_iters: 200_000, tolerance: 1e-10 }
}

fn check(name: &'static str, result: CliResult<(bool, String)>) -> Check {
    match result {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: e.to_string() },
    }
}

fn cost_range(rng: &mut ChaCha8Rng, corrupt: bool) -> CliResult<(bool, String)> {
    let cost = random_cost(rng, 32, 4)?;
    let mut data = cost.matrix().as_slice().to_vec();
    if corrupt {
        data[0] = 3.0;
    }
    let (worst_lo, worst_hi) =
        data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    CostMatrix::new(Matrix::new(32, 4, data)?)?;
    Ok((true, format!("32x4 cosine costs within [{worst_lo:.3}, {worst_hi:.3}]")))
}

fn marginals(rng: &mut ChaCha8Rng) -> CliResult<(bool, String)> {
    let mut worst: f64 = 0.0;
    let mut unconverged = 0;
    for t in 0..30 {
        let eps = [0.01, 0.05, 0.25][t % 3];
        let (n, m) = (rng.gen_range(1..=64), rng.gen_range(1..=8));
        let (mu, nu) = (random_dist(rng, n), random_dist(rng, m));
        let plan = sinkhorn(
            &mu,
            &nu,
            &random_cost(rng, n, m)?,
            &SinkhornConfig { epsilon: eps, max_iters: 100_000, tolerance: 1e-9 },
        )?;
        unconverged += usize::from(!plan.converged);
        worst = worst.max(plan.violation);
    }
    Ok((
        worst <= 1e-6 && unconverged == 0,
        format!("30 instances, worst violation {worst:.2e}, {unconverged} unconverged"),
    ))
}

fn oracle_equivalence(rng: &mut ChaCha8Rng) -> CliResult<(bool, String)> {
    let eps = 0.01;
    let (mut worst_oracle, mut worst_gap, mut min_gap) = (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    let mut gap_ok = true;
    for _ in 0..20 {
        let (n, m) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let denom = rng.gen_range(n.max(m) as u32..=8);
        let (a, b) = (random_composition(rng, n, denom), random_composition(rng, m, denom));
        let (mu, nu) = (rational_dist(&a, denom), rational_dist(&b, denom));
        let cost = random_cost(rng, n, m)?;
        let exact = exact_transport(&mu, &nu, &cost)?;
        let (d, ia, ib) = rationalize(&mu, &nu)?;
        let brute = min_cost_integer_coupling(&ia, &ib, cost.matrix(), false)? / d as f64;
        worst_oracle = worst_oracle.max((exact.cost - brute).abs());
        let plan = sinkhorn(&mu, &nu, &cost, &tight(eps))?;
        let gap = plan.transport_cost(&cost)? - exact.cost;
        let bound = eps * ((n as f64).ln() + (m as f64).ln()) + 1e-6;
        gap_ok &= (-1e-8..=bound).contains(&gap);
        worst_gap = worst_gap.max(gap);
        min_gap = min_gap.min(gap);
    }
    Ok((
        worst_oracle <= 1e-12 && gap_ok,
        format!("exact vs enumeration {worst_oracle:.1e}; Sinkhorn gap in [{min_gap:.2e}, {worst_gap:.2e}]"),
    ))
}

fn gradient(rng: &mut ChaCha8Rng, eps: f64) -> CliResult<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let (n, m) = (rng.gen_range(2..=5), rng.gen_range(2..=5));
        let (mu, nu) = (random_dist(rng, n), random_dist(rng, m));
        let cfg = SinkhornConfig { epsilon: eps.max(0.05), ..SinkhornConfig::default() };
        worst = worst.max(ot_objective_gradient_check(&mu, &nu, &random_cost(rng, n, m)?, &cfg)?);
    }
    Ok((worst <= 1e-4, format!("max |finite difference - plan| = {worst:.2e}")))
}

fn hull(rng: &mut ChaCha8Rng, cfg: &SinkhornConfig) -> CliResult<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let (n, k, dim) = (rng.gen_range(4..=24), rng.gen_range(2..=4), rng.gen_range(2..=5));
        let anchors = Matrix::from_rows(&random_vectors(rng, k, dim))?;
        let feats = random_vectors(rng, n, dim);
        let cost = build_cost_matrix(&feats, &anchors.row_iter().collect::<Vec<_>>())?;
        let plan = sinkhorn(&DiscreteDistribution::uniform(n)?, &random_dist(rng, k), &cost, cfg)?;
        let proj = barycentric_project(&plan, &anchors, ProjectionMode::RowNormalized)?;
        for row in proj.features.row_iter() {
            worst = worst.max(convex_hull_residual(row, &anchors)?);
        }
    }
    Ok((worst <= 1e-9, format!("max distance to anchor hull {worst:.1e}")))
}

fn factorization(rng: &mut ChaCha8Rng) -> CliResult<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let dims = [rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4)];
        let (w, d, r) = (random_dist(rng, dims[0]), random_dist(rng, dims[1]), random_dist(rng, dims[2]));
        let joint = tensor_product_joint(&w, &d, &r)?;
        let mut sums = [vec![0.0; dims[0]], vec![0.0; dims[1]], vec![0.0; dims[2]]];
        for (idx, p) in joint.as_slice().iter().enumerate() {
            sums[0][idx / (dims[1] * dims[2])] += p;
            sums[1][(idx / dims[2]) % dims[1]] += p;
            sums[2][idx % dims[2]] += p;
        }
        let post = ScenePosterior::from_marginals(w.clone(), d.clone(), r.clone())?;
        for (attr, s) in Attribute::ALL.into_iter().zip(&sums) {
            for (x, y) in s.iter().zip(post.marginal(attr).as_slice()) {
                worst = worst.max((x - y).abs());
            }
        }
    }
    Ok((worst <= 1e-12, format!("200 triples, worst re-marginalisation error {worst:.1e}")))
}

fn metric_oracle(rng: &mut ChaCha8Rng) -> CliResult<(bool, String)> {
    let mut mismatches = 0;
    for _ in 0..50 {
        let len = rng.gen_range(1..=300);
        let p = rng.gen_range(0.0..1.0);
        let pred: Vec<bool> = (0..len).map(|_| rng.gen_bool(p)).collect();
        let target: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.5)).collect();
        if ConfusionMatrix::from_masks(&pred, &target)?.counts != count_confusion(&pred, &target)? {
            mismatches += 1;
        }
    }
    let hand = segmentation_metrics(&[true, false, false, false], &[true, true, false, false])?.miou;
    Ok((
        mismatches == 0 && (hand - 58.33).abs() <= 0.01,
        format!("{mismatches} count mismatches; hand case mIoU {hand:.4}"),
    ))
}

fn closed_forms(rng: &mut ChaCha8Rng) -> CliResult<(bool, String)> {
    let u = DiscreteDistribution::uniform(2)?;
    let c = CostMatrix::new(Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])?)?;
    let p = sinkhorn(&u, &u, &c, &tight(0.25))?;
    let diag = 0.5 / (1.0 + (-4.0f64).exp());
    let mut worst = (p.get(0, 0) - diag).abs().max((p.get(1, 1) - diag).abs());
    for _ in 0..10 {
        let (n, m) = (rng.gen_range(1..=8), rng.gen_range(1..=8));
        let (mu, nu) = (random_dist(rng, n), random_dist(rng, m));
        let flat = CostMatrix::new(Matrix::new(n, m, vec![0.7; n * m])?)?;
        let plan = sinkhorn(&mu, &nu, &flat, &SinkhornConfig::default())?;
        for i in 0..n {
            for j in 0..m {
                worst = worst.max((plan.get(i, j) - mu[i] * nu[j]).abs());
            }
        }
    }
    Ok((worst <= 1e-10, format!("2x2 diagonal {:.6}; worst deviation {worst:.1e}", p.get(0, 0))))
}

/// Transport cost at each ε of [`EPS_SWEEP`] on a few instances; the cost
/// must not decrease as ε grows.
fn eps_sweep(rng: &mut ChaCha8Rng, csv: &mut String) -> CliResult<(bool, String)> {
    csv.push_str("instance,rows,cols,epsilon,transport_cost,iterations\n");
    let mut violations = 0;
    for inst in 0..5 {
        let (n, m) = (rng.gen_range(2..=16), rng.gen_range(2..=6));
        let (mu, nu) = (random_dist(rng, n), random_dist(rng, m));
        let cost = random_cost(rng, n, m)?;
        let mut prev = f64::NEG_INFINITY;
        for eps in EPS_SWEEP {
            let plan = sinkhorn(&mu, &nu, &cost, &tight(eps))?;
            let tc = plan.transport_cost(&cost)?;
            let _ = writeln!(csv, "{inst},{n},{m},{eps},{tc:.10},{}", plan.iterations);
            violations += usize::from(tc < prev - 1e-9);
            prev = tc;
        }
    }
    Ok((violations == 0, format!("5 instances x {} epsilons, {violations} decreases", EPS_SWEEP.len())))
}

pub fn run_suite(opts: &VerifyOptions) -> VerifyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut csv = String::new();
    let checks = vec![
        check("cost-range", cost_range(&mut rng, opts.corrupt_cost)),
        check("marginals", marginals(&mut rng)),
        check("oracle-equivalence", oracle_equivalence(&mut rng)),
        check("envelope-gradient", gradient(&mut rng, opts.sinkhorn.epsilon)),
        check("projection-hull", hull(&mut rng, &opts.sinkhorn)),
        check("factorization", factorization(&mut rng)),
        check("metric-oracle", metric_oracle(&mut rng)),
        check("closed-forms", closed_forms(&mut rng)),
        check("eps-sweep", eps_sweep(&mut rng, &mut csv)),
    ];
    VerifyReport { checks, eps_sweep_csv: csv }
}
