//! Seeded inputs shared by the benchmarks.

use otfuse_core::ot::build_cost_matrix;
use otfuse_core::{CostMatrix, DiscreteDistribution, FeatureMap, Matrix, PreSegProbs};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rows(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Cosine cost between `n` random sources and `m` random targets, with
/// random positive marginals.
pub fn transport_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    dim: usize,
) -> (DiscreteDistribution, DiscreteDistribution, CostMatrix) {
    let cost = build_cost_matrix(&rows(rng, n, dim), &rows(rng, m, dim)).expect("finite features");
    let mut dist = |k: usize| {
        let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        DiscreteDistribution::from_weights(&w).expect("positive weights")
    };
    (dist(n), dist(m), cost)
}

/// Two feature branches, one-hot probabilities and `classes` anchors on an
/// `h × w` grid.
pub struct FusionInputs {
    pub image: FeatureMap,
    pub normal: FeatureMap,
    pub probs_image: PreSegProbs,
    pub probs_normal: PreSegProbs,
    pub anchors: Matrix,
}

pub fn fusion_inputs(rng: &mut ChaCha8Rng, h: usize, w: usize, dim: usize, classes: usize) -> FusionInputs {
    let map = |rng: &mut ChaCha8Rng| {
        let data = (0..h * w * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FeatureMap::new(h, w, dim, data).expect("sized data")
    };
    let (image, normal) = (map(rng), map(rng));
    let probs = |rng: &mut ChaCha8Rng| {
        let labels: Vec<usize> = (0..h * w).map(|_| rng.gen_range(0..classes)).collect();
        PreSegProbs::from_labels(h, w, classes, &labels).expect("labels in range")
    };
    let (probs_image, probs_normal) = (probs(rng), probs(rng));
    let anchors = Matrix::from_rows(&rows(rng, classes, dim)).expect("equal rows");
    FusionInputs { image, normal, probs_image, probs_normal, anchors }
}
