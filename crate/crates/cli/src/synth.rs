//! Synthetic scenes with a known traversable region.
//!
//! A world is drawn once per seed: one direction per attribute category
//! (the `[CLS]` signal), a small prototype offset per category, and a pair
//! of antipodal meta embeddings for the two classes. Each scene then gets a
//! horizon row; pixels at or below it are flat ground (traversable), pixels
//! above it sit on a depth ramp (non-traversable). Image features are the
//! scene's class prototype plus noise. Normal features come from
//! finite-difference normals of the depth, lifted to the embedding space by
//! a fixed linear map that sends the flat normal toward the traversable
//! meta embedding and a reference ramp normal toward the other one.

use otfuse_core::fusion::depth_to_normal;
use otfuse_core::scene::{Attribute, LinearHead, PrototypeTable, SceneHeads};
use otfuse_core::tensor::{dot, norm};
use otfuse_core::{AttributeSpace, DepthMap, FeatureMap, Matrix, PreSegProbs, SceneCombination};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::error::CliResult;

pub const CLASS_NAMES: [&str; 2] = ["traversable", "non_traversable"];
/// Class index of the traversable anchor and mask.
pub const TRAVERSABLE: usize = 0;
/// Depth of the flat ground plane.
pub const GROUND_DEPTH: f64 = 4.0;
const FOCAL: f64 = 1.0;

pub fn to_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-3 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Per-attribute, per-category vectors.
#[derive(Clone, Debug)]
struct AttributeVectors {
    weather: Vec<Vec<f64>>,
    time_of_day: Vec<Vec<f64>>,
    road_type: Vec<Vec<f64>>,
}

impl AttributeVectors {
    /// Unit directions, mutually orthogonal whenever the embedding has room
    /// for all categories.
    fn orthonormal(rng: &mut ChaCha8Rng, space: &AttributeSpace, dim: usize) -> Self {
        let mut drawn = Self::draw(rng, space, dim, 1.0);
        let total = Attribute::ALL.iter().map(|&a| space.cardinality(a)).sum::<usize>();
        if total <= dim {
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(total);
            for v in drawn.weather.iter_mut().chain(&mut drawn.time_of_day).chain(&mut drawn.road_type) {
                for e in &basis {
                    let p = dot(v, e);
                    v.iter_mut().zip(e).for_each(|(x, y)| *x -= p * y);
                }
                let n = norm(v);
                v.iter_mut().for_each(|x| *x /= n);
                basis.push(v.clone());
            }
        }
        drawn
    }

    fn draw(rng: &mut ChaCha8Rng, space: &AttributeSpace, dim: usize, scale: f64) -> Self {
        let mut block = |attr| {
            (0..space.cardinality(attr))
                .map(|_| random_unit(rng, dim).into_iter().map(|x| x * scale).collect())
                .collect()
        };
        Self {
            weather: block(Attribute::Weather),
            time_of_day: block(Attribute::TimeOfDay),
            road_type: block(Attribute::RoadType),
        }
    }

    fn sum(&self, c: SceneCombination) -> Vec<f64> {
        let (a, b, d) = (&self.weather[c.weather], &self.time_of_day[c.time_of_day], &self.road_type[c.road_type]);
        (0..a.len()).map(|i| a[i] + b[i] + d[i]).collect()
    }
}

/// Seed-determined generator state shared by every scene.
#[derive(Clone, Debug)]
pub struct World {
    pub space: AttributeSpace,
    pub dim: usize,
    directions: AttributeVectors,
    offsets: AttributeVectors,
    pub meta: Matrix,
    /// Embedding-space images of the flat and reference ramp normals.
    lift: [Vec<f64>; 2],
    flat_normal: [f64; 3],
    ramp_normal: [f64; 3],
}

impl World {
    pub fn new(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Self {
        let dim = cfg.embedding_dim;
        let directions = AttributeVectors::orthonormal(rng, &cfg.attributes, dim);
        let offsets = AttributeVectors::draw(rng, &cfg.attributes, dim, cfg.generator.prototype_offset);
        let m0: Vec<f64> = random_unit(rng, dim).into_iter().map(to_f32).collect();
        let m1: Vec<f64> = m0.iter().map(|x| -x).collect();
        let meta = Matrix::from_rows(&[m0.clone(), m1.clone()]).expect("two equal rows");
        let s_ref = 0.5 * (cfg.generator.min_slope + cfg.generator.max_slope);
        let r = (1.0 + s_ref * s_ref).sqrt();
        Self {
            space: cfg.attributes.clone(),
            dim,
            directions,
            offsets,
            meta,
            lift: [m0, m1],
            flat_normal: [0.0, 0.0, 1.0],
            ramp_normal: [0.0, FOCAL * s_ref / r, 1.0 / r],
        }
    }

    /// `classes × dim` prototype of one combination, rounded to `f32`.
    pub fn prototype(&self, c: SceneCombination) -> Matrix {
        let offset = self.offsets.sum(c);
        let rows: Vec<Vec<f64>> =
            self.meta.row_iter().map(|m| m.iter().zip(&offset).map(|(a, b)| to_f32(a + b)).collect()).collect();
        Matrix::from_rows(&rows).expect("prototype rows")
    }

    /// Noise-free `[CLS]` embedding of a combination.
    pub fn clean_cls(&self, c: SceneCombination) -> Vec<f64> {
        self.directions.sum(c).into_iter().map(to_f32).collect()
    }

    pub fn prototype_table(&self) -> CliResult<PrototypeTable> {
        let prototypes = self.space.combinations().map(|c| self.prototype(c)).collect();
        let frozen = self.space.combinations().map(|c| self.clean_cls(c)).collect();
        Ok(PrototypeTable::new(
            self.space.clone(),
            CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            prototypes,
            self.meta.clone(),
            Some(frozen),
        )?)
    }

    /// Untrained heads: small random text embeddings.
    pub fn initial_heads(&self, rng: &mut ChaCha8Rng, tau: f64) -> CliResult<SceneHeads> {
        let mut head = |attr| -> CliResult<LinearHead> {
            let k = self.space.cardinality(attr);
            let data = (0..k * self.dim).map(|_| to_f32(rng.gen_range(-0.05..0.05))).collect();
            Ok(LinearHead::new(Matrix::new(k, self.dim, data)?, tau)?)
        };
        Ok(SceneHeads {
            weather: head(Attribute::Weather)?,
            time_of_day: head(Attribute::TimeOfDay)?,
            road_type: head(Attribute::RoadType)?,
        })
    }

    /// Maps unit normals into embedding space.
    pub fn lift_normals(&self, normals: &FeatureMap) -> CliResult<FeatureMap> {
        let mut data = Vec::with_capacity(normals.pixels() * self.dim);
        for n in normals.pixel_iter() {
            let (a, b) = (dot(n, &self.flat_normal), dot(n, &self.ramp_normal));
            data.extend((0..self.dim).map(|i| to_f32(a * self.lift[0][i] + b * self.lift[1][i])));
        }
        Ok(FeatureMap::new(normals.height(), normals.width(), self.dim, data)?)
    }
}

/// One generated sample, ready to be written to disk.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub combination: SceneCombination,
    pub cls: Vec<f64>,
    pub depth: DepthMap,
    pub surface_normals: FeatureMap,
    pub image_features: FeatureMap,
    pub normal_features: FeatureMap,
    pub image_probs: PreSegProbs,
    pub normal_probs: PreSegProbs,
    /// `true` on traversable pixels.
    pub ground_truth: Vec<bool>,
    pub horizon: usize,
}

/// Depth of a scene whose rows `>= horizon` are flat ground and whose
/// rows above rise on a ramp of the given slope.
pub fn ramp_depth(height: usize, width: usize, horizon: usize, slope: f64) -> CliResult<DepthMap> {
    let mut data = Vec::with_capacity(height * width);
    for y in 0..height {
        let z = if y >= horizon { GROUND_DEPTH } else { GROUND_DEPTH + slope * (horizon - y) as f64 };
        data.extend(std::iter::repeat_n(z, width));
    }
    Ok(DepthMap::new(height, width, data)?)
}

pub fn generate_scene(
    world: &World,
    cfg: &ExperimentConfig,
    combination: SceneCombination,
    rng: &mut ChaCha8Rng,
) -> CliResult<SyntheticScene> {
    let (h, w, dim) = (cfg.grid.height, cfg.grid.width, world.dim);
    let g = &cfg.generator;
    let horizon = rng.gen_range(h / 4..=(3 * h) / 4).clamp(1, h - 1);
    let slope = if g.max_slope > g.min_slope { rng.gen_range(g.min_slope..=g.max_slope) } else { g.min_slope };

    let depth = ramp_depth(h, w, horizon, slope)?;
    let surface_normals = depth_to_normal(&depth, FOCAL, FOCAL)?;
    let normal_features = world.lift_normals(&surface_normals)?;

    let ground_truth: Vec<bool> = (0..h * w).map(|i| i / w >= horizon).collect();
    let prototype = world.prototype(combination);
    let mut features = Vec::with_capacity(h * w * dim);
    let mut probs = Vec::with_capacity(h * w * 2);
    for &trav in &ground_truth {
        let class = if trav { TRAVERSABLE } else { 1 - TRAVERSABLE };
        let noise = g.feature_noise;
        features.extend(prototype.row(class).iter().map(|p| {
            let n = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
            to_f32(p + n)
        }));
        probs.extend((0..2).map(|k| if k == class { 1.0 } else { 0.0 }));
    }
    let image_features = FeatureMap::new(h, w, dim, features)?;
    let image_probs = PreSegProbs::new(h, w, 2, probs)?;

    let cls = world
        .clean_cls(combination)
        .into_iter()
        .map(|x| {
            let n = if g.cls_noise > 0.0 { rng.gen_range(-g.cls_noise..=g.cls_noise) } else { 0.0 };
            to_f32(x + n)
        })
        .collect();

    Ok(SyntheticScene {
        combination,
        cls,
        depth,
        surface_normals,
        image_features,
        normal_features,
        normal_probs: image_probs.clone(),
        image_probs,
        ground_truth,
        horizon,
    })
}
