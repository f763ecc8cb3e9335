//! Experiment configuration, read from TOML.
//!
//! Every file must carry `version = 1`; any key the schema does not know
//! is rejected. Omitted sections fall back to the desk-scale defaults.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use otfuse_core::fusion::DEFAULT_EPS_NORM;
use otfuse_core::loss::LossWeights;
use otfuse_core::ot::ProjectionMode;
use otfuse_core::scene::DEFAULT_TEMPERATURE;
use otfuse_core::{AttributeSpace, FusionConfig, SceneCombination, SinkhornConfig, TargetPooling};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub epsilon: f64,
    pub tolerance: f64,
    pub max_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub lambda: f64,
    pub pooling: TargetPooling,
    pub projection: ProjectionMode,
    pub eps_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadsSection {
    pub steps: usize,
    pub learning_rate: f64,
    /// Temperature given to freshly generated heads.
    pub temperature: f64,
}

/// Knobs of the synthetic scene generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    /// Half-width of the uniform noise added to image features.
    pub feature_noise: f64,
    /// Half-width of the uniform noise added to `[CLS]` embeddings.
    pub cls_noise: f64,
    /// Norm of each per-attribute offset added to the class prototypes.
    pub prototype_offset: f64,
    /// Depth slope range of the non-traversable ramp, per pixel row.
    pub min_slope: f64,
    pub max_slope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub out: PathBuf,
    pub embedding_dim: usize,
    pub grid: Grid,
    pub attributes: AttributeSpace,
    /// Scene keys `weather|time_of_day|road_type` seen during training.
    pub train_combinations: Vec<String>,
    pub samples_per_combination: usize,
    /// Per-combination overrides of `samples_per_combination`.
    pub sample_counts: BTreeMap<String, usize>,
    pub solver: SolverSection,
    pub fusion: FusionSection,
    pub loss_weights: LossWeights,
    pub heads: HeadsSection,
    pub generator: GeneratorSection,
}

impl Default for Grid {
    fn default() -> Self {
        Self { height: 16, width: 16 }
    }
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SinkhornConfig::default();
        Self { epsilon: s.epsilon, tolerance: s.tolerance, max_iters: s.max_iters }
    }
}

impl Default for FusionSection {
    fn default() -> Self {
        let f = FusionConfig::default();
        Self { lambda: f.lambda, pooling: f.pooling, projection: f.projection, eps_norm: DEFAULT_EPS_NORM }
    }
}

impl Default for HeadsSection {
    fn default() -> Self {
        Self { steps: 500, learning_rate: 0.1, temperature: DEFAULT_TEMPERATURE }
    }
}

impl Default for GeneratorSection {
    fn default() -> Self {
        Self { feature_noise: 0.1, cls_noise: 0.2, prototype_offset: 0.15, min_slope: 1.0, max_slope: 2.0 }
    }
}

fn names(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 42,
            out: PathBuf::from("otfuse-out"),
            embedding_dim: 16,
            grid: Grid::default(),
            attributes: AttributeSpace {
                weather: names(&["sunny", "snowy"]),
                time_of_day: names(&["day", "night"]),
                road_type: names(&["dirt", "grass"]),
            },
            train_combinations: names(&[
                "sunny|day|dirt",
                "sunny|day|grass",
                "sunny|night|dirt",
                "snowy|day|dirt",
                "snowy|day|grass",
            ]),
            samples_per_combination: 25,
            sample_counts: BTreeMap::new(),
            solver: SolverSection::default(),
            fusion: FusionSection::default(),
            loss_weights: LossWeights::default(),
            heads: HeadsSection::default(),
            generator: GeneratorSection::default(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> CliResult<Self> {
        let raw: toml::Table = text.parse().map_err(|e| usage(format!("config is not valid TOML: {e}")))?;
        match raw.get("version") {
            None => return Err(usage("config must declare `version`")),
            Some(toml::Value::Integer(v)) if *v == CONFIG_VERSION as i64 => {}
            Some(other) => return Err(usage(format!("unsupported config version {other}"))),
        }
        let cfg: Self = toml::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> CliResult<()> {
        self.attributes.validate().map_err(|e| usage(e.to_string()))?;
        if self.embedding_dim < 2 {
            return Err(usage("embedding_dim must be at least 2"));
        }
        if self.grid.height < 4 || self.grid.width < 1 {
            return Err(usage("grid must be at least 4 rows by 1 column"));
        }
        self.sinkhorn().validate().map_err(|e| usage(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.fusion.lambda) {
            return Err(usage(format!("fusion.lambda must lie in [0, 1], got {}", self.fusion.lambda)));
        }
        if !(self.fusion.eps_norm > 0.0) {
            return Err(usage("fusion.eps_norm must be positive"));
        }
        self.loss_weights.validate().map_err(|e| usage(e.to_string()))?;
        if !(self.heads.learning_rate > 0.0) || !(self.heads.temperature > 0.0) {
            return Err(usage("heads.learning_rate and heads.temperature must be positive"));
        }
        let g = &self.generator;
        if [g.feature_noise, g.cls_noise, g.prototype_offset].iter().any(|v| !(*v >= 0.0)) {
            return Err(usage("generator noise levels must be nonnegative"));
        }
        if !(g.min_slope > 0.0 && g.min_slope <= g.max_slope && g.max_slope.is_finite()) {
            return Err(usage("generator slopes must satisfy 0 < min_slope <= max_slope"));
        }
        self.train_set()?;
        for key in self.sample_counts.keys() {
            self.attributes.parse_key(key).map_err(|e| usage(format!("sample_counts: {e}")))?;
        }
        if self.total_samples() == 0 {
            return Err(usage("configuration generates no samples"));
        }
        Ok(())
    }

    /// Training combinations, checked against the attribute space.
    pub fn train_set(&self) -> CliResult<HashSet<SceneCombination>> {
        let mut set = HashSet::new();
        for key in &self.train_combinations {
            let c = self.attributes.parse_key(key).map_err(|e| usage(format!("train_combinations: {e}")))?;
            if !set.insert(c) {
                return Err(usage(format!("train_combinations lists `{key}` twice")));
            }
        }
        Ok(set)
    }

    pub fn samples_for(&self, c: SceneCombination) -> usize {
        let key = self.attributes.key(c);
        self.sample_counts.get(&key).copied().unwrap_or(self.samples_per_combination)
    }

    pub fn total_samples(&self) -> usize {
        self.attributes.combinations().map(|c| self.samples_for(c)).sum()
    }

    pub fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig {
            epsilon: self.solver.epsilon,
            tolerance: self.solver.tolerance,
            max_iters: self.solver.max_iters,
        }
    }

    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            lambda: self.fusion.lambda,
            sinkhorn: self.sinkhorn(),
            projection: self.fusion.projection,
            pooling: self.fusion.pooling,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_desk_scale() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.total_samples(), 200);
        assert_eq!((cfg.grid.height, cfg.grid.width), (16, 16));
        assert_eq!(cfg.train_set().unwrap().len(), 5);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn version_is_required() {
        assert!(matches!(ExperimentConfig::from_toml_str("seed = 3"), Err(CliError::Usage(_))));
        assert!(ExperimentConfig::from_toml_str("version = 2").is_err());
        let cfg = ExperimentConfig::from_toml_str("version = 1\nseed = 3").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.embedding_dim, 16);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("version = 1\nsede = 3").is_err());
        assert!(ExperimentConfig::from_toml_str("version = 1\n[solver]\nepsilon = 0.1\nepsilom = 2").is_err());
    }

    #[test]
    fn train_combinations_must_lie_in_space() {
        let text = "version = 1\ntrain_combinations = [\"rainy|day|dirt\"]";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
        let dup = "version = 1\ntrain_combinations = [\"sunny|day|dirt\", \"sunny|day|dirt\"]";
        assert!(ExperimentConfig::from_toml_str(dup).is_err());
    }

    #[test]
    fn sample_count_overrides() {
        let text = "version = 1\nsamples_per_combination = 2\n[sample_counts]\n\"snowy|night|grass\" = 5";
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.total_samples(), 7 * 2 + 5);
    }

    #[test]
    fn parameter_ranges_checked() {
        for text in [
            "version = 1\n[fusion]\nlambda = 1.5",
            "version = 1\n[solver]\nepsilon = 0.0",
            "version = 1\nembedding_dim = 1",
            "version = 1\n[generator]\nmin_slope = 3.0\nmax_slope = 2.0",
        ] {
            assert!(ExperimentConfig::from_toml_str(text).is_err(), "{text}");
        }
    }
}
