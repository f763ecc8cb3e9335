//! Dataset directory layout.
//!
//! ```text
//! <dir>/manifest.json        sample list, labels, [CLS] embeddings, split
//! <dir>/prototypes.json      prototype table and the untrained heads
//! <dir>/samples/<id>/        image.ftn normal.ftn probs_image.ftn
//!                            probs_normal.ftn surface_normals.ftn
//!                            depth.ftn gt.pbm
//! ```

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use otfuse_core::io::{
    load_prototype_file, read_feature_map, read_pbm, read_probs, save_prototype_file, write_feature_map, write_ftn,
    write_pbm, write_probs,
};
use otfuse_core::scene::{LabeledEmbedding, PrototypeTable, SceneHeads};
use otfuse_core::{AttributeSpace, FeatureMap, PreSegProbs, SceneCombination};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::synth::{generate_scene, World};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROTOTYPE_FILE: &str = "prototypes.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Known,
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: usize,
    pub combination: String,
    pub split: Split,
    pub cls: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub embedding_dim: usize,
    pub attributes: AttributeSpace,
    pub train_combinations: Vec<String>,
    pub samples: Vec<SampleEntry>,
}

/// Everything the pipeline needs for one sample.
#[derive(Clone, Debug)]
pub struct LoadedSample {
    pub id: usize,
    pub combination: SceneCombination,
    pub cls: Vec<f64>,
    pub image_features: FeatureMap,
    pub normal_features: FeatureMap,
    pub image_probs: PreSegProbs,
    pub normal_probs: PreSegProbs,
    pub ground_truth: Vec<bool>,
}

pub fn sample_dir(root: &Path, id: usize) -> PathBuf {
    root.join("samples").join(format!("{id:05}"))
}

fn data_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| data_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| data_err(path, e))
}

/// Generates the dataset described by `cfg` into `root`.
pub fn generate_dataset(cfg: &ExperimentConfig, root: &Path) -> CliResult<Manifest> {
    let train = cfg.train_set()?;
    fs::create_dir_all(root.join("samples")).map_err(|e| data_err(root, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let world = World::new(cfg, &mut rng);
    let table = world.prototype_table()?;
    let heads = world.initial_heads(&mut rng, cfg.heads.temperature)?;
    save_prototype_file(&root.join(PROTOTYPE_FILE), &table, &heads)?;

    let mut samples = Vec::with_capacity(cfg.total_samples());
    for combination in cfg.attributes.combinations() {
        for _ in 0..cfg.samples_for(combination) {
            let id = samples.len();
            let scene = generate_scene(&world, cfg, combination, &mut rng)?;
            let dir = sample_dir(root, id);
            fs::create_dir_all(&dir).map_err(|e| data_err(&dir, e))?;
            write_feature_map(&dir.join("image.ftn"), &scene.image_features)?;
            write_feature_map(&dir.join("normal.ftn"), &scene.normal_features)?;
            write_feature_map(&dir.join("surface_normals.ftn"), &scene.surface_normals)?;
            write_probs(&dir.join("probs_image.ftn"), &scene.image_probs)?;
            write_probs(&dir.join("probs_normal.ftn"), &scene.normal_probs)?;
            let mut depth = BufWriter::new(File::create(dir.join("depth.ftn"))?);
            write_ftn(&mut depth, (scene.depth.height, scene.depth.width, 1), &scene.depth.data)?;
            depth.flush()?;
            let mut gt = BufWriter::new(File::create(dir.join("gt.pbm"))?);
            write_pbm(&mut gt, cfg.grid.width, cfg.grid.height, &scene.ground_truth)?;
            gt.flush()?;
            samples.push(SampleEntry {
                id,
                combination: cfg.attributes.key(combination),
                split: if train.contains(&combination) { Split::Known } else { Split::Unknown },
                cls: scene.cls.iter().map(|v| *v as f32).collect(),
            });
        }
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        height: cfg.grid.height,
        width: cfg.grid.width,
        embedding_dim: cfg.embedding_dim,
        attributes: cfg.attributes.clone(),
        train_combinations: cfg.train_combinations.clone(),
        samples,
    };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// An opened dataset directory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub table: PrototypeTable,
    /// Heads shipped with the prototype table (untrained).
    pub initial_heads: SceneHeads,
}

impl Dataset {
    pub fn open(root: &Path) -> CliResult<Self> {
        let path = root.join(MANIFEST_FILE);
        let text =
            fs::read_to_string(&path).map_err(|e| data_err(&path, format!("cannot read dataset manifest: {e}")))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| data_err(&path, e))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(data_err(&path, format!("unsupported manifest version {}", manifest.version)));
        }
        let proto_path = root.join(PROTOTYPE_FILE);
        let (table, initial_heads) = load_prototype_file(&proto_path).map_err(|e| data_err(&proto_path, e))?;
        if table.attributes != manifest.attributes {
            return Err(data_err(&proto_path, "attribute space differs from the manifest"));
        }
        for (i, s) in manifest.samples.iter().enumerate() {
            if s.id != i {
                return Err(data_err(&path, format!("sample ids must be 0..n in order; entry {i} has id {}", s.id)));
            }
            manifest.attributes.parse_key(&s.combination).map_err(|e| data_err(&path, e))?;
        }
        Ok(Self { root: root.to_path_buf(), manifest, table, initial_heads })
    }

    pub fn len(&self) -> usize {
        self.manifest.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.samples.is_empty()
    }

    pub fn train_set(&self) -> CliResult<HashSet<SceneCombination>> {
        self.manifest
            .train_combinations
            .iter()
            .map(|k| self.manifest.attributes.parse_key(k).map_err(CliError::from))
            .collect()
    }

    pub fn combination(&self, id: usize) -> CliResult<SceneCombination> {
        let entry = self.entry(id)?;
        Ok(self.manifest.attributes.parse_key(&entry.combination)?)
    }

    fn entry(&self, id: usize) -> CliResult<&SampleEntry> {
        self.manifest
            .samples
            .get(id)
            .ok_or_else(|| CliError::Data(format!("sample {id} not in dataset ({} samples)", self.len())))
    }

    /// Labelled `[CLS]` embeddings of the samples whose split is `split`,
    /// or of every sample.
    pub fn labeled_embeddings(&self, split: Option<Split>) -> CliResult<Vec<LabeledEmbedding>> {
        self.manifest
            .samples
            .iter()
            .filter(|s| split.is_none_or(|sp| s.split == sp))
            .map(|s| {
                Ok(LabeledEmbedding {
                    cls: s.cls.iter().map(|v| *v as f64).collect(),
                    labels: self.manifest.attributes.parse_key(&s.combination)?,
                })
            })
            .collect()
    }

    pub fn load_sample(&self, id: usize) -> CliResult<LoadedSample> {
        let entry = self.entry(id)?;
        let dir = sample_dir(&self.root, id);
        let wrap = |name: &str, e: otfuse_core::Error| data_err(&dir.join(name), e);
        let image_features = read_feature_map(&dir.join("image.ftn")).map_err(|e| wrap("image.ftn", e))?;
        let normal_features = read_feature_map(&dir.join("normal.ftn")).map_err(|e| wrap("normal.ftn", e))?;
        let image_probs = read_probs(&dir.join("probs_image.ftn")).map_err(|e| wrap("probs_image.ftn", e))?;
        let normal_probs = read_probs(&dir.join("probs_normal.ftn")).map_err(|e| wrap("probs_normal.ftn", e))?;
        let gt_path = dir.join("gt.pbm");
        let file = File::open(&gt_path).map_err(|e| data_err(&gt_path, e))?;
        let (w, h, ground_truth) = read_pbm(&mut BufReader::new(file)).map_err(|e| data_err(&gt_path, e))?;
        if (h, w) != (image_features.height(), image_features.width()) {
            return Err(data_err(
                &gt_path,
                format!("mask is {h}x{w}, features {}x{}", image_features.height(), image_features.width()),
            ));
        }
        Ok(LoadedSample {
            id,
            combination: self.manifest.attributes.parse_key(&entry.combination)?,
            cls: entry.cls.iter().map(|v| *v as f64).collect(),
            image_features,
            normal_features,
            image_probs,
            normal_probs,
            ground_truth,
        })
    }
}
