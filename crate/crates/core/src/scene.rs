//! Scene anchor generation.
//!
//! A scene is a combination of one weather, one time-of-day and one road
//! type category. Three linear heads over the image `[CLS]` embedding give
//! per-attribute posteriors; their tensor product is the scene posterior,
//! and the scene anchor is the posterior-weighted sum of cached per-scene,
//! per-class prototypes. No text encoder is involved at inference.

use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::tensor::{dot, softmax_with_temperature, tensor_product_joint, DiscreteDistribution, Matrix};

/// Temperature used when a head ships without one.
pub const DEFAULT_TEMPERATURE: f64 = 0.07;
/// Traversable and non-traversable.
pub const DEFAULT_NUM_CLASSES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Weather,
    TimeOfDay,
    RoadType,
}

impl Attribute {
    pub const ALL: [Attribute; 3] = [Attribute::Weather, Attribute::TimeOfDay, Attribute::RoadType];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Weather => "weather",
            Attribute::TimeOfDay => "time_of_day",
            Attribute::RoadType => "road_type",
        }
    }
}

/// Category names for each of the three scene attributes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpace {
    pub weather: Vec<String>,
    pub time_of_day: Vec<String>,
    pub road_type: Vec<String>,
}

/// One point of the combination space, as category indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SceneCombination {
    pub weather: usize,
    pub time_of_day: usize,
    pub road_type: usize,
}

impl SceneCombination {
    pub fn label(&self, attribute: Attribute) -> usize {
        match attribute {
            Attribute::Weather => self.weather,
            Attribute::TimeOfDay => self.time_of_day,
            Attribute::RoadType => self.road_type,
        }
    }
}

impl AttributeSpace {
    pub fn new(weather: Vec<String>, time_of_day: Vec<String>, road_type: Vec<String>) -> Result<Self> {
        let space = Self { weather, time_of_day, road_type };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        for attr in Attribute::ALL {
            let names = self.categories(attr);
            if names.is_empty() {
                return Err(Error::Data(format!("attribute `{}` has no categories", attr.name())));
            }
            for (i, n) in names.iter().enumerate() {
                if n.is_empty() || n.contains('|') {
                    return Err(Error::Data(format!("invalid category name `{n}`")));
                }
                if names[..i].contains(n) {
                    return Err(Error::Data(format!("duplicate category `{n}` in attribute `{}`", attr.name())));
                }
            }
        }
        Ok(())
    }

    pub fn categories(&self, attribute: Attribute) -> &[String] {
        match attribute {
            Attribute::Weather => &self.weather,
            Attribute::TimeOfDay => &self.time_of_day,
            Attribute::RoadType => &self.road_type,
        }
    }

    pub fn cardinality(&self, attribute: Attribute) -> usize {
        self.categories(attribute).len()
    }

    /// `|W|·|D|·|R|`.
    pub fn combination_count(&self) -> usize {
        self.weather.len() * self.time_of_day.len() * self.road_type.len()
    }

    /// Weather-major flat index of a combination.
    pub fn index_of(&self, c: SceneCombination) -> Result<usize> {
        if c.weather >= self.weather.len()
            || c.time_of_day >= self.time_of_day.len()
            || c.road_type >= self.road_type.len()
        {
            return Err(Error::Data(format!("combination {c:?} outside attribute space")));
        }
        Ok((c.weather * self.time_of_day.len() + c.time_of_day) * self.road_type.len() + c.road_type)
    }

    pub fn combination_at(&self, index: usize) -> Result<SceneCombination> {
        if index >= self.combination_count() {
            return Err(Error::Data(format!("combination index {index} out of range")));
        }
        let road_type = index % self.road_type.len();
        let rest = index / self.road_type.len();
        Ok(SceneCombination {
            weather: rest / self.time_of_day.len(),
            time_of_day: rest % self.time_of_day.len(),
            road_type,
        })
    }

    /// All combinations in weather-major order.
    pub fn combinations(&self) -> impl Iterator<Item = SceneCombination> + '_ {
        (0..self.combination_count()).map(move |i| self.combination_at(i).expect("index in range"))
    }

    /// `weather|time|road` composite key.
    pub fn key(&self, c: SceneCombination) -> String {
        format!("{}|{}|{}", self.weather[c.weather], self.time_of_day[c.time_of_day], self.road_type[c.road_type])
    }

    pub fn parse_key(&self, key: &str) -> Result<SceneCombination> {
        let parts: Vec<&str> = key.split('|').collect();
        if parts.len() != 3 {
            return Err(Error::Data(format!("scene key `{key}` is not weather|time|road")));
        }
        let find = |attr: Attribute, name: &str| {
            self.categories(attr)
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Data(format!("unknown {} category `{name}`", attr.name())))
        };
        Ok(SceneCombination {
            weather: find(Attribute::Weather, parts[0])?,
            time_of_day: find(Attribute::TimeOfDay, parts[1])?,
            road_type: find(Attribute::RoadType, parts[2])?,
        })
    }
}

/// Tempered linear classifier over the image embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearHead {
    /// One text embedding per category, `categories × embedding_dim`.
    pub text_embeddings: Matrix,
    pub tau: f64,
}

impl LinearHead {
    pub fn new(text_embeddings: Matrix, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Parameter { name: "tau", reason: format!("must be positive, got {tau}") });
        }
        if text_embeddings.rows() == 0 {
            return Err(shape("head needs at least one category"));
        }
        Ok(Self { text_embeddings, tau })
    }

    pub fn categories(&self) -> usize {
        self.text_embeddings.rows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.text_embeddings.cols()
    }

    /// Raw inner products `⟨cls, T_i⟩`.
    pub fn logits(&self, cls: &[f64]) -> Result<Vec<f64>> {
        if cls.len() != self.embedding_dim() {
            return Err(shape(format!("embedding has dimension {}, head expects {}", cls.len(), self.embedding_dim())));
        }
        Ok(self.text_embeddings.row_iter().map(|t| dot(cls, t)).collect())
    }
}

/// Softmax over `⟨cls, T_i⟩ / τ`, on unnormalised vectors.
pub fn classify_attribute(cls: &[f64], head: &LinearHead) -> Result<DiscreteDistribution> {
    softmax_with_temperature(&head.logits(cls)?, head.tau)
}

/// The three attribute classifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneHeads {
    pub weather: LinearHead,
    pub time_of_day: LinearHead,
    pub road_type: LinearHead,
}

impl SceneHeads {
    pub fn get(&self, attribute: Attribute) -> &LinearHead {
        match attribute {
            Attribute::Weather => &self.weather,
            Attribute::TimeOfDay => &self.time_of_day,
            Attribute::RoadType => &self.road_type,
        }
    }

    pub fn get_mut(&mut self, attribute: Attribute) -> &mut LinearHead {
        match attribute {
            Attribute::Weather => &mut self.weather,
            Attribute::TimeOfDay => &mut self.time_of_day,
            Attribute::RoadType => &mut self.road_type,
        }
    }

    /// Checks head sizes against an attribute space.
    pub fn check_space(&self, space: &AttributeSpace) -> Result<()> {
        for attr in Attribute::ALL {
            if self.get(attr).categories() != space.cardinality(attr) {
                return Err(shape(format!(
                    "{} head has {} categories, attribute space has {}",
                    attr.name(),
                    self.get(attr).categories(),
                    space.cardinality(attr)
                )));
            }
        }
        Ok(())
    }
}

/// Factorised scene posterior.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenePosterior {
    pub weather: DiscreteDistribution,
    pub time_of_day: DiscreteDistribution,
    pub road_type: DiscreteDistribution,
    /// Weather-major tensor product of the three marginals.
    pub joint: DiscreteDistribution,
}

impl ScenePosterior {
    pub fn from_marginals(
        weather: DiscreteDistribution,
        time_of_day: DiscreteDistribution,
        road_type: DiscreteDistribution,
    ) -> Result<Self> {
        let joint = tensor_product_joint(&weather, &time_of_day, &road_type)?;
        Ok(Self { weather, time_of_day, road_type, joint })
    }

    /// Point mass on one combination.
    pub fn one_hot(space: &AttributeSpace, c: SceneCombination) -> Result<Self> {
        Self::from_marginals(
            DiscreteDistribution::one_hot(space.weather.len(), c.weather)?,
            DiscreteDistribution::one_hot(space.time_of_day.len(), c.time_of_day)?,
            DiscreteDistribution::one_hot(space.road_type.len(), c.road_type)?,
        )
    }

    pub fn marginal(&self, attribute: Attribute) -> &DiscreteDistribution {
        match attribute {
            Attribute::Weather => &self.weather,
            Attribute::TimeOfDay => &self.time_of_day,
            Attribute::RoadType => &self.road_type,
        }
    }
}

pub fn infer_scene_posterior(cls: &[f64], heads: &SceneHeads) -> Result<ScenePosterior> {
    ScenePosterior::from_marginals(
        classify_attribute(cls, &heads.weather)?,
        classify_attribute(cls, &heads.time_of_day)?,
        classify_attribute(cls, &heads.road_type)?,
    )
}

/// Cached scene prototypes for every combination and class.
#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeTable {
    pub attributes: AttributeSpace,
    pub embedding_dim: usize,
    pub class_names: Vec<String>,
    /// Indexed by weather-major combination; each entry is `classes × dim`.
    pub prototypes: Vec<Matrix>,
    /// Meta-traversability embeddings, `classes × dim`.
    pub meta: Matrix,
    /// Optional frozen text `[CLS]` per combination, for regularisation.
    pub frozen_text_cls: Option<Vec<Vec<f64>>>,
}

impl PrototypeTable {
    pub fn new(
        attributes: AttributeSpace,
        class_names: Vec<String>,
        prototypes: Vec<Matrix>,
        meta: Matrix,
        frozen_text_cls: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let table = Self { embedding_dim: meta.cols(), attributes, class_names, prototypes, meta, frozen_text_cls };
        table.validate()?;
        Ok(table)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.attributes.validate()?;
        let (k, dim) = (self.num_classes(), self.embedding_dim);
        if k == 0 || dim == 0 {
            return Err(shape("prototype table needs at least one class and one dimension"));
        }
        if self.meta.shape() != (k, dim) {
            return Err(shape(format!("meta is {:?}, expected ({k}, {dim})", self.meta.shape())));
        }
        if self.prototypes.len() != self.attributes.combination_count() {
            return Err(shape(format!(
                "{} prototype entries for {} combinations",
                self.prototypes.len(),
                self.attributes.combination_count()
            )));
        }
        for (s, p) in self.prototypes.iter().enumerate() {
            if p.shape() != (k, dim) {
                return Err(shape(format!("prototype {s} is {:?}, expected ({k}, {dim})", p.shape())));
            }
            if p.row_iter().any(|r| r.iter().all(|v| *v == 0.0)) {
                return Err(Error::Data(format!("prototype {s} has a zero-norm class vector")));
            }
        }
        if let Some(frozen) = &self.frozen_text_cls {
            if frozen.len() != self.prototypes.len() || frozen.iter().any(|v| v.len() != dim) {
                return Err(shape("frozen text block does not cover the combination space"));
            }
        }
        Ok(())
    }

    pub fn prototype(&self, c: SceneCombination) -> Result<&Matrix> {
        Ok(&self.prototypes[self.attributes.index_of(c)?])
    }
}

/// Scene anchor `T̄_S[k] = Σ_s P(s|I) · prototypes[s][k]`, `classes × dim`.
pub fn synthesize_anchor(posterior: &ScenePosterior, table: &PrototypeTable) -> Result<Matrix> {
    if posterior.joint.len() != table.prototypes.len() {
        return Err(shape(format!(
            "posterior covers {} combinations, table has {}",
            posterior.joint.len(),
            table.prototypes.len()
        )));
    }
    let mut out = vec![0.0; table.num_classes() * table.embedding_dim];
    for (w, proto) in posterior.joint.as_slice().iter().zip(&table.prototypes) {
        if *w == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(proto.as_slice()) {
            *o += w * p;
        }
    }
    Matrix::new(table.num_classes(), table.embedding_dim, out)
}

/// One supervised sample for head training.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledEmbedding {
    pub cls: Vec<f64>,
    pub labels: SceneCombination,
}

/// Mean softmax cross-entropy of one head on `(embedding, label)` pairs
/// and its analytic gradient w.r.t. the text embeddings:
/// `∂L/∂T_c = mean_n (p_nc − [c = y_n]) · x_n / τ`.
pub fn head_loss_and_gradient(head: &LinearHead, samples: &[(&[f64], usize)]) -> Result<(f64, Matrix)> {
    if samples.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let (k, dim) = head.text_embeddings.shape();
    let mut grad = vec![0.0; k * dim];
    let mut loss = 0.0;
    let scale = 1.0 / samples.len() as f64;
    for (x, y) in samples {
        if *y >= k {
            return Err(Error::Data(format!("label {y} out of range for {k} categories")));
        }
        let p = classify_attribute(x, head)?;
        loss -= p[*y].max(f64::MIN_POSITIVE).ln() * scale;
        for c in 0..k {
            let coef = (p[c] - if c == *y { 1.0 } else { 0.0 }) * scale / head.tau;
            for (g, xi) in grad[c * dim..(c + 1) * dim].iter_mut().zip(x.iter()) {
                *g += coef * xi;
            }
        }
    }
    Ok((loss, Matrix::new(k, dim, grad)?))
}

/// Summed per-attribute cross-entropy over a labelled dataset.
pub fn scene_classification_loss(heads: &SceneHeads, dataset: &[LabeledEmbedding]) -> Result<f64> {
    let mut total = 0.0;
    for attr in Attribute::ALL {
        let samples: Vec<(&[f64], usize)> = dataset.iter().map(|s| (s.cls.as_slice(), s.labels.label(attr))).collect();
        total += head_loss_and_gradient(heads.get(attr), &samples)?.0;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub heads: SceneHeads,
    /// Summed loss before each step, then after the last one.
    pub loss_trace: Vec<f64>,
}

/// Full-batch gradient descent on the text embeddings of all three heads;
/// temperatures stay fixed.
pub fn train_heads(
    dataset: &[LabeledEmbedding],
    heads: &SceneHeads,
    steps: usize,
    learning_rate: f64,
) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::Parameter { name: "learning_rate", reason: format!("got {learning_rate}") });
    }
    let mut heads = heads.clone();
    let mut trace = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let mut total = 0.0;
        for attr in Attribute::ALL {
            let samples: Vec<(&[f64], usize)> =
                dataset.iter().map(|s| (s.cls.as_slice(), s.labels.label(attr))).collect();
            let head = heads.get_mut(attr);
            let (loss, grad) = head_loss_and_gradient(head, &samples)?;
            total += loss;
            let updated: Vec<f64> = head
                .text_embeddings
                .as_slice()
                .iter()
                .zip(grad.as_slice())
                .map(|(t, g)| t - learning_rate * g)
                .collect();
            head.text_embeddings = Matrix::new(head.text_embeddings.rows(), head.text_embeddings.cols(), updated)?;
        }
        trace.push(total);
    }
    trace.push(scene_classification_loss(&heads, dataset)?);
    Ok(TrainOutcome { heads, loss_trace: trace })
}

/// Fraction of samples whose argmax prediction matches the label, per attribute.
pub fn attribute_accuracy(heads: &SceneHeads, dataset: &[LabeledEmbedding]) -> Result<[f64; 3]> {
    let mut correct = [0usize; 3];
    for s in dataset {
        for (slot, attr) in Attribute::ALL.into_iter().enumerate() {
            if classify_attribute(&s.cls, heads.get(attr))?.argmax() == s.labels.label(attr) {
                correct[slot] += 1;
            }
        }
    }
    let n = dataset.len().max(1) as f64;
    Ok(correct.map(|c| c as f64 / n))
}
