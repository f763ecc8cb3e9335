//! JSON prototype tables and attribute heads.
//!
//! Reals are stored as `f32`. Prototype entries are keyed by
//! `weather|time|road` and written in weather-major order; on load the
//! order is irrelevant but every combination must be present exactly once.

use std::fmt;
use std::fs;
use std::marker::PhantomData;
use std::path::Path;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scene::{Attribute, AttributeSpace, LinearHead, PrototypeTable, SceneHeads, DEFAULT_TEMPERATURE};
use crate::tensor::Matrix;

pub const FORMAT_VERSION: u32 = 1;

/// Map that keeps insertion order through serialisation.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyedEntries<T>(pub Vec<(String, T)>);

impl<T: Serialize> Serialize for KeyedEntries<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for KeyedEntries<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor<T>(PhantomData<T>);
        impl<'de, T: Deserialize<'de>> Visitor<'de> for EntriesVisitor<T> {
            type Value = KeyedEntries<T>;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of scene keys")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry()? {
                    out.push((k, v));
                }
                Ok(KeyedEntries(out))
            }
        }
        d.deserialize_map(EntriesVisitor(PhantomData))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerAttribute<T> {
    pub weather: T,
    pub time_of_day: T,
    pub road_type: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureBlock {
    #[serde(default)]
    pub weather: Option<f64>,
    #[serde(default)]
    pub time_of_day: Option<f64>,
    #[serde(default)]
    pub road_type: Option<f64>,
}

type Rows = Vec<Vec<f32>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrozenBlock {
    pub text_cls: KeyedEntries<Vec<f32>>,
}

/// On-disk prototype table together with the attribute heads it ships with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypeFile {
    pub version: u32,
    pub embedding_dim: usize,
    pub classes: Vec<String>,
    pub attributes: AttributeSpace,
    #[serde(default = "no_temperatures")]
    pub temperature: TemperatureBlock,
    pub text_embeddings: PerAttribute<Rows>,
    pub meta: Rows,
    pub prototypes: KeyedEntries<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<FrozenBlock>,
}

/// On-disk attribute heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadsFile {
    pub version: u32,
    pub attributes: AttributeSpace,
    #[serde(default = "no_temperatures")]
    pub temperature: TemperatureBlock,
    pub text_embeddings: PerAttribute<Rows>,
}

fn no_temperatures() -> TemperatureBlock {
    TemperatureBlock { weather: None, time_of_day: None, road_type: None }
}

fn to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().map(|v| *v as f32).collect()).collect()
}

fn from_rows(rows: &Rows, cols: usize, what: &str) -> Result<Matrix> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Format(format!("{what}: every row must have {cols} entries")));
    }
    let data: Vec<f64> = rows.iter().flatten().map(|v| *v as f64).collect();
    Matrix::new(rows.len(), cols, data)
}

fn heads_to_parts(heads: &SceneHeads) -> (TemperatureBlock, PerAttribute<Rows>) {
    (
        TemperatureBlock {
            weather: Some(heads.weather.tau),
            time_of_day: Some(heads.time_of_day.tau),
            road_type: Some(heads.road_type.tau),
        },
        PerAttribute {
            weather: to_rows(&heads.weather.text_embeddings),
            time_of_day: to_rows(&heads.time_of_day.text_embeddings),
            road_type: to_rows(&heads.road_type.text_embeddings),
        },
    )
}

fn heads_from_parts(
    space: &AttributeSpace,
    dim: usize,
    temperature: &TemperatureBlock,
    text: &PerAttribute<Rows>,
) -> Result<SceneHeads> {
    let build = |attr: Attribute, tau: Option<f64>, rows: &Rows| -> Result<LinearHead> {
        let m = from_rows(rows, dim, attr.name())?;
        if m.rows() != space.cardinality(attr) {
            return Err(Error::Format(format!(
                "{} head has {} rows for {} categories",
                attr.name(),
                m.rows(),
                space.cardinality(attr)
            )));
        }
        LinearHead::new(m, tau.unwrap_or(DEFAULT_TEMPERATURE))
    };
    Ok(SceneHeads {
        weather: build(Attribute::Weather, temperature.weather, &text.weather)?,
        time_of_day: build(Attribute::TimeOfDay, temperature.time_of_day, &text.time_of_day)?,
        road_type: build(Attribute::RoadType, temperature.road_type, &text.road_type)?,
    })
}

/// Puts keyed entries in weather-major order, rejecting gaps, duplicates
/// and unknown keys.
fn order_entries<'a, T>(space: &AttributeSpace, entries: &'a KeyedEntries<T>, what: &str) -> Result<Vec<&'a T>> {
    let mut slots: Vec<Option<&T>> = vec![None; space.combination_count()];
    for (key, v) in &entries.0 {
        let idx = space.index_of(space.parse_key(key)?)?;
        if slots[idx].replace(v).is_some() {
            return Err(Error::Format(format!("{what}: duplicate key `{key}`")));
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            s.ok_or_else(|| {
                let key = space.key(space.combination_at(i).expect("index in range"));
                Error::Format(format!("{what}: missing combination `{key}`"))
            })
        })
        .collect()
}

impl PrototypeFile {
    pub fn from_parts(table: &PrototypeTable, heads: &SceneHeads) -> Self {
        let space = &table.attributes;
        let (temperature, text_embeddings) = heads_to_parts(heads);
        let keys: Vec<String> = space.combinations().map(|c| space.key(c)).collect();
        let prototypes = KeyedEntries(keys.iter().cloned().zip(table.prototypes.iter().map(to_rows)).collect());
        let frozen = table.frozen_text_cls.as_ref().map(|f| FrozenBlock {
            text_cls: KeyedEntries(
                keys.iter().cloned().zip(f.iter().map(|v| v.iter().map(|x| *x as f32).collect())).collect(),
            ),
        });
        PrototypeFile {
            version: FORMAT_VERSION,
            embedding_dim: table.embedding_dim,
            classes: table.class_names.clone(),
            attributes: space.clone(),
            temperature,
            text_embeddings,
            meta: to_rows(&table.meta),
            prototypes,
            frozen,
        }
    }

    pub fn into_parts(self) -> Result<(PrototypeTable, SceneHeads)> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported prototype file version {}", self.version)));
        }
        self.attributes.validate()?;
        let dim = self.embedding_dim;
        let space = &self.attributes;
        let heads = heads_from_parts(space, dim, &self.temperature, &self.text_embeddings)?;
        let prototypes = order_entries(space, &self.prototypes, "prototypes")?
            .into_iter()
            .map(|rows| from_rows(rows, dim, "prototype"))
            .collect::<Result<Vec<_>>>()?;
        let frozen = match &self.frozen {
            Some(block) => Some(
                order_entries(space, &block.text_cls, "frozen.text_cls")?
                    .into_iter()
                    .map(|v| v.iter().map(|x| *x as f64).collect())
                    .collect(),
            ),
            None => None,
        };
        let meta = from_rows(&self.meta, dim, "meta")?;
        let table = PrototypeTable::new(self.attributes.clone(), self.classes.clone(), prototypes, meta, frozen)?;
        Ok((table, heads))
    }
}

impl HeadsFile {
    pub fn from_heads(space: &AttributeSpace, heads: &SceneHeads) -> Self {
        let (temperature, text_embeddings) = heads_to_parts(heads);
        HeadsFile { version: FORMAT_VERSION, attributes: space.clone(), temperature, text_embeddings }
    }

    pub fn into_heads(self) -> Result<(AttributeSpace, SceneHeads)> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported heads file version {}", self.version)));
        }
        self.attributes.validate()?;
        let dim = self.text_embeddings.weather.first().map_or(0, |r| r.len());
        let heads = heads_from_parts(&self.attributes, dim, &self.temperature, &self.text_embeddings)?;
        Ok((self.attributes, heads))
    }
}

pub fn save_prototype_file(path: &Path, table: &PrototypeTable, heads: &SceneHeads) -> Result<()> {
    let json = serde_json::to_string_pretty(&PrototypeFile::from_parts(table, heads))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_prototype_file(path: &Path) -> Result<(PrototypeTable, SceneHeads)> {
    let file: PrototypeFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.into_parts()
}

pub fn save_heads(path: &Path, space: &AttributeSpace, heads: &SceneHeads) -> Result<()> {
    let json = serde_json::to_string_pretty(&HeadsFile::from_heads(space, heads))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_heads(path: &Path) -> Result<(AttributeSpace, SceneHeads)> {
    let file: HeadsFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.into_heads()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{synthesize_anchor, ScenePosterior};
    use crate::tensor::DiscreteDistribution;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f32_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
        Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect()).unwrap()
    }

    fn fixture(seed: u64, frozen: bool) -> (PrototypeTable, SceneHeads) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = AttributeSpace::new(
            vec!["sunny".into(), "foggy".into()],
            vec!["day".into(), "night".into(), "dusk".into()],
            vec!["dirt".into(), "grass".into()],
        )
        .unwrap();
        let dim = 4;
        let prototypes = (0..space.combination_count()).map(|_| f32_matrix(&mut rng, 2, dim)).collect();
        let meta = f32_matrix(&mut rng, 2, dim);
        let frozen = frozen.then(|| {
            (0..space.combination_count())
                .map(|_| (0..dim).map(|_| rng.gen_range(-1.0f32..1.0) as f64).collect())
                .collect()
        });
        let heads = SceneHeads {
            weather: LinearHead::new(f32_matrix(&mut rng, 2, dim), 0.07).unwrap(),
            time_of_day: LinearHead::new(f32_matrix(&mut rng, 3, dim), 0.5).unwrap(),
            road_type: LinearHead::new(f32_matrix(&mut rng, 2, dim), 0.25).unwrap(),
        };
        let table =
            PrototypeTable::new(space, vec!["traversable".into(), "non_traversable".into()], prototypes, meta, frozen)
                .unwrap();
        (table, heads)
    }

    #[test]
    fn keys_are_written_weather_major() {
        let (t, h) = fixture(1, false);
        let json = serde_json::to_string(&PrototypeFile::from_parts(&t, &h)).unwrap();
        let first = json.find("\"sunny|day|dirt\"").unwrap();
        let second = json.find("\"sunny|day|grass\"").unwrap();
        let later = json.find("\"foggy|day|dirt\"").unwrap();
        assert!(first < second && second < later);
        assert!(!json.contains("frozen"));
    }

    #[test]
    fn missing_and_unknown_keys_are_rejected() {
        let (t, h) = fixture(2, false);
        let mut file = PrototypeFile::from_parts(&t, &h);
        file.prototypes.0.pop();
        assert!(matches!(file.clone().into_parts(), Err(Error::Format(_))));
        file.prototypes.0.push(("rainy|day|dirt".into(), vec![vec![1.0; 4]; 2]));
        assert!(file.into_parts().is_err());
        let text = serde_json::to_string(&PrototypeFile::from_parts(&t, &h)).unwrap();
        let extra = text.replacen('{', "{\"surprise\":1,", 1);
        assert!(serde_json::from_str::<PrototypeFile>(&extra).is_err());
    }

    #[test]
    fn missing_temperature_defaults() {
        let (t, h) = fixture(3, false);
        let mut file = PrototypeFile::from_parts(&t, &h);
        file.temperature.road_type = None;
        let (_, heads) = file.into_parts().unwrap();
        assert_eq!(heads.road_type.tau, DEFAULT_TEMPERATURE);
    }

    #[test]
    fn heads_file_round_trip() {
        let (t, h) = fixture(4, false);
        let file = HeadsFile::from_heads(&t.attributes, &h);
        let back: HeadsFile = serde_json::from_str(&serde_json::to_string(&file).unwrap()).unwrap();
        let (space, heads) = back.into_heads().unwrap();
        assert_eq!(space, t.attributes);
        assert_eq!(heads, h);
    }

    proptest! {
        #[test]
        fn round_trip_reproduces_anchors_bit_identically(seed in any::<u64>(), frozen in any::<bool>()) {
            let (t, h) = fixture(seed, frozen);
            let json = serde_json::to_string_pretty(&PrototypeFile::from_parts(&t, &h)).unwrap();
            let (t2, h2) = serde_json::from_str::<PrototypeFile>(&json).unwrap().into_parts().unwrap();
            prop_assert_eq!(&t2, &t);
            prop_assert_eq!(&h2, &h);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut m = |n: usize| {
                DiscreteDistribution::from_weights(&(0..n).map(|_| rng.gen_range(0.01..1.0)).collect::<Vec<_>>()).unwrap()
            };
            let post = ScenePosterior::from_marginals(m(2), m(3), m(2)).unwrap();
            prop_assert_eq!(synthesize_anchor(&post, &t).unwrap(), synthesize_anchor(&post, &t2).unwrap());
        }
    }
}
