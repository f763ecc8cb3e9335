//! File formats: binary feature tensors, PNM masks, and the JSON
//! prototype and head files.

mod ftn;
mod pnm;
mod prototypes;

pub use ftn::{read_feature_map, read_ftn, read_probs, write_feature_map, write_ftn, write_probs, FTN_MAGIC};
pub use pnm::{read_pbm, write_pbm, write_pgm16};
pub use prototypes::{
    load_heads, load_prototype_file, save_heads, save_prototype_file, FrozenBlock, HeadsFile, KeyedEntries,
    PerAttribute, PrototypeFile, TemperatureBlock, FORMAT_VERSION,
};
