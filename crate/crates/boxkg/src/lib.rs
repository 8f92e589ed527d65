//! Joint two-view knowledge graph embeddings: probabilistic concept boxes
//! for the ontology view, point vectors for the instance view, bridged by
//! a vector-to-box distance.

pub mod config;
pub mod cross;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod inst;
pub mod kgdata;
pub mod onto;
pub mod params;
pub mod synth;
pub mod trainer;
