//! Knowledge-graph-enhanced document-level event extraction.
//!
//! The pipeline ingests a knowledge graph, trains relation-aware node
//! embeddings with a link-prediction objective, tags entity mentions,
//! encodes documents at the character level, and decodes event records by
//! expanding an entity-based DAG one role at a time. Every stage is
//! deterministic given its seed, and every backward pass is written by hand
//! and verifiable against central differences.

pub mod config;
pub mod doc;
pub mod ds;
pub mod edag;
pub mod embed;
pub mod eval;
pub mod error;
pub mod fixtures;
pub mod io;
pub mod kg;
pub mod ner;
pub mod numeric;
pub mod pipeline;

pub use error::{Error, Result};
