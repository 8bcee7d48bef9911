//! Analogical mapping between procedural texts.
//!
//! Entities of a base text are mapped to entities of a target text by the
//! similarity of the roles they play: the semantic-role questions their
//! spans answer. The pipeline is
//!
//! 1. [`filter`]: drop uninformative question-answer records,
//! 2. [`cluster`]: merge surface variants of the same entity,
//! 3. [`similarity`]: score every base × target entity pair,
//! 4. [`mapper`]: beam search for the best consistent mappings.
//!
//! [`mining`] ranks all document pairs of a corpus and [`metrics`] evaluates
//! rankings and mappings against human judgements.

pub mod cluster;
pub mod config;
pub mod error;
pub mod filter;
pub mod interchange;
pub mod mapper;
pub mod metrics;
pub mod mining;
pub mod similarity;

pub use config::{EngineConfig, RunMetadata};
pub use error::{Error, Result};
