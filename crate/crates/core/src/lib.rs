//! Event-plausibility evaluation over minimal sentence pairs.
//!
//! - [`corpus`]: datasets, sentence ids, human ratings and normalization.
//! - [`scoring`]: token log-probability aggregation and pairwise decisions.
//! - [`counts`]: syntactic triple counts and PPMI/LMI association.
//! - [`vectors`]: word vectors, thematic-fit prototypes and the event graph.
//! - [`stats`]: hypothesis tests, correlations, FDR and mixed models.
//! - [`probe`]: cross-validated linear probes over layer embeddings.
//! - [`harness`]: run configuration, the analysis session and output tables.
//! - [`synth`]: a small deterministic demo workspace.

pub mod corpus;
pub mod counts;
pub mod error;
pub mod harness;
pub mod probe;
pub mod scoring;
pub mod stats;
pub mod synth;
pub mod vectors;

pub use error::{Error, Result};
