//! Online polarity labelling of text streams.
//!
//! Texts are tokenized, batched and fed to skip-gram embedding models that
//! train as the stream flows. Each text is then labelled by comparing the
//! centroid of its word vectors with a small table of reference words.

pub mod baselines;
pub mod bench;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod labeller;
pub mod metrics;
pub mod model;
pub mod model_mgmt;
pub mod pipeline;
pub mod preprocess;
pub mod trend;
pub mod types;

pub use error::{ConfigError, ModelError, PipelineError};
pub use model::EmbeddingModel;
pub use pipeline::{Pipeline, PipelineConfig, RunSummary, SinkRecord};
pub use types::{HyperParams, Polarity, ReferenceTable, Strategy};
