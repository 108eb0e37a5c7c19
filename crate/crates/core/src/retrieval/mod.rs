//! Indexing, exhaustive search, evaluation, persistence and synthetic data.

pub mod container;
mod eval;
mod index;
mod persist;
pub mod synth;

pub use container::{Blob, Container};
pub use eval::{average_precision, evaluate_map, ApResult, GroundTruth, MapReport, QueryTruth};
pub use index::{IndexMode, Query, RetrievalIndex, SearchHit};
pub use persist::{CodeSet, EmbeddedImages, Persist, SignatureSet};
pub use synth::{synth_corpus, SynthCorpus, SynthParams};
