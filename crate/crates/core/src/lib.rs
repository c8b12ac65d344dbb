//! Knowledge-graph population with masked language models.
//!
//! The crate covers the full offline pipeline: challenge data ingestion and
//! splitting ([`dataset`]), a model-agnostic masked-LM interface with a small
//! trainable reference model ([`lm`]), windowed-mask pre-training data and the
//! per-relation checkpoint family ([`pretraining`]), Wikidata silver pairs
//! ([`silver`]), prompt templates and decomposition ([`prompts`]), prompt
//! mining and ensembling ([`mining`]), candidate generation and selection
//! ([`candidates`]) and precision/recall/F1 scoring ([`eval`]).
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is on and runs sequentially otherwise.

pub mod candidates;
pub mod dataset;
pub mod eval;
pub mod io;
pub mod lm;
pub mod mining;
pub mod par;
pub mod pretraining;
pub mod prompts;
pub mod relation;
pub mod silver;

pub use candidates::{CandidateSet, SelectionConfig};
pub use dataset::{DatasetSplit, SplitName, TripleEntry};
pub use eval::{EntryScore, EvalReport};
pub use lm::{CheckpointId, FillMask, MaskQuery, ScoredToken};
pub use par::Execution;
pub use prompts::{DecompositionRule, PromptTemplate, Provenance};
pub use relation::{Relation, RelationInventory};
