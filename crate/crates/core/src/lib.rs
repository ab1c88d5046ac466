//! Deterministic construction of information-extraction alignment corpora.
//!
//! The crate covers everything around the training step of an IE-aligned
//! language model:
//!
//! * [`model`]: the canonical record types shared by every stage.
//! * [`ingest`]: dataset readers, NA / length filtering and mixtures.
//! * [`prompt`]: task/schema/format descriptions, demonstrations and the
//!   assembled instruction text.
//! * [`answer`]: triplet, JSON, natural-language and markdown answer
//!   serialization, the matching parsers, and CoT splicing.
//! * [`augment`]: LLM-assisted generation of descriptions, format templates
//!   and explanations, gated by a human review queue.
//! * [`metrics`]: exact-match F1, ROUGE-L, smoothed sentence BLEU, soft
//!   header matching and open-IE tuple matching.
//! * [`prefpairs`]: BLEU-scored preference pairs for DPO.
//! * [`client`]: the text-generation client (live HTTP or deterministic mock)
//!   with caching, retries and rate limiting.
//! * [`pipeline`]: end-to-end orchestration, manifests and reports.
//!
//! Every random decision is drawn from a seed derived from a master seed plus
//! stage and instance tags (see [`seed`]), so outputs never depend on worker
//! count or scheduling.

pub mod answer;
pub mod assets;
pub mod augment;
pub mod client;
pub mod error;
pub mod fixtures;
pub mod ingest;
pub mod jsonl;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod prefpairs;
pub mod prompt;
pub mod seed;
pub mod text;

pub use error::{Error, Result};
pub use model::{
    AlignmentExample, Extraction, FormatFamily, FormatSpec, IEInstance, PreferencePair, SchemaDef,
    TaskKind,
};
