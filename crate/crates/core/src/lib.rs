//! Span-level machine translation quality evaluation over hierarchical error
//! taxonomies.
//!
//! The crate is organised bottom-up:
//!
//! - [`taxonomy`] loads and queries error hierarchies (LQM and MQM built in).
//! - [`corpus`] reads and writes segments and error spans as JSONL.
//! - [`scoring`] computes severity-weighted per-segment, macro and micro scores.
//! - [`agreement`] measures pairwise inter-annotator agreement.
//! - [`bleu`] provides a self-contained sentence-level BLEU.
//! - [`analysis`] builds distribution tables, correlations and length-bucket
//!   robustness reports.
//! - [`render`] formats any report as a plain-text table.
//!
//! Batch routines take an [`Execution`] and run data-parallel through rayon
//! when the `parallel` feature is enabled.

pub mod agreement;
pub mod analysis;
pub mod bleu;
pub mod corpus;
pub mod exec;
pub mod measure;
pub mod render;
pub mod scoring;
pub mod taxonomy;

pub use corpus::{AnnotationSet, Corpus, Dialect, Direction, ErrorSpan, Segment, Severity};
pub use exec::Execution;
pub use measure::Measure;
pub use scoring::{ScoreOptions, ScoreReport, WeightScheme};
pub use taxonomy::{Layer, TaxonomyPath, TaxonomySchema};
