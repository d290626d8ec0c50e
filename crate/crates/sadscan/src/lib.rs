//! Trace analytics for sensitive-access behavior profiling.
//!
//! `sadscan` turns method-call execution traces into 52-feature
//! sensitive-access distribution (SAD) profiles, classifies them with a
//! deterministic random forest, and evaluates detectors under
//! cross-validation, independent holdout, and multi-year span studies.
//! A synthetic corpus generator produces labeled trace populations with
//! exact, count-level feature targets for desk-scale experiments.
//!
//! Pipeline overview:
//!
//! ```text
//! .trc traces ──► trace_model ──► sad_extractor ──► profile CSV
//!                      ▲               ▲                │
//!                 synth_gen        catalog (.ssl)       ▼
//!                                              classifier / eval_harness
//! ```

pub mod catalog;
pub mod classifier;
pub mod cli;
pub mod eval_harness;
pub mod sad_extractor;
pub mod seeding;
pub mod synth_gen;
pub mod trace_model;

pub use catalog::{SensitiveRole, SinkCategory, SourceCategory, SourceSinkCatalog};
pub use classifier::{Class, ForestModel, ForestParams, LabeledSample};
pub use eval_harness::{ConfusionCounts, EvalReport, MetricTriple, SummaryStat};
pub use sad_extractor::{DynamicCallGraph, ExtractOptions, SadProfile, FEATURE_COUNT};
pub use synth_gen::{CorpusSpec, CountTemplate};
pub use trace_model::{CallRecord, Label, MethodSig, Trace};
