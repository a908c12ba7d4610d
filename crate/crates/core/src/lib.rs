//! Membership scoring for pretraining-data detection.
//!
//! Given per-token summaries of a language model's next-token distributions
//! ([`TokenStats`]), this crate computes the Gap-K% score (bottom-k% of
//! window-smoothed, σ-normalized top-1 gaps) alongside the Loss, Zlib,
//! Neighbor, Min-K% and Min-K%++ baselines, evaluates labeled corpora with
//! AUROC and TPR at fixed FPR, and runs the window/k sweeps and ablations.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*F64`/`*F32` aliases below fix the common choices.

pub mod error;
pub mod harness;
pub mod metrics;
pub mod records;
pub mod scalar;
pub mod scoring;
pub mod synth;

pub use error::{ConfigError, CorpusError, HarnessError, MetricsError, ScoreError, SynthError};
pub use harness::{ExperimentPlan, SweepAxis, TableRow, Workers};
pub use metrics::{EvalReport, Histogram, MethodReport, ScoredSample};
pub use records::{parse_corpus, write_corpus, Corpus, Label, SampleRecord, TokenStats};
pub use scalar::Scalar;
pub use scoring::{Method, MethodConfig, SmoothingOrder, TokenScoreTrace};
pub use synth::{SynthConfig, ToyLm};

pub type TokenStatsF64 = TokenStats<f64>;
pub type SampleRecordF64 = SampleRecord<f64>;
pub type CorpusF64 = Corpus<f64>;
pub type ScoredSampleF64 = ScoredSample<f64>;
pub type TokenScoreTraceF64 = TokenScoreTrace<f64>;

pub type TokenStatsF32 = TokenStats<f32>;
pub type SampleRecordF32 = SampleRecord<f32>;
pub type CorpusF32 = Corpus<f32>;
pub type ScoredSampleF32 = ScoredSample<f32>;
pub type TokenScoreTraceF32 = TokenScoreTrace<f32>;
