//! Annotator-level stigma classification.
//!
//! The crate covers the whole pipeline from raw comment streams to
//! differential language analysis:
//!
//! - [`corpus`]: keyword matching, exclusion heuristics, sampling, and the
//!   dual-rater keyword disambiguation report.
//! - [`annotstore`]: worker and annotation records, the quality-control
//!   funnel, train/test splitting, label-rate statistics, and a synthetic
//!   annotator population generator.
//! - [`featurize`]: social-media tokenization, unigram and dictionary
//!   relative frequencies, standardization, and embedding tables.
//! - [`model`]: the Deep & Cross Network annotator model, its training loop,
//!   evaluation metrics, and linear baselines.
//! - [`jury`]: Monte-Carlo jury assembly and verdicts.
//! - [`stats`]: agree/disagree sets, univariate logistic regression,
//!   Benjamini-Hochberg, and Cohen's d.

pub mod annotstore;
pub mod corpus;
pub mod error;
pub mod featurize;
pub mod jury;
pub mod model;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
