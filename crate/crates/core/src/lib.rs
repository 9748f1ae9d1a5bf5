// SPDX-License-Identifier: Apache-2.0

//! Zero-shot out-of-distribution detection over pre-extracted
//! vision-language features.
//!
//! The crate is organised bottom-up:
//!
//! * [`embedding_store`] reads and writes the `.glmc` feature container and
//!   the CSV dataset manifests, and joins the two.
//! * [`scores`] holds the concept-matching confidence scores (MCM, L-MCM,
//!   GL-MCM and the ablation variants).
//! * [`metrics`] computes AUROC and FPR at a target TPR.
//! * [`harness`] runs benchmarks, parameter sweeps, histograms, ID
//!   extraction and score maps, and renders reports.
//! * [`cli`] is the `oodbench` command-line front end.

pub mod cli;
pub mod embedding_store;
pub mod harness;
pub mod metrics;
pub mod scores;

pub use embedding_store::{
    join, read_embedding_set, read_manifest, write_embedding_set, ClassVocabulary, DatasetManifest,
    EmbeddingSet, ImageFeatures, JoinedTable, ManifestEntry, Split, StoreError, TextFeatures,
};
pub use harness::{BenchmarkSpec, EvalReport, HarnessError, SetRef, SweepParameter, SweepResult};
pub use metrics::{LabeledScores, MetricResult, MetricsError};
pub use scores::{ScoreConfig, ScoreError, ScoreFunction, ScoreRecord, Scorer};
