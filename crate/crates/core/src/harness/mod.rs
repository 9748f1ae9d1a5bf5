// SPDX-License-Identifier: Apache-2.0

//! Benchmark orchestration.
//!
//! A [`BenchmarkSpec`] pairs one ID set with any number of named OOD sets.
//! ID images are the `ID` entries of the ID set's manifest, and OOD images
//! are the `OOD` entries of each OOD set's manifest. All images are scored
//! against the ID set's text features. Per-set metrics are averaged
//! arithmetically to give the per-config summary.

mod analysis;
mod report;

use std::collections::HashSet;

use serde::Serialize;
use thiserror::Error;

use crate::embedding_store::{
    join, DatasetManifest, EmbeddingSet, ImageFeatures, Split, StoreError,
};
use crate::metrics::{compute_metrics, LabeledScores, MetricResult, MetricsError};
use crate::scores::{score_images, ScoreConfig, ScoreError, ScoreFunction, Scorer};

pub use analysis::{
    extract_id, histogram, histogram_values, score_map, CategoryCount, Extraction, Histogram,
    ScoreCell, ScoreMap, DEFAULT_BINS,
};
pub use report::{format_real, round_sig6, write_report, Report, ReportFormat};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Runs `f` on a dedicated pool of `jobs` workers, or on the global pool
/// when `jobs` is zero.
pub fn with_workers<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Copy)]
pub struct SetRef<'a> {
    pub embeddings: &'a EmbeddingSet,
    pub manifest: &'a DatasetManifest,
}

impl<'a> SetRef<'a> {
    pub fn new(embeddings: &'a EmbeddingSet, manifest: &'a DatasetManifest) -> Self {
        SetRef {
            embeddings,
            manifest,
        }
    }

    /// Images of `split`, in canonical id order.
    pub fn images(&self, split: Split) -> Result<Vec<&'a ImageFeatures>> {
        Ok(join(self.embeddings, self.manifest)?.images(split))
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkSpec<'a> {
    pub id_set: SetRef<'a>,
    pub ood_sets: Vec<(String, SetRef<'a>)>,
    pub configs: Vec<ScoreConfig>,
}

impl<'a> BenchmarkSpec<'a> {
    pub fn validate(&self) -> Result<()> {
        if self.ood_sets.is_empty() {
            return Err(HarnessError::Config(
                "at least one OOD set is required".into(),
            ));
        }
        if self.configs.is_empty() {
            return Err(HarnessError::Config(
                "at least one score config is required".into(),
            ));
        }
        for config in &self.configs {
            config.validate()?;
        }
        let text = &self.id_set.embeddings.text;
        let mut names = HashSet::new();
        for (name, set) in &self.ood_sets {
            if !names.insert(name.as_str()) {
                return Err(HarnessError::Config(format!(
                    "duplicate OOD set name {name:?}"
                )));
            }
            let other = &set.embeddings.text;
            if other.dim != text.dim {
                return Err(HarnessError::Config(format!(
                    "OOD set {name:?} has dimensionality {}, ID set has {}",
                    other.dim, text.dim
                )));
            }
            if other.vocabulary != text.vocabulary {
                return Err(HarnessError::Config(format!(
                    "OOD set {name:?} has a different class vocabulary than the ID set"
                )));
            }
        }
        Ok(())
    }

    fn prepare(&self) -> Result<Prepared<'a>> {
        self.validate()?;
        let id_images = self.id_set.images(Split::Id)?;
        if id_images.is_empty() {
            return Err(HarnessError::Config(
                "ID set has no ID-labelled images".into(),
            ));
        }
        let mut ood = Vec::with_capacity(self.ood_sets.len());
        for (name, set) in &self.ood_sets {
            let images = set.images(Split::Ood)?;
            if images.is_empty() {
                return Err(HarnessError::Config(format!(
                    "OOD set {name:?} has no OOD-labelled images"
                )));
            }
            ood.push((name.clone(), images));
        }
        Ok(Prepared {
            scorer: Scorer::new(&self.id_set.embeddings.text)?,
            id_images,
            ood,
        })
    }
}

struct Prepared<'a> {
    scorer: Scorer<'a>,
    id_images: Vec<&'a ImageFeatures>,
    ood: Vec<(String, Vec<&'a ImageFeatures>)>,
}

impl Prepared<'_> {
    fn evaluate(&self, config: &ScoreConfig) -> Result<Vec<EvalRow>> {
        let values = |images: &[&ImageFeatures]| -> Result<Vec<f64>> {
            Ok(score_images(&self.scorer, images, config)?
                .into_iter()
                .map(|r| r.value)
                .collect())
        };
        let id_scores = values(&self.id_images)?;
        self.ood
            .iter()
            .map(|(name, images)| {
                let scores = LabeledScores::new(id_scores.clone(), values(images)?)?;
                Ok(EvalRow {
                    config: *config,
                    ood_set: name.clone(),
                    metrics: compute_metrics(&scores)?,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub config: ScoreConfig,
    pub ood_set: String,
    pub metrics: MetricResult,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigAverage {
    pub config: ScoreConfig,
    pub mean_fpr95: f64,
    pub mean_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub averages: Vec<ConfigAverage>,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let mut averages: Vec<ConfigAverage> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for row in &rows {
            match averages.iter().position(|a| a.config == row.config) {
                Some(i) => {
                    averages[i].mean_fpr95 += row.metrics.fpr95;
                    averages[i].mean_auroc += row.metrics.auroc;
                    counts[i] += 1;
                }
                None => {
                    averages.push(ConfigAverage {
                        config: row.config,
                        mean_fpr95: row.metrics.fpr95,
                        mean_auroc: row.metrics.auroc,
                    });
                    counts.push(1);
                }
            }
        }
        for (avg, n) in averages.iter_mut().zip(counts) {
            avg.mean_fpr95 /= n as f64;
            avg.mean_auroc /= n as f64;
        }
        EvalReport { rows, averages }
    }

    pub fn average(&self, config: &ScoreConfig) -> Option<&ConfigAverage> {
        self.averages.iter().find(|a| &a.config == config)
    }
}

/// Scores every (config, OOD set) cell of `spec`. Rows follow config order,
/// then OOD set order.
pub fn evaluate(spec: &BenchmarkSpec<'_>) -> Result<EvalReport> {
    let prepared = spec.prepare()?;
    let mut rows = Vec::with_capacity(spec.configs.len() * spec.ood_sets.len());
    for config in &spec.configs {
        rows.extend(prepared.evaluate(config)?);
    }
    Ok(EvalReport::from_rows(rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Lambda,
    Tau,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::Tau => "tau",
        }
    }
}

impl std::str::FromStr for SweepParameter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lambda" => Ok(SweepParameter::Lambda),
            "tau" => Ok(SweepParameter::Tau),
            other => Err(format!("unknown sweep parameter {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub mean_fpr95: f64,
    pub mean_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    /// Config every point is derived from; only the swept parameter changes.
    pub base: ScoreConfig,
    pub points: Vec<SweepPoint>,
}

fn sweep_values(parameter: SweepParameter, values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(HarnessError::Config(
            "sweep needs at least one value".into(),
        ));
    }
    for &v in values {
        let ok = match parameter {
            SweepParameter::Lambda => v.is_finite() && v >= 0.0,
            SweepParameter::Tau => v.is_finite() && v > 0.0,
        };
        if !ok {
            return Err(HarnessError::Config(format!(
                "invalid {} value {v}",
                parameter.name()
            )));
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(HarnessError::Config(format!(
            "duplicate {} value {}",
            parameter.name(),
            w[0]
        )));
    }
    Ok(sorted)
}

fn run_sweep(
    spec: &BenchmarkSpec<'_>,
    parameter: SweepParameter,
    base: ScoreConfig,
    values: &[f64],
) -> Result<SweepResult> {
    let values = sweep_values(parameter, values)?;
    let prepared = spec.prepare()?;
    let mut points = Vec::with_capacity(values.len());
    for value in values {
        let config = match parameter {
            SweepParameter::Lambda => base.with_lambda(value),
            SweepParameter::Tau => base.with_tau(value),
        };
        let report = EvalReport::from_rows(prepared.evaluate(&config)?);
        let avg = &report.averages[0];
        points.push(SweepPoint {
            value,
            mean_fpr95: avg.mean_fpr95,
            mean_auroc: avg.mean_auroc,
        });
    }
    Ok(SweepResult {
        parameter,
        base,
        points,
    })
}

/// Varies lambda of the first GL-MCM config in `spec`.
pub fn sweep_lambda(spec: &BenchmarkSpec<'_>, lambdas: &[f64]) -> Result<SweepResult> {
    let base = spec
        .configs
        .iter()
        .find(|c| c.function == ScoreFunction::Glmcm)
        .copied()
        .ok_or_else(|| HarnessError::Config("lambda sweep needs a glmcm config".into()))?;
    run_sweep(spec, SweepParameter::Lambda, base, lambdas)
}

/// Varies tau of the first config in `spec` whose function reads tau.
pub fn sweep_tau(spec: &BenchmarkSpec<'_>, taus: &[f64]) -> Result<SweepResult> {
    let base = spec
        .configs
        .iter()
        .find(|c| c.function.uses_tau())
        .copied()
        .ok_or_else(|| {
            HarnessError::Config("tau sweep needs a score function that uses tau".into())
        })?;
    run_sweep(spec, SweepParameter::Tau, base, taus)
}

pub fn sweep(
    spec: &BenchmarkSpec<'_>,
    parameter: SweepParameter,
    values: &[f64],
) -> Result<SweepResult> {
    match parameter {
        SweepParameter::Lambda => sweep_lambda(spec, values),
        SweepParameter::Tau => sweep_tau(spec, values),
    }
}
