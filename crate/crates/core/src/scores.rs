// SPDX-License-Identifier: Apache-2.0

//! Concept-matching confidence scores.
//!
//! Every score starts from the cosine similarities between an image's
//! features and the per-class text features:
//!
//! * the global feature gives one similarity per class,
//! * every local region gives its own row of similarities.
//!
//! Softmax-based scores apply a temperature-scaled softmax to each of those
//! rows. MCM takes the maximum global probability, L-MCM the maximum over
//! every region and class, and GL-MCM adds the two as `mcm + lambda * lmcm`.
//! The remaining functions are ablation variants built from the same
//! similarity rows.
//!
//! Ties in any argmax resolve to the lowest class index.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::embedding_store::{EmbeddingSet, ImageFeatures, TextFeatures};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid score config: {0}")]
    Config(String),
    #[error("image {image_id}: {source}")]
    Image {
        image_id: String,
        #[source]
        source: Box<ScoreError>,
    },
}

pub type Result<T> = std::result::Result<T, ScoreError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScoreFunction {
    /// Maximum softmax probability of the global feature.
    Mcm,
    /// Maximum softmax probability over all local regions.
    Lmcm,
    /// `mcm + lambda * lmcm`.
    Glmcm,
    /// Negative global entropy plus negative maximum local entropy.
    Entropy,
    /// Variance of global similarities plus the maximum local variance.
    Var,
    /// Maximum global cosine plus maximum local cosine.
    Cos,
    /// `max(mcm, lmcm)`.
    GOrL,
    /// Best class-wise mean of local probabilities, grouping regions by their argmax.
    ClassAvg,
    /// `class_avg + mcm`.
    ClassAvgPlusMcm,
}

impl ScoreFunction {
    pub const ALL: [ScoreFunction; 9] = [
        ScoreFunction::Mcm,
        ScoreFunction::Lmcm,
        ScoreFunction::Glmcm,
        ScoreFunction::Entropy,
        ScoreFunction::Var,
        ScoreFunction::Cos,
        ScoreFunction::GOrL,
        ScoreFunction::ClassAvg,
        ScoreFunction::ClassAvgPlusMcm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreFunction::Mcm => "mcm",
            ScoreFunction::Lmcm => "lmcm",
            ScoreFunction::Glmcm => "glmcm",
            ScoreFunction::Entropy => "entropy",
            ScoreFunction::Var => "var",
            ScoreFunction::Cos => "cos",
            ScoreFunction::GOrL => "g_or_l",
            ScoreFunction::ClassAvg => "class_avg",
            ScoreFunction::ClassAvgPlusMcm => "class_avg_mcm",
        }
    }

    pub fn uses_tau(self) -> bool {
        !matches!(self, ScoreFunction::Var | ScoreFunction::Cos)
    }

    pub fn uses_lambda(self) -> bool {
        self == ScoreFunction::Glmcm
    }
}

impl fmt::Display for ScoreFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreFunction {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let function = match key.as_str() {
            "mcm" => ScoreFunction::Mcm,
            "lmcm" | "l_mcm" => ScoreFunction::Lmcm,
            "glmcm" | "gl_mcm" => ScoreFunction::Glmcm,
            "entropy" => ScoreFunction::Entropy,
            "var" | "variance" => ScoreFunction::Var,
            "cos" | "cosine" => ScoreFunction::Cos,
            "g_or_l" | "g_or_l_mcm" => ScoreFunction::GOrL,
            "class_avg" | "l_class_avg" => ScoreFunction::ClassAvg,
            "class_avg_mcm" | "class_avg+mcm" | "class_avg_plus_mcm" => {
                ScoreFunction::ClassAvgPlusMcm
            }
            _ => {
                let known: Vec<&str> = ScoreFunction::ALL.iter().map(|f| f.name()).collect();
                return Err(format!(
                    "unknown score function {s:?} (expected one of {})",
                    known.join(", ")
                ));
            }
        };
        Ok(function)
    }
}

impl Serialize for ScoreFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

/// Score function plus its temperature and global/local weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreConfig {
    pub function: ScoreFunction,
    pub tau: f64,
    pub lambda: f64,
}

impl ScoreConfig {
    pub const DEFAULT_TAU: f64 = 1.0;
    pub const DEFAULT_LAMBDA: f64 = 0.5;

    pub fn new(function: ScoreFunction, tau: f64, lambda: f64) -> Result<Self> {
        let config = ScoreConfig {
            function,
            tau,
            lambda,
        };
        config.validate()?;
        Ok(config)
    }

    /// `tau = 1.0`, `lambda = 0.5`.
    pub fn reference(function: ScoreFunction) -> Self {
        ScoreConfig {
            function,
            tau: Self::DEFAULT_TAU,
            lambda: Self::DEFAULT_LAMBDA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(ScoreError::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(ScoreError::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn with_function(self, function: ScoreFunction) -> Self {
        ScoreConfig { function, ..self }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        ScoreConfig { tau, ..self }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        ScoreConfig { lambda, ..self }
    }

    /// Stable label listing only the parameters the function reads,
    /// e.g. `glmcm/tau=1/lambda=0.5`, `mcm/tau=1`, `cos`.
    pub fn name(&self) -> String {
        let mut name = self.function.name().to_string();
        if self.function.uses_tau() {
            name.push_str(&format!("/tau={}", self.tau));
        }
        if self.function.uses_lambda() {
            name.push_str(&format!("/lambda={}", self.lambda));
        }
        name
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig::reference(ScoreFunction::Glmcm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreComponents {
    pub global: f64,
    pub local: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRecord {
    pub image_id: String,
    pub value: f64,
    /// Global and local parts for scores that combine both.
    pub components: Option<ScoreComponents>,
    pub config: ScoreConfig,
}

/// Cosine similarities of one image against every class.
#[derive(Debug, Clone, PartialEq)]
pub struct Similarities {
    classes: usize,
    pub global: Vec<f64>,
    /// `regions x classes`, row-major.
    pub local: Vec<f64>,
}

impl Similarities {
    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn regions(&self) -> usize {
        self.local.len() / self.classes
    }

    pub fn local_row(&self, region: usize) -> &[f64] {
        &self.local[region * self.classes..(region + 1) * self.classes]
    }

    pub fn local_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.local.chunks_exact(self.classes)
    }

    /// Per-region softmax probabilities, `regions x classes`.
    pub fn local_probabilities(&self, tau: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.local.len()];
        for (row, dst) in self.local_rows().zip(out.chunks_exact_mut(self.classes)) {
            softmax_into(row, tau, dst)?;
        }
        Ok(out)
    }

    /// Argmax class and its probability for every region, row-major.
    pub fn region_predictions(&self, tau: f64) -> Result<Vec<(usize, f64)>> {
        let mut buf = vec![0.0; self.classes];
        self.local_rows()
            .map(|row| {
                softmax_into(row, tau, &mut buf)?;
                Ok(argmax(&buf))
            })
            .collect()
    }

    pub fn score(&self, config: &ScoreConfig) -> Result<(f64, Option<ScoreComponents>)> {
        config.validate()?;
        let k = self.classes;
        let tau = config.tau;
        let both = |global: f64, local: f64| Some(ScoreComponents { global, local });

        let scored = match config.function {
            ScoreFunction::Mcm => (max_softmax(&self.global, tau)?, None),
            ScoreFunction::Lmcm => (self.max_local_softmax(tau)?, None),
            ScoreFunction::Glmcm => {
                let g = max_softmax(&self.global, tau)?;
                let l = self.max_local_softmax(tau)?;
                (g + config.lambda * l, both(g, l))
            }
            ScoreFunction::GOrL => {
                let g = max_softmax(&self.global, tau)?;
                let l = self.max_local_softmax(tau)?;
                (g.max(l), both(g, l))
            }
            ScoreFunction::Entropy => {
                let g = entropy(&softmax_row(&self.global, tau)?);
                let probs = self.local_probabilities(tau)?;
                let l = probs
                    .chunks_exact(k)
                    .map(entropy)
                    .fold(f64::NEG_INFINITY, f64::max);
                (0.0 - (g + l), both(0.0 - g, 0.0 - l))
            }
            ScoreFunction::Var => {
                let g = population_variance(&self.global);
                let l = self
                    .local_rows()
                    .map(population_variance)
                    .fold(f64::NEG_INFINITY, f64::max);
                (g + l, both(g, l))
            }
            ScoreFunction::Cos => {
                let g = argmax(&self.global).1;
                let l = argmax(&self.local).1;
                (g + l, both(g, l))
            }
            ScoreFunction::ClassAvg => (self.class_average(tau)?, None),
            ScoreFunction::ClassAvgPlusMcm => {
                let g = max_softmax(&self.global, tau)?;
                let l = self.class_average(tau)?;
                (l + g, both(g, l))
            }
        };
        Ok(scored)
    }

    fn max_local_softmax(&self, tau: f64) -> Result<f64> {
        Ok(self
            .region_predictions(tau)?
            .into_iter()
            .fold(f64::NEG_INFINITY, |best, (_, p)| best.max(p)))
    }

    fn class_average(&self, tau: f64) -> Result<f64> {
        let k = self.classes;
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (pred, p) in self.region_predictions(tau)? {
            sums[pred] += p;
            counts[pred] += 1;
        }
        // Classes no region predicts are skipped.
        let mut best = f64::NEG_INFINITY;
        for (sum, &count) in sums.iter().zip(&counts) {
            if count > 0 {
                let mean = sum / count as f64;
                if mean > best {
                    best = mean;
                }
            }
        }
        Ok(best)
    }
}

/// Text features prepared for repeated cosine similarity evaluation.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    text: &'a TextFeatures,
    rows: Vec<f64>,
    norms: Vec<f64>,
}

impl<'a> Scorer<'a> {
    pub fn new(text: &'a TextFeatures) -> Result<Self> {
        let k = text.num_classes();
        if k == 0 || text.dim == 0 || text.matrix.len() != k * text.dim {
            return Err(ScoreError::Shape(format!(
                "text matrix has {} values for {k} classes of dimension {}",
                text.matrix.len(),
                text.dim
            )));
        }
        let rows: Vec<f64> = text.matrix.iter().map(|&v| f64::from(v)).collect();
        let mut norms = Vec::with_capacity(k);
        for (t, row) in rows.chunks_exact(text.dim).enumerate() {
            let name = &text.vocabulary.classes[t];
            norms.push(
                checked_norm(row).map_err(|e| {
                    ScoreError::Domain(format!("text feature of class {name:?}: {e}"))
                })?,
            );
        }
        Ok(Scorer { text, rows, norms })
    }

    pub fn text(&self) -> &'a TextFeatures {
        self.text
    }

    pub fn num_classes(&self) -> usize {
        self.norms.len()
    }

    pub fn similarities(&self, image: &ImageFeatures) -> Result<Similarities> {
        let c = self.text.dim;
        if image.global.len() != c {
            return Err(ScoreError::Shape(format!(
                "global feature has dimension {}, text features have {c}",
                image.global.len()
            )));
        }
        let regions = image.regions();
        if regions == 0 {
            return Err(ScoreError::Shape("local feature map has no regions".into()));
        }
        if image.local.len() != regions * c {
            return Err(ScoreError::Shape(format!(
                "local feature map has {} values, expected {regions} x {c}",
                image.local.len()
            )));
        }
        let global = self
            .cosine_row(&image.global)
            .map_err(|e| ScoreError::Domain(format!("global feature: {e}")))?;
        let mut local = Vec::with_capacity(regions * self.num_classes());
        for (i, row) in image.local.chunks_exact(c).enumerate() {
            let sims = self
                .cosine_row(row)
                .map_err(|e| ScoreError::Domain(format!("local feature {i}: {e}")))?;
            local.extend(sims);
        }
        Ok(Similarities {
            classes: self.num_classes(),
            global,
            local,
        })
    }

    pub fn score(&self, image: &ImageFeatures, config: &ScoreConfig) -> Result<ScoreRecord> {
        let (value, components) = self.similarities(image)?.score(config)?;
        Ok(ScoreRecord {
            image_id: image.image_id.clone(),
            value,
            components,
            config: *config,
        })
    }

    fn cosine_row(&self, feature: &[f32]) -> std::result::Result<Vec<f64>, String> {
        let x: Vec<f64> = feature.iter().map(|&v| f64::from(v)).collect();
        let x_norm = checked_norm(&x)?;
        Ok(self
            .rows
            .chunks_exact(self.text.dim)
            .zip(&self.norms)
            .map(|(y, &y_norm)| {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                (dot / (x_norm * y_norm)).clamp(-1.0, 1.0)
            })
            .collect())
    }
}

fn checked_norm(v: &[f64]) -> std::result::Result<f64, String> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err("non-finite value".into());
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err("zero-norm vector".into());
    }
    Ok(norm)
}

/// First index of the maximum; lowest index wins ties.
fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

/// Shannon entropy in nats; `0 ln 0 = 0`.
fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

fn max_softmax(sims: &[f64], tau: f64) -> Result<f64> {
    Ok(argmax(&softmax_row(sims, tau)?).1)
}

fn softmax_into(sims: &[f64], tau: f64, out: &mut [f64]) -> Result<()> {
    if sims.is_empty() {
        return Err(ScoreError::Shape("softmax over an empty row".into()));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(ScoreError::Config(format!(
            "tau must be positive, got {tau}"
        )));
    }
    if let Some(bad) = sims.iter().find(|s| !s.is_finite()) {
        return Err(ScoreError::Domain(format!("non-finite similarity {bad}")));
    }
    let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &s) in out.iter_mut().zip(sims) {
        *o = ((s - max) / tau).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

/// Temperature-scaled softmax, stabilised by subtracting the row maximum.
pub fn softmax_row(sims: &[f64], tau: f64) -> Result<Vec<f64>> {
    let mut out = vec![0.0; sims.len()];
    softmax_into(sims, tau, &mut out)?;
    Ok(out)
}

pub fn cosine_similarities(image: &ImageFeatures, text: &TextFeatures) -> Result<Similarities> {
    Scorer::new(text)?.similarities(image)
}

/// Scores one image with `config.function`.
pub fn score(
    image: &ImageFeatures,
    text: &TextFeatures,
    config: &ScoreConfig,
) -> Result<ScoreRecord> {
    Scorer::new(text)?.score(image, config)
}

macro_rules! score_fn {
    ($(#[$doc:meta])* $name:ident, $function:expr) => {
        $(#[$doc])*
        pub fn $name(
            image: &ImageFeatures,
            text: &TextFeatures,
            config: &ScoreConfig,
        ) -> Result<ScoreRecord> {
            score(image, text, &config.with_function($function))
        }
    };
}

score_fn!(mcm, ScoreFunction::Mcm);
score_fn!(lmcm, ScoreFunction::Lmcm);
score_fn!(glmcm, ScoreFunction::Glmcm);
score_fn!(
    /// `-(H(p) + max_i H(p_i))`. The local term is the *maximum* region
    /// entropy, so the least certain region dominates.
    entropy_score,
    ScoreFunction::Entropy
);
score_fn!(var_score, ScoreFunction::Var);
score_fn!(cos_score, ScoreFunction::Cos);
score_fn!(g_or_l, ScoreFunction::GOrL);
score_fn!(class_avg, ScoreFunction::ClassAvg);
score_fn!(class_avg_plus_mcm, ScoreFunction::ClassAvgPlusMcm);

/// Scores `images` in parallel on the current rayon pool. Output order
/// matches input order and is independent of how the work is split.
pub fn score_images(
    scorer: &Scorer<'_>,
    images: &[&ImageFeatures],
    config: &ScoreConfig,
) -> Result<Vec<ScoreRecord>> {
    config.validate()?;
    let results: Vec<Result<ScoreRecord>> = images
        .par_iter()
        .map(|image| {
            scorer.score(image, config).map_err(|e| ScoreError::Image {
                image_id: image.image_id.clone(),
                source: Box::new(e),
            })
        })
        .collect();
    results.into_iter().collect()
}

/// One record per image of `set`, sorted by image id.
pub fn score_batch(set: &EmbeddingSet, config: &ScoreConfig) -> Result<Vec<ScoreRecord>> {
    let scorer = Scorer::new(&set.text)?;
    score_images(&scorer, &set.images_canonical(), config)
}
