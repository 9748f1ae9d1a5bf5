// SPDX-License-Identifier: Apache-2.0

//! Score histograms, threshold-based ID extraction and per-region score maps.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{HarnessError, Result};
use crate::embedding_store::{DatasetManifest, ImageFeatures, Split, TextFeatures};
use crate::scores::{ScoreConfig, ScoreRecord, Scorer};

pub const DEFAULT_BINS: usize = 50;

/// Uniform bins over `[lo, hi]`. Bins are left-closed; the last bin also
/// contains `hi`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub below: u64,
    pub above: u64,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edge(&self, i: usize) -> f64 {
        if i == self.bins() {
            self.hi
        } else {
            self.lo + (self.hi - self.lo) * (i as f64 / self.bins() as f64)
        }
    }

    pub fn in_range(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bin_of(&self, x: f64) -> Option<usize> {
        if x < self.lo || x > self.hi {
            return None;
        }
        let bins = self.bins();
        if x == self.hi {
            return Some(bins - 1);
        }
        let guess = ((x - self.lo) / (self.hi - self.lo) * bins as f64).floor();
        let mut i = (guess.max(0.0) as usize).min(bins - 1);
        // The guess can be off by one near an edge; settle against the edges we report.
        while i > 0 && x < self.edge(i) {
            i -= 1;
        }
        while i + 1 < bins && x >= self.edge(i + 1) {
            i += 1;
        }
        Some(i)
    }
}

pub fn histogram(
    scores: &[ScoreRecord],
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    let values: Vec<f64> = scores.iter().map(|r| r.value).collect();
    histogram_values(&values, bins, range)
}

/// Without an explicit range the observed `min..max` is used; an empty list
/// falls back to `[0, 1]` and a single distinct value `v` to `[v - 0.5, v + 0.5]`.
pub fn histogram_values(
    values: &[f64],
    bins: usize,
    range: Option<(f64, f64)>,
) -> Result<Histogram> {
    if bins == 0 {
        return Err(HarnessError::Config(
            "histogram needs at least one bin".into(),
        ));
    }
    if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
        return Err(HarnessError::Config(format!("non-finite score {bad}")));
    }
    let (lo, hi) = match range {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(HarnessError::Config(format!(
                    "histogram range lo ({lo}) must be below hi ({hi})"
                )));
            }
            (lo, hi)
        }
        None if values.is_empty() => (0.0, 1.0),
        None => {
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if lo == hi {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        }
    };
    let mut hist = Histogram {
        lo,
        hi,
        counts: vec![0; bins],
        below: 0,
        above: 0,
    };
    for &x in values {
        match hist.bin_of(x) {
            Some(i) => hist.counts[i] += 1,
            None if x < lo => hist.below += 1,
            None => hist.above += 1,
        }
    }
    Ok(hist)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CategoryCount {
    pub category: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Extraction {
    pub threshold: f64,
    pub n_scored: usize,
    /// Ids with `score >= threshold`, in score-list order.
    pub extracted: Vec<String>,
    pub extracted_id: usize,
    pub extracted_ood: usize,
    /// Every category of a scored image, sorted by name, with how many
    /// extracted images carry it.
    pub per_category: Vec<CategoryCount>,
}

pub fn extract_id(
    scores: &[ScoreRecord],
    manifest: &DatasetManifest,
    threshold: f64,
) -> Extraction {
    let entries: BTreeMap<&str, _> = manifest
        .entries
        .iter()
        .map(|e| (e.image_id.as_str(), e))
        .collect();
    let mut per_category: BTreeMap<&str, usize> = BTreeMap::new();
    let mut extraction = Extraction {
        threshold,
        n_scored: scores.len(),
        extracted: Vec::new(),
        extracted_id: 0,
        extracted_ood: 0,
        per_category: Vec::new(),
    };
    for record in scores {
        let entry = entries.get(record.image_id.as_str());
        let admitted = record.value >= threshold;
        if let Some(entry) = entry {
            for category in &entry.categories {
                *per_category.entry(category.as_str()).or_default() += usize::from(admitted);
            }
        }
        if !admitted {
            continue;
        }
        extraction.extracted.push(record.image_id.clone());
        match entry.map(|e| e.split) {
            Some(Split::Id) => extraction.extracted_id += 1,
            Some(Split::Ood) => extraction.extracted_ood += 1,
            None => {}
        }
    }
    extraction.per_category = per_category
        .into_iter()
        .map(|(category, count)| CategoryCount {
            category: category.to_string(),
            count,
        })
        .collect();
    extraction
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScoreCell {
    pub class_index: usize,
    pub score: f64,
}

/// Best class and its softmax probability for every region of one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMap {
    pub image_id: String,
    #[serde(rename = "h")]
    pub height: u16,
    #[serde(rename = "w")]
    pub width: u16,
    pub classes: Vec<String>,
    /// Row-major over the grid.
    pub cells: Vec<ScoreCell>,
}

impl ScoreMap {
    pub fn cell(&self, row: usize, col: usize) -> &ScoreCell {
        &self.cells[row * usize::from(self.width) + col]
    }

    pub fn max_score(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.score)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn score_map(
    image: &ImageFeatures,
    text: &TextFeatures,
    config: &ScoreConfig,
) -> Result<ScoreMap> {
    let scorer = Scorer::new(text)?;
    score_map_with(&scorer, image, config)
}

pub(crate) fn score_map_with(
    scorer: &Scorer<'_>,
    image: &ImageFeatures,
    config: &ScoreConfig,
) -> Result<ScoreMap> {
    config.validate()?;
    let cells = scorer
        .similarities(image)?
        .region_predictions(config.tau)?
        .into_iter()
        .map(|(class_index, score)| ScoreCell { class_index, score })
        .collect();
    Ok(ScoreMap {
        image_id: image.image_id.clone(),
        height: image.height,
        width: image.width,
        classes: scorer.text().vocabulary.classes.clone(),
        cells,
    })
}
