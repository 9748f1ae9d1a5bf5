// SPDX-License-Identifier: Apache-2.0

//! Feature containers, dataset manifests and the join between them.
//!
//! Features are kept exactly as the extractor emitted them (unnormalized
//! `f32`); cosine similarity normalizes on the fly. Local feature maps are
//! stored row-major over the `(height, width)` grid.

mod format;
mod manifest;

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

pub use format::{read_embedding_set, write_embedding_set, FORMAT_VERSION, MAGIC, META_TAG};
pub use manifest::{read_manifest, write_manifest, DatasetManifest, ManifestEntry, Split};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated {section}: expected at least {expected} bytes, got {actual}")]
    Truncated {
        section: String,
        expected: u64,
        actual: u64,
    },
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },
    #[error("manifest line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("features and manifest share no image ids")]
    EmptyJoin,
}

impl StoreError {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        StoreError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, StoreError>;

/// Ordered class names. The position of a name is its class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    pub classes: Vec<String>,
}

impl ClassVocabulary {
    pub fn new<S: Into<String>>(classes: impl IntoIterator<Item = S>) -> Result<Self> {
        let vocab = ClassVocabulary {
            classes: classes.into_iter().map(Into::into).collect(),
        };
        vocab.validate()?;
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(StoreError::validation(
                "vocabulary",
                "at least one class is required",
            ));
        }
        let mut seen = HashSet::with_capacity(self.classes.len());
        for (i, name) in self.classes.iter().enumerate() {
            if name.is_empty() {
                return Err(StoreError::validation(
                    format!("vocabulary[{i}]"),
                    "class name is empty",
                ));
            }
            if !seen.insert(name.as_str()) {
                return Err(StoreError::validation(
                    format!("vocabulary[{i}]"),
                    format!("duplicate class name {name:?}"),
                ));
            }
        }
        Ok(())
    }
}

/// One text feature per class, `len(vocabulary) x dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TextFeatures {
    pub vocabulary: ClassVocabulary,
    pub dim: usize,
    pub matrix: Vec<f32>,
}

impl TextFeatures {
    pub fn new(vocabulary: ClassVocabulary, dim: usize, matrix: Vec<f32>) -> Result<Self> {
        let text = TextFeatures {
            vocabulary,
            dim,
            matrix,
        };
        text.validate()?;
        Ok(text)
    }

    /// Builds text features from per-class rows; `dim` is taken from the first row.
    pub fn from_rows<S: Into<String>>(
        classes: impl IntoIterator<Item = S>,
        rows: &[Vec<f32>],
    ) -> Result<Self> {
        let vocabulary = ClassVocabulary::new(classes)?;
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(StoreError::validation(
                format!("text.matrix[{i}]"),
                format!("row has {} columns, expected {dim}", rows[i].len()),
            ));
        }
        Self::new(vocabulary, dim, rows.concat())
    }

    pub fn num_classes(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn row(&self, class: usize) -> &[f32] {
        &self.matrix[class * self.dim..(class + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.matrix.chunks_exact(self.dim.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        self.vocabulary.validate()?;
        if self.dim == 0 {
            return Err(StoreError::validation(
                "text.dim",
                "dimensionality must be positive",
            ));
        }
        let expected = self.vocabulary.len() * self.dim;
        if self.matrix.len() != expected {
            return Err(StoreError::validation(
                "text.matrix",
                format!("has {} values, expected {expected}", self.matrix.len()),
            ));
        }
        for (t, row) in self.rows().enumerate() {
            check_vector(row).map_err(|reason| {
                StoreError::validation(
                    format!("text.matrix[{t}] ({})", self.vocabulary.classes[t]),
                    reason,
                )
            })?;
        }
        Ok(())
    }
}

/// Global and local features of a single image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub image_id: String,
    pub height: u16,
    pub width: u16,
    pub global: Vec<f32>,
    /// `height * width` rows of `global.len()` values, row-major over the grid.
    pub local: Vec<f32>,
}

impl ImageFeatures {
    pub fn new(
        image_id: impl Into<String>,
        grid: (u16, u16),
        global: Vec<f32>,
        local: Vec<f32>,
    ) -> Result<Self> {
        let image = ImageFeatures {
            image_id: image_id.into(),
            height: grid.0,
            width: grid.1,
            global,
            local,
        };
        image.validate()?;
        Ok(image)
    }

    pub fn dim(&self) -> usize {
        self.global.len()
    }

    pub fn regions(&self) -> usize {
        usize::from(self.height) * usize::from(self.width)
    }

    pub fn local_row(&self, region: usize) -> &[f32] {
        let c = self.dim();
        &self.local[region * c..(region + 1) * c]
    }

    pub fn local_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.local.chunks_exact(self.dim().max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.image_id;
        if id.is_empty() {
            return Err(StoreError::validation("image_id", "image id is empty"));
        }
        if self.height == 0 || self.width == 0 {
            return Err(StoreError::validation(
                format!("images[{id}].grid"),
                format!("grid {}x{} must be positive", self.height, self.width),
            ));
        }
        if self.global.is_empty() {
            return Err(StoreError::validation(
                format!("images[{id}].global"),
                "dimensionality must be positive",
            ));
        }
        check_vector(&self.global)
            .map_err(|reason| StoreError::validation(format!("images[{id}].global"), reason))?;
        let expected = self.regions() * self.dim();
        if self.local.len() != expected {
            return Err(StoreError::validation(
                format!("images[{id}].local"),
                format!(
                    "has {} values, expected {} rows x {} = {expected}",
                    self.local.len(),
                    self.regions(),
                    self.dim()
                ),
            ));
        }
        for (i, row) in self.local_rows().enumerate() {
            check_vector(row).map_err(|reason| {
                StoreError::validation(format!("images[{id}].local[{i}]"), reason)
            })?;
        }
        Ok(())
    }
}

/// Text features plus every image of one dataset split file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub text: TextFeatures,
    pub images: Vec<ImageFeatures>,
    pub meta: BTreeMap<String, String>,
}

impl EmbeddingSet {
    pub fn new(
        text: TextFeatures,
        images: Vec<ImageFeatures>,
        meta: BTreeMap<String, String>,
    ) -> Result<Self> {
        let set = EmbeddingSet { text, images, meta };
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.text.dim
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageFeatures> {
        self.images.iter().find(|img| img.image_id == image_id)
    }

    /// Images sorted by `image_id`, the canonical order used by every report.
    pub fn images_canonical(&self) -> Vec<&ImageFeatures> {
        let mut images: Vec<&ImageFeatures> = self.images.iter().collect();
        images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        images
    }

    pub fn validate(&self) -> Result<()> {
        self.text.validate()?;
        let mut seen = HashSet::with_capacity(self.images.len());
        for image in &self.images {
            image.validate()?;
            if image.dim() != self.text.dim {
                return Err(StoreError::validation(
                    format!("images[{}].global", image.image_id),
                    format!(
                        "dimensionality {} does not match text dimensionality {}",
                        image.dim(),
                        self.text.dim
                    ),
                ));
            }
            if !seen.insert(image.image_id.as_str()) {
                return Err(StoreError::validation(
                    format!("images[{}]", image.image_id),
                    "duplicate image id",
                ));
            }
        }
        for key in self.meta.keys() {
            if key.is_empty() {
                return Err(StoreError::validation("meta", "empty key"));
            }
        }
        Ok(())
    }
}

fn check_vector(values: &[f32]) -> std::result::Result<(), String> {
    if let Some(j) = values.iter().position(|v| !v.is_finite()) {
        return Err(format!("non-finite value {} at column {j}", values[j]));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err("zero vector".to_string());
    }
    Ok(())
}

/// A feature record paired with its ground-truth manifest entry.
#[derive(Debug, Clone, Copy)]
pub struct JoinedRow<'a> {
    pub image: &'a ImageFeatures,
    pub entry: &'a ManifestEntry,
}

/// Inner join of features and manifest on `image_id`, sorted by id.
#[derive(Debug, Clone)]
pub struct JoinedTable<'a> {
    pub rows: Vec<JoinedRow<'a>>,
    /// Feature records with no manifest entry, sorted.
    pub unlabeled_features: Vec<String>,
    /// Manifest entries with no feature record, sorted.
    pub missing_features: Vec<String>,
}

impl<'a> JoinedTable<'a> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &JoinedRow<'a>> {
        self.rows.iter().filter(move |r| r.entry.split == split)
    }

    pub fn images(&self, split: Split) -> Vec<&'a ImageFeatures> {
        self.split(split).map(|r| r.image).collect()
    }
}

/// Joins features with ground truth. Manifest categories must name classes
/// of the set's vocabulary.
pub fn join<'a>(set: &'a EmbeddingSet, manifest: &'a DatasetManifest) -> Result<JoinedTable<'a>> {
    manifest.validate()?;
    manifest.validate_categories(&set.text.vocabulary)?;

    let by_id: HashMap<&str, &ManifestEntry> = manifest
        .entries
        .iter()
        .map(|e| (e.image_id.as_str(), e))
        .collect();
    let feature_ids: HashSet<&str> = set.images.iter().map(|img| img.image_id.as_str()).collect();

    let mut rows = Vec::new();
    let mut unlabeled_features = Vec::new();
    for image in set.images_canonical() {
        match by_id.get(image.image_id.as_str()) {
            Some(entry) => rows.push(JoinedRow { image, entry }),
            None => unlabeled_features.push(image.image_id.clone()),
        }
    }
    let mut missing_features: Vec<String> = manifest
        .entries
        .iter()
        .filter(|e| !feature_ids.contains(e.image_id.as_str()))
        .map(|e| e.image_id.clone())
        .collect();
    missing_features.sort();

    if rows.is_empty() {
        return Err(StoreError::EmptyJoin);
    }
    if !unlabeled_features.is_empty() {
        log::warn!("{} unlabeled feature record(s)", unlabeled_features.len());
    }
    if !missing_features.is_empty() {
        log::warn!(
            "{} manifest entr(ies) without features",
            missing_features.len()
        );
    }
    Ok(JoinedTable {
        rows,
        unlabeled_features,
        missing_features,
    })
}
