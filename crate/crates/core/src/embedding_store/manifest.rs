// SPDX-License-Identifier: Apache-2.0

//! Plain-text dataset manifests.
//!
//! One entry per line, no header: `image_id,split,dataset_name,categories`,
//! where `split` is `ID` or `OOD` and `categories` is a `|`-separated list of
//! vocabulary class names (possibly empty). Blank lines are skipped.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use super::{ClassVocabulary, Result, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Id,
    Ood,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ID" | "id" => Ok(Split::Id),
            "OOD" | "ood" => Ok(Split::Ood),
            other => Err(format!("unknown split {other:?}, expected ID or OOD")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Id => "ID",
            Split::Ood => "OOD",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub split: Split,
    pub dataset: String,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.image_id == image_id)
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == split).count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (i, entry) in self.entries.iter().enumerate() {
            if entry.image_id.is_empty() {
                return Err(StoreError::validation(
                    format!("manifest[{i}]"),
                    "empty image id",
                ));
            }
            if !seen.insert(entry.image_id.as_str()) {
                return Err(StoreError::validation(
                    format!("manifest[{i}]"),
                    format!("duplicate image id {:?}", entry.image_id),
                ));
            }
        }
        Ok(())
    }

    /// Every category must name a class of `vocabulary`.
    pub fn validate_categories(&self, vocabulary: &ClassVocabulary) -> Result<()> {
        let known: HashSet<&str> = vocabulary.classes.iter().map(String::as_str).collect();
        for entry in &self.entries {
            if let Some(bad) = entry
                .categories
                .iter()
                .find(|c| !known.contains(c.as_str()))
            {
                return Err(StoreError::validation(
                    format!("manifest[{}].categories", entry.image_id),
                    format!("{bad:?} is not a vocabulary class"),
                ));
            }
        }
        Ok(())
    }

    /// Evaluation needs at least one entry of each split.
    pub fn require_both_splits(&self) -> Result<()> {
        for split in [Split::Id, Split::Ood] {
            if self.count(split) == 0 {
                return Err(StoreError::validation(
                    "manifest",
                    format!("no {split} entries"),
                ));
            }
        }
        Ok(())
    }
}

pub fn read_manifest<R: BufRead>(source: R) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in source.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| StoreError::Parse {
            line: line_no,
            reason,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(parse_err(format!(
                "expected 4 comma-separated fields, found {}",
                fields.len()
            )));
        }
        let image_id = fields[0];
        if image_id.is_empty() {
            return Err(parse_err("empty image id".into()));
        }
        let split: Split = fields[1].parse().map_err(parse_err)?;
        let categories = match fields.get(3) {
            Some(raw) if !raw.is_empty() => {
                let cats: Vec<String> = raw.split('|').map(|c| c.trim().to_string()).collect();
                if cats.iter().any(String::is_empty) {
                    return Err(parse_err(format!("empty category in {raw:?}")));
                }
                cats
            }
            _ => Vec::new(),
        };
        if !seen.insert(image_id.to_string()) {
            return Err(StoreError::validation(
                format!("manifest line {line_no}"),
                format!("duplicate image id {image_id:?}"),
            ));
        }
        entries.push(ManifestEntry {
            image_id: image_id.to_string(),
            split,
            dataset: fields[2].to_string(),
            categories,
        });
    }
    Ok(DatasetManifest { entries })
}

pub fn write_manifest<W: Write>(manifest: &DatasetManifest, mut sink: W) -> Result<()> {
    for e in &manifest.entries {
        writeln!(
            sink,
            "{},{},{},{}",
            e.image_id,
            e.split,
            e.dataset,
            e.categories.join("|")
        )?;
    }
    sink.flush()?;
    Ok(())
}
