// SPDX-License-Identifier: Apache-2.0

//! CSV and JSON rendering of harness results.
//!
//! Column and key order is fixed per report type. Reals are rounded to six
//! significant digits and printed in their shortest round-trip form, so
//! re-parsing a report gives back exactly the rounded values.

use std::borrow::Cow;
use std::io::{self, Write};
use std::str::FromStr;

use serde_json::{json, Value};

use super::{EvalReport, Extraction, Histogram, Result, ScoreMap, SweepResult};
use crate::scores::ScoreConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!(
                "unknown report format {other:?}, expected csv or json"
            )),
        }
    }
}

pub trait Report {
    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()>;
    fn to_json(&self) -> Value;
}

pub fn write_report<R: Report + ?Sized, W: Write>(
    report: &R,
    format: ReportFormat,
    mut sink: W,
) -> Result<()> {
    match format {
        ReportFormat::Csv => report.write_csv(&mut sink)?,
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut sink, &report.to_json())?;
            sink.write_all(b"\n")?;
        }
    }
    sink.flush()?;
    Ok(())
}

pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return if x == 0.0 { 0.0 } else { x };
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

pub fn format_real(x: f64) -> String {
    round_sig6(x).to_string()
}

fn real(x: f64) -> Value {
    json!(round_sig6(x))
}

fn csv_field(s: &str) -> Cow<'_, str> {
    if s.contains([',', '"', '\n', '\r']) {
        Cow::Owned(format!("\"{}\"", s.replace('"', "\"\"")))
    } else {
        Cow::Borrowed(s)
    }
}

fn config_json(config: &ScoreConfig) -> Value {
    json!({
        "config_name": config.name(),
        "function": config.function.name(),
        "tau": real(config.tau),
        "lambda": real(config.lambda),
    })
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Value::Object(b), Value::Object(e)) = (&mut base, extra) {
        b.extend(e);
    }
    base
}

impl Report for EvalReport {
    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(
            out,
            "config_name,function,tau,lambda,ood_set,fpr95,auroc,n_id,n_ood"
        )?;
        for row in &self.rows {
            let c = &row.config;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                csv_field(&c.name()),
                c.function.name(),
                format_real(c.tau),
                format_real(c.lambda),
                csv_field(&row.ood_set),
                format_real(row.metrics.fpr95),
                format_real(row.metrics.auroc),
                row.metrics.n_id,
                row.metrics.n_ood
            )?;
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                merge(
                    config_json(&row.config),
                    json!({
                        "ood_set": row.ood_set,
                        "fpr95": real(row.metrics.fpr95),
                        "auroc": real(row.metrics.auroc),
                        "n_id": row.metrics.n_id,
                        "n_ood": row.metrics.n_ood,
                    }),
                )
            })
            .collect();
        let averages: Vec<Value> = self
            .averages
            .iter()
            .map(|avg| {
                merge(
                    config_json(&avg.config),
                    json!({
                        "mean_fpr95": real(avg.mean_fpr95),
                        "mean_auroc": real(avg.mean_auroc),
                    }),
                )
            })
            .collect();
        json!({ "rows": rows, "averages": averages })
    }
}

impl Report for SweepResult {
    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "parameter,value,mean_fpr95,mean_auroc")?;
        for p in &self.points {
            writeln!(
                out,
                "{},{},{},{}",
                self.parameter.name(),
                format_real(p.value),
                format_real(p.mean_fpr95),
                format_real(p.mean_auroc)
            )?;
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        let points: Vec<Value> = self
            .points
            .iter()
            .map(|p| {
                json!({
                    "value": real(p.value),
                    "mean_fpr95": real(p.mean_fpr95),
                    "mean_auroc": real(p.mean_auroc),
                })
            })
            .collect();
        json!({
            "parameter": self.parameter.name(),
            "base": config_json(&self.base),
            "points": points,
        })
    }
}

impl Report for Histogram {
    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (i, count) in self.counts.iter().enumerate() {
            writeln!(
                out,
                "{},{},{count}",
                format_real(self.edge(i)),
                format_real(self.edge(i + 1))
            )?;
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        let bins: Vec<Value> = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, count)| {
                json!({
                    "bin_lo": real(self.edge(i)),
                    "bin_hi": real(self.edge(i + 1)),
                    "count": count,
                })
            })
            .collect();
        json!({
            "lo": real(self.lo),
            "hi": real(self.hi),
            "below": self.below,
            "above": self.above,
            "bins": bins,
        })
    }
}

impl Report for ScoreMap {
    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        std::slice::from_ref(self).write_csv(out)
    }

    fn to_json(&self) -> Value {
        let cells: Vec<Value> = self
            .cells
            .iter()
            .map(|c| json!({ "class_index": c.class_index, "score": real(c.score) }))
            .collect();
        json!({
            "image_id": self.image_id,
            "h": self.height,
            "w": self.width,
            "classes": self.classes,
            "cells": cells,
        })
    }
}

impl Report for [ScoreMap] {
    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "image_id,row,col,class_index,class_name,score")?;
        for map in self {
            let width = usize::from(map.width);
            for (i, cell) in map.cells.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    csv_field(&map.image_id),
                    i / width,
                    i % width,
                    cell.class_index,
                    csv_field(&map.classes[cell.class_index]),
                    format_real(cell.score)
                )?;
            }
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        Value::Array(self.iter().map(Report::to_json).collect())
    }
}

impl Report for Extraction {
    fn write_csv(&self, out: &mut dyn Write) -> io::Result<()> {
        writeln!(out, "category,count")?;
        for c in &self.per_category {
            writeln!(out, "{},{}", csv_field(&c.category), c.count)?;
        }
        Ok(())
    }

    fn to_json(&self) -> Value {
        let per_category: Vec<Value> = self
            .per_category
            .iter()
            .map(|c| json!({ "category": c.category, "count": c.count }))
            .collect();
        json!({
            "threshold": real(self.threshold),
            "n_scored": self.n_scored,
            "n_extracted": self.extracted.len(),
            "n_extracted_id": self.extracted_id,
            "n_extracted_ood": self.extracted_ood,
            "extracted": self.extracted,
            "per_category": per_category,
        })
    }
}
