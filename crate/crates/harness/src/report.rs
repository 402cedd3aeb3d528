//! Report files: `quantiles.csv`, `intervals.csv`, `metrics.json` and, on
//! request, `timings.json`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::experiment::{CellMetrics, ExperimentReport, PhaseTimings};
use crate::error::{HarnessError, Result};

pub const QUANTILES_FILE: &str = "quantiles.csv";
pub const INTERVALS_FILE: &str = "intervals.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const TIMINGS_FILE: &str = "timings.json";

#[derive(Clone, Copy, Debug, Default)]
pub struct EmitOptions {
    pub overwrite: bool,
    pub timings: bool,
}

/// `seed,functional,u,value,source`, where `source` is `shard:<j>` or the
/// combination mode.
pub fn quantiles_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("seed,functional,u,value,source\n");
    let mode = report.config.mode.as_str();
    for run in &report.runs {
        for f in &run.functionals {
            let tables = f
                .shard_tables
                .iter()
                .enumerate()
                .map(|(j, t)| (format!("shard:{j}"), t))
                .chain(std::iter::once((mode.to_string(), &f.combined)));
            for (source, table) in tables {
                for (u, v) in table.grid().iter().zip(table.values()) {
                    out.push_str(&format!("{},{},{u},{v},{source}\n", run.seed, f.name));
                }
            }
        }
    }
    out
}

/// `seed,functional,alpha,lower,upper,source`.
pub fn intervals_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("seed,functional,alpha,lower,upper,source\n");
    let mode = report.config.mode.as_str();
    for run in &report.runs {
        for f in &run.functionals {
            for i in &f.intervals {
                out.push_str(&format!(
                    "{},{},{},{},{},{mode}\n",
                    run.seed, f.name, i.alpha, i.lower, i.upper
                ));
            }
        }
    }
    out
}

#[derive(Serialize)]
struct Cell<'a> {
    seed: u64,
    functional: &'a str,
    n: usize,
    shard_sizes: &'a [usize],
    #[serde(flatten)]
    metrics: &'a CellMetrics,
}

/// Version, config echo and one metrics object per (seed, functional) cell.
/// The echo leaves out the `output` table, so the file does not depend on
/// where it is written.
pub fn metrics_json(report: &ExperimentReport) -> String {
    let cells: Vec<Cell> = report
        .runs
        .iter()
        .flat_map(|run| {
            run.functionals.iter().map(move |f| Cell {
                seed: run.seed,
                functional: &f.name,
                n: run.n,
                shard_sizes: &run.shard_sizes,
                metrics: &f.metrics,
            })
        })
        .collect();
    let mut config = serde_json::to_value(&report.config).expect("config serialize");
    if let Some(table) = config.as_object_mut() {
        table.remove("output");
    }
    let doc = json!({
        "version": report.version,
        "mode": report.config.mode.as_str(),
        "config": config,
        "cells": cells,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("metrics serialize");
    text.push('\n');
    text
}

pub fn timings_json(report: &ExperimentReport) -> String {
    #[derive(Serialize)]
    struct Row {
        seed: u64,
        #[serde(flatten)]
        timings: PhaseTimings,
    }
    let rows: Vec<Row> = report
        .runs
        .iter()
        .map(|r| Row {
            seed: r.seed,
            timings: r.timings,
        })
        .collect();
    let mut text = serde_json::to_string_pretty(&rows).expect("timings serialize");
    text.push('\n');
    text
}

fn target_paths(dir: &Path, opts: EmitOptions) -> Vec<PathBuf> {
    let mut names = vec![QUANTILES_FILE, INTERVALS_FILE, METRICS_FILE];
    if opts.timings {
        names.push(TIMINGS_FILE);
    }
    names.into_iter().map(|name| dir.join(name)).collect()
}

/// Fails with [`HarnessError::Exists`] when `emit_report` would refuse to
/// write into `dir`.
pub fn check_writable(dir: &Path, opts: EmitOptions) -> Result<()> {
    if opts.overwrite {
        return Ok(());
    }
    match target_paths(dir, opts).into_iter().find(|p| p.exists()) {
        Some(existing) => Err(HarnessError::Exists(existing)),
        None => Ok(()),
    }
}

/// Writes the report into `dir`, creating it if needed. Without
/// `overwrite`, nothing is written when any target file already exists.
pub fn emit_report(report: &ExperimentReport, dir: &Path, opts: EmitOptions) -> Result<Vec<PathBuf>> {
    check_writable(dir, opts)?;
    let mut texts = vec![quantiles_csv(report), intervals_csv(report), metrics_json(report)];
    if opts.timings {
        texts.push(timings_json(report));
    }
    let paths = target_paths(dir, opts);
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    for (path, text) in paths.iter().zip(&texts) {
        let mut file = std::fs::File::create(path).map_err(|e| HarnessError::io(path, e))?;
        file.write_all(text.as_bytes()).map_err(|e| HarnessError::io(path, e))?;
    }
    Ok(paths)
}

/// One row of `intervals.csv`.
#[derive(Clone, Debug, PartialEq, serde::Deserialize)]
pub struct IntervalRow {
    pub seed: u64,
    pub functional: String,
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
    pub source: String,
}

pub fn read_intervals(dir: &Path) -> Result<Vec<IntervalRow>> {
    let path = dir.join(INTERVALS_FILE);
    let mut reader = csv::Reader::from_path(&path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(&path, io),
        other => HarnessError::Data(format!("{}: {other:?}", path.display())),
    })?;
    reader
        .deserialize()
        .map(|row| row.map_err(|e| HarnessError::Data(format!("{}: {e}", path.display()))))
        .collect()
}
