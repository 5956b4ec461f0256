use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use popcom::kernel::KernelParams;

/// Everything needed to reproduce and audit one fit. Serialized with stable
/// key order (struct order).
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: ResolvedConfig,
    pub dataset: DatasetSummary,
    pub fit: FitSummary,
    pub metrics: MetricsSummary,
    pub assignment: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<Vec<f64>>>,
    pub warnings: Vec<String>,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedConfig {
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub content: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cites: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generate: Option<String>,
    pub k: usize,
    pub kernel: KernelParams,
    pub prior_shape: f64,
    pub prior_rate: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub fixed_popularity: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub nodes: usize,
    pub links: usize,
    pub attrs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropped_cites: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_bound: f64,
    pub guard_trips: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsSummary {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nmi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pwf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub modularity: Option<f64>,
}

pub fn write_report(report: &RunReport, path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn write_trace(trace: &[f64], path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "iteration,bound")?;
    for (i, b) in trace.iter().enumerate() {
        writeln!(out, "{i},{b}")?;
    }
    out.flush()?;
    Ok(())
}

/// One sweep row; failed points carry their error and empty metric cells.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub nmi: Option<f64>,
    pub pwf: Option<f64>,
    pub modularity: Option<f64>,
    pub final_bound: Option<f64>,
    pub status: String,
}

pub fn write_sweep(rows: &[SweepRow], path: &Path) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "value,nmi,pwf,modularity,final_bound,status")?;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.value,
            cell(row.nmi),
            cell(row.pwf),
            cell(row.modularity),
            cell(row.final_bound),
            row.status.replace(',', ";")
        )?;
    }
    out.flush()?;
    Ok(())
}
