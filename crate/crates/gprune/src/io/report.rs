//! Versioned JSON run reports and the sweep histogram CSV.
//!
//! Reports are self-describing: tool version, the command that produced
//! them, and any seed ride along, and every channel index they contain is
//! 0-based (`index_base` records this). Numbers serialize in the shortest
//! form that parses back to the identical value, so a write/read pair is
//! lossless.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::{AdversarialSearch, SweepReport, HISTOGRAM_BINS};
use crate::error::{Error, Result};
use crate::model::{GroupCount, NormMatrix, Permutation};
use crate::pruner::PruneSolution;

pub const REPORT_VERSION: u32 = 1;

fn format_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Report pieces
// ---------------------------------------------------------------------------

/// Result of pruning one layer at one group count. Search results also
/// carry the layer's parameter and operation counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    pub layer: String,
    pub groups: GroupCount,
    pub objective: f64,
    pub cost: f64,
    pub recovery_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ops: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_perm: Option<Permutation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_perm: Option<Permutation>,
}

/// Whole-configuration sums; must re-derive from the per-layer entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigTotals {
    pub params: u64,
    pub ops: u64,
    pub cost: f64,
}

/// One solver answer in serializable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub objective: f64,
    pub cost: f64,
    pub recovery_ratio: f64,
    pub out_perm: Permutation,
    pub in_perm: Permutation,
}

impl From<&PruneSolution> for SolutionReport {
    fn from(sol: &PruneSolution) -> Self {
        SolutionReport {
            objective: sol.objective,
            cost: sol.cost,
            recovery_ratio: sol.recovery_ratio,
            out_perm: sol.perms.out_perm.clone(),
            in_perm: sol.perms.in_perm.clone(),
        }
    }
}

/// Outcome of an adversarial search, with the full instance embedded when
/// one was found so it can be replayed from the report alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialReport {
    pub size: usize,
    pub groups: GroupCount,
    pub trials: usize,
    pub found: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_out_perm: Option<Permutation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_in_perm: Option<Permutation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy: Option<SolutionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<SolutionReport>,
}

fn matrix_rows(m: &NormMatrix) -> Vec<Vec<f64>> {
    (0..m.rows())
        .map(|f| (0..m.cols()).map(|c| m.at(f, c)).collect())
        .collect()
}

impl AdversarialReport {
    pub fn from_search(
        size: usize,
        groups: GroupCount,
        trials: usize,
        search: &AdversarialSearch,
    ) -> Self {
        match search {
            AdversarialSearch::NotFound { trials: ran } => AdversarialReport {
                size,
                groups,
                trials: *ran,
                found: false,
                trial: None,
                matrix: None,
                truth_out_perm: None,
                truth_in_perm: None,
                greedy: None,
                oracle: None,
            },
            AdversarialSearch::Found(f) => AdversarialReport {
                size,
                groups,
                trials,
                found: true,
                trial: Some(f.trial),
                matrix: Some(matrix_rows(&f.instance.matrix)),
                truth_out_perm: Some(f.instance.truth.out_perm.clone()),
                truth_in_perm: Some(f.instance.truth.in_perm.clone()),
                greedy: Some(SolutionReport::from(&f.greedy)),
                oracle: Some(SolutionReport::from(&f.oracle)),
            },
        }
    }
}

/// Result of checking that the execution paths of a pruned layer agree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub layer: String,
    pub groups: GroupCount,
    pub cases: usize,
    pub tolerance: f64,
    pub max_rel_err: f64,
    /// Cases that also exercised the sparse path (1x1 kernels only).
    pub sparse_cases: usize,
    pub reassembly_exact: bool,
    pub passed: bool,
}

// ---------------------------------------------------------------------------
// The report document
// ---------------------------------------------------------------------------

/// The JSON document every subcommand emits. Sections are optional; a
/// report carries whichever ones its command produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub format_version: u32,
    pub tool: String,
    pub command: String,
    /// Always 0: all serialized channel indices count from zero.
    pub index_base: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Wall-clock seconds; omitted by the command-line tool so that seeded
    /// runs stay byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing_secs: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub totals: Option<ConfigTotals>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adversarial: Option<AdversarialReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify: Option<VerifyReport>,
}

impl RunReport {
    pub fn new(command: impl Into<String>) -> RunReport {
        RunReport {
            format_version: REPORT_VERSION,
            tool: concat!("gprune ", env!("CARGO_PKG_VERSION")).into(),
            command: command.into(),
            index_base: 0,
            seed: None,
            timing_secs: None,
            layers: Vec::new(),
            totals: None,
            sweep: None,
            adversarial: None,
            verify: None,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.index_base != 0 {
            return Err(format!(
                "index_base is {}, but this tool only handles 0-based indices",
                self.index_base
            ));
        }
        if let Some(totals) = &self.totals {
            let mut params: u64 = 0;
            let mut ops: u64 = 0;
            let mut cost = 0.0;
            for layer in &self.layers {
                params = layer
                    .params
                    .and_then(|p| params.checked_add(p))
                    .ok_or_else(|| {
                        format!("totals are present but layer {:?} has no parameter count", layer.layer)
                    })?;
                ops = layer.ops.and_then(|o| ops.checked_add(o)).ok_or_else(|| {
                    format!("totals are present but layer {:?} has no operation count", layer.layer)
                })?;
                cost += layer.cost;
            }
            if totals.params != params || totals.ops != ops {
                return Err(format!(
                    "totals ({}, {}) do not re-derive from the per-layer entries ({params}, {ops})",
                    totals.params, totals.ops
                ));
            }
            if totals.cost != cost {
                return Err(format!(
                    "total cost {} does not re-derive from the per-layer entries ({cost})",
                    totals.cost
                ));
            }
        }
        if let Some(sweep) = &self.sweep {
            for cell in &sweep.cells {
                if cell.histogram.len() != HISTOGRAM_BINS {
                    return Err(format!(
                        "sweep cell has {} histogram bins, expected {HISTOGRAM_BINS}",
                        cell.histogram.len()
                    ));
                }
                if cell.histogram.iter().sum::<u64>() != cell.samples as u64 {
                    return Err(format!(
                        "sweep histogram sums to {}, expected the sample count {}",
                        cell.histogram.iter().sum::<u64>(),
                        cell.samples
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Renders a report as the exact pretty-printed JSON [`write_report`]
/// produces, trailing newline included.
pub fn report_to_string(report: &RunReport) -> Result<String> {
    report.validate().map_err(Error::InvalidArgument)?;
    let mut text =
        serde_json::to_string_pretty(report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Serializes a report as pretty-printed JSON. The exact bytes depend only
/// on the report's contents.
pub fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    let text = report_to_string(report).map_err(|e| match e {
        Error::InvalidArgument(detail) => format_err(path, detail),
        other => other,
    })?;
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Reads a report back, checking its version and internal consistency.
pub fn read_report(path: &Path) -> Result<RunReport> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let value: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| format_err(path, e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| format_err(path, "missing format_version"))?;
    if found != REPORT_VERSION as u64 {
        return Err(Error::FormatVersion {
            found: found.try_into().unwrap_or(u32::MAX),
            supported: REPORT_VERSION,
        });
    }
    let report: RunReport =
        serde_json::from_value(value).map_err(|e| format_err(path, e.to_string()))?;
    report
        .validate()
        .map_err(|detail| format_err(path, detail))?;
    Ok(report)
}

// ---------------------------------------------------------------------------
// Sweep CSV
// ---------------------------------------------------------------------------

/// Writes a sweep's histograms as CSV with columns
/// `size,g,n_s,bin_low,bin_high,count`, one row per bin per cell.
pub fn write_sweep_csv(path: &Path, report: &SweepReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| format_err(path, e.to_string()))?;
    w.write_record(["size", "g", "n_s", "bin_low", "bin_high", "count"])
        .map_err(|e| format_err(path, e.to_string()))?;
    for cell in &report.cells {
        for (k, &count) in cell.histogram.iter().enumerate() {
            w.write_record([
                cell.size.to_string(),
                cell.groups.to_string(),
                cell.sort_rounds.to_string(),
                format!("{:.2}", k as f64 / HISTOGRAM_BINS as f64),
                format!("{:.2}", (k + 1) as f64 / HISTOGRAM_BINS as f64),
                count.to_string(),
            ])
            .map_err(|e| format_err(path, e.to_string()))?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}
