//! Report serialization: a fixed-schema CSV (`diagnostic,mean,stderr,
//! ci_lo,ci_hi,paths`), a JSON mirror with the config echo, and the run
//! manifest that says where and in which formats to write.
//!
//! Numeric cells use 17 significant digits with `.` as the decimal
//! separator and `\n` line endings, so identical reports serialize to
//! identical bytes on every platform.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::ensemble::EnsembleReport;
use crate::error::{Result, SimError};

/// 17 significant digits, bit-stable across platforms.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Output formats for report files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(SimError::Validation {
                field: "format",
                msg: format!("unknown format `{s}` (expected csv or json)"),
            }),
        }
    }
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: SimConfig,
    pub output_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl RunManifest {
    pub fn new(config: SimConfig, output_dir: impl Into<PathBuf>, formats: Vec<OutputFormat>) -> Result<Self> {
        if formats.is_empty() {
            return Err(SimError::Validation {
                field: "formats",
                msg: "at least one output format is required".into(),
            });
        }
        Ok(Self {
            config,
            output_dir: output_dir.into(),
            formats,
        })
    }
}

/// Render the fixed-schema CSV. Rows appear in the deterministic order
/// the ensemble produced them.
pub fn report_csv(report: &EnsembleReport) -> String {
    let mut out = String::from("diagnostic,mean,stderr,ci_lo,ci_hi,paths\n");
    for d in &report.diagnostics {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            d.name,
            format_f64(d.mean),
            format_f64(d.stderr),
            format_f64(d.ci_lo),
            format_f64(d.ci_hi),
            d.paths
        ));
    }
    out
}

/// Write the report under `manifest.output_dir/<basename>.{csv,json}`;
/// returns the files written.
pub fn write_report(
    report: &EnsembleReport,
    manifest: &RunManifest,
    basename: &str,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&manifest.output_dir)?;
    let mut written = Vec::new();
    for fmt in &manifest.formats {
        let path = match fmt {
            OutputFormat::Csv => {
                let p = manifest.output_dir.join(format!("{basename}.csv"));
                fs::write(&p, report_csv(report))?;
                p
            }
            OutputFormat::Json => {
                let p = manifest.output_dir.join(format!("{basename}.json"));
                let body = serde_json::to_string_pretty(report).map_err(|e| {
                    SimError::Validation {
                        field: "report",
                        msg: format!("json serialization failed: {e}"),
                    }
                })?;
                fs::write(&p, body + "\n")?;
                p
            }
        };
        written.push(path);
    }
    Ok(written)
}

/// Read a JSON report back; inverse of the JSON side of [`write_report`].
pub fn read_report_json(path: &Path) -> Result<EnsembleReport> {
    let body = fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| SimError::Validation {
        field: "report",
        msg: format!("json parse failed: {e}"),
    })
}

/// Write an arbitrary pre-rendered table (refinement and sweep summaries
/// use their own layouts).
pub fn write_text(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let p = dir.join(name);
    fs::write(&p, body)?;
    Ok(p)
}
