use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::horizon::MetricsRow;
use super::kfold::{AblationReport, KFoldReport};
use super::plot::{confusion_heatmap, line_chart};
use crate::error::{Error, Result};
use crate::net::Scenario;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const KFOLD_CSV: &str = "kfold.csv";
pub const ABLATION_CSV: &str = "ablation.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::invalid(format!("unknown report format {s:?} (csv|json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub config_hash: String,
    pub scenario: Scenario,
    pub method: String,
    pub horizons: Vec<MetricsRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kfold: Option<KFoldReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationReport>,
}

impl Report {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Hex SHA-256 of a canonical config text.
pub fn config_hash(canonical: &str) -> String {
    Sha256::digest(canonical.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write(path: PathBuf, body: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

fn horizons_csv(rows: &[MetricsRow]) -> String {
    let mut s = String::from("T,accuracy,precision,recall,f1");
    for r in 0..5 {
        for c in 0..5 {
            s.push_str(&format!(",cm_{r}_{c}"));
        }
    }
    s.push_str(",zero_division\n");
    for row in rows {
        s.push_str(&format!(
            "{},{},{},{},{}",
            row.horizon, row.accuracy, row.precision, row.recall, row.f1
        ));
        for n in row.confusion.iter().flatten() {
            s.push_str(&format!(",{n}"));
        }
        let zd: Vec<&str> = row.zero_division.iter().map(|l| l.as_str()).collect();
        s.push_str(&format!(",{}\n", zd.join(";")));
    }
    s
}

fn kfold_csv(k: &KFoldReport) -> String {
    let mut s = String::from("T,method");
    for i in 1..=k.k {
        s.push_str(&format!(",fold_{i}"));
    }
    s.push_str(",mean,std\n");
    for row in &k.rows {
        s.push_str(&format!("{},{}", row.horizon, row.method));
        for v in &row.folds {
            s.push_str(&format!(",{v}"));
        }
        s.push_str(&format!(",{},{}\n", row.mean, row.std));
    }
    s
}

fn ablation_csv(a: &AblationReport) -> String {
    let mut s = String::from("preset,T,accuracy,precision,recall,f1\n");
    for series in &a.series {
        for r in &series.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                series.preset, r.horizon, r.accuracy, r.precision, r.recall, r.f1
            ));
        }
    }
    s
}

fn ablation_plots(a: &AblationReport, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    let Some(first) = a.series.first() else {
        return Ok(());
    };
    let xs: Vec<String> = first.rows.iter().map(|r| r.horizon.to_string()).collect();
    let metrics: [(&str, fn(&MetricsRow) -> f64); 4] = [
        ("accuracy", |r| r.accuracy),
        ("precision", |r| r.precision),
        ("recall", |r| r.recall),
        ("f1", |r| r.f1),
    ];
    for (name, get) in metrics {
        let series: Vec<(String, Vec<f64>)> = a
            .series
            .iter()
            .map(|s| (s.preset.to_string(), s.rows.iter().map(get).collect()))
            .collect();
        let svg = line_chart(&format!("{name} (%) by preset"), &xs, &series);
        write(dir.join(format!("ablation_{name}.svg")), &svg, written)?;
    }
    Ok(())
}

fn horizon_tag(t: i32) -> String {
    if t < 0 {
        format!("Tm{}", -t)
    } else {
        format!("T{t}")
    }
}

/// Writes the requested formats plus plots: a confusion heatmap per horizon
/// and, for ablations, one chart per metric. Returns the written paths.
pub fn emit_report(report: &Report, out_dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    let has_rows = !report.horizons.is_empty()
        || report.kfold.as_ref().is_some_and(|k| !k.rows.is_empty())
        || report.ablation.as_ref().is_some_and(|a| !a.series.is_empty());
    if !has_rows {
        return Err(Error::invalid("report has no rows"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Json => write(out_dir.join(REPORT_JSON), &report.to_json()?, &mut written)?,
            ReportFormat::Csv => {
                if !report.horizons.is_empty() {
                    write(out_dir.join(REPORT_CSV), &horizons_csv(&report.horizons), &mut written)?;
                }
                if let Some(k) = &report.kfold {
                    write(out_dir.join(KFOLD_CSV), &kfold_csv(k), &mut written)?;
                }
                if let Some(a) = &report.ablation {
                    write(out_dir.join(ABLATION_CSV), &ablation_csv(a), &mut written)?;
                }
            }
        }
    }
    for row in &report.horizons {
        let svg = confusion_heatmap(&format!("{} T={}", report.method, row.horizon), &row.confusion);
        write(out_dir.join(format!("confusion_{}.svg", horizon_tag(row.horizon))), &svg, &mut written)?;
    }
    if let Some(a) = &report.ablation {
        ablation_plots(a, out_dir, &mut written)?;
    }
    Ok(written)
}
