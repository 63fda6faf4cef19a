use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{AlignmentTransform, ErrorSeries, ErrorStats, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Ape,
    Rpe,
    Normals,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Ape => "ape",
            MetricKind::Rpe => "rpe",
            MetricKind::Normals => "normals",
        }
    }
}

/// One metric evaluated for one (sequence, algorithm) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub sequence: String,
    pub algorithm: String,
    pub metric: MetricKind,
    pub stats: ErrorStats,
    pub series: ErrorSeries,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<AlignmentTransform>,
    /// Rows `t est_x est_y est_z ref_x ref_y ref_z` for overlay plots.
    #[serde(skip)]
    pub overlay: Option<Vec<[f64; 7]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub results_json: PathBuf,
    pub summary_csv: PathBuf,
    pub series_csv: Vec<PathBuf>,
    pub overlays: Vec<PathBuf>,
}

pub const SUMMARY_HEADER: &str = "sequence,algorithm,metric,rmse,mean,median,std,min,max";

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// One summary row per result, in input order.
pub fn summary_table(results: &[MetricResult]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for r in results {
        let s = &r.stats;
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.sequence,
            r.algorithm,
            r.metric.as_str(),
            s.rmse,
            s.mean,
            s.median,
            s.std,
            s.min,
            s.max
        )
        .expect("writing to a String");
    }
    out
}

pub fn series_csv(series: &ErrorSeries) -> String {
    let mut out = String::from("t,error\n");
    for (t, e) in series.t.iter().zip(&series.error) {
        writeln!(out, "{t:.9},{e:.9}").expect("writing to a String");
    }
    out
}

/// Write `results.json`, `summary.csv`, one `<seq>_<alg>_<metric>.csv`
/// series per result, and gnuplot-ready `.dat` overlays where present.
pub fn write_report(results: &[MetricResult], out_dir: &Path) -> Result<ReportFiles, EvalError> {
    if results.is_empty() {
        return Err(EvalError::NothingToReport);
    }
    let io = |p: &Path, e: std::io::Error| EvalError::Io(format!("{}: {e}", p.display()));
    std::fs::create_dir_all(out_dir).map_err(|e| io(out_dir, e))?;
    let results_json = out_dir.join("results.json");
    let text = serde_json::to_string_pretty(results).expect("results serialize") + "\n";
    std::fs::write(&results_json, text).map_err(|e| io(&results_json, e))?;
    let summary_csv = out_dir.join("summary.csv");
    std::fs::write(&summary_csv, summary_table(results)).map_err(|e| io(&summary_csv, e))?;
    let mut series = Vec::new();
    let mut overlays = Vec::new();
    for r in results {
        let stem = format!("{}_{}_{}", slug(&r.sequence), slug(&r.algorithm), r.metric.as_str());
        let p = out_dir.join(format!("{stem}.csv"));
        std::fs::write(&p, series_csv(&r.series)).map_err(|e| io(&p, e))?;
        series.push(p);
        if let Some(rows) = &r.overlay {
            let p = out_dir.join(format!("{stem}_overlay.dat"));
            let mut text = String::from("# t est_x est_y est_z ref_x ref_y ref_z\n");
            for row in rows {
                let cols: Vec<String> = row.iter().map(|v| format!("{v:.9}")).collect();
                text.push_str(&cols.join(" "));
                text.push('\n');
            }
            std::fs::write(&p, text).map_err(|e| io(&p, e))?;
            overlays.push(p);
        }
    }
    Ok(ReportFiles { results_json, summary_csv, series_csv: series, overlays })
}
