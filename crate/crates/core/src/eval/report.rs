use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{metrics, ConfusionCounts, Metrics, RocCurve};
use crate::error::{Error, Result};
use crate::features::{Descriptor, PlaneSelection};

/// One evaluated (descriptor, planes) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub descriptor: Descriptor,
    /// `None` for descriptors without planes.
    pub planes: Option<PlaneSelection>,
    /// Operating R for the reported counts.
    #[serde(rename = "R")]
    pub r: usize,
    pub counts: ConfusionCounts,
    pub roc: Option<RocCurve>,
    /// Set when the cell could not be computed.
    pub error: Option<String>,
}

impl ReportRow {
    pub fn metrics(&self) -> Metrics {
        metrics(&self.counts)
    }

    pub fn planes_label(&self) -> &'static str {
        self.planes.map_or("-", PlaneSelection::as_str)
    }

    fn sort_key(&self) -> (usize, usize) {
        let d = Descriptor::VARIANTS
            .iter()
            .position(|&d| d == self.descriptor)
            .unwrap_or(usize::MAX);
        let p = self
            .planes
            .and_then(|p| PlaneSelection::VARIANTS.iter().position(|&q| q == p))
            .unwrap_or(0);
        (d, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `key = value` lines echoed in the header.
    pub config: Vec<(String, String)>,
    pub clips: usize,
    pub rows: Vec<ReportRow>,
}

fn fmt4(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_owned(), |v| format!("{v:.4}"))
}

fn csv4(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"))
}

impl EvalReport {
    pub fn new(config: Vec<(String, String)>, clips: usize, mut rows: Vec<ReportRow>) -> Self {
        rows.sort_by_key(ReportRow::sort_key);
        Self {
            config,
            clips,
            rows,
        }
    }

    /// Plain-text tables, one section per descriptor in fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# Micro-movement spotting evaluation\n");
        out.push_str("# AUC: trapezoidal rule over the (FPR, TPR) points of the R sweep, completed with (0,0) and (1,1), sorted by FPR\n");
        out.push_str("# Undefined ratios (0/0) are shown as n/a\n");
        let _ = writeln!(out, "# clips = {}", self.clips);
        for (k, v) in &self.config {
            let _ = writeln!(out, "# {k} = {v}");
        }
        for d in Descriptor::VARIANTS {
            let rows: Vec<&ReportRow> = self.rows.iter().filter(|r| r.descriptor == d).collect();
            if rows.is_empty() {
                continue;
            }
            let _ = writeln!(out, "\n[{d}]");
            let _ = writeln!(
                out,
                "{:<6} {:>4} {:>7} {:>7} {:>9} {:>7} {:>8} {:>7} {:>6} {:>6} {:>6} {:>6}  note",
                "planes",
                "R",
                "AUC",
                "recall",
                "precision",
                "F",
                "accuracy",
                "FPR",
                "TP",
                "FP",
                "FN",
                "TN"
            );
            for row in rows {
                let m = row.metrics();
                let c = &row.counts;
                let note = match &row.error {
                    Some(e) => format!("failed: {e}"),
                    None if c.tp + c.fp == 0 => "no detections".to_owned(),
                    None => String::new(),
                };
                let _ = writeln!(
                    out,
                    "{:<6} {:>4} {:>7} {:>7} {:>9} {:>7} {:>8} {:>7} {:>6} {:>6} {:>6} {:>6}  {}",
                    row.planes_label(),
                    row.r,
                    fmt4(row.roc.as_ref().map(|r| r.auc)),
                    fmt4(m.recall),
                    fmt4(m.precision),
                    fmt4(m.f_measure),
                    fmt4(m.accuracy),
                    fmt4(m.fpr),
                    c.tp,
                    c.fp,
                    c.fn_,
                    c.tn,
                    note
                );
            }
        }
        out
    }

    /// One line per row with raw counts and 4-decimal metrics.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from(
            "descriptor,planes,R,tp,fp,fn,tn,spurious,recall,precision,f_measure,accuracy,fpr,auc\n",
        );
        for row in &self.rows {
            let m = row.metrics();
            let c = &row.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                row.descriptor,
                row.planes_label(),
                row.r,
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                c.spurious,
                csv4(m.recall),
                csv4(m.precision),
                csv4(m.f_measure),
                csv4(m.accuracy),
                csv4(m.fpr),
                csv4(row.roc.as_ref().map(|r| r.auc))
            );
        }
        out
    }

    /// Counts per row read back from [`Self::metrics_csv`] output.
    pub fn parse_metrics_csv(text: &str) -> Result<Vec<(String, String, usize, ConfusionCounts)>> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::Schema(format!("metrics csv: {e}")))?;
            let num = |i: usize| -> Result<u64> {
                rec.get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::Schema(format!("metrics csv: bad field {i}")))
            };
            rows.push((
                rec[0].to_owned(),
                rec[1].to_owned(),
                num(2)? as usize,
                ConfusionCounts {
                    tp: num(3)?,
                    fp: num(4)?,
                    fn_: num(5)?,
                    tn: num(6)?,
                    spurious: num(7)?,
                },
            ));
        }
        Ok(rows)
    }

    /// File name of a row's ROC CSV.
    pub fn roc_file_name(row: &ReportRow) -> String {
        format!(
            "roc_{}_{}.csv",
            row.descriptor,
            row.planes_label().replace('-', "none")
        )
    }

    /// Writes `report.txt`, `metrics.csv` and one ROC CSV per swept row.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, text: &str| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
        };
        put("report.txt", &self.to_text())?;
        put("metrics.csv", &self.metrics_csv())?;
        for row in &self.rows {
            if let Some(roc) = &row.roc {
                put(&Self::roc_file_name(row), &roc.to_csv())?;
            }
        }
        Ok(())
    }
}
