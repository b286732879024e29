//! CSV outputs: result rows, per-snapshot records and training metrics.

use std::path::Path;

use iwgt_core::eval::{EvalReport, Method};
use serde::{Deserialize, Serialize};

use crate::dataset::write_atomic;
use crate::error::{Error, Result};

pub const RESULT_HEADER: [&str; 11] = [
    "experiment",
    "scenario",
    "objective",
    "method",
    "n_shot",
    "mask_ratio",
    "param_count",
    "seed",
    "mean_utility",
    "ratio_vs_wmmse_best",
    "violated_user_rate",
];

/// One aggregate result. Empty cells mean "not applicable" (`n_shot` outside
/// few-shot runs) or "undefined" (a zero reference utility, or no user below
/// the reporting threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub scenario: String,
    pub objective: String,
    pub method: String,
    pub n_shot: Option<usize>,
    pub mask_ratio: f64,
    pub param_count: usize,
    pub seed: u64,
    pub mean_utility: f64,
    pub ratio_vs_wmmse_best: Option<f64>,
    pub violated_user_rate: Option<f64>,
}

/// Labels shared by every row derived from one report.
#[derive(Debug, Clone)]
pub struct RowContext<'a> {
    pub experiment: &'a str,
    pub scenario: &'a str,
    pub n_shot: Option<usize>,
    pub mask_ratio: f64,
    pub param_count: usize,
    pub seed: u64,
}

impl RowContext<'_> {
    /// The row for `method` of `report`, labelled `label`.
    pub fn row(&self, report: &EvalReport, method: Method, label: &str) -> ResultRow {
        let s = report.summary(method);
        ResultRow {
            experiment: self.experiment.to_string(),
            scenario: self.scenario.to_string(),
            objective: report.objective.name().to_string(),
            method: label.to_string(),
            n_shot: self.n_shot,
            mask_ratio: self.mask_ratio,
            param_count: self.param_count,
            seed: self.seed,
            mean_utility: s.mean_utility,
            ratio_vs_wmmse_best: s.ratio_vs_wmmse_best,
            violated_user_rate: s.violated_user_rate,
        }
    }

    /// One row per method, in [`Method::ALL`] order.
    pub fn rows(&self, report: &EvalReport) -> Vec<ResultRow> {
        Method::ALL.iter().map(|&m| self.row(report, m, m.name())).collect()
    }
}

fn csv_bytes<T: Serialize>(header: &[&str], rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header).map_err(|e| Error::Config(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Config(e.to_string()))
}

pub fn results_csv(rows: &[ResultRow]) -> Result<Vec<u8>> {
    csv_bytes(&RESULT_HEADER, rows)
}

pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    write_atomic(path, &results_csv(rows)?)
}

/// Reads a results file, requiring the exact header.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::corrupt(path, e.to_string()))?;
    let header = r.headers().map_err(|e| Error::corrupt(path, e.to_string()))?;
    if header.iter().ne(RESULT_HEADER.iter().copied()) {
        return Err(Error::corrupt(path, "results header does not match the schema"));
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<ResultRow>, _>>()
        .map_err(|e| Error::corrupt(path, e.to_string()))
}

pub const RECORD_HEADER: [&str; 6] = ["index", "method", "utility", "ratio_vs_wmmse_best", "violated_user_rate", "rates"];

#[derive(Debug, Clone, PartialEq, Serialize)]
struct RecordRow {
    index: usize,
    method: &'static str,
    utility: f64,
    ratio_vs_wmmse_best: Option<f64>,
    violated_user_rate: Option<f64>,
    /// Per-link rates joined with `;`.
    rates: String,
}

/// Per-snapshot records of `report`, one row per (snapshot, method).
pub fn records_csv(report: &EvalReport) -> Result<Vec<u8>> {
    let r_min = report.objective.report_r_min();
    let rows: Vec<RecordRow> = report
        .records
        .iter()
        .flat_map(|rec| {
            Method::ALL.iter().map(move |&m| {
                let o = rec.outcome(m);
                let low: Vec<f64> = o.rates.iter().copied().filter(|&x| x < r_min).collect();
                RecordRow {
                    index: rec.index,
                    method: m.name(),
                    utility: o.utility,
                    ratio_vs_wmmse_best: rec.ratio(m),
                    violated_user_rate: (!low.is_empty()).then(|| low.iter().sum::<f64>() / low.len() as f64),
                    rates: o.rates.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(";"),
                }
            })
        })
        .collect();
    csv_bytes(&RECORD_HEADER, &rows)
}

pub const PRETRAIN_METRICS_HEADER: [&str; 9] =
    ["epoch", "lr", "train_l_edge", "train_l_cl", "train_l_pre", "l_edge", "l_cl", "l_pre", "seconds"];

/// One epoch of pre-training; `l_*` are validation losses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PretrainMetric {
    pub epoch: usize,
    pub lr: f64,
    pub train_l_edge: f64,
    pub train_l_cl: f64,
    pub train_l_pre: f64,
    pub l_edge: f64,
    pub l_cl: f64,
    pub l_pre: f64,
    pub seconds: f64,
}

pub const FINETUNE_METRICS_HEADER: [&str; 5] = ["epoch", "stage", "lr", "utility", "seconds"];

/// One epoch of fine-tuning; `lr` is the head learning rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinetuneMetric {
    pub epoch: usize,
    pub stage: &'static str,
    pub lr: f64,
    pub utility: f64,
    pub seconds: f64,
}

pub fn write_pretrain_metrics(path: &Path, rows: &[PretrainMetric]) -> Result<()> {
    write_atomic(path, &csv_bytes(&PRETRAIN_METRICS_HEADER, rows)?)
}

pub fn write_finetune_metrics(path: &Path, rows: &[FinetuneMetric]) -> Result<()> {
    write_atomic(path, &csv_bytes(&FINETUNE_METRICS_HEADER, rows)?)
}
