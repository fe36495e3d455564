//! CSV and JSON artifacts of a run.
//!
//! Column order is fixed by the row structs below.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use botl_core::botl::{ExperimentResult, Summary, TransferRecord};
use botl_core::regress::MetricsRecord;

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TRANSFERS_FILE: &str = "transfers.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

/// One prequential record: `stream,method,index,r2,pmcc2,rmse,active_models,metric_calcs`.
#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    stream: u32,
    method: &'a str,
    index: usize,
    r2: f64,
    pmcc2: f64,
    rmse: f64,
    active_models: usize,
    metric_calcs: u64,
}

impl<'a> MetricsRow<'a> {
    fn new(stream: u32, method: &'a str, r: &MetricsRecord) -> Self {
        Self {
            stream,
            method,
            index: r.window_index,
            r2: r.r2,
            pmcc2: r.pmcc2,
            rmse: r.rmse,
            active_models: r.active_models,
            metric_calcs: r.metric_calcs,
        }
    }
}

/// `time,sequence,from_stream,to_stream,model,origin_concept`.
#[derive(Debug, Serialize)]
struct TransferRow {
    time: usize,
    sequence: u64,
    from_stream: u32,
    to_stream: u32,
    model: String,
    origin_concept: u32,
}

/// One point of a parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub detector: String,
    pub method: String,
    pub r2: f64,
    pub cdd_r2: f64,
    pub r2_delta: f64,
    pub mean_active_models: f64,
    pub metric_calcs: u64,
}

pub fn write_metrics(path: &Path, result: &ExperimentResult) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for s in &result.streams {
        for r in &s.records {
            w.serialize(MetricsRow::new(s.stream, &result.method, r))?;
        }
        for r in &s.baseline {
            w.serialize(MetricsRow::new(s.stream, "cdd", r))?;
        }
    }
    w.flush()
}

pub fn write_transfers(path: &Path, transfers: &[TransferRecord]) -> std::io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["time", "sequence", "from_stream", "to_stream", "model", "origin_concept"])?;
    for t in transfers {
        w.serialize(TransferRow {
            time: t.time,
            sequence: t.sequence,
            from_stream: t.from_stream,
            to_stream: t.to_stream,
            model: t.model.to_string(),
            origin_concept: t.origin_concept,
        })?;
    }
    w.flush()
}

pub fn summary_json(summary: &Summary) -> String {
    let mut s = serde_json::to_string_pretty(summary).expect("summary is serialisable");
    s.push('\n');
    s
}

pub fn write_summary(path: &Path, summary: &Summary) -> std::io::Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(summary_json(summary).as_bytes())?;
    f.flush()
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()
}
