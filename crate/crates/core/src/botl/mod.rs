//! Multi-stream orchestration: per-stream drift detection, base-model
//! selection and stacking, with bi-directional model transfer.

mod runner;
mod transfer;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdd::{CddConfig, DetectorKind};
use crate::model::ModelId;
use crate::regress::MetricsRecord;
use crate::selection::{SelectionParams, SelectorKind};
use crate::streams::{StreamConfig, StreamError};

pub use runner::{run_framework, run_framework_parallel, EvalWindow};
pub use transfer::{maybe_transfer, ReducedTransferState, TransferDecision, TransferEnvelope, TransferPolicy};

#[derive(Debug, Error)]
pub enum BotlError {
    #[error("no streams configured")]
    NoStreams,
    #[error("stream {stream} expects detector {found:?} but the run uses {expected:?}")]
    ConfigMismatch { stream: usize, expected: DetectorKind, found: DetectorKind },
    #[error("stream {stream}: {source}")]
    Stream { stream: usize, source: StreamError },
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameworkConfig {
    pub streams: Vec<StreamConfig>,
    /// Detector settings shared by every stream; the window size comes
    /// from each stream.
    pub detector: CddConfig,
    pub selector: SelectorKind,
    pub selection: SelectionParams,
    pub transfer_policy: TransferPolicy,
    pub transfer: bool,
    /// Window-dependent selectors re-run at least this often; defaults to
    /// the stream's window size.
    pub reselect_every: Option<usize>,
    pub seed: u64,
}

impl Default for FrameworkConfig {
    fn default() -> Self {
        Self {
            streams: Vec::new(),
            detector: CddConfig::default(),
            selector: SelectorKind::CsClust,
            selection: SelectionParams::default(),
            transfer_policy: TransferPolicy::All,
            transfer: true,
            reselect_every: None,
            seed: 0,
        }
    }
}

impl FrameworkConfig {
    pub fn validate(&self) -> Result<(), BotlError> {
        if self.streams.is_empty() {
            return Err(BotlError::NoStreams);
        }
        for (i, s) in self.streams.iter().enumerate() {
            if let Some(found) = s.detector {
                if found != self.detector.kind {
                    return Err(BotlError::ConfigMismatch { stream: i, expected: self.detector.kind, found });
                }
            }
            s.validate().map_err(|source| BotlError::Stream { stream: i, source })?;
        }
        Ok(())
    }

    /// The stream configuration actually opened for stream `index`, with
    /// seeds derived from the run seed.
    pub fn stream_config(&self, index: usize) -> Option<StreamConfig> {
        self.streams.get(index).map(|s| runner::effective_config(s, self.seed, index))
    }

    /// Row label of this selector and transfer policy combination.
    pub fn method_name(&self) -> String {
        match (self.selector, self.transfer_policy) {
            (SelectorKind::None, TransferPolicy::All) => "botl".into(),
            (SelectorKind::None, TransferPolicy::ClusteredReduced) => "botl_red".into(),
            (s, TransferPolicy::All) => s.name().into(),
            (s, TransferPolicy::ClusteredReduced) => format!("{}_red", s.name()),
        }
    }
}

/// One row of the envelope log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRecord {
    /// Sender's instance index at broadcast.
    pub time: usize,
    pub sequence: u64,
    pub from_stream: u32,
    pub to_stream: u32,
    pub model: ModelId,
    pub origin_concept: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamResult {
    pub stream: u32,
    pub window: usize,
    /// Meta-learner series, one record per instance.
    pub records: Vec<MetricsRecord>,
    /// Detector-alone series on the same instances.
    pub baseline: Vec<MetricsRecord>,
    pub transfers_sent: u64,
    pub transfers_received: u64,
    pub drifts_detected: usize,
    pub registry_size: usize,
    pub local_models: usize,
}

impl StreamResult {
    /// Records whose trailing evaluation window is full.
    pub fn full_windows(series: &[MetricsRecord], window: usize) -> &[MetricsRecord] {
        &series[series.len().min(window.saturating_sub(1))..]
    }

    pub fn summary(&self) -> MethodSummary {
        MethodSummary::of(Self::full_windows(&self.records, self.window))
    }

    pub fn baseline_summary(&self) -> MethodSummary {
        MethodSummary::of(Self::full_windows(&self.baseline, self.window))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub method: String,
    pub detector: DetectorKind,
    pub selector: SelectorKind,
    pub policy: TransferPolicy,
    pub seed: u64,
    pub streams: Vec<StreamResult>,
    pub transfers: Vec<TransferRecord>,
}

/// The five reported quantities of one method on one stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub r2: f64,
    pub pmcc2: f64,
    pub rmse: f64,
    pub mean_active_models: f64,
    pub metric_calcs: u64,
}

impl MethodSummary {
    pub fn of(records: &[MetricsRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let mean = |f: fn(&MetricsRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
        Self {
            r2: mean(|r| r.r2),
            pmcc2: mean(|r| r.pmcc2),
            rmse: mean(|r| r.rmse),
            mean_active_models: mean(|r| r.active_models as f64),
            metric_calcs: records.last().map_or(0, |r| r.metric_calcs),
        }
    }

    fn mean_of(items: &[MethodSummary]) -> Self {
        let n = items.len().max(1) as f64;
        Self {
            r2: items.iter().map(|m| m.r2).sum::<f64>() / n,
            pmcc2: items.iter().map(|m| m.pmcc2).sum::<f64>() / n,
            rmse: items.iter().map(|m| m.rmse).sum::<f64>() / n,
            mean_active_models: items.iter().map(|m| m.mean_active_models).sum::<f64>() / n,
            metric_calcs: items.iter().map(|m| m.metric_calcs).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub stream: u32,
    pub methods: BTreeMap<String, MethodSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub transfers_sent: u64,
    pub transfers_received: u64,
    pub drifts_detected: usize,
    pub registry_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub detector: DetectorKind,
    pub seed: u64,
    pub streams: Vec<StreamSummary>,
    /// Stream means of each quantity; metric calculations are summed.
    pub overall: BTreeMap<String, MethodSummary>,
    pub totals: Totals,
}

impl ExperimentResult {
    pub fn summary(&self) -> Summary {
        let mut streams = Vec::new();
        let mut per_method: BTreeMap<String, Vec<MethodSummary>> = BTreeMap::new();
        for s in &self.streams {
            let mut methods = BTreeMap::new();
            methods.insert("cdd".to_string(), s.baseline_summary());
            methods.insert(self.method.clone(), s.summary());
            for (k, v) in &methods {
                per_method.entry(k.clone()).or_default().push(*v);
            }
            streams.push(StreamSummary { stream: s.stream, methods });
        }
        let overall = per_method.iter().map(|(k, v)| (k.clone(), MethodSummary::mean_of(v))).collect();
        Summary {
            method: self.method.clone(),
            detector: self.detector,
            seed: self.seed,
            streams,
            overall,
            totals: Totals {
                transfers_sent: self.streams.iter().map(|s| s.transfers_sent).sum(),
                transfers_received: self.streams.iter().map(|s| s.transfers_received).sum(),
                drifts_detected: self.streams.iter().map(|s| s.drifts_detected).sum(),
                registry_sizes: self.streams.iter().map(|s| s.registry_size).collect(),
            },
        }
    }

    /// Mean windowed R² of the meta-learner across streams.
    pub fn mean_r2(&self) -> f64 {
        self.summary().overall[&self.method].r2
    }

    /// Mean windowed R² of the detector alone across streams.
    pub fn baseline_r2(&self) -> f64 {
        self.summary().overall["cdd"].r2
    }

    pub fn total_calcs(&self) -> u64 {
        self.streams.iter().map(|s| s.records.last().map_or(0, |r| r.metric_calcs)).sum()
    }

    pub fn transfers_sent(&self) -> u64 {
        self.streams.iter().map(|s| s.transfers_sent).sum()
    }

    /// Smallest full-window R² over every stream.
    pub fn min_windowed_r2(&self) -> f64 {
        self.streams
            .iter()
            .flat_map(|s| StreamResult::full_windows(&s.records, s.window))
            .map(|r| r.r2)
            .fold(f64::INFINITY, f64::min)
    }
}
