//! Concept-drifting data streams: drifting hyperplanes, a heating-schedule
//! simulator and CSV ingestion.

mod csv;
mod heating;
mod hyperplane;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdd::DetectorKind;

pub use self::csv::{csv_ingest, CsvStream};
pub use self::heating::{heating_stream, HeatingStream, HEATING_FEATURES, SAMPLES_PER_DAY};
pub use self::hyperplane::{hyperplane_stream, HyperplaneStream, CONCEPT_POOL_SIZE};

/// One labelled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub target: f64,
    /// Position `t` in the stream, starting at 0.
    pub index: usize,
    /// Ground-truth concept label; only generators know it.
    pub concept: Option<u32>,
}

impl Instance {
    pub fn new(features: Vec<f64>, target: f64, index: usize) -> Self {
        Self { features, target, index, concept: None }
    }

    pub fn with_concept(mut self, concept: u32) -> Self {
        self.concept = Some(concept);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    #[default]
    Hyperplane,
    Heating,
    Csv,
}

/// Noise overlay of the hyperplane generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Variant {
    /// Uniform target noise.
    #[default]
    A,
    /// Permanent sensor failure with compensating features.
    B,
    /// Intermittent sensor failure.
    C,
    /// Sensor deterioration.
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    #[default]
    Sudden,
    Gradual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub path: PathBuf,
    pub feature_columns: Vec<String>,
    pub target_column: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Min-max scale features with running statistics.
    #[serde(default)]
    pub scale: bool,
}

fn default_delimiter() -> char {
    ','
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub kind: StreamKind,
    pub variant: Variant,
    pub drift_mode: DriftMode,
    pub num_features: usize,
    pub length: usize,
    pub drifts: usize,
    /// Instances over which a gradual drift mixes old and new concepts.
    pub mixing_m: Option<usize>,
    /// Instances between drifts, excluding any mixing period.
    pub segment_len: Option<usize>,
    pub seed: u64,
    /// Seed of state shared between streams: the hyperplane concept pool and
    /// the heating weather. Defaults to `seed`.
    pub shared_seed: Option<u64>,
    /// Day offset into the shared weather series (heating only).
    pub offset_days: usize,
    pub csv: Option<CsvSource>,
    /// Overrides the detector window size for this stream.
    pub window: Option<usize>,
    /// Detector this stream expects; all streams of a run must agree.
    pub detector: Option<DetectorKind>,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            kind: StreamKind::Hyperplane,
            variant: Variant::A,
            drift_mode: DriftMode::Sudden,
            num_features: 10,
            length: 10_000,
            drifts: 20,
            mixing_m: None,
            segment_len: None,
            seed: 0,
            shared_seed: None,
            offset_days: 0,
            csv: None,
            window: None,
            detector: None,
        }
    }
}

/// Stable period used to size gradual streams when `segment_len` is unset.
pub const DEFAULT_GRADUAL_SEGMENT: usize = 500;

impl StreamConfig {
    pub fn hyperplane(variant: Variant, length: usize, drifts: usize, seed: u64) -> Self {
        Self { variant, length, drifts, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), StreamError> {
        let bad = |msg: String| Err(StreamError::InvalidConfig(msg));
        match self.kind {
            StreamKind::Hyperplane => {
                if self.length == 0 {
                    return bad("length must be positive".into());
                }
                if self.num_features < 4 {
                    return bad(format!("num_features must be at least 4, got {}", self.num_features));
                }
                self.schedule()?;
            }
            StreamKind::Heating => {
                if self.length == 0 {
                    return bad("length must be positive".into());
                }
            }
            StreamKind::Csv => {
                if self.csv.is_none() {
                    return bad("csv stream requires a [csv] source".into());
                }
            }
        }
        if self.window == Some(0) {
            return bad("window must be positive".into());
        }
        Ok(())
    }

    /// Stable segment length and mixing length of the drift schedule.
    pub fn schedule(&self) -> Result<DriftSchedule, StreamError> {
        if self.drifts == 0 {
            return Ok(DriftSchedule { segment: self.length.max(1), mixing: 0 });
        }
        match self.drift_mode {
            DriftMode::Sudden => {
                let segment = self.segment_len.unwrap_or(self.length / self.drifts);
                if segment == 0 {
                    return Err(StreamError::InvalidConfig(format!(
                        "{} drifts do not fit into {} instances",
                        self.drifts, self.length
                    )));
                }
                Ok(DriftSchedule { segment, mixing: 0 })
            }
            DriftMode::Gradual => {
                let segment = self.segment_len.unwrap_or(DEFAULT_GRADUAL_SEGMENT);
                let mixing = match self.mixing_m {
                    Some(m) => m,
                    None => self.length.saturating_sub(segment * self.drifts) / self.drifts,
                };
                if mixing == 0 || segment == 0 {
                    return Err(StreamError::InvalidConfig(
                        "gradual drift needs mixing_m > 0 and a positive segment".into(),
                    ));
                }
                Ok(DriftSchedule { segment, mixing })
            }
        }
    }

    /// Detector window: the override, else 30 for hyperplane, 480 (ten days)
    /// for heating and 90 for CSV telemetry.
    pub fn window_size(&self) -> usize {
        self.window.unwrap_or(match self.kind {
            StreamKind::Hyperplane => 30,
            StreamKind::Heating => 480,
            StreamKind::Csv => 90,
        })
    }

    pub fn shared_seed(&self) -> u64 {
        self.shared_seed.unwrap_or(self.seed)
    }
}

/// Drift `j ≥ 1` starts mixing at `j·segment + (j−1)·mixing`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DriftSchedule {
    pub segment: usize,
    pub mixing: usize,
}

impl DriftSchedule {
    pub fn period(&self) -> usize {
        self.segment + self.mixing
    }

    /// Number of concept segments, counting the initial one.
    pub fn segments(&self, drifts: usize) -> usize {
        drifts + 1
    }

    /// Segment index of `t`, plus `(u, m)` when `t` lies inside a mixing
    /// window towards the next segment at position `u`.
    pub fn locate(&self, t: usize) -> (usize, Option<(usize, usize)>) {
        let j = t / self.period();
        let r = t % self.period();
        if r < self.segment {
            (j, None)
        } else {
            (j, Some((r - self.segment, self.mixing)))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StreamError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("malformed row {row}: column `{column}` has value `{value}`")]
    MalformedRow { row: usize, column: String, value: String },
    #[error("empty file: no data rows")]
    EmptyFile,
    #[error("i/o error: {0}")]
    Io(String),
    #[error("invalid stream config: {0}")]
    InvalidConfig(String),
}

pub type InstanceStream = Box<dyn Iterator<Item = Result<Instance, StreamError>> + Send>;

/// Opens any configured stream as a fallible instance iterator.
pub fn open_stream(config: &StreamConfig) -> Result<InstanceStream, StreamError> {
    config.validate()?;
    Ok(match config.kind {
        StreamKind::Hyperplane => Box::new(hyperplane_stream(config)?.map(Ok)),
        StreamKind::Heating => Box::new(heating_stream(config)?.map(Ok)),
        StreamKind::Csv => {
            let src = config.csv.as_ref().expect("validated");
            let stream = csv_ingest(
                &src.path,
                &src.feature_columns,
                &src.target_column,
                src.delimiter,
                src.scale,
                config.window,
            )?;
            Box::new(stream.take(if config.length == 0 { usize::MAX } else { config.length }))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sudden_default_schedule() {
        let cfg = StreamConfig::default();
        let s = cfg.schedule().unwrap();
        assert_eq!(s.segment, 500);
        assert_eq!(s.mixing, 0);
        assert_eq!(s.segments(cfg.drifts), 21);
    }

    #[test]
    fn gradual_mixing_from_length() {
        let cfg = StreamConfig {
            drift_mode: DriftMode::Gradual,
            length: 11_900,
            ..StreamConfig::default()
        };
        assert_eq!(cfg.schedule().unwrap().mixing, 95);
    }

    #[test]
    fn locate_mixing_windows() {
        let s = DriftSchedule { segment: 10, mixing: 4 };
        assert_eq!(s.locate(9), (0, None));
        assert_eq!(s.locate(10), (0, Some((0, 4))));
        assert_eq!(s.locate(13), (0, Some((3, 4))));
        assert_eq!(s.locate(14), (1, None));
        // Drift j = 2 starts at 2·10 + 1·4.
        assert_eq!(s.locate(24), (1, Some((0, 4))));
    }

    #[test]
    fn rejects_too_few_features() {
        let cfg = StreamConfig { num_features: 3, ..StreamConfig::default() };
        assert!(matches!(cfg.validate(), Err(StreamError::InvalidConfig(_))));
    }
}
