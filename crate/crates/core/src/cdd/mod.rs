//! Concept drift detectors: RePro-style windowed-R² monitoring, ADWIN, and
//! AWPro (ADWIN cut points with model reuse).

mod adwin;
mod detector;

use thiserror::Error;

use crate::model::ModelId;

pub use adwin::{adwin_step, AdwinOutcome, AdwinWindow, DEFAULT_DELTA};
pub use detector::{CddConfig, CddEvent, Detector, DetectorKind, LocalModel, Mode, StepOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CddError {
    #[error("drift cannot be resolved yet: {have} of {need} instances collected")]
    ColdStart { have: usize, need: usize },
    #[error("unknown model {0}")]
    UnknownModel(ModelId),
}
