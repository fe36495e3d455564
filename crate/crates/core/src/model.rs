//! Base models and their identifiers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::regress::RidgeModel;
use crate::subspace::ReducedPcs;

/// Identifier of a base model: the stream that learnt it and a per-stream
/// sequence number. Ordering is by stream, then sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModelId {
    pub stream: u32,
    pub seq: u32,
}

impl ModelId {
    pub const fn new(stream: u32, seq: u32) -> Self {
        Self { stream, seq }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}m{}", self.stream, self.seq)
    }
}

/// A trained regressor together with the subspace of its training window.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseModel {
    pub id: ModelId,
    pub model: RidgeModel,
    pub pcs: ReducedPcs,
    /// Detector-local concept label in the origin stream.
    pub concept: u32,
    /// Majority ground-truth concept of the training window, when known.
    pub true_concept: Option<u32>,
    pub stable: bool,
}

impl BaseModel {
    pub fn origin_stream(&self) -> u32 {
        self.id.stream
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        self.model.predict(features)
    }
}
