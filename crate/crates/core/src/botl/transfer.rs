//! Model envelopes exchanged between streams and the reduced-transfer rule.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::clustering::stsc_cluster;
use crate::model::{BaseModel, ModelId};
use crate::regress::RidgeModel;
use crate::subspace::{build_affinity, conceptual_distance, DistanceMatrix, ReducedPcs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferPolicy {
    /// Every stable local model is broadcast.
    #[default]
    All,
    /// A stable model is broadcast only if none of the conceptually similar
    /// local models has been sent before.
    ClusteredReduced,
}

/// A stable model on its way to a peer stream, subspace included.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferEnvelope {
    pub model_id: ModelId,
    pub model: RidgeModel,
    pub pcs: ReducedPcs,
    pub origin_stream: u32,
    pub origin_concept: u32,
    pub true_concept: Option<u32>,
    /// Per-origin send counter.
    pub sequence: u64,
}

impl TransferEnvelope {
    pub fn new(model: &BaseModel, sequence: u64) -> Self {
        Self {
            model_id: model.id,
            model: model.model.clone(),
            pcs: model.pcs.clone(),
            origin_stream: model.id.stream,
            origin_concept: model.concept,
            true_concept: model.true_concept,
            sequence,
        }
    }

    pub fn into_base(self) -> BaseModel {
        BaseModel {
            id: self.model_id,
            model: self.model,
            pcs: self.pcs,
            concept: self.origin_concept,
            true_concept: self.true_concept,
            stable: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferDecision {
    Send,
    Suppress,
}

/// Local-only clustering state behind reduced transfer.
#[derive(Debug, Clone)]
pub struct ReducedTransferState {
    distances: DistanceMatrix,
    pcs: BTreeMap<ModelId, ReducedPcs>,
    sent: BTreeSet<ModelId>,
    scaling_k: usize,
    max_clusters: usize,
}

impl ReducedTransferState {
    pub fn new(scaling_k: usize, max_clusters: usize) -> Self {
        Self {
            distances: DistanceMatrix::new(),
            pcs: BTreeMap::new(),
            sent: BTreeSet::new(),
            scaling_k,
            max_clusters,
        }
    }

    pub fn sent(&self) -> &BTreeSet<ModelId> {
        &self.sent
    }

    pub fn local_models(&self) -> usize {
        self.distances.len()
    }

    fn add(&mut self, id: ModelId, pcs: &ReducedPcs) {
        if self.pcs.contains_key(&id) {
            return;
        }
        let row: Vec<f64> = self
            .distances
            .ids()
            .iter()
            .map(|o| conceptual_distance(pcs, &self.pcs[o]).unwrap_or(1.0))
            .collect();
        self.distances.push(id, &row);
        self.pcs.insert(id, pcs.clone());
    }
}

/// Decides whether a newly stable local model is broadcast, marking it sent if so.
pub fn maybe_transfer(
    state: &mut ReducedTransferState,
    envelope: &TransferEnvelope,
    policy: TransferPolicy,
) -> TransferDecision {
    state.add(envelope.model_id, &envelope.pcs);
    let send = match policy {
        TransferPolicy::All => true,
        TransferPolicy::ClusteredReduced => {
            let aff = build_affinity(&state.distances, state.scaling_k);
            let n = state.distances.len();
            let labels = stsc_cluster(&aff, state.max_clusters.min(n)).labels;
            let ids = state.distances.ids();
            let me = state.distances.index_of(envelope.model_id).expect("just added");
            !(0..n).any(|j| labels[j] == labels[me] && state.sent.contains(&ids[j]))
        }
    };
    if send {
        state.sent.insert(envelope.model_id);
        TransferDecision::Send
    } else {
        TransferDecision::Suppress
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn envelope(seq: u32, axis: usize) -> TransferEnvelope {
        let mut b = DMatrix::zeros(4, 1);
        b[(axis, 0)] = 1.0;
        TransferEnvelope {
            model_id: ModelId::new(0, seq),
            model: RidgeModel { weights: vec![0.0; 3], intercept: 0.0, lambda: 0.0, train_window_size: 2 },
            pcs: ReducedPcs { basis: b, variance_captured: 1.0, source_rows: 2 },
            origin_stream: 0,
            origin_concept: seq,
            true_concept: None,
            sequence: seq as u64,
        }
    }

    #[test]
    fn first_model_is_sent_under_either_policy() {
        for policy in [TransferPolicy::All, TransferPolicy::ClusteredReduced] {
            let mut st = ReducedTransferState::new(7, 10);
            assert_eq!(maybe_transfer(&mut st, &envelope(0, 0), policy), TransferDecision::Send);
        }
    }

    #[test]
    fn reduced_transfer_suppresses_repeats_and_sends_new_concepts() {
        let mut st = ReducedTransferState::new(7, 10);
        let p = TransferPolicy::ClusteredReduced;
        assert_eq!(maybe_transfer(&mut st, &envelope(0, 0), p), TransferDecision::Send);
        assert_eq!(maybe_transfer(&mut st, &envelope(1, 1), p), TransferDecision::Send);
        // Same subspaces as models 0 and 1.
        assert_eq!(maybe_transfer(&mut st, &envelope(2, 0), p), TransferDecision::Suppress);
        assert_eq!(maybe_transfer(&mut st, &envelope(3, 1), p), TransferDecision::Suppress);
        assert_eq!(maybe_transfer(&mut st, &envelope(4, 2), p), TransferDecision::Send);
        assert_eq!(st.sent().len(), 3);
        assert_eq!(st.local_models(), 5);
    }

    #[test]
    fn policy_all_always_sends() {
        let mut st = ReducedTransferState::new(7, 10);
        for i in 0..4 {
            assert_eq!(maybe_transfer(&mut st, &envelope(i, 0), TransferPolicy::All), TransferDecision::Send);
        }
    }

    #[test]
    fn envelope_round_trip() {
        let env = envelope(3, 1);
        let base = env.clone().into_base();
        assert!(base.stable);
        assert_eq!(TransferEnvelope::new(&base, 3), env);
    }
}
