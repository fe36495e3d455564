use std::collections::VecDeque;
use std::sync::mpsc;

use nalgebra::DMatrix;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::transfer::{maybe_transfer, ReducedTransferState, TransferDecision, TransferEnvelope};
use super::{BotlError, ExperimentResult, FrameworkConfig, StreamResult, TransferRecord};
use crate::cdd::{CddConfig, CddEvent, Detector};
use crate::model::{BaseModel, ModelId};
use crate::regress::{evaluate, MetaLearner, MetricsRecord};
use crate::selection::{ModelRegistry, Selector};
use crate::streams::{open_stream, Instance, InstanceStream, StreamConfig};
use crate::window::WindowBuffer;

/// Trailing predictions and targets for prequential scoring.
#[derive(Debug, Clone)]
pub struct EvalWindow {
    preds: VecDeque<f64>,
    targets: VecDeque<f64>,
    capacity: usize,
}

impl EvalWindow {
    pub fn new(capacity: usize) -> Self {
        Self { preds: VecDeque::new(), targets: VecDeque::new(), capacity: capacity.max(1) }
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }

    /// Adds one scored prediction and returns the trailing-window record.
    pub fn record(&mut self, index: usize, pred: f64, target: f64, active: usize, calcs: u64) -> MetricsRecord {
        if self.preds.len() == self.capacity {
            self.preds.pop_front();
            self.targets.pop_front();
        }
        self.preds.push_back(pred);
        self.targets.push_back(target);
        let p: Vec<f64> = self.preds.iter().copied().collect();
        let t: Vec<f64> = self.targets.iter().copied().collect();
        let s = evaluate(&p, &t).expect("non-empty and aligned");
        MetricsRecord {
            window_index: index,
            r2: s.r2,
            pmcc2: s.pmcc2,
            rmse: s.rmse,
            active_models: active,
            metric_calcs: calcs,
        }
    }
}

/// Stream seeds are derived from the run seed, the stream's own seed and its
/// position; shared state defaults to one run-wide seed so streams draw
/// from the same concept pool and weather.
pub(super) fn effective_config(cfg: &StreamConfig, run_seed: u64, index: usize) -> StreamConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
    let shared = rng.next_u64();
    rng.set_stream(1 + index as u64);
    let seed = rng.next_u64() ^ cfg.seed;
    StreamConfig { seed, shared_seed: Some(cfg.shared_seed.unwrap_or(shared)), ..cfg.clone() }
}

struct StreamState {
    id: u32,
    source: InstanceStream,
    window: usize,
    detector: Detector,
    registry: ModelRegistry,
    selector: Selector,
    reduced: ReducedTransferState,
    selected: Vec<ModelId>,
    meta: Option<MetaLearner>,
    eval: EvalWindow,
    baseline_eval: EvalWindow,
    records: Vec<MetricsRecord>,
    baseline: Vec<MetricsRecord>,
    recent: WindowBuffer,
    calcs: u64,
    inbox: Vec<TransferEnvelope>,
    dirty: bool,
    since_select: usize,
    reselect_every: usize,
    transfer: bool,
    policy: super::TransferPolicy,
    sent: u64,
    received: u64,
    finished: bool,
}

impl StreamState {
    fn new(cfg: &FrameworkConfig, index: usize) -> Result<Self, BotlError> {
        let stream_cfg = effective_config(&cfg.streams[index], cfg.seed, index);
        let source = open_stream(&stream_cfg).map_err(|source| BotlError::Stream { stream: index, source })?;
        let window = stream_cfg.window_size();
        let id = index as u32;
        let detector = Detector::new(id, CddConfig { window, ..cfg.detector.clone() });
        let selector = Selector::new(cfg.selector, cfg.selection.clone());
        Ok(Self {
            id,
            source,
            window,
            detector,
            registry: selector.new_registry(),
            reduced: ReducedTransferState::new(cfg.selection.scaling_k, cfg.selection.max_clusters),
            selector,
            selected: Vec::new(),
            meta: None,
            eval: EvalWindow::new(window),
            baseline_eval: EvalWindow::new(window),
            records: Vec::new(),
            baseline: Vec::new(),
            recent: WindowBuffer::new(window),
            calcs: 0,
            inbox: Vec::new(),
            dirty: false,
            since_select: 0,
            reselect_every: cfg.reselect_every.unwrap_or(window).max(1),
            transfer: cfg.transfer,
            policy: cfg.transfer_policy,
            sent: 0,
            received: 0,
            finished: false,
        })
    }

    fn next_instance(&mut self) -> Result<Option<Instance>, BotlError> {
        if self.finished {
            return Ok(None);
        }
        match self.source.next() {
            Some(Ok(x)) => Ok(Some(x)),
            Some(Err(source)) => Err(BotlError::Stream { stream: self.id as usize, source }),
            None => {
                self.finished = true;
                Ok(None)
            }
        }
    }

    fn member_predict(&self, id: ModelId, features: &[f64]) -> f64 {
        match self.registry.get(id) {
            Some(m) => m.predict(features),
            None => self.detector.model(id).expect("member is local").model.predict(features),
        }
    }

    /// Meta-learner prediction, falling back to the detector's model during
    /// cold start. Returns the prediction and the number of models behind it.
    fn predict(&self, features: &[f64]) -> (f64, usize) {
        if let Some(meta) = &self.meta {
            let preds: Vec<f64> = meta.member_ids.iter().map(|&id| self.member_predict(id, features)).collect();
            return (meta.predict(&preds), meta.member_ids.len());
        }
        match self.detector.predict(features) {
            Some(p) => (p, 1),
            None => (0.0, 0),
        }
    }

    fn integrate_inbox(&mut self) {
        for env in std::mem::take(&mut self.inbox) {
            self.received += 1;
            let (added, calcs) = self.selector.admit(&mut self.registry, env.into_base());
            self.calcs += calcs;
            self.dirty |= added;
        }
    }

    /// One prequential step; returns envelopes to broadcast.
    fn step(&mut self, x: Instance) -> Vec<TransferEnvelope> {
        self.integrate_inbox();
        let (pred, active) = self.predict(&x.features);
        let base_pred = self.detector.predict(&x.features);
        let (index, target) = (x.index, x.target);

        self.recent.push(x.clone());
        let out = self.detector.step(x);
        let mut outgoing = Vec::new();
        if let Some(id) = out.stabilized {
            let base = self.detector.base_model(id).expect("stabilised model exists");
            let (added, calcs) = self.selector.admit(&mut self.registry, base.clone());
            self.calcs += calcs;
            self.dirty |= added;
            if added && self.transfer {
                let env = TransferEnvelope::new(&base, self.sent);
                if maybe_transfer(&mut self.reduced, &env, self.policy) == TransferDecision::Send {
                    self.sent += 1;
                    outgoing.push(env);
                }
            }
        }
        let drift = matches!(out.event, CddEvent::Drift { .. });
        self.since_select += 1;
        if drift || out.model_changed || self.dirty || self.since_select >= self.reselect_every {
            self.reselect(drift);
        }
        self.refit_meta();

        let rec = self.eval.record(index, pred, target, active, self.calcs);
        self.records.push(rec);
        let base = self.baseline_eval.record(index, base_pred.unwrap_or(0.0), target, usize::from(base_pred.is_some()), 0);
        self.baseline.push(base);
        outgoing
    }

    fn local_base(&self) -> Option<BaseModel> {
        let id = self.detector.current_id()?;
        match self.registry.get(id) {
            Some(m) => Some(m.clone()),
            None => self.detector.base_model(id).ok(),
        }
    }

    fn reselect(&mut self, drift: bool) {
        self.dirty = false;
        self.since_select = 0;
        let local = self.local_base();
        let Some(window) = meta_window(&self.recent) else {
            self.selected = local.map(|l| vec![l.id]).unwrap_or_default();
            return;
        };
        let out = self.selector.select(&self.registry, local.as_ref(), window, drift);
        self.calcs += out.calc_count;
        self.selected = out.selected_ids;
    }

    fn refit_meta(&mut self) {
        let current = self.detector.current_id();
        if let Some(id) = current {
            if !self.selected.contains(&id) {
                self.selected.push(id);
                self.selected.sort();
            }
        }
        let Some(window) = meta_window(&self.recent) else {
            self.meta = None;
            return;
        };
        if self.selected.is_empty() || window.len() < 2 {
            self.meta = None;
            return;
        }
        let rows: Vec<&Instance> = window.iter().collect();
        let k = self.selected.len();
        let mut m = DMatrix::zeros(rows.len(), k);
        for (j, &id) in self.selected.iter().enumerate() {
            for (i, r) in rows.iter().enumerate() {
                m[(i, j)] = self.member_predict(id, &r.features);
            }
        }
        let targets: Vec<f64> = rows.iter().map(|r| r.target).collect();
        self.meta = MetaLearner::fit(self.selected.clone(), &m, &targets).ok();
    }

    /// Envelopes that arrived after the final step still join the registry.
    fn into_result(mut self) -> StreamResult {
        self.integrate_inbox();
        StreamResult {
            stream: self.id,
            window: self.window,
            records: self.records,
            baseline: self.baseline,
            transfers_sent: self.sent,
            transfers_received: self.received,
            drifts_detected: self.detector.drifts_detected(),
            registry_size: self.registry.len(),
            local_models: self.detector.models().len(),
        }
    }
}

/// The meta-learner trains, and selectors score, on the last `|W|`
/// instances regardless of where the detector placed its drift point.
fn meta_window(recent: &WindowBuffer) -> Option<&WindowBuffer> {
    (recent.len() >= 2).then_some(recent)
}

fn result_shell(cfg: &FrameworkConfig, streams: Vec<StreamResult>, transfers: Vec<TransferRecord>) -> ExperimentResult {
    ExperimentResult {
        method: cfg.method_name(),
        detector: cfg.detector.kind,
        selector: cfg.selector,
        policy: cfg.transfer_policy,
        seed: cfg.seed,
        streams,
        transfers,
    }
}

/// Runs all streams in lock-step round-robin. Envelopes broadcast by one
/// stream are integrated by each peer at the start of its next step.
pub fn run_framework(cfg: &FrameworkConfig) -> Result<ExperimentResult, BotlError> {
    cfg.validate()?;
    let mut states: Vec<StreamState> =
        (0..cfg.streams.len()).map(|i| StreamState::new(cfg, i)).collect::<Result<_, _>>()?;
    let mut transfers = Vec::new();
    loop {
        let mut progressed = false;
        for s in 0..states.len() {
            let Some(x) = states[s].next_instance()? else { continue };
            progressed = true;
            let time = x.index;
            let outgoing = states[s].step(x);
            for env in outgoing {
                for (p, peer) in states.iter_mut().enumerate() {
                    if p == s {
                        continue;
                    }
                    transfers.push(TransferRecord {
                        time,
                        sequence: env.sequence,
                        from_stream: env.origin_stream,
                        to_stream: p as u32,
                        model: env.model_id,
                        origin_concept: env.origin_concept,
                    });
                    peer.inbox.push(env.clone());
                }
            }
        }
        if !progressed {
            break;
        }
    }
    Ok(result_shell(cfg, states.into_iter().map(StreamState::into_result).collect(), transfers))
}

/// Runs each stream on its own thread, exchanging envelopes over channels
/// as they arrive. Arrival order depends on scheduling, so results are not
/// reproducible across runs. A finished stream keeps draining its channel
/// until every peer has finished, so each envelope is delivered once.
pub fn run_framework_parallel(cfg: &FrameworkConfig) -> Result<ExperimentResult, BotlError> {
    cfg.validate()?;
    let n = cfg.streams.len();
    let states: Vec<StreamState> = (0..n).map(|i| StreamState::new(cfg, i)).collect::<Result<_, _>>()?;
    let (senders, receivers): (Vec<_>, Vec<_>) = (0..n).map(|_| mpsc::channel::<TransferEnvelope>()).unzip();
    let outcomes = std::thread::scope(|scope| {
        let handles: Vec<_> = states
            .into_iter()
            .zip(receivers)
            .enumerate()
            .map(|(s, (mut state, rx))| {
                let peers: Vec<(usize, mpsc::Sender<TransferEnvelope>)> =
                    senders.iter().cloned().enumerate().filter(|(p, _)| *p != s).collect();
                scope.spawn(move || -> Result<(StreamResult, Vec<TransferRecord>), BotlError> {
                    let mut log = Vec::new();
                    while let Some(x) = state.next_instance()? {
                        state.inbox.extend(rx.try_iter());
                        let time = x.index;
                        for env in state.step(x) {
                            for (p, tx) in &peers {
                                log.push(TransferRecord {
                                    time,
                                    sequence: env.sequence,
                                    from_stream: env.origin_stream,
                                    to_stream: *p as u32,
                                    model: env.model_id,
                                    origin_concept: env.origin_concept,
                                });
                                // Only a peer that failed has dropped its receiver.
                                let _ = tx.send(env.clone());
                            }
                        }
                    }
                    drop(peers);
                    state.inbox.extend(rx.iter());
                    Ok((state.into_result(), log))
                })
            })
            .collect();
        drop(senders);
        handles.into_iter().map(|h| h.join().expect("stream worker panicked")).collect::<Vec<_>>()
    });
    let mut streams = Vec::new();
    let mut transfers = Vec::new();
    for o in outcomes {
        let (r, log) = o?;
        streams.push(r);
        transfers.extend(log);
    }
    transfers.sort_by_key(|t| (t.time, t.from_stream, t.sequence, t.to_stream));
    Ok(result_shell(cfg, streams, transfers))
}
