//! Per-stream drift detectors that learn, reuse and stabilise base models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::adwin::{AdwinOutcome, AdwinWindow, DEFAULT_DELTA};
use super::CddError;
use crate::model::{BaseModel, ModelId};
use crate::regress::{RidgeModel, DEFAULT_RIDGE_LAMBDA};
use crate::streams::Instance;
use crate::subspace::{ReducedPcs, DEFAULT_RETENTION};
use crate::window::WindowBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Windowed-R² monitoring with reuse of historical models.
    Repro,
    /// ADWIN cut on the error stream; always learns a new model.
    Adwin,
    /// ADWIN cut followed by the reuse-first policy.
    Awpro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CddConfig {
    pub kind: DetectorKind,
    pub window: usize,
    /// Drift threshold on windowed R².
    pub tau_d: f64,
    /// Minimum windowed R² for a historical model to be reused.
    pub tau_reuse: f64,
    /// Consecutive sub-threshold steps before a drift is declared.
    pub consecutive: usize,
    /// Instances required before a drift can be resolved; `window / 2` by default.
    pub min_fill: Option<usize>,
    pub delta: f64,
    pub lambda: f64,
    pub retention: f64,
}

impl Default for CddConfig {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Repro,
            window: 30,
            tau_d: 0.5,
            tau_reuse: 0.6,
            consecutive: 3,
            min_fill: None,
            delta: DEFAULT_DELTA,
            lambda: DEFAULT_RIDGE_LAMBDA,
            retention: DEFAULT_RETENTION,
        }
    }
}

impl CddConfig {
    pub fn with_kind(kind: DetectorKind, window: usize) -> Self {
        Self { kind, window, ..Self::default() }
    }

    pub fn min_fill(&self) -> usize {
        self.min_fill.unwrap_or(self.window / 2).clamp(2, self.window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Stable,
    Learning,
    DriftPending,
}

/// A model learnt by this detector.
#[derive(Debug, Clone)]
pub struct LocalModel {
    pub id: ModelId,
    pub model: RidgeModel,
    pub pcs: Option<ReducedPcs>,
    pub concept: u32,
    pub true_concept: Option<u32>,
    pub stable: bool,
    pub created_at: usize,
}

impl LocalModel {
    pub fn to_base(&self, pcs: ReducedPcs) -> BaseModel {
        BaseModel {
            id: self.id,
            model: self.model.clone(),
            pcs,
            concept: self.concept,
            true_concept: self.true_concept,
            stable: self.stable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CddEvent {
    NoChange,
    /// A drift was detected but the window is still below `min_fill`.
    ColdStart,
    Drift { model: ModelId, reused: bool, boundary: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub event: CddEvent,
    pub stabilized: Option<ModelId>,
    /// The current model changed identity on this step.
    pub model_changed: bool,
}

impl Default for StepOutcome {
    fn default() -> Self {
        Self { event: CddEvent::NoChange, stabilized: None, model_changed: false }
    }
}

#[derive(Debug, Clone)]
pub struct Detector {
    cfg: CddConfig,
    stream: u32,
    mode: Mode,
    window: WindowBuffer,
    models: Vec<LocalModel>,
    current: Option<usize>,
    below: usize,
    since_activation: usize,
    adwin: AdwinWindow,
    adwin_base: usize,
    pending_boundary: Option<usize>,
    history: Vec<(u32, ModelId)>,
    transitions: BTreeMap<(u32, u32), u32>,
    drifts: usize,
}

impl Detector {
    pub fn new(stream: u32, cfg: CddConfig) -> Self {
        assert!(cfg.window >= 2, "window must hold at least two instances");
        Self {
            window: WindowBuffer::new(cfg.window),
            adwin: AdwinWindow::new(cfg.delta),
            cfg,
            stream,
            mode: Mode::Learning,
            models: Vec::new(),
            current: None,
            below: 0,
            since_activation: 0,
            adwin_base: 0,
            pending_boundary: None,
            history: Vec::new(),
            transitions: BTreeMap::new(),
            drifts: 0,
        }
    }

    pub fn config(&self) -> &CddConfig {
        &self.cfg
    }

    pub fn kind(&self) -> DetectorKind {
        self.cfg.kind
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn window(&self) -> &WindowBuffer {
        &self.window
    }

    pub fn drifts_detected(&self) -> usize {
        self.drifts
    }

    pub fn models(&self) -> &[LocalModel] {
        &self.models
    }

    pub fn history(&self) -> &[(u32, ModelId)] {
        &self.history
    }

    pub fn transitions(&self) -> &BTreeMap<(u32, u32), u32> {
        &self.transitions
    }

    pub fn current_id(&self) -> Option<ModelId> {
        self.current.map(|c| self.models[c].id)
    }

    pub fn current_model(&self) -> Option<&LocalModel> {
        self.current.map(|c| &self.models[c])
    }

    pub fn model(&self, id: ModelId) -> Result<&LocalModel, CddError> {
        self.slot(id).map(|i| &self.models[i])
    }

    fn slot(&self, id: ModelId) -> Result<usize, CddError> {
        if id.stream != self.stream || id.seq as usize >= self.models.len() {
            return Err(CddError::UnknownModel(id));
        }
        Ok(id.seq as usize)
    }

    pub fn predict(&self, features: &[f64]) -> Option<f64> {
        self.current_model().map(|m| m.model.predict(features))
    }

    pub fn is_stable(&self, id: ModelId) -> Result<bool, CddError> {
        Ok(self.model(id)?.stable)
    }

    /// Marks `id` stable once it has served as current model for a full
    /// window without a drift. Returns the resulting flag.
    pub fn stabilize(&mut self, id: ModelId) -> Result<bool, CddError> {
        let slot = self.slot(id)?;
        if self.models[slot].stable {
            return Ok(true);
        }
        if self.current == Some(slot) && self.mode != Mode::DriftPending && self.since_activation >= self.cfg.window {
            if self.models[slot].pcs.is_none() {
                self.finish_learning(slot);
            }
            self.models[slot].stable = true;
        }
        Ok(self.models[slot].stable)
    }

    /// Base-model view of a local model. Models still learning get the
    /// subspace of the current window.
    pub fn base_model(&self, id: ModelId) -> Result<BaseModel, CddError> {
        let m = self.model(id)?;
        let pcs = match &m.pcs {
            Some(p) => p.clone(),
            None => ReducedPcs::of_window(&self.window, self.cfg.retention),
        };
        Ok(m.to_base(pcs))
    }

    /// Window for relevancy scoring once it holds at least `min_fill` rows.
    pub fn relevance_window(&self) -> Option<&WindowBuffer> {
        (self.window.len() >= self.cfg.min_fill()).then_some(&self.window)
    }

    /// Resolves a pending drift on the current window.
    pub fn resolve_drift(&mut self, next_index: usize) -> Result<CddEvent, CddError> {
        let need = self.cfg.min_fill();
        if self.window.len() < need {
            return Err(CddError::ColdStart { have: self.window.len(), need });
        }
        let old_concept = self.current_model().map(|m| m.concept);
        let reuse = match self.cfg.kind {
            DetectorKind::Adwin => None,
            DetectorKind::Repro | DetectorKind::Awpro => self.best_reuse(old_concept),
        };
        let reused = reuse.is_some();
        let slot = match reuse {
            Some(slot) => {
                self.mode = Mode::Stable;
                slot
            }
            None => self.learn_new(next_index - 1),
        };
        let new_concept = self.models[slot].concept;
        if let Some(old) = old_concept {
            *self.transitions.entry((old, new_concept)).or_insert(0) += 1;
        }
        self.activate(slot, next_index);
        self.drifts += 1;
        Ok(CddEvent::Drift { model: self.models[slot].id, reused, boundary: self.pending_boundary.take() })
    }

    /// Historical model to reuse: eligible when its windowed R² reaches
    /// `tau_reuse`; ranked by transition count from the current concept,
    /// then R², then recency.
    fn best_reuse(&self, from: Option<u32>) -> Option<usize> {
        let mut best: Option<(u32, f64, usize)> = None;
        for (slot, m) in self.models.iter().enumerate() {
            if Some(slot) == self.current {
                continue;
            }
            let r2 = m.model.r2_on(&self.window);
            if !(r2 >= self.cfg.tau_reuse) {
                continue;
            }
            let count = from.and_then(|f| self.transitions.get(&(f, m.concept)).copied()).unwrap_or(0);
            let better = best.is_none_or(|(bc, br, bs)| {
                count.cmp(&bc).then(r2.total_cmp(&br)).then(slot.cmp(&bs)).is_gt()
            });
            if better {
                best = Some((count, r2, slot));
            }
        }
        best.map(|(_, _, slot)| slot)
    }

    fn learn_new(&mut self, at: usize) -> usize {
        let seq = self.models.len() as u32;
        let model = RidgeModel::fit(&self.window, self.cfg.lambda)
            .expect("window holds at least two rows");
        self.models.push(LocalModel {
            id: ModelId::new(self.stream, seq),
            model,
            pcs: None,
            concept: seq,
            true_concept: None,
            stable: false,
            created_at: at,
        });
        self.mode = Mode::Learning;
        seq as usize
    }

    fn activate(&mut self, slot: usize, next_index: usize) {
        self.current = Some(slot);
        self.history.push((self.models[slot].concept, self.models[slot].id));
        self.since_activation = 0;
        self.below = 0;
        self.adwin.reset();
        self.adwin_base = next_index;
    }

    fn finish_learning(&mut self, slot: usize) {
        let pcs = ReducedPcs::of_window(&self.window, self.cfg.retention);
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for c in self.window.iter().filter_map(|r| r.concept) {
            *counts.entry(c).or_insert(0) += 1;
        }
        let true_concept = counts.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(&c, _)| c);
        let m = &mut self.models[slot];
        m.pcs = Some(pcs);
        m.true_concept = true_concept;
    }

    /// Consumes one instance after its prediction has been scored.
    pub fn step(&mut self, instance: Instance) -> StepOutcome {
        let mut out = StepOutcome::default();
        let index = instance.index;
        let error = self.predict(&instance.features).map(|p| (p - instance.target).abs());
        self.window.push(instance);

        let Some(mut slot) = self.current else {
            // The first model waits for two rows so an unpenalised fit is defined.
            if self.window.len() >= 2 {
                let slot = self.learn_new(index);
                self.activate(slot, index + 1);
                out.model_changed = true;
            }
            return out;
        };

        if self.mode == Mode::DriftPending {
            match self.resolve_drift(index + 1) {
                Ok(event) => {
                    out.event = event;
                    out.model_changed = true;
                    slot = self.current.expect("resolved drift activates a model");
                }
                Err(_) => {
                    out.event = CddEvent::ColdStart;
                    return out;
                }
            }
        } else {
            if self.mode == Mode::Learning {
                self.models[slot].model = RidgeModel::fit(&self.window, self.cfg.lambda)
                    .expect("non-empty window");
                if self.window.is_full() {
                    self.finish_learning(slot);
                    self.mode = Mode::Stable;
                    // From here on ADWIN watches the errors of a fixed model.
                    self.adwin.reset();
                    self.adwin_base = index;
                }
            }
            if self.detect(error) {
                out.event = if self.window.len() >= self.cfg.min_fill() {
                    match self.resolve_drift(index + 1) {
                        Ok(event) => {
                            out.model_changed = true;
                            event
                        }
                        Err(_) => CddEvent::ColdStart,
                    }
                } else {
                    CddEvent::ColdStart
                };
                return out;
            }
        }

        self.since_activation += 1;
        let id = self.models[slot].id;
        if !self.models[slot].stable && self.stabilize(id).unwrap_or(false) {
            out.stabilized = Some(id);
        }
        out
    }

    /// Runs the configured drift test; on detection trims the window and
    /// enters `DriftPending`.
    fn detect(&mut self, error: Option<f64>) -> bool {
        match self.cfg.kind {
            DetectorKind::Repro => {
                if self.mode == Mode::Learning || self.window.len() < self.cfg.min_fill() {
                    return false;
                }
                let m = &self.models[self.current.expect("current model")];
                if m.model.r2_on(&self.window) < self.cfg.tau_d {
                    self.below += 1;
                } else {
                    self.below = 0;
                }
                if self.below >= self.cfg.consecutive {
                    self.below = 0;
                    self.window.retain_last(self.cfg.consecutive);
                    self.mode = Mode::DriftPending;
                    return true;
                }
                false
            }
            DetectorKind::Adwin | DetectorKind::Awpro => {
                let Some(e) = error else { return false };
                // A refitting model's error falls as it learns, so only rises
                // count then; a fixed model's error shifting either way is drift.
                match self.adwin.step(e) {
                    AdwinOutcome::Cut { boundary, increased } if increased || self.mode == Mode::Stable => {
                        let at = self.adwin_base + boundary;
                        self.window.truncate_before(at);
                        self.pending_boundary = Some(at);
                        self.mode = Mode::DriftPending;
                        true
                    }
                    _ => false,
                }
            }
        }
    }
}
