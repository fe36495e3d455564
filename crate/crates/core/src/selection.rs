//! Base-model registry and the selection strategies that pick the
//! meta-learner's inputs: performance thresholding, mutual-information
//! culling, conceptual-similarity thresholding and conceptual clustering.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{stsc_cluster, ClusterAssignment, DEFAULT_MAX_CLUSTERS};
use crate::model::{BaseModel, ModelId};
use crate::regress::r2_score;
use crate::subspace::{build_affinity, conceptual_distance, DistanceMatrix, DEFAULT_SCALING_K};
use crate::window::WindowBuffer;

pub const DEFAULT_TAU_PERF: f64 = 0.2;
pub const DEFAULT_TAU_MI: f64 = 0.2;
pub const DEFAULT_TAU_CS: f64 = 0.4;
pub const DEFAULT_MI_BINS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorKind {
    None,
    PThresh,
    MiThresh,
    CsThresh,
    CsClust,
}

impl SelectorKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::PThresh => "p_thresh",
            Self::MiThresh => "mi_thresh",
            Self::CsThresh => "cs_thresh",
            Self::CsClust => "cs_clust",
        }
    }

    /// Whether the registry keeps a conceptual-distance cache.
    pub fn uses_distances(self) -> bool {
        matches!(self, Self::CsThresh | Self::CsClust)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// Ascending model ids.
    pub selected_ids: Vec<ModelId>,
    pub calc_count: u64,
    pub method: SelectorKind,
}

/// Stable local and transferred models of one stream, plus the pairwise
/// conceptual-distance cache when a similarity-based selector is in use.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    models: BTreeMap<ModelId, BaseModel>,
    distances: Option<DistanceMatrix>,
}

impl ModelRegistry {
    pub fn new(track_distances: bool) -> Self {
        Self { models: BTreeMap::new(), distances: track_distances.then(DistanceMatrix::new) }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn contains(&self, id: ModelId) -> bool {
        self.models.contains_key(&id)
    }

    pub fn get(&self, id: ModelId) -> Option<&BaseModel> {
        self.models.get(&id)
    }

    pub fn ids(&self) -> Vec<ModelId> {
        self.models.keys().copied().collect()
    }

    pub fn models(&self) -> impl Iterator<Item = &BaseModel> {
        self.models.values()
    }

    pub fn distances(&self) -> Option<&DistanceMatrix> {
        self.distances.as_ref()
    }

    /// Distances from `candidate` to every cached model, in cache order.
    pub fn distance_row(&self, candidate: &BaseModel) -> Vec<f64> {
        let Some(dm) = &self.distances else { return Vec::new() };
        dm.ids()
            .iter()
            .map(|id| conceptual_distance(&candidate.pcs, &self.models[id].pcs).unwrap_or(1.0))
            .collect()
    }

    /// Inserts a model, extending the distance cache. Returns the number of
    /// distance computations spent.
    pub fn insert(&mut self, model: BaseModel) -> u64 {
        if self.contains(model.id) {
            return 0;
        }
        let row = self.distance_row(&model);
        let calcs = row.len() as u64;
        if let Some(dm) = self.distances.as_mut() {
            dm.push(model.id, &row);
        }
        self.models.insert(model.id, model);
        calcs
    }

    pub fn remove(&mut self, id: ModelId) -> Option<BaseModel> {
        if let Some(dm) = self.distances.as_mut() {
            dm.remove(id);
        }
        self.models.remove(&id)
    }

    /// Registry models plus `local` when it is not registered, ascending by id.
    fn candidates<'a>(&'a self, local: Option<&'a BaseModel>) -> Vec<&'a BaseModel> {
        let mut out: Vec<&BaseModel> = self.models.values().collect();
        if let Some(l) = local {
            if !self.contains(l.id) {
                out.push(l);
                out.sort_by_key(|m| m.id);
            }
        }
        out
    }
}

fn window_r2(model: &BaseModel, window: &WindowBuffer) -> f64 {
    model.model.r2_on(window)
}

fn predictions(model: &BaseModel, window: &WindowBuffer) -> Vec<f64> {
    model.model.predict_window(window)
}

/// Keeps models whose windowed R² reaches `tau_perf`; the local model always stays.
pub fn p_thresh(
    registry: &ModelRegistry,
    local: Option<&BaseModel>,
    window: &WindowBuffer,
    tau_perf: f64,
) -> SelectionOutcome {
    let local_id = local.map(|l| l.id);
    let mut selected = Vec::new();
    let mut calcs = 0;
    for m in registry.models() {
        calcs += 1;
        if Some(m.id) == local_id || window_r2(m, window) >= tau_perf {
            selected.push(m.id);
        }
    }
    push_local(&mut selected, local_id);
    SelectionOutcome { selected_ids: selected, calc_count: calcs, method: SelectorKind::PThresh }
}

fn push_local(selected: &mut Vec<ModelId>, local: Option<ModelId>) {
    if let Some(id) = local {
        if !selected.contains(&id) {
            selected.push(id);
            selected.sort();
        }
    }
}

/// Histogram mutual information normalised by `√(H(A)·H(B))`.
///
/// Each vector is binned into `bins` equal-width bins over its own range.
/// Constant input has zero entropy and yields 0.
pub fn normalized_mi(a: &[f64], b: &[f64], bins: usize) -> Result<f64, SelectionError> {
    if a.len() != b.len() {
        return Err(SelectionError::LengthMismatch { left: a.len(), right: b.len() });
    }
    let n = a.len();
    if n < 2 || bins < 2 {
        return Ok(0.0);
    }
    let (ba, bb) = (bin_indices(a, bins), bin_indices(b, bins));
    let (Some(ba), Some(bb)) = (ba, bb) else { return Ok(0.0) };
    let mut joint = vec![0usize; bins * bins];
    let mut pa = vec![0usize; bins];
    let mut pb = vec![0usize; bins];
    for (&i, &j) in ba.iter().zip(&bb) {
        joint[i * bins + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    let nf = n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    if ha <= 0.0 || hb <= 0.0 {
        return Ok(0.0);
    }
    let mut mi = 0.0;
    for i in 0..bins {
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let pxy = c as f64 / nf;
                mi += pxy * (pxy * nf * nf / (pa[i] as f64 * pb[j] as f64)).ln();
            }
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}

fn bin_indices(v: &[f64], bins: usize) -> Option<Vec<usize>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return None;
    }
    Some(
        v.iter()
            .map(|x| (((x - lo) / span * bins as f64) as usize).min(bins - 1))
            .collect(),
    )
}

/// Culls the weaker member of every pair whose prediction MI exceeds
/// `tau_mi`, then applies the `tau_perf` filter.
pub fn mi_thresh(
    registry: &ModelRegistry,
    local: Option<&BaseModel>,
    window: &WindowBuffer,
    tau_mi: f64,
    tau_perf: f64,
    bins: usize,
) -> SelectionOutcome {
    let models: Vec<&BaseModel> = registry.models().collect();
    let n = models.len();
    let preds: Vec<Vec<f64>> = models.iter().map(|m| predictions(m, window)).collect();
    let targets = window.targets();
    let r2: Vec<f64> = preds.iter().map(|p| r2_score(p, &targets)).collect();
    let mut dropped = vec![false; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let mi = normalized_mi(&preds[i], &preds[j], bins).expect("equal lengths");
            if mi > tau_mi {
                // Models are in ascending id order, so on equal R² the later id goes.
                let loser = if r2[j] > r2[i] { i } else { j };
                dropped[loser] = true;
            }
        }
    }
    let local_id = local.map(|l| l.id);
    let mut selected: Vec<ModelId> = (0..n)
        .filter(|&i| Some(models[i].id) == local_id || (!dropped[i] && r2[i] >= tau_perf))
        .map(|i| models[i].id)
        .collect();
    push_local(&mut selected, local_id);
    let calc_count = (n * n.saturating_sub(1) / 2 + n) as u64;
    SelectionOutcome { selected_ids: selected, calc_count, method: SelectorKind::MiThresh }
}

/// Admission rule of similarity thresholding on a distance cache: a
/// candidate with distance row `row` enters iff each of its locally scaled
/// affinities stays below `tau_cs`.
pub fn admits(cache: &DistanceMatrix, candidate: ModelId, row: &[f64], tau_cs: f64, k: usize) -> bool {
    if cache.is_empty() {
        return true;
    }
    let mut trial = cache.clone();
    trial.push(candidate, row);
    let aff = build_affinity(&trial, k);
    let c = trial.len() - 1;
    (0..c).all(|j| aff.entries[(c, j)] < tau_cs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Admitted,
    Rejected,
}

/// Computes the candidate's distances to every registered model once and
/// admits it when it is conceptually distinct from all of them. Rejected
/// candidates leave the cache untouched. Returns the distance calculations spent.
pub fn cs_thresh_admit(registry: &mut ModelRegistry, candidate: BaseModel, tau_cs: f64, k: usize) -> (Admission, u64) {
    if registry.contains(candidate.id) {
        return (Admission::Admitted, 0);
    }
    let row = registry.distance_row(&candidate);
    let calcs = row.len() as u64;
    let cache = registry.distances.get_or_insert_with(DistanceMatrix::new);
    if admits(cache, candidate.id, &row, tau_cs, k) {
        cache.push(candidate.id, &row);
        registry.models.insert(candidate.id, candidate);
        (Admission::Admitted, calcs)
    } else {
        (Admission::Rejected, calcs)
    }
}

/// Relevancy pass of similarity thresholding with exclusions cached between drifts.
#[derive(Debug, Clone, Default)]
pub struct CsThreshState {
    excluded: BTreeSet<ModelId>,
    evaluated: BTreeSet<ModelId>,
}

impl CsThreshState {
    pub fn excluded(&self) -> &BTreeSet<ModelId> {
        &self.excluded
    }

    /// At a drift every admitted model is re-scored; otherwise only models
    /// not scored since the last drift are.
    pub fn select(
        &mut self,
        registry: &ModelRegistry,
        local: Option<&BaseModel>,
        window: &WindowBuffer,
        tau_perf: f64,
        drift: bool,
    ) -> SelectionOutcome {
        if drift {
            self.excluded.clear();
            self.evaluated.clear();
        }
        let local_id = local.map(|l| l.id);
        let mut calcs = 0;
        for m in registry.models() {
            if self.evaluated.contains(&m.id) {
                continue;
            }
            calcs += 1;
            self.evaluated.insert(m.id);
            if window_r2(m, window) < tau_perf {
                self.excluded.insert(m.id);
            }
        }
        self.evaluated.retain(|id| registry.contains(*id));
        self.excluded.retain(|id| registry.contains(*id));
        let mut selected: Vec<ModelId> = registry
            .ids()
            .into_iter()
            .filter(|id| Some(*id) == local_id || !self.excluded.contains(id))
            .collect();
        push_local(&mut selected, local_id);
        SelectionOutcome { selected_ids: selected, calc_count: calcs, method: SelectorKind::CsThresh }
    }
}

/// Clusters models by conceptual affinity and keeps the best performer of
/// each cluster. When the local model leads its cluster the runner-up is
/// kept as well; a local model that does not lead is added on its own.
pub fn cs_clust_select(
    registry: &ModelRegistry,
    local: Option<&BaseModel>,
    window: &WindowBuffer,
    k: usize,
    max_clusters: usize,
) -> SelectionOutcome {
    cs_clust_select_cached(registry, local, window, k, max_clusters, &mut None)
}

/// Clustering reused while the candidate set and the local subspace are unchanged.
#[derive(Debug, Clone)]
pub struct ClusterCache {
    ids: Vec<ModelId>,
    local_basis: Option<nalgebra::DMatrix<f64>>,
    k: usize,
    assignment: ClusterAssignment,
}

/// [`cs_clust_select`] that skips distance and clustering work when `cache`
/// matches the current candidates.
pub fn cs_clust_select_cached(
    registry: &ModelRegistry,
    local: Option<&BaseModel>,
    window: &WindowBuffer,
    k: usize,
    max_clusters: usize,
    cache: &mut Option<ClusterCache>,
) -> SelectionOutcome {
    let candidates = registry.candidates(local);
    let mut calcs = 0u64;
    if candidates.is_empty() {
        return SelectionOutcome { selected_ids: Vec::new(), calc_count: 0, method: SelectorKind::CsClust };
    }
    let ids: Vec<ModelId> = candidates.iter().map(|m| m.id).collect();
    let local_basis = local.filter(|l| !registry.contains(l.id)).map(|l| l.pcs.basis.clone());
    let hit = cache
        .as_ref()
        .is_some_and(|c| c.ids == ids && c.local_basis == local_basis && c.k == k);
    if !hit {
        let mut dm = match registry.distances() {
            Some(dm) => dm.restrict(&registry.ids()).expect("cache covers the registry"),
            None => full_distances(&registry.models().collect::<Vec<_>>(), &mut calcs),
        };
        if let Some(l) = local {
            if !registry.contains(l.id) {
                let row = registry.distance_row_for(l, &dm);
                calcs += row.len() as u64;
                dm.push(l.id, &row);
            }
        }
        let dm = dm.restrict(&ids).expect("all candidates cached");
        let assignment = stsc_cluster(&build_affinity(&dm, k), max_clusters.min(ids.len()));
        *cache = Some(ClusterCache { ids: ids.clone(), local_basis, k, assignment });
    }
    let assignment = &cache.as_ref().expect("filled above").assignment;
    let r2: Vec<f64> = candidates.iter().map(|m| window_r2(m, window)).collect();
    calcs += ids.len() as u64;

    let local_id = local.map(|l| l.id);
    let mut selected = Vec::new();
    for c in 0..assignment.num_clusters {
        let mut members = assignment.members(c);
        // Best R² first; ties by ascending id (members are in id order).
        members.sort_by(|&a, &b| r2[b].total_cmp(&r2[a]).then(a.cmp(&b)));
        let best = members[0];
        selected.push(ids[best]);
        if Some(ids[best]) == local_id && members.len() >= 2 {
            selected.push(ids[members[1]]);
        }
    }
    selected.sort();
    push_local(&mut selected, local_id);
    SelectionOutcome { selected_ids: selected, calc_count: calcs, method: SelectorKind::CsClust }
}

fn full_distances(models: &[&BaseModel], calcs: &mut u64) -> DistanceMatrix {
    let mut dm = DistanceMatrix::new();
    for (i, m) in models.iter().enumerate() {
        let row: Vec<f64> = models[..i]
            .iter()
            .map(|o| conceptual_distance(&m.pcs, &o.pcs).unwrap_or(1.0))
            .collect();
        *calcs += row.len() as u64;
        dm.push(m.id, &row);
    }
    dm
}

impl ModelRegistry {
    fn distance_row_for(&self, candidate: &BaseModel, cache: &DistanceMatrix) -> Vec<f64> {
        cache
            .ids()
            .iter()
            .map(|id| conceptual_distance(&candidate.pcs, &self.models[id].pcs).unwrap_or(1.0))
            .collect()
    }
}

/// Parameters shared by all selectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    pub tau_perf: f64,
    pub tau_mi: f64,
    pub tau_cs: f64,
    pub scaling_k: usize,
    pub mi_bins: usize,
    pub max_clusters: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            tau_perf: DEFAULT_TAU_PERF,
            tau_mi: DEFAULT_TAU_MI,
            tau_cs: DEFAULT_TAU_CS,
            scaling_k: DEFAULT_SCALING_K,
            mi_bins: DEFAULT_MI_BINS,
            max_clusters: DEFAULT_MAX_CLUSTERS,
        }
    }
}

/// A configured selector with any state it carries between invocations.
#[derive(Debug, Clone)]
pub struct Selector {
    pub kind: SelectorKind,
    pub params: SelectionParams,
    cs_state: CsThreshState,
    cluster_cache: Option<ClusterCache>,
}

impl Selector {
    pub fn new(kind: SelectorKind, params: SelectionParams) -> Self {
        Self { kind, params, cs_state: CsThreshState::default(), cluster_cache: None }
    }

    pub fn new_registry(&self) -> ModelRegistry {
        ModelRegistry::new(self.kind.uses_distances())
    }

    /// Offers a stable model to the registry; returns whether it was added
    /// and the distance calculations spent.
    pub fn admit(&mut self, registry: &mut ModelRegistry, model: BaseModel) -> (bool, u64) {
        match self.kind {
            SelectorKind::CsThresh => {
                let (adm, calcs) = cs_thresh_admit(registry, model, self.params.tau_cs, self.params.scaling_k);
                (adm == Admission::Admitted, calcs)
            }
            _ => {
                let calcs = registry.insert(model);
                (true, calcs)
            }
        }
    }

    pub fn select(
        &mut self,
        registry: &ModelRegistry,
        local: Option<&BaseModel>,
        window: &WindowBuffer,
        drift: bool,
    ) -> SelectionOutcome {
        let p = &self.params;
        match self.kind {
            SelectorKind::None => {
                let mut ids = registry.ids();
                push_local(&mut ids, local.map(|l| l.id));
                SelectionOutcome { selected_ids: ids, calc_count: 0, method: SelectorKind::None }
            }
            SelectorKind::PThresh => p_thresh(registry, local, window, p.tau_perf),
            SelectorKind::MiThresh => mi_thresh(registry, local, window, p.tau_mi, p.tau_perf, p.mi_bins),
            SelectorKind::CsThresh => self.cs_state.select(registry, local, window, p.tau_perf, drift),
            SelectorKind::CsClust => {
                cs_clust_select_cached(registry, local, window, p.scaling_k, p.max_clusters, &mut self.cluster_cache)
            }
        }
    }
}
