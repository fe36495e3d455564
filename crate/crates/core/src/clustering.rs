//! Self-tuning spectral clustering: the cluster count is chosen by how well
//! the leading eigenvectors of the normalised affinity can be rotated onto
//! the coordinate axes.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::subspace::AffinityMatrix;

pub const DEFAULT_MAX_CLUSTERS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Cluster of each model, relabelled in order of first appearance.
    pub labels: Vec<usize>,
    pub num_clusters: usize,
    pub rotation_cost: f64,
    /// Set when no rotation converged within the iteration cap, so labels
    /// come from the unrotated eigenvectors.
    pub fallback: bool,
}

impl ClusterAssignment {
    fn single(n: usize) -> Self {
        Self { labels: vec![0; n], num_clusters: n.min(1), rotation_cost: 0.0, fallback: false }
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == cluster).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StscOptions {
    pub step: f64,
    pub max_iter: usize,
    /// Relative slack `ε_C / J_min` when picking the largest acceptable C.
    pub cost_slack: f64,
}

impl Default for StscOptions {
    fn default() -> Self {
        Self { step: 0.01, max_iter: 200, cost_slack: 0.001 }
    }
}

/// `D^{-1/2} A D^{-1/2}`; rows with zero degree stay zero.
pub fn normalized_affinity(affinity: &AffinityMatrix) -> DMatrix<f64> {
    let a = &affinity.entries;
    let n = a.nrows();
    let inv_sqrt: Vec<f64> = a
        .row_iter()
        .map(|r| {
            let d = r.sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
}

pub fn stsc_cluster(affinity: &AffinityMatrix, max_clusters: usize) -> ClusterAssignment {
    stsc_cluster_with(affinity, max_clusters, StscOptions::default())
}

pub fn stsc_cluster_with(affinity: &AffinityMatrix, max_clusters: usize, opts: StscOptions) -> ClusterAssignment {
    let n = affinity.len();
    let max_c = max_clusters.max(1).min(n);
    if n <= 1 || max_c == 1 {
        return ClusterAssignment::single(n);
    }
    if n == 2 {
        // Local scaling pins any distinct pair at e^-1 (up to rounding), so
        // such a pair is split; only a strictly tighter pair is merged.
        if affinity.entries[(0, 1)] > (-1.0f64).exp() + 1e-9 {
            return ClusterAssignment::single(2);
        }
        return ClusterAssignment { labels: vec![0, 1], num_clusters: 2, rotation_cost: 2.0, fallback: false };
    }

    let vectors = leading_eigenvectors(&normalized_affinity(affinity), max_c);
    let mut runs: Vec<Rotation> = Vec::with_capacity(max_c - 1);
    let mut current = vectors.columns(0, 2).into_owned();
    for c in 2..=max_c {
        if c > 2 {
            let prev = &runs.last().expect("previous run").rotated;
            current = DMatrix::from_fn(n, c, |i, j| if j < c - 1 { prev[(i, j)] } else { vectors[(i, c - 1)] });
        }
        runs.push(rotate(&current, opts));
    }

    // Only converged rotations compete; a C whose descent hit the cap says
    // nothing about how well C clusters fit.
    let converged: Vec<usize> = (0..runs.len()).filter(|&i| runs[i].converged).collect();
    if converged.is_empty() {
        // Smallest C attaining the strict minimum, labelled without rotation.
        let j_min = runs.iter().map(|r| r.cost).fold(f64::INFINITY, f64::min);
        let best = runs.iter().position(|r| r.cost == j_min).expect("non-empty");
        let raw = vectors.columns(0, best + 2).into_owned();
        return finish(&raw, runs[best].cost, true);
    }
    let j_min = converged.iter().map(|&i| runs[i].cost).fold(f64::INFINITY, f64::min);
    let chosen = *converged
        .iter()
        .rev()
        .find(|&&i| runs[i].cost <= j_min * (1.0 + opts.cost_slack))
        .expect("minimum is always acceptable");
    finish(&runs[chosen].rotated, runs[chosen].cost, false)
}

fn finish(z: &DMatrix<f64>, cost: f64, fallback: bool) -> ClusterAssignment {
    let raw: Vec<usize> = z
        .row_iter()
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j].abs() > row[best].abs() {
                    best = j;
                }
            }
            best
        })
        .collect();
    let (labels, num_clusters) = relabel(&raw);
    ClusterAssignment { labels, num_clusters, rotation_cost: cost, fallback }
}

fn relabel(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut map: Vec<(usize, usize)> = Vec::new();
    let labels = raw
        .iter()
        .map(|&r| match map.iter().find(|(k, _)| *k == r) {
            Some(&(_, v)) => v,
            None => {
                let v = map.len();
                map.push((r, v));
                v
            }
        })
        .collect();
    (labels, map.len())
}

/// Top-`c` eigenvectors by descending eigenvalue, ties by solver index.
fn leading_eigenvectors(l: &DMatrix<f64>, c: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(l.clone());
    let mut order: Vec<usize> = (0..l.nrows()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    DMatrix::from_fn(l.nrows(), c, |i, j| eig.eigenvectors[(i, order[j])])
}

struct Rotation {
    rotated: DMatrix<f64>,
    cost: f64,
    converged: bool,
}

/// Alignment cost `J = Σᵢ Σⱼ Z²ᵢⱼ / Mᵢ²` with `Mᵢ = maxⱼ |Zᵢⱼ|`.
fn alignment_cost(z: &DMatrix<f64>) -> f64 {
    z.row_iter()
        .map(|row| {
            let m2 = row.iter().map(|v| v * v).fold(0.0, f64::max);
            if m2 > 0.0 {
                row.iter().map(|v| v * v).sum::<f64>() / m2
            } else {
                0.0
            }
        })
        .sum()
}

/// Right-multiplies `m` by the Givens rotation `G(i, j, θ)` in place.
fn apply_givens(m: &mut DMatrix<f64>, i: usize, j: usize, theta: f64) {
    let (s, co) = theta.sin_cos();
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, i)], m[(r, j)]);
        m[(r, i)] = a * co + b * s;
        m[(r, j)] = b * co - a * s;
    }
}

/// Right-multiplies `m` by `dG(i, j, θ)/dθ` in place; other columns vanish.
fn apply_givens_derivative(m: &mut DMatrix<f64>, i: usize, j: usize, theta: f64) {
    let (s, co) = theta.sin_cos();
    for r in 0..m.nrows() {
        let (a, b) = (m[(r, i)], m[(r, j)]);
        for c in 0..m.ncols() {
            m[(r, c)] = 0.0;
        }
        m[(r, i)] = b * co - a * s;
        m[(r, j)] = -a * co - b * s;
    }
}

fn rotate_by(x: &DMatrix<f64>, pairs: &[(usize, usize)], theta: &[f64]) -> DMatrix<f64> {
    let mut z = x.clone();
    for (&(i, j), &t) in pairs.iter().zip(theta) {
        apply_givens(&mut z, i, j, t);
    }
    z
}

fn cost_gradient(x: &DMatrix<f64>, z: &DMatrix<f64>, pairs: &[(usize, usize)], theta: &[f64], k: usize) -> f64 {
    let c = x.ncols();
    let mut a = x.clone();
    for (idx, (&(i, j), &t)) in pairs.iter().zip(theta).enumerate() {
        if idx == k {
            apply_givens_derivative(&mut a, i, j, t);
        } else {
            apply_givens(&mut a, i, j, t);
        }
    }
    let mut grad = 0.0;
    for r in 0..z.nrows() {
        let (mut m_idx, mut m2) = (0, 0.0);
        for j in 0..c {
            let v = z[(r, j)] * z[(r, j)];
            if v > m2 {
                m2 = v;
                m_idx = j;
            }
        }
        if m2 == 0.0 {
            continue;
        }
        let zm_am = z[(r, m_idx)] * a[(r, m_idx)];
        for j in 0..c {
            let zij = z[(r, j)];
            grad += 2.0 * zij * a[(r, j)] / m2 - 2.0 * zij * zij * zm_am / (m2 * m2);
        }
    }
    grad
}

/// Coordinate-wise gradient descent over Givens angles.
fn rotate(x: &DMatrix<f64>, opts: StscOptions) -> Rotation {
    let (n, c) = x.shape();
    let pairs: Vec<(usize, usize)> = (0..c).flat_map(|i| ((i + 1)..c).map(move |j| (i, j))).collect();
    let mut theta = vec![0.0; pairs.len()];
    let mut z = x.clone();
    let mut cost = alignment_cost(&z);
    let mut history = vec![cost];
    let mut step = opts.step;
    let tol = 1e-4 * n as f64;
    let mut converged = false;
    for iter in 1..=opts.max_iter {
        let mut moved = false;
        for k in 0..pairs.len() {
            let g = cost_gradient(x, &z, &pairs, &theta, k);
            let mut trial = theta.clone();
            trial[k] -= step * g;
            let z_new = rotate_by(x, &pairs, &trial);
            let cost_new = alignment_cost(&z_new);
            if cost_new < cost {
                theta = trial;
                z = z_new;
                cost = cost_new;
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
        history.push(cost);
        if iter > 2 && history[iter - 2] - cost < tol {
            converged = true;
            break;
        }
    }
    Rotation { rotated: z, cost, converged }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let pairs = |v: u64| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_cells: f64 = table.iter().flatten().map(|&v| pairs(v)).sum();
    let sum_a: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| pairs(table.iter().map(|r| r[j]).sum())).sum();
    let total = pairs(n as u64);
    let expected = sum_a * sum_b / total;
    let max = (sum_a + sum_b) / 2.0;
    if max == expected {
        return 1.0;
    }
    (sum_cells - expected) / (max - expected)
}
