//! Reduced principal components, principal angles, conceptual distances and
//! locally scaled affinities.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::model::ModelId;
use crate::window::WindowBuffer;

pub const DEFAULT_RETENTION: f64 = 0.999;
pub const DEFAULT_SCALING_K: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubspaceError {
    #[error("degenerate window: zero covariance over {rows} row(s)")]
    DegenerateWindow { rows: usize },
    #[error("ambient dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("local scaling needs at least two models")]
    SingletonRegistry,
    #[error("retention must lie in (0, 1], got {0}")]
    InvalidRetention(f64),
}

/// Orthonormal basis `P` (m × p) of the dominant subspace of a window.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPcs {
    pub basis: DMatrix<f64>,
    pub variance_captured: f64,
    pub source_rows: usize,
}

impl ReducedPcs {
    /// Single unit vector along the first coordinate, used for degenerate windows.
    pub fn fallback(ambient: usize) -> Self {
        let mut basis = DMatrix::zeros(ambient, 1);
        basis[(0, 0)] = 1.0;
        Self { basis, variance_captured: 1.0, source_rows: 0 }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Fits the subspace of a training window, falling back on degenerate input.
    pub fn of_window(window: &WindowBuffer, retention: f64) -> Self {
        let joint = joint_matrix(window);
        let ambient = joint.ncols();
        compute_reduced_pcs(&joint, retention).unwrap_or_else(|_| Self::fallback(ambient))
    }
}

/// Stacks features and target into an N × (n + 1) matrix with every column
/// min-max scaled to [0, 1] over the window. Constant columns become 0.
pub fn joint_matrix(window: &WindowBuffer) -> DMatrix<f64> {
    let n = window.len();
    let m = window.iter().next().map_or(0, |r| r.features.len() + 1);
    let mut joint = DMatrix::zeros(n, m);
    for (i, row) in window.iter().enumerate() {
        for (j, v) in row.features.iter().enumerate() {
            joint[(i, j)] = *v;
        }
        joint[(i, m - 1)] = row.target;
    }
    for mut col in joint.column_iter_mut() {
        let lo = col.min();
        let hi = col.max();
        let span = hi - lo;
        if span > 0.0 && span.is_finite() {
            col.apply(|v| *v = (*v - lo) / span);
        } else {
            col.fill(0.0);
        }
    }
    joint
}

/// Leading eigenvectors of the centred covariance capturing `retention` of
/// the total variance.
pub fn compute_reduced_pcs(window: &DMatrix<f64>, retention: f64) -> Result<ReducedPcs, SubspaceError> {
    if !(retention > 0.0 && retention <= 1.0) {
        return Err(SubspaceError::InvalidRetention(retention));
    }
    let (n, m) = window.shape();
    if n < 2 || m == 0 {
        return Err(SubspaceError::DegenerateWindow { rows: n });
    }
    let mut centred = window.clone();
    for mut col in centred.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let cov = (centred.transpose() * &centred) / (n - 1) as f64;
    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    let values: Vec<f64> = eigen.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let total: f64 = values.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(SubspaceError::DegenerateWindow { rows: n });
    }
    let mut captured = 0.0;
    let mut p = 0;
    for &idx in &order {
        captured += values[idx];
        p += 1;
        // Small slack so exact ties at the retention boundary do not pull in
        // an extra zero-variance direction through rounding.
        if captured / total >= retention - 1e-12 {
            break;
        }
    }
    let p = p.min(n).min(m);
    let basis = DMatrix::from_fn(m, p, |r, c| eigen.eigenvectors[(r, order[c])]);
    Ok(ReducedPcs {
        basis,
        variance_captured: (captured / total).min(1.0),
        source_rows: n,
    })
}

fn singular_cosines(a: &ReducedPcs, b: &ReducedPcs) -> Result<Vec<f64>, SubspaceError> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(SubspaceError::DimensionMismatch { left: a.ambient_dim(), right: b.ambient_dim() });
    }
    // Canonical argument order makes the result exactly symmetric.
    let (a, b) = if canonical_le(a, b) { (a, b) } else { (b, a) };
    let product = a.basis.transpose() * &b.basis;
    let mut cos: Vec<f64> = product
        .singular_values()
        .iter()
        .map(|s| s.clamp(0.0, 1.0))
        .collect();
    cos.sort_by(|x, y| y.total_cmp(x));
    Ok(cos)
}

fn canonical_le(a: &ReducedPcs, b: &ReducedPcs) -> bool {
    if a.dim() != b.dim() {
        return a.dim() < b.dim();
    }
    for (x, y) in a.basis.iter().zip(b.basis.iter()) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Principal angles in ascending order, `min(p, q)` of them.
pub fn principal_angles(a: &ReducedPcs, b: &ReducedPcs) -> Result<Vec<f64>, SubspaceError> {
    Ok(singular_cosines(a, b)?.into_iter().map(f64::acos).collect())
}

/// `d = 1 − mean cos θ` over the principal angles.
pub fn conceptual_distance(a: &ReducedPcs, b: &ReducedPcs) -> Result<f64, SubspaceError> {
    let cos = singular_cosines(a, b)?;
    let mean = cos.iter().sum::<f64>() / cos.len() as f64;
    Ok((1.0 - mean).clamp(0.0, 1.0))
}

/// Symmetric pairwise distance table keyed by model id, in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<ModelId>,
    entries: Vec<Vec<f64>>,
}

impl DistanceMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a table from a full square matrix; the upper triangle wins.
    pub fn from_square(ids: Vec<ModelId>, square: &[Vec<f64>]) -> Self {
        let n = ids.len();
        assert_eq!(square.len(), n);
        let entries = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| match i.cmp(&j) {
                        std::cmp::Ordering::Equal => 0.0,
                        std::cmp::Ordering::Less => square[i][j],
                        std::cmp::Ordering::Greater => square[j][i],
                    })
                    .collect()
            })
            .collect();
        Self { ids, entries }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ModelId] {
        &self.ids
    }

    pub fn index_of(&self, id: ModelId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    pub fn contains(&self, id: ModelId) -> bool {
        self.index_of(id).is_some()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    pub fn distance(&self, a: ModelId, b: ModelId) -> Option<f64> {
        Some(self.entries[self.index_of(a)?][self.index_of(b)?])
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i]
    }

    /// Appends a model with its distances to every existing entry, in order.
    pub fn push(&mut self, id: ModelId, distances: &[f64]) {
        assert_eq!(distances.len(), self.ids.len(), "distance row length");
        assert!(!self.contains(id), "duplicate id {id}");
        for (row, &d) in self.entries.iter_mut().zip(distances) {
            row.push(d);
        }
        let mut own = distances.to_vec();
        own.push(0.0);
        self.entries.push(own);
        self.ids.push(id);
    }

    pub fn remove(&mut self, id: ModelId) -> bool {
        let Some(i) = self.index_of(id) else { return false };
        self.ids.remove(i);
        self.entries.remove(i);
        for row in &mut self.entries {
            row.remove(i);
        }
        true
    }

    /// Sub-table over `ids` in the given order.
    pub fn restrict(&self, ids: &[ModelId]) -> Option<Self> {
        let idx: Vec<usize> = ids.iter().map(|&id| self.index_of(id)).collect::<Option<_>>()?;
        let entries = idx.iter().map(|&i| idx.iter().map(|&j| self.entries[i][j]).collect()).collect();
        Some(Self { ids: ids.to_vec(), entries })
    }
}

/// `σᵢ`: distance from model `i` to its `min(k, n − 1)`-th nearest neighbour.
pub fn local_scale(distances: &DistanceMatrix, index: usize, k: usize) -> Result<f64, SubspaceError> {
    let n = distances.len();
    if n < 2 {
        return Err(SubspaceError::SingletonRegistry);
    }
    let k_eff = k.clamp(1, n - 1);
    let mut row: Vec<f64> = (0..n).filter(|&j| j != index).map(|j| distances.get(index, j)).collect();
    row.sort_by(f64::total_cmp);
    Ok(row[k_eff - 1])
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub entries: DMatrix<f64>,
    pub scaling_k: usize,
}

impl AffinityMatrix {
    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.nrows() == 0
    }
}

/// `A_ij = exp(−d²/(σᵢσⱼ))` off the diagonal, zero on it.
pub fn build_affinity(distances: &DistanceMatrix, k: usize) -> AffinityMatrix {
    let n = distances.len();
    let mut entries = DMatrix::zeros(n, n);
    if n >= 2 {
        let sigma: Vec<f64> = (0..n)
            .map(|i| local_scale(distances, i, k).expect("n >= 2"))
            .collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = pair_affinity(distances.get(i, j), sigma[i] * sigma[j]);
                entries[(i, j)] = a;
                entries[(j, i)] = a;
            }
        }
    }
    AffinityMatrix { entries, scaling_k: k }
}

fn pair_affinity(d: f64, scale: f64) -> f64 {
    if d == 0.0 {
        1.0
    } else if scale == 0.0 {
        0.0
    } else {
        (-(d * d) / scale).exp().clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn pcs(cols: &[&[f64]]) -> ReducedPcs {
        let m = cols[0].len();
        ReducedPcs {
            basis: DMatrix::from_fn(m, cols.len(), |r, c| cols[c][r]),
            variance_captured: 1.0,
            source_rows: 0,
        }
    }

    fn ids(n: usize) -> Vec<ModelId> {
        (0..n as u32).map(|i| ModelId::new(0, i)).collect()
    }

    #[test]
    fn rank_one_window() {
        let v = [1.0, 2.0, -2.0];
        let rows = DMatrix::from_fn(6, 3, |r, c| (r as f64 - 2.5) * v[c]);
        let p = compute_reduced_pcs(&rows, DEFAULT_RETENTION).unwrap();
        assert_eq!(p.dim(), 1);
        let dot: f64 = (0..3).map(|i| p.basis[(i, 0)] * v[i] / 3.0).sum();
        assert_abs_diff_eq!(dot.abs(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_window_needs_every_component() {
        let m = 4;
        let mut rows = DMatrix::zeros(2 * m, m);
        for i in 0..m {
            rows[(2 * i, i)] = 1.0;
            rows[(2 * i + 1, i)] = -1.0;
        }
        let p = compute_reduced_pcs(&rows, DEFAULT_RETENTION).unwrap();
        assert_eq!(p.dim(), m);
    }

    #[test]
    fn noisy_three_dim_subspace_in_ten_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let frame = DMatrix::from_fn(10, 3, |_, _| rng.random::<f64>() - 0.5);
        let coords = DMatrix::from_fn(100, 3, |_, _| rng.random::<f64>() - 0.5);
        let noise = DMatrix::from_fn(100, 10, |_, _| 1e-6 * (rng.random::<f64>() - 0.5));
        let rows = coords * frame.transpose() + noise;
        let p = compute_reduced_pcs(&rows, DEFAULT_RETENTION).unwrap();
        assert_eq!(p.dim(), 3);

        // Oracle: singular values of the centred data itself.
        let mut centred = rows.clone();
        for mut col in centred.column_iter_mut() {
            let mu = col.mean();
            col.add_scalar_mut(-mu);
        }
        let mut s2: Vec<f64> = centred.singular_values().iter().map(|s| s * s).collect();
        s2.sort_by(|a, b| b.total_cmp(a));
        let total: f64 = s2.iter().sum();
        let oracle_p = (1..=s2.len()).find(|&q| s2[..q].iter().sum::<f64>() / total >= 0.999).unwrap();
        assert_eq!(oracle_p, 3);
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let rows = DMatrix::from_element(5, 3, 0.4);
        assert_eq!(
            compute_reduced_pcs(&rows, DEFAULT_RETENTION),
            Err(SubspaceError::DegenerateWindow { rows: 5 })
        );
        let f = ReducedPcs::fallback(3);
        assert_eq!(f.basis.column(0).as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn angle_examples() {
        let e1 = pcs(&[&[1.0, 0.0]]);
        let e2 = pcs(&[&[0.0, 1.0]]);
        let diag = pcs(&[&[FRAC_PI_4.cos(), FRAC_PI_4.sin()]]);
        assert_eq!(principal_angles(&e1, &e1).unwrap(), vec![0.0]);
        assert_abs_diff_eq!(principal_angles(&e1, &e2).unwrap()[0], FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(principal_angles(&e1, &diag).unwrap()[0], FRAC_PI_4, epsilon = 1e-12);
        assert_eq!(conceptual_distance(&e1, &e1).unwrap(), 0.0);
        assert_abs_diff_eq!(conceptual_distance(&e1, &e2).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            conceptual_distance(&e1, &diag).unwrap(),
            1.0 - 2f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn dimension_mismatch() {
        let a = pcs(&[&[1.0, 0.0]]);
        let b = pcs(&[&[1.0, 0.0, 0.0]]);
        assert_eq!(
            conceptual_distance(&a, &b),
            Err(SubspaceError::DimensionMismatch { left: 2, right: 3 })
        );
    }

    #[test]
    fn local_scale_examples() {
        let two = DistanceMatrix::from_square(ids(2), &[vec![0.0, 0.3], vec![0.3, 0.0]]);
        assert_eq!(local_scale(&two, 0, 7).unwrap(), 0.3);

        let four = DistanceMatrix::from_square(
            ids(4),
            &[
                vec![0.0, 0.3, 0.1, 0.2],
                vec![0.3, 0.0, 0.5, 0.5],
                vec![0.1, 0.5, 0.0, 0.5],
                vec![0.2, 0.5, 0.5, 0.0],
            ],
        );
        assert_eq!(local_scale(&four, 0, 2).unwrap(), 0.2);

        let one = DistanceMatrix::from_square(ids(1), &[vec![0.0]]);
        assert_eq!(local_scale(&one, 0, 7), Err(SubspaceError::SingletonRegistry));
    }

    #[test]
    fn local_scale_k7_of_eight_is_row_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sq: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.random()).collect()).collect();
        let dm = DistanceMatrix::from_square(ids(8), &sq);
        for i in 0..8 {
            // Brute force: the 7th smallest of the 7 off-diagonal entries.
            let mut others: Vec<f64> = (0..8).filter(|&j| j != i).map(|j| dm.get(i, j)).collect();
            others.sort_by(f64::total_cmp);
            let max = others.iter().copied().fold(f64::MIN, f64::max);
            assert_eq!(others[6], max);
            assert_eq!(local_scale(&dm, i, 7).unwrap(), max);
        }
    }

    #[test]
    fn affinity_examples() {
        let dm = DistanceMatrix::from_square(ids(2), &[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let a = build_affinity(&dm, 7);
        assert_abs_diff_eq!(a.entries[(0, 1)], (-1.0f64).exp(), epsilon = 1e-15);
        assert_eq!(a.entries[(0, 0)], 0.0);

        let dup = DistanceMatrix::from_square(
            ids(3),
            &[vec![0.0, 0.0, 0.4], vec![0.0, 0.0, 0.4], vec![0.4, 0.4, 0.0]],
        );
        let a = build_affinity(&dup, 1);
        assert_eq!(a.entries[(0, 1)], 1.0);
        // σ₀ = σ₁ = 0 and d > 0.
        assert_eq!(a.entries[(0, 2)], 0.0);

        let single = build_affinity(&DistanceMatrix::from_square(ids(1), &[vec![0.0]]), 7);
        assert_eq!(single.entries, DMatrix::zeros(1, 1));
    }

    #[test]
    fn distance_matrix_push_remove() {
        let mut dm = DistanceMatrix::new();
        dm.push(ModelId::new(0, 0), &[]);
        dm.push(ModelId::new(0, 1), &[0.2]);
        dm.push(ModelId::new(1, 0), &[0.4, 0.6]);
        assert_eq!(dm.distance(ModelId::new(1, 0), ModelId::new(0, 1)), Some(0.6));
        assert!(dm.remove(ModelId::new(0, 1)));
        assert_eq!(dm.len(), 2);
        assert_eq!(dm.get(0, 1), 0.4);
        assert_eq!(dm.get(1, 0), 0.4);
        let r = dm.restrict(&[ModelId::new(1, 0)]).unwrap();
        assert_eq!(r.len(), 1);
    }

    mod props {
        use super::*;
        use nalgebra::QR;
        use proptest::prelude::*;
        use rand::Rng;

        fn random_basis(rng: &mut ChaCha8Rng, m: usize, p: usize) -> ReducedPcs {
            let raw = DMatrix::from_fn(m, p, |_, _| rng.random::<f64>() - 0.5);
            let q = QR::new(raw).q();
            ReducedPcs { basis: q, variance_captured: 1.0, source_rows: 0 }
        }

        fn random_orthogonal(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
            QR::new(DMatrix::from_fn(p, p, |_, _| rng.random::<f64>() - 0.5)).q()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn angles_in_range_and_distance_symmetric(seed in any::<u64>(), m in 2usize..12) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = rng.random_range(1..=m);
                let q = rng.random_range(1..=m);
                let a = random_basis(&mut rng, m, p);
                let b = random_basis(&mut rng, m, q);
                let angles = principal_angles(&a, &b).unwrap();
                prop_assert_eq!(angles.len(), p.min(q));
                prop_assert!(angles.iter().all(|t| (0.0..=FRAC_PI_2).contains(t)));
                prop_assert!(angles.windows(2).all(|w| w[0] <= w[1]));
                let dab = conceptual_distance(&a, &b).unwrap();
                prop_assert_eq!(dab, conceptual_distance(&b, &a).unwrap());
                prop_assert!((0.0..=1.0).contains(&dab));
                prop_assert!(conceptual_distance(&a, &a).unwrap() < 1e-12);
            }

            #[test]
            fn distance_invariant_to_basis_rotation(seed in any::<u64>(), m in 2usize..12) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = rng.random_range(1..=m);
                let q = rng.random_range(1..=m);
                let a = random_basis(&mut rng, m, p);
                let b = random_basis(&mut rng, m, q);
                let rotated = ReducedPcs { basis: &b.basis * random_orthogonal(&mut rng, q), ..b.clone() };
                let d0 = conceptual_distance(&a, &b).unwrap();
                let d1 = conceptual_distance(&a, &rotated).unwrap();
                prop_assert!((d0 - d1).abs() < 1e-9);
            }

            #[test]
            fn reduced_pcs_orthonormal_and_retain_variance(seed in any::<u64>(), n in 3usize..40, m in 2usize..10) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let rows = DMatrix::from_fn(n, m, |_, _| rng.random::<f64>());
                let pcs = compute_reduced_pcs(&rows, DEFAULT_RETENTION).unwrap();
                let p = pcs.dim();
                prop_assert!(p >= 1 && p <= n.min(m));
                let gram = pcs.basis.transpose() * &pcs.basis;
                prop_assert!((gram - DMatrix::identity(p, p)).amax() < 1e-9);
                prop_assert!(pcs.variance_captured >= DEFAULT_RETENTION - 1e-12);

                let mut centred = rows.clone();
                for mut col in centred.column_iter_mut() {
                    let mu = col.mean();
                    col.add_scalar_mut(-mu);
                }
                let total = centred.norm_squared();
                let kept = (&centred * &pcs.basis).norm_squared();
                prop_assert!(kept / total >= DEFAULT_RETENTION - 1e-9);
            }

            #[test]
            fn affinity_symmetric_zero_diagonal_in_unit_range(seed in any::<u64>(), n in 1usize..15, k in 1usize..9) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let sq: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..n).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random() }).collect())
                    .collect();
                let dm = DistanceMatrix::from_square(ids(n), &sq);
                let a = build_affinity(&dm, k);
                for i in 0..n {
                    prop_assert_eq!(a.entries[(i, i)], 0.0);
                    for j in 0..n {
                        prop_assert_eq!(a.entries[(i, j)], a.entries[(j, i)]);
                        prop_assert!((0.0..=1.0).contains(&a.entries[(i, j)]));
                    }
                }
            }
        }
    }
}
