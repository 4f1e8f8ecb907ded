//! Violation-diversity metric: how many genuinely different failure modes a
//! pool of violations exposes.
//!
//! Each violation contributes two signatures — the encoded initial view and
//! the executed action sequence. The pool is clustered twice (Euclidean
//! distance on view encodings, Levenshtein distance on action sequences),
//! each time through the same pipeline: Gaussian affinity, normalized-
//! Laplacian embedding, seeded k-means, with the cluster count picked by a
//! silhouette sweep. The diversity score is the number of distinct
//! (view-cluster, action-cluster) pairs, so repeating one failure a hundred
//! times still counts once.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridworld::{Action, Heading, ObjectCategory, Observation};
use crate::numeric::{jacobi_eigh, kmeans, median, Matrix};
use crate::seeds::mix2;
use crate::Real;

/// Default cap for the silhouette sweep (clamped to `n - 1` per pool).
pub const DEFAULT_K_MAX: usize = 10;

/// Length of [`encode_view`]'s output: normalized position (2), heading
/// one-hot (4), visible-cell category histogram (8), lighting (2).
pub const VIEW_ENCODING_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiversityError {
    #[error("view encodings have different lengths ({left} vs {right})")]
    EncodingMismatch { left: usize, right: usize },
    #[error("distance matrix is not symmetric at ({i}, {j})")]
    NotSymmetric { i: usize, j: usize },
    #[error("distance matrix has a non-zero diagonal at {i}")]
    NonZeroDiagonal { i: usize },
    #[error("distance matrix has a negative entry at ({i}, {j})")]
    NegativeDistance { i: usize, j: usize },
    #[error("cluster count {k} out of range for {n} cases (need 2 <= k <= n-1)")]
    ClusterCountOutOfRange { k: usize, n: usize },
    #[error("silhouette sweep bound {k_max} out of range for {n} cases")]
    KMaxOutOfRange { k_max: usize, n: usize },
    #[error("clustering needs at least 3 cases, got {n}")]
    TooFewCases { n: usize },
}

/// Symmetric, non-negative, zero-diagonal pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Matrix<Real>,
}

impl DistanceMatrix {
    pub fn new(values: Matrix<Real>) -> Result<DistanceMatrix, DiversityError> {
        let n = values.rows();
        for i in 0..n {
            if values[(i, i)] != 0.0 {
                return Err(DiversityError::NonZeroDiagonal { i });
            }
            for j in 0..n {
                if values[(i, j)] < 0.0 {
                    return Err(DiversityError::NegativeDistance { i, j });
                }
                if values[(i, j)] != values[(j, i)] {
                    return Err(DiversityError::NotSymmetric { i, j });
                }
            }
        }
        Ok(DistanceMatrix { values })
    }

    /// Builds the matrix by evaluating `f` on each unordered pair `i < j`.
    pub fn from_pairwise(
        n: usize,
        mut f: impl FnMut(usize, usize) -> Real,
    ) -> Result<DistanceMatrix, DiversityError> {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                m[(i, j)] = d;
                m[(j, i)] = d;
            }
        }
        DistanceMatrix::new(m)
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> Real {
        self.values[(i, j)]
    }
}

/// Labels in `[0, k)` with every cluster non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub k: usize,
}

/// Kernel bandwidth for [`affinity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma {
    /// Median of the off-diagonal distances; 1 if that median is 0.
    Auto,
    Fixed(Real),
}

/// Gaussian affinity `exp(-d^2 / (2 sigma^2))`.
pub fn affinity(d: &DistanceMatrix, sigma: Sigma) -> Matrix<Real> {
    let n = d.n();
    let sigma = match sigma {
        Sigma::Fixed(s) => {
            assert!(s > 0.0, "affinity bandwidth must be positive");
            s
        }
        Sigma::Auto => {
            let mut off: Vec<Real> = Vec::with_capacity(n * (n - 1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    off.push(d.get(i, j));
                }
            }
            match median(&off) {
                Some(m) if m > 0.0 => m,
                _ => 1.0,
            }
        }
    };
    Matrix::from_fn(n, |i, j| {
        let dij = d.get(i, j);
        (-dij * dij / (2.0 * sigma * sigma)).exp()
    })
}

/// Spectral clustering on a precomputed affinity matrix.
///
/// Embeds the points into the `k` eigenvectors of the symmetric normalized
/// Laplacian with the smallest eigenvalues, renormalizes the rows, and runs
/// seeded k-means on the embedding.
pub fn spectral_cluster(
    affinity: &Matrix<Real>,
    k: usize,
    seed: u64,
) -> Result<ClusterAssignment, DiversityError> {
    let n = affinity.rows();
    if k < 2 || k + 1 > n {
        return Err(DiversityError::ClusterCountOutOfRange { k, n });
    }

    let degrees: Vec<Real> = (0..n).map(|i| (0..n).map(|j| affinity[(i, j)]).sum()).collect();
    let inv_sqrt: Vec<Real> =
        degrees.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let laplacian = Matrix::from_fn(n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - inv_sqrt[i] * affinity[(i, j)] * inv_sqrt[j]
    });

    let eig = jacobi_eigh(&laplacian).expect("laplacian is square and symmetric by construction");
    let mut embedding: Vec<Vec<Real>> =
        (0..n).map(|i| (0..k).map(|c| eig.vectors[(i, c)]).collect()).collect();
    for row in &mut embedding {
        let norm = row.iter().map(|v| v * v).sum::<Real>().sqrt();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }

    let km = kmeans(&embedding, k, seed).expect("2 <= k < n and rectangular embedding");
    Ok(ClusterAssignment { labels: km.labels, k })
}

/// Mean silhouette coefficient of an assignment under a distance matrix.
///
/// Per point: `(b - a) / max(a, b)` with `a` the mean intra-cluster distance
/// and `b` the smallest mean distance to another cluster; singletons and
/// all-zero neighborhoods contribute 0.
pub fn silhouette(
    assignment: &ClusterAssignment,
    d: &DistanceMatrix,
) -> Result<Real, DiversityError> {
    let n = d.n();
    if assignment.k < 2 {
        return Err(DiversityError::ClusterCountOutOfRange { k: assignment.k, n });
    }
    let labels = &assignment.labels;
    let sizes: Vec<usize> =
        (0..assignment.k).map(|c| labels.iter().filter(|&&l| l == c).count()).collect();

    let mut total = 0.0;
    for i in 0..n {
        let own = labels[i];
        if sizes[own] <= 1 {
            continue; // singleton contributes 0
        }
        let mut intra = 0.0;
        let mut inter = vec![0.0; assignment.k];
        for j in 0..n {
            if j == i {
                continue;
            }
            if labels[j] == own {
                intra += d.get(i, j);
            } else {
                inter[labels[j]] += d.get(i, j);
            }
        }
        let a = intra / (sizes[own] - 1) as Real;
        let b = (0..assignment.k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| inter[c] / sizes[c] as Real)
            .fold(Real::INFINITY, Real::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as Real)
}

/// Sweeps `k` from 2 to `k_max` and keeps the assignment with the best
/// silhouette (ties toward the smaller `k`).
pub fn select_k(
    d: &DistanceMatrix,
    k_max: usize,
    seed: u64,
) -> Result<(usize, ClusterAssignment, Real), DiversityError> {
    let n = d.n();
    if n < 3 {
        return Err(DiversityError::TooFewCases { n });
    }
    if k_max < 2 || k_max + 1 > n {
        return Err(DiversityError::KMaxOutOfRange { k_max, n });
    }
    let aff = affinity(d, Sigma::Auto);
    let mut best: Option<(usize, ClusterAssignment, Real)> = None;
    for k in 2..=k_max {
        let assignment = spectral_cluster(&aff, k, seed)?;
        let score = silhouette(&assignment, d)?;
        if best.as_ref().map_or(true, |(_, _, s)| score > *s) {
            best = Some((k, assignment, score));
        }
    }
    Ok(best.expect("sweep covers at least k = 2"))
}

/// Minimal number of single-symbol insertions, deletions, and substitutions
/// turning `a` into `b`.
pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ai) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, bj) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ai != bj);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Grid dimensions used to normalize agent positions into the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewEncodingParams {
    pub width: usize,
    pub height: usize,
}

/// Fixed-length numeric encoding of an initial observation: agent position
/// normalized to `[0,1]^2`, heading one-hot, the distribution of object
/// categories over visible cells, and the lighting pair.
pub fn encode_view(obs: &Observation, params: &ViewEncodingParams) -> Vec<Real> {
    let mut v = Vec::with_capacity(VIEW_ENCODING_DIM);
    v.push(obs.agent_pose.x as Real / params.width.saturating_sub(1).max(1) as Real);
    v.push(obs.agent_pose.y as Real / params.height.saturating_sub(1).max(1) as Real);
    for h in Heading::ALL {
        v.push(if obs.agent_pose.heading == h { 1.0 } else { 0.0 });
    }
    let mut histogram = [0.0; ObjectCategory::ALL.len()];
    for cell in &obs.visible_cells {
        if let Some(cat) = cell.object_category {
            histogram[cat.index()] += 1.0;
        }
    }
    let total = obs.visible_cells.len().max(1) as Real;
    v.extend(histogram.iter().map(|c| c / total));
    v.push(obs.lighting.hue);
    v.push(obs.lighting.brightness);
    debug_assert_eq!(v.len(), VIEW_ENCODING_DIM);
    v
}

/// Euclidean distance between two encodings of equal length.
pub fn encoding_distance(a: &[Real], b: &[Real]) -> Result<Real, DiversityError> {
    if a.len() != b.len() {
        return Err(DiversityError::EncodingMismatch { left: a.len(), right: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<Real>().sqrt())
}

/// Euclidean distance between two observations' view encodings.
pub fn view_distance(a: &Observation, b: &Observation, params: &ViewEncodingParams) -> Real {
    encoding_distance(&encode_view(a, params), &encode_view(b, params))
        .expect("identical params produce identical encoding lengths")
}

/// One pool's diversity result, serialized as-is into cluster reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityReport {
    pub n: usize,
    pub vd: usize,
    pub pairs: Vec<(usize, usize)>,
    pub k_view: usize,
    pub k_action: usize,
    pub labels_view: Vec<usize>,
    pub labels_action: Vec<usize>,
    pub silhouette_view: Real,
    pub silhouette_action: Real,
    /// True when the pool was too small to cluster (n < 3); `vd` is then
    /// `n` by convention.
    pub small_pool: bool,
}

fn cluster_side(d: &DistanceMatrix, k_max: usize, seed: u64) -> (usize, Vec<usize>, Real) {
    let n = d.n();
    let degenerate = (0..n).all(|i| (0..n).all(|j| d.get(i, j) == 0.0));
    if degenerate {
        // every case identical on this side: one cluster, no sweep
        return (1, vec![0; n], 0.0);
    }
    let (k, assignment, score) =
        select_k(d, k_max.clamp(2, n - 1), seed).expect("n >= 3 and k_max clamped into range");
    (k, assignment.labels, score)
}

/// Clusters a violation pool by initial view and by action sequence, then
/// counts distinct (view-cluster, action-cluster) pairs.
///
/// Pools with fewer than 3 cases cannot be clustered; they report `vd = n`
/// with the `small_pool` flag set.
pub fn violation_diversity(
    cases: &[(Observation, Vec<Action>)],
    params: &ViewEncodingParams,
    k_max: usize,
    seed: u64,
) -> DiversityReport {
    let encodings: Vec<Vec<Real>> = cases.iter().map(|(o, _)| encode_view(o, params)).collect();
    let actions: Vec<Vec<Action>> = cases.iter().map(|(_, a)| a.clone()).collect();
    violation_diversity_from_parts(&encodings, &actions, k_max, seed)
}

/// [`violation_diversity`] on already-encoded views. Persisted records store
/// the encoding rather than the raw observation, so offline re-clustering
/// enters here.
pub fn violation_diversity_from_parts(
    encodings: &[Vec<Real>],
    actions: &[Vec<Action>],
    k_max: usize,
    seed: u64,
) -> DiversityReport {
    assert_eq!(encodings.len(), actions.len(), "one view and one sequence per case");
    let n = encodings.len();
    if n < 3 {
        return DiversityReport {
            n,
            vd: n,
            pairs: (0..n).map(|i| (i, i)).collect(),
            k_view: n,
            k_action: n,
            labels_view: (0..n).collect(),
            labels_action: (0..n).collect(),
            silhouette_view: 0.0,
            silhouette_action: 0.0,
            small_pool: true,
        };
    }

    let view_d = DistanceMatrix::from_pairwise(n, |i, j| {
        encoding_distance(&encodings[i], &encodings[j]).expect("uniform encoding length")
    })
    .expect("Euclidean distances are symmetric and non-negative");
    let action_d =
        DistanceMatrix::from_pairwise(n, |i, j| levenshtein(&actions[i], &actions[j]) as Real)
            .expect("edit distances are symmetric and non-negative");

    let (k_view, labels_view, silhouette_view) = cluster_side(&view_d, k_max, mix2(seed, 1));
    let (k_action, labels_action, silhouette_action) =
        cluster_side(&action_d, k_max, mix2(seed, 2));

    let pairs: Vec<(usize, usize)> =
        labels_view.iter().zip(&labels_action).map(|(&v, &a)| (v, a)).collect();
    let vd = pairs.iter().collect::<BTreeSet<_>>().len();

    DiversityReport {
        n,
        vd,
        pairs,
        k_view,
        k_action,
        labels_view,
        labels_action,
        silhouette_view,
        silhouette_action,
        small_pool: false,
    }
}
