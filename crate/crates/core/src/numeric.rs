//! Small dense numeric kernel: symmetric eigendecomposition, k-means, and
//! order statistics.
//!
//! Everything here is generic over the floating-point scalar so the kernel
//! can be instantiated at `f32` or `f64`; the rest of the crate pins
//! [`crate::Real`]. Matrices are tiny (a campaign pool is at most a few
//! hundred cases), so the implementations favor exactness and determinism
//! over asymptotic speed: cyclic Jacobi rotations for eigenvalues, Lloyd
//! iterations with farthest-point seeding for k-means, no parallelism, no
//! randomness beyond the explicit seed.

use num_traits::{Float, FromPrimitive};
use thiserror::Error;

use crate::seeds::splitmix64;

/// Floating-point scalar the kernel is generic over.
pub trait Scalar: Float + FromPrimitive + std::iter::Sum + std::fmt::Debug + 'static {}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convergence threshold for the Jacobi sweep (off-diagonal Frobenius norm).
pub const EIGH_TOLERANCE: f64 = 1e-10;
/// Hard cap on Jacobi sweeps.
pub const EIGH_MAX_SWEEPS: usize = 100;
/// Hard cap on Lloyd iterations.
pub const KMEANS_MAX_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NumericError {
    #[error("matrix rows have inconsistent lengths")]
    RaggedInput,
    #[error("operation requires a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("operation requires a symmetric matrix")]
    NotSymmetric,
    #[error("cluster count {k} is invalid for {n} points")]
    InvalidClusterCount { k: usize, n: usize },
    #[error("points have inconsistent dimensions")]
    DimensionMismatch,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Matrix<T> {
        Matrix { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Matrix<T> {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Matrix<T>, NumericError> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(NumericError::RaggedInput);
        }
        Ok(Matrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() })
    }

    /// Builds an `n x n` matrix from an entry function.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Matrix<T> {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_symmetric(&self, tol: T) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| {
                (i + 1..self.cols).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol)
            })
    }
}

impl<T> std::ops::Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Eigendecomposition of a symmetric matrix: `values` ascending, `vectors`
/// holding the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct Eigh<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

fn off_diagonal_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut sum = T::zero();
    for i in 0..n {
        for j in i + 1..n {
            sum = sum + a[(i, j)] * a[(i, j)];
        }
    }
    (sum + sum).sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Converges when the off-diagonal Frobenius norm drops below
/// [`EIGH_TOLERANCE`], bounded by [`EIGH_MAX_SWEEPS`] sweeps (the cap matters
/// for `f32`, whose round-off floor sits above the tolerance).
pub fn jacobi_eigh<T: Scalar>(m: &Matrix<T>) -> Result<Eigh<T>, NumericError> {
    if !m.is_square() {
        return Err(NumericError::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    let n = m.rows();
    let sym_tol = T::from_f64(1e-9).unwrap()
        * (T::one() + m.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs())));
    if !m.is_symmetric(sym_tol) {
        return Err(NumericError::NotSymmetric);
    }

    let mut a = m.clone();
    let mut v = Matrix::<T>::identity(n);
    let tol = T::from_f64(EIGH_TOLERANCE).unwrap();

    for _ in 0..EIGH_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (apq + apq);
                let t = {
                    let tt = T::one() / (theta.abs() + (theta * theta + T::one()).sqrt());
                    if theta < T::zero() {
                        -tt
                    } else {
                        tt
                    }
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;

                let app = a[(p, p)];
                let aqq = a[(q, q)];
                a[(p, p)] = app - t * apq;
                a[(q, q)] = aqq + t * apq;
                a[(p, q)] = T::zero();
                a[(q, p)] = T::zero();
                for i in 0..n {
                    if i != p && i != q {
                        let aip = a[(i, p)];
                        let aiq = a[(i, q)];
                        a[(i, p)] = c * aip - s * aiq;
                        a[(p, i)] = a[(i, p)];
                        a[(i, q)] = s * aip + c * aiq;
                        a[(q, i)] = a[(i, q)];
                    }
                }
                for i in 0..n {
                    let vip = v[(i, p)];
                    let viq = v[(i, q)];
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap().then(i.cmp(&j)));
    let values: Vec<T> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::<T>::zeros(n, n);
    for (new_col, &old_col) in order.iter().enumerate() {
        for i in 0..n {
            vectors[(i, new_col)] = v[(i, old_col)];
        }
    }
    Ok(Eigh { values, vectors })
}

/// K-means clustering result; `labels[i]` is the cluster of `points[i]`, and
/// every cluster in `[0, k)` is non-empty.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans<T> {
    pub labels: Vec<usize>,
    pub centers: Vec<Vec<T>>,
}

fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Deterministic Lloyd k-means.
///
/// The first center is drawn from the seed; the rest follow farthest-point
/// initialization (ties toward the lower index). Assignment ties also break
/// toward the lower index, empty clusters steal the point farthest from its
/// own center, and iteration stops when assignments are fixed or after
/// [`KMEANS_MAX_ITERS`] rounds.
pub fn kmeans<T: Scalar>(points: &[Vec<T>], k: usize, seed: u64) -> Result<KMeans<T>, NumericError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(NumericError::InvalidClusterCount { k, n });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(NumericError::DimensionMismatch);
    }

    let mut centers: Vec<Vec<T>> = Vec::with_capacity(k);
    centers.push(points[(splitmix64(seed) % n as u64) as usize].clone());
    while centers.len() < k {
        let farthest = (0..n)
            .map(|i| {
                let d = centers
                    .iter()
                    .map(|c| squared_distance(&points[i], c))
                    .fold(T::infinity(), T::min);
                (i, d)
            })
            .max_by(|(i1, d1), (i2, d2)| d1.partial_cmp(d2).unwrap().then(i2.cmp(i1)))
            .map(|(i, _)| i)
            .unwrap();
        centers.push(points[farthest].clone());
    }

    let assign = |centers: &[Vec<T>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                (0..centers.len())
                    .min_by(|&c1, &c2| {
                        squared_distance(p, &centers[c1])
                            .partial_cmp(&squared_distance(p, &centers[c2]))
                            .unwrap()
                            .then(c1.cmp(&c2))
                    })
                    .unwrap()
            })
            .collect()
    };

    let mut labels = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut next = assign(&centers);

        // revive empty clusters with the globally worst-fitting point
        for empty in 0..k {
            if next.iter().any(|&l| l == empty) {
                continue;
            }
            let donor = (0..n)
                .filter(|&i| next.iter().filter(|&&l| l == next[i]).count() > 1)
                .max_by(|&i1, &i2| {
                    squared_distance(&points[i1], &centers[next[i1]])
                        .partial_cmp(&squared_distance(&points[i2], &centers[next[i2]]))
                        .unwrap()
                        .then(i2.cmp(&i1))
                })
                .expect("k <= n guarantees a donor cluster with at least two members");
            next[donor] = empty;
        }

        if next == labels {
            break;
        }
        labels = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&Vec<T>> =
                labels.iter().zip(points).filter(|(&l, _)| l == c).map(|(_, p)| p).collect();
            let count = T::from_usize(members.len()).unwrap();
            for d in 0..dim {
                *center.get_mut(d).unwrap() =
                    members.iter().map(|p| p[d]).sum::<T>() / count;
            }
        }
    }
    Ok(KMeans { labels, centers })
}

/// Median of a non-empty slice (mean of the middle two for even lengths);
/// `None` on empty input.
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / T::from_usize(2).unwrap()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_construction_and_shape_checks() {
        let m = Matrix::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert!(!m.is_symmetric(0.0));
        assert!(Matrix::from_rows(vec![vec![1.0], vec![2.0, 3.0]]).is_err());
        let id = Matrix::<f64>::identity(3);
        assert!(id.is_symmetric(0.0));
        assert_eq!(id[(2, 2)], 1.0);
        assert_eq!(id[(2, 1)], 0.0);
    }

    #[test]
    fn jacobi_solves_the_two_by_two_by_hand_case() {
        // [[2,1],[1,2]] has eigenpairs (1, [1,-1]/sqrt2) and (3, [1,1]/sqrt2)
        let m = Matrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = jacobi_eigh(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-12);
        assert!((e.values[1] - 3.0).abs() < 1e-12);
        let inv = 1.0 / 2.0_f64.sqrt();
        assert!((e.vectors[(0, 0)].abs() - inv).abs() < 1e-12);
        assert!((e.vectors[(0, 0)] + e.vectors[(1, 0)]).abs() < 1e-12);
        assert!((e.vectors[(0, 1)] - e.vectors[(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn jacobi_leaves_a_diagonal_matrix_alone() {
        let m = Matrix::from_rows(vec![
            vec![4.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 2.5],
        ])
        .unwrap();
        let e = jacobi_eigh(&m).unwrap();
        assert_eq!(e.values, vec![-1.0, 2.5, 4.0]);
    }

    #[test]
    fn jacobi_reconstructs_a_random_symmetric_matrix() {
        let n = 8;
        let mut stream = 0xfeed_u64;
        let mut rand_unit = || {
            stream = splitmix64(stream);
            (stream >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut m = Matrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = rand_unit();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let e = jacobi_eigh(&m).unwrap();
        for i in 1..n {
            assert!(e.values[i - 1] <= e.values[i], "eigenvalues must ascend");
        }
        // A v_k = lambda_k v_k and V orthonormal
        for k in 0..n {
            for i in 0..n {
                let av: f64 = (0..n).map(|j| m[(i, j)] * e.vectors[(j, k)]).sum();
                assert!((av - e.values[k] * e.vectors[(i, k)]).abs() < 1e-8);
            }
        }
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|i| e.vectors[(i, a)] * e.vectors[(i, b)]).sum();
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn jacobi_instantiates_at_f32() {
        let m = Matrix::from_rows(vec![vec![2.0_f32, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = jacobi_eigh(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-4);
        assert!((e.values[1] - 3.0).abs() < 1e-4);
    }

    #[test]
    fn jacobi_rejects_bad_shapes() {
        let rect = Matrix::from_rows(vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(
            jacobi_eigh(&rect).unwrap_err(),
            NumericError::NotSquare { rows: 2, cols: 3 }
        );
        let asym = Matrix::from_rows(vec![vec![1.0, 2.0], vec![0.5, 1.0]]).unwrap();
        assert_eq!(jacobi_eigh(&asym).unwrap_err(), NumericError::NotSymmetric);
    }

    fn two_blobs() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.1],
            vec![0.1, 0.0],
            vec![-0.1, 0.0],
            vec![0.0, -0.1],
            vec![10.0, 10.1],
            vec![10.1, 10.0],
            vec![9.9, 10.0],
            vec![10.0, 9.9],
        ]
    }

    #[test]
    fn kmeans_splits_two_blobs_for_any_seed() {
        let points = two_blobs();
        for seed in 0..6 {
            let km = kmeans(&points, 2, seed).unwrap();
            assert_eq!(km.labels[0..4], [km.labels[0]; 4]);
            assert_eq!(km.labels[4..8], [km.labels[4]; 4]);
            assert_ne!(km.labels[0], km.labels[4]);
        }
        let a = kmeans(&points, 2, 3).unwrap();
        let b = kmeans(&points, 2, 3).unwrap();
        assert_eq!(a, b, "same seed must reproduce the same clustering");
    }

    #[test]
    fn kmeans_farthest_point_init_finds_the_outlier() {
        let points = vec![vec![0.0], vec![0.1], vec![10.0]];
        for seed in 0..8 {
            let km = kmeans(&points, 2, seed).unwrap();
            assert_eq!(km.labels[0], km.labels[1]);
            assert_ne!(km.labels[0], km.labels[2]);
        }
    }

    #[test]
    fn kmeans_repairs_empty_clusters_on_duplicate_points() {
        let points = vec![vec![1.0, 1.0]; 5];
        let km = kmeans(&points, 3, 0).unwrap();
        for c in 0..3 {
            assert!(km.labels.contains(&c), "cluster {c} left empty: {:?}", km.labels);
        }
    }

    #[test]
    fn kmeans_rejects_out_of_range_k() {
        let points = vec![vec![0.0], vec![1.0]];
        assert!(matches!(
            kmeans(&points, 0, 0),
            Err(NumericError::InvalidClusterCount { k: 0, n: 2 })
        ));
        assert!(matches!(
            kmeans(&points, 3, 0),
            Err(NumericError::InvalidClusterCount { k: 3, n: 2 })
        ));
        let ragged = vec![vec![0.0], vec![1.0, 2.0]];
        assert!(matches!(kmeans(&ragged, 1, 0), Err(NumericError::DimensionMismatch)));
    }

    #[test]
    fn median_handles_odd_even_and_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[5.0]), Some(5.0));
        assert_eq!(median::<f64>(&[]), None);
    }
}
