//! Information-layer construction from document topic vectors or
//! co-occurrence sets.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};

/// Weight assigned to a pair of identical topic vectors.
pub const DEFAULT_MAX_WEIGHT: f64 = 1e6;

fn inverse_distance(points: &DMatrix<f64>, i: usize, j: usize, w_max: f64) -> Result<(f64, f64)> {
    let d = (points.row(i) - points.row(j)).norm();
    if !d.is_finite() {
        return invalid(format!("distance between rows {i} and {j} is not finite"));
    }
    let w = if d == 0.0 { w_max } else { (1.0 / d).min(w_max) };
    Ok((d, w))
}

/// ε-neighborhood graph: `W(i,j) = 1/‖x_i − x_j‖` when that exceeds
/// `threshold`, otherwise 0. Weights are capped at `w_max`.
pub fn inverse_distance_similarity(
    points: &DMatrix<f64>,
    threshold: f64,
    w_max: f64,
) -> Result<DMatrix<f64>> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return invalid(format!("threshold must be positive, got {threshold}"));
    }
    if !(w_max > 0.0) {
        return invalid(format!("w_max must be positive, got {w_max}"));
    }
    let n = points.nrows();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let (_, v) = inverse_distance(points, i, j, w_max)?;
            if v > threshold {
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Ok(w)
}

/// Jaccard index between the container sets of each item, thresholded.
///
/// `sets[m]` holds the containers (e.g. tweets) in which item `m` appears.
/// Pairs whose union is empty get 0.
pub fn jaccard_similarity<T: Ord>(sets: &[BTreeSet<T>], threshold: f64) -> Result<DMatrix<f64>> {
    if !threshold.is_finite() || threshold < 0.0 {
        return invalid(format!("threshold must be >= 0, got {threshold}"));
    }
    let n = sets.len();
    let mut w = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let both = sets[i].intersection(&sets[j]).count();
            let either = sets[i].len() + sets[j].len() - both;
            let v = if either == 0 {
                0.0
            } else {
                both as f64 / either as f64
            };
            if v > threshold {
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    Ok(w)
}

/// Symmetrized k-nearest-neighbor graph with inverse-distance weights.
/// Ties in distance are broken by the lower row index.
pub fn knn_similarity(points: &DMatrix<f64>, k: usize, w_max: f64) -> Result<DMatrix<f64>> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return invalid(format!("k must satisfy 1 <= k < {n}, got {k}"));
    }
    let mut w = DMatrix::zeros(n, n);
    let mut cand: Vec<(f64, usize, f64)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        for j in (0..n).filter(|&j| j != i) {
            let (d, v) = inverse_distance(points, i, j, w_max)?;
            cand.push((d, j, v));
        }
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, j, v) in cand.iter().take(k) {
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};

    fn random_points(n: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, t, |_, _| rng.random::<f64>())
    }

    fn check_graph(w: &DMatrix<f64>) {
        assert_eq!(w, &w.transpose());
        assert!(w.iter().all(|v| *v >= 0.0));
        assert!(w.diagonal().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn inverse_distance_thresholding() {
        let p = dmatrix![0.0, 0.0; 2.0, 0.0];
        let w = inverse_distance_similarity(&p, 0.1, DEFAULT_MAX_WEIGHT).unwrap();
        assert_eq!(w, dmatrix![0.0, 0.5; 0.5, 0.0]);
        let w = inverse_distance_similarity(&p, 0.6, DEFAULT_MAX_WEIGHT).unwrap();
        assert_eq!(w, DMatrix::zeros(2, 2));
    }

    #[test]
    fn duplicate_points_are_capped() {
        let p = dmatrix![1.0, 1.0; 1.0, 1.0];
        let w = inverse_distance_similarity(&p, 0.1, 50.0).unwrap();
        assert_eq!(w[(0, 1)], 50.0);
    }

    #[test]
    fn inverse_distance_matches_double_loop() {
        let p = random_points(10, 4, 3);
        let eps = 2.0;
        let w = inverse_distance_similarity(&p, eps, DEFAULT_MAX_WEIGHT).unwrap();
        check_graph(&w);
        for i in 0..10 {
            for j in 0..10 {
                let expect = if i == j {
                    0.0
                } else {
                    let d: f64 = (0..4).map(|c| (p[(i, c)] - p[(j, c)]).powi(2)).sum::<f64>().sqrt();
                    if 1.0 / d > eps { 1.0 / d } else { 0.0 }
                };
                assert!((w[(i, j)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn raising_threshold_never_adds_edges() {
        let p = random_points(12, 3, 9);
        let mut prev = inverse_distance_similarity(&p, 0.5, DEFAULT_MAX_WEIGHT).unwrap();
        for eps in [1.0, 1.5, 2.0, 4.0] {
            let w = inverse_distance_similarity(&p, eps, DEFAULT_MAX_WEIGHT).unwrap();
            for (a, b) in w.iter().zip(prev.iter()) {
                assert!(*a == 0.0 || *b != 0.0);
            }
            prev = w;
        }
    }

    #[test]
    fn jaccard_cases() {
        let s = |v: &[u32]| v.iter().copied().collect::<BTreeSet<_>>();
        let w = jaccard_similarity(&[s(&[1, 2]), s(&[1, 2]), s(&[5]), s(&[1, 9])], 0.0).unwrap();
        check_graph(&w);
        assert_eq!(w[(0, 1)], 1.0);
        assert_eq!(w[(0, 2)], 0.0);
        assert!((w[(0, 3)] - 1.0 / 3.0).abs() < 1e-15);
        let w = jaccard_similarity(&[s(&[]), s(&[])], 0.0).unwrap();
        assert_eq!(w[(0, 1)], 0.0);
        let w = jaccard_similarity(&[s(&[1, 2]), s(&[1, 9])], 0.5).unwrap();
        assert_eq!(w[(0, 1)], 0.0);
    }

    #[test]
    fn knn_collinear() {
        let p = dmatrix![0.0; 1.0; 3.0];
        let w = knn_similarity(&p, 1, DEFAULT_MAX_WEIGHT).unwrap();
        check_graph(&w);
        assert_eq!(w[(0, 1)], 1.0);
        assert_eq!(w[(1, 2)], 0.5);
        assert_eq!(w[(0, 2)], 0.0);
    }

    #[test]
    fn knn_full_is_complete() {
        let p = random_points(6, 2, 1);
        let w = knn_similarity(&p, 5, DEFAULT_MAX_WEIGHT).unwrap();
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(w[(i, j)] > 0.0, i != j);
            }
        }
        assert!(knn_similarity(&p, 6, DEFAULT_MAX_WEIGHT).is_err());
        assert!(knn_similarity(&p, 0, DEFAULT_MAX_WEIGHT).is_err());
    }

    #[test]
    fn knn_matches_sort_per_row() {
        let p = random_points(15, 3, 42);
        let k = 3;
        let w = knn_similarity(&p, k, DEFAULT_MAX_WEIGHT).unwrap();
        check_graph(&w);
        let mut edges = std::collections::BTreeSet::new();
        for i in 0..15 {
            let mut d: Vec<(f64, usize)> = (0..15)
                .filter(|&j| j != i)
                .map(|j| ((p.row(i) - p.row(j)).norm(), j))
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for &(_, j) in &d[..k] {
                edges.insert((i.min(j), i.max(j)));
            }
        }
        for i in 0..15 {
            for j in i + 1..15 {
                assert_eq!(w[(i, j)] > 0.0, edges.contains(&(i, j)), "edge {i}-{j}");
            }
        }
    }
}
