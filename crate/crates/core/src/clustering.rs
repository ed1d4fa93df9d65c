//! K-means clustering (Lloyd iteration, k-means++ seeding).

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};
use crate::seeded_rng;

pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansModel {
    pub k: usize,
    pub centroids: Matrix,
    /// Sum of squared distances from each training point to its nearest centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Objective after the initial assignment and after every Lloyd step.
    pub inertia_trace: Vec<f64>,
    /// Assignments stopped changing before the iteration cap or tolerance hit.
    pub converged: bool,
    /// Some empty cluster was reseeded on the final iteration.
    pub reseeded_last: bool,
}

impl KMeansModel {
    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    /// Nearest centroid, lowest index on ties.
    pub fn nearest(&self, x: &[f64]) -> (usize, f64) {
        nearest(&self.centroids, x)
    }

    /// Write centroids as comma-separated rows.
    pub fn write_centroids(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for row in self.centroids.iter_rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_centroids(path: impl AsRef<Path>) -> Result<Matrix> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let row: std::result::Result<Vec<f64>, _> = line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            rows.push(row.map_err(|_| Error::Parse {
                path: path.display().to_string(),
                message: format!("line {}: bad number", i + 1),
            })?);
        }
        Matrix::from_rows(&rows)
    }
}

fn nearest(centroids: &Matrix, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter_rows().enumerate() {
        let d = squared_distance(x, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign_all(centroids: &Matrix, x: &Matrix) -> (Vec<usize>, Vec<f64>) {
    (0..x.rows())
        .into_par_iter()
        .map(|i| nearest(centroids, x.row(i)))
        .unzip()
}

fn objective(dist: &[f64]) -> f64 {
    dist.iter().sum()
}

fn kmeans_plus_plus<R: Rng>(x: &Matrix, k: usize, rng: &mut R) -> Matrix {
    let n = x.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| squared_distance(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            // guard against rounding landing on an already chosen point
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            free[rng.gen_range(0..free.len())]
        };
        chosen.push(next);
        for i in 0..n {
            d2[i] = d2[i].min(squared_distance(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

pub fn fit_kmeans(data: &Dataset, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansModel> {
    fit_kmeans_matrix(data.features(), k, seed, max_iter, tol)
}

pub fn fit_kmeans_matrix(x: &Matrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> Result<KMeansModel> {
    let n = x.rows();
    if k < 1 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds {n} objects")));
    }
    let d = x.cols();
    let mut rng = seeded_rng(seed);
    let mut centroids = kmeans_plus_plus(x, k, &mut rng);
    let (mut labels, mut dist) = assign_all(&centroids, x);
    let mut current = objective(&dist);
    let mut trace = vec![current];
    let mut iterations = 0;
    let mut converged = false;
    let mut reseeded_last = false;

    while iterations < max_iter {
        iterations += 1;
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = labels[i];
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut taken: Vec<usize> = Vec::new();
        reseeded_last = false;
        // a reseed onto a zero-distance point cannot lower the objective
        let mut useful_reseed = false;
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for (dst, s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                // farthest point from its own centroid, not yet used as a reseed
                let far = (0..n)
                    .filter(|i| !taken.contains(i))
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("k <= n leaves a candidate");
                taken.push(far);
                useful_reseed |= dist[far] > 0.0;
                centroids.row_mut(c).copy_from_slice(x.row(far));
                reseeded_last = true;
            }
        }
        let (new_labels, new_dist) = assign_all(&centroids, x);
        let next = objective(&new_dist);
        trace.push(next);
        let unchanged = new_labels == labels;
        let improvement = if current > 0.0 { (current - next) / current } else { 0.0 };
        labels = new_labels;
        dist = new_dist;
        current = next;
        if unchanged && !useful_reseed {
            converged = !reseeded_last;
            break;
        }
        if improvement < tol && !useful_reseed {
            break;
        }
    }
    Ok(KMeansModel {
        k,
        centroids,
        inertia: current,
        iterations_run: iterations,
        inertia_trace: trace,
        converged,
        reseeded_last,
    })
}

pub fn assign(model: &KMeansModel, features: &Matrix) -> Result<Vec<usize>> {
    features.check_cols(model.dim())?;
    Ok(assign_all(&model.centroids, features).0)
}

/// Sum of squared distances to the nearest centroid.
pub fn inertia_of(centroids: &Matrix, x: &Matrix) -> f64 {
    objective(&assign_all(centroids, x).1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[[f64; 2]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn two_points_two_clusters() {
        let x = m(&[[0.0, 0.0], [10.0, 10.0]]);
        let model = fit_kmeans_matrix(&x, 2, 1, 300, 1e-4).unwrap();
        assert_eq!(model.inertia, 0.0);
        let mut cs: Vec<Vec<f64>> = model.centroids.iter_rows().map(<[f64]>::to_vec).collect();
        cs.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert_eq!(cs, vec![vec![0.0, 0.0], vec![10.0, 10.0]]);
    }

    #[test]
    fn single_cluster_is_mean() {
        let x = m(&[[0.0, 1.0], [2.0, 3.0], [4.0, 8.0]]);
        let model = fit_kmeans_matrix(&x, 1, 7, 300, 1e-4).unwrap();
        assert_eq!(model.centroids.row(0), &[2.0, 4.0]);
    }

    #[test]
    fn k_out_of_range() {
        let x = m(&[[0.0, 0.0]]);
        assert!(fit_kmeans_matrix(&x, 0, 1, 10, 1e-4).is_err());
        assert!(fit_kmeans_matrix(&x, 2, 1, 10, 1e-4).is_err());
    }

    #[test]
    fn duplicates_with_k_above_distinct_count() {
        let x = m(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [2.0, 2.0]]);
        let model = fit_kmeans_matrix(&x, 3, 2, 50, 1e-4).unwrap();
        assert_eq!(model.centroids.rows(), 3);
        assert!(model.centroids.as_slice().iter().all(|v| v.is_finite()));
        assert_eq!(model.inertia, 0.0);
    }

    #[test]
    fn assign_ties_and_exact_hits() {
        let model = KMeansModel {
            k: 3,
            centroids: m(&[[0.0, 0.0], [2.0, 0.0], [5.0, 5.0]]),
            inertia: 0.0,
            iterations_run: 0,
            inertia_trace: vec![],
            converged: true,
            reseeded_last: false,
        };
        let q = m(&[[5.0, 5.0], [1.0, 0.0]]);
        assert_eq!(assign(&model, &q).unwrap(), vec![2, 0]);
        assert!(assign(&model, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn centroid_file_round_trip() {
        let x = m(&[[0.0, 0.5], [3.25, 1.0], [3.0, 1.5]]);
        let model = fit_kmeans_matrix(&x, 2, 3, 100, 1e-4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.txt");
        model.write_centroids(&p).unwrap();
        assert_eq!(KMeansModel::read_centroids(&p).unwrap(), model.centroids);
    }
}
