//! Synthetic data and brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use fraudkit::dataset::Dataset;
use fraudkit::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dataset(rows: Vec<Vec<f64>>, labels: Vec<u8>) -> Dataset {
    let d = rows.first().map_or(0, Vec::len);
    let names = (0..d).map(|j| format!("x{j}")).collect();
    Dataset::new(Matrix::from_rows(&rows).unwrap(), labels, names).unwrap()
}

/// Two Gaussian classes on either side of the line `x + y = 1`, with any
/// point on the wrong side (or within `margin`) redrawn, so the set is
/// linearly separable by construction.
pub fn separable_2d(n: usize, fraud_share: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 0.12).unwrap();
    let margin = 0.05;
    let n_fraud = (n as f64 * fraud_share).round() as usize;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let fraud = i < n_fraud;
        let centre = if fraud { 0.7 } else { 0.3 };
        loop {
            let p = [centre + noise.sample(&mut r), centre + noise.sample(&mut r)];
            let side = p[0] + p[1] - 1.0;
            if (fraud && side > margin) || (!fraud && side < -margin) {
                rows.push(p.to_vec());
                labels.push(u8::from(fraud));
                break;
            }
        }
    }
    dataset(rows, labels)
}

/// Standard-normal genuine objects; frauds shifted by `shift` in every
/// coordinate.
pub fn imbalanced(n: usize, fraud_share: f64, dim: usize, shift: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let n_fraud = ((n as f64 * fraud_share).round() as usize).max(1);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let fraud = i < n_fraud;
        let offset = if fraud { shift } else { 0.0 };
        rows.push((0..dim).map(|_| normal.sample(&mut r) + offset).collect());
        labels.push(u8::from(fraud));
    }
    shuffle_rows(rows, labels, &mut r)
}

fn shuffle_rows(rows: Vec<Vec<f64>>, labels: Vec<u8>, r: &mut ChaCha8Rng) -> Dataset {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(r);
    let rows = order.iter().map(|&i| rows[i].clone()).collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    dataset(rows, labels)
}

/// Four well separated clusters in the first two coordinates. Within each
/// cluster, frauds sit at a cluster-specific offset in the remaining three
/// coordinates, and the offsets point in opposing directions across
/// clusters so no single global pattern describes fraud.
pub fn clustered_fraud(n: usize, fraud_share: f64, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let centres = [[-12.0, -12.0], [12.0, -12.0], [-12.0, 12.0], [12.0, 12.0]];
    let patterns = [[2.2, 0.0, 0.0], [-2.2, 0.0, 0.0], [0.0, 2.2, -2.2], [0.0, -2.2, 2.2]];
    let n_fraud = (n as f64 * fraud_share).round() as usize;
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 4;
        let fraud = i < n_fraud;
        let mut row = vec![
            centres[c][0] + 1.5 * normal.sample(&mut r),
            centres[c][1] + 1.5 * normal.sample(&mut r),
        ];
        for p in &patterns[c] {
            row.push(normal.sample(&mut r) + if fraud { *p } else { 0.0 });
        }
        rows.push(row);
        labels.push(u8::from(fraud));
    }
    shuffle_rows(rows, labels, &mut r)
}

pub fn random_votes(r: &mut ChaCha8Rng, n: usize, m: usize, p: f64) -> Vec<Vec<u8>> {
    (0..n).map(|_| (0..m).map(|_| u8::from(r.gen_bool(p))).collect()).collect()
}

/// Mode of a 0/1 row by counting.
pub fn mode_oracle(row: &[u8]) -> u8 {
    let ones = row.iter().filter(|&&v| v == 1).count();
    let zeros = row.len() - ones;
    u8::from(ones > zeros)
}

pub fn sens_spec(pred: &[u8], actual: &[u8]) -> (f64, f64) {
    let (mut tp, mut fneg, mut tn, mut fp) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &a) in pred.iter().zip(actual) {
        match (p, a) {
            (1, 1) => tp += 1.0,
            (0, 1) => fneg += 1.0,
            (0, 0) => tn += 1.0,
            _ => fp += 1.0,
        }
    }
    (tp / (tp + fneg), tn / (tn + fp))
}

/// Within-cluster sum of squares for a labelled partition.
pub fn partition_inertia(points: &[[f64; 2]], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&[f64; 2]> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let cx = members.iter().map(|p| p[0]).sum::<f64>() / m;
        let cy = members.iter().map(|p| p[1]).sum::<f64>() / m;
        total += members.iter().map(|p| (p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sum::<f64>();
    }
    total
}

/// Exact optimum of 2-means in the plane. Optimal 2-partitions are
/// separated by a line, and every line-separable partition of points in
/// general position arises from a line through two points with those two
/// points assigned either way.
pub fn best_two_partition(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (points[i], points[j]);
            let side: Vec<f64> = points
                .iter()
                .map(|p| (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]))
                .collect();
            for mask in 0..4u8 {
                let labels: Vec<usize> = (0..n)
                    .map(|t| {
                        if t == i {
                            usize::from(mask & 1 == 1)
                        } else if t == j {
                            usize::from(mask & 2 == 2)
                        } else {
                            usize::from(side[t] > 0.0)
                        }
                    })
                    .collect();
                if labels.iter().all(|&l| l == labels[0]) {
                    continue;
                }
                best = best.min(partition_inertia(points, &labels, 2));
            }
        }
    }
    best
}
