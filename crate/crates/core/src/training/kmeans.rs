//! One-dimensional k-means (k-means++ seeding, Lloyd iterations).

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng;

const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans1d {
    /// Cluster index of each value; clusters are numbered by ascending mean.
    pub assignments: Vec<usize>,
    pub means: Vec<f64>,
}

fn nearest(x: f64, centers: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, &m) in centers.iter().enumerate() {
        let d = (x - m).abs();
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn count_distinct(values: &[f64]) -> usize {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    sorted.len()
}

pub fn kmeans_1d(values: &[f64], k: usize, seed: u64) -> Result<KMeans1d> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-means needs k >= 1".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("k-means input must be finite".into()));
    }
    let distinct = count_distinct(values);
    if k > distinct {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {distinct} distinct values"
        )));
    }
    let mut rng = rng::stream(seed, &[0x6b6d]);

    // k-means++ seeding
    let mut centers = Vec::with_capacity(k);
    centers.push(values[rng.random_range(0..values.len())]);
    let mut d2: Vec<f64> = values.iter().map(|x| (x - centers[0]).powi(2)).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = Some(i);
                if u < w {
                    break;
                }
                u -= w;
            }
        }
        let c = values[pick.expect("fewer distinct values than clusters")];
        centers.push(c);
        for (d, x) in d2.iter_mut().zip(values) {
            *d = d.min((x - c).powi(2));
        }
    }

    let mut assignments: Vec<usize> = values.iter().map(|&x| nearest(x, &centers)).collect();
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&x, &a) in values.iter().zip(&assignments) {
            sums[a] += x;
            counts[a] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = sums[c] / counts[c] as f64;
            } else {
                // reseed an empty cluster at the worst-fitted point
                let far = values
                    .iter()
                    .zip(&assignments)
                    .enumerate()
                    .max_by(|(_, (x, &a)), (_, (y, &b))| {
                        (*x - centers[a]).abs().total_cmp(&(*y - centers[b]).abs())
                    })
                    .map(|(i, _)| i)
                    .unwrap();
                centers[c] = values[far];
                assignments[far] = c;
            }
        }
        let next: Vec<usize> = values.iter().map(|&x| nearest(x, &centers)).collect();
        if next == assignments {
            break;
        }
        assignments = next;
    }

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| centers[a].total_cmp(&centers[b]));
    let mut rank = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        rank[old] = new;
    }
    Ok(KMeans1d {
        assignments: assignments.iter().map(|&a| rank[a]).collect(),
        means: order.iter().map(|&c| centers[c]).collect(),
    })
}
