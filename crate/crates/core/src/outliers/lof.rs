//! Local Outlier Factor on 2-D points.
//!
//! For neighbor count `r`: the r-distance of `p` is the distance to its r-th
//! nearest other point; its neighborhood holds every point within that
//! distance (ties included);
//! `reach_r(p, o) = max(r-dist(o), d(p, o))`; `lrd(p)` is the inverse mean
//! reachability distance to the neighborhood and `LOF(p)` the mean of
//! `lrd(o) / lrd(p)` over the neighborhood.

use crate::error::{Error, Result};

const REACH_FLOOR: f64 = 1e-12;

pub type Point = [f64; 2];

fn dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub fn lof_scores(points: &[Point], r: usize) -> Result<Vec<f64>> {
    let n = points.len();
    if r == 0 || r >= n {
        return Err(Error::InvalidArgument(format!(
            "LOF needs 1 <= r < number of points ({n}), got r = {r}"
        )));
    }
    let d: Vec<Vec<f64>> = points
        .iter()
        .map(|p| points.iter().map(|q| dist(p, q)).collect())
        .collect();

    let mut kdist = Vec::with_capacity(n);
    let mut neighbors: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut sorted = Vec::with_capacity(n - 1);
    for p in 0..n {
        sorted.clear();
        sorted.extend((0..n).filter(|&q| q != p).map(|q| d[p][q]));
        sorted.sort_by(f64::total_cmp);
        let k = sorted[r - 1];
        kdist.push(k);
        neighbors.push((0..n).filter(|&q| q != p && d[p][q] <= k).collect());
    }

    let lrd: Vec<f64> = (0..n)
        .map(|p| {
            let mean = neighbors[p]
                .iter()
                .map(|&o| kdist[o].max(d[p][o]))
                .sum::<f64>()
                / neighbors[p].len() as f64;
            1.0 / mean.max(REACH_FLOOR)
        })
        .collect();

    Ok((0..n)
        .map(|p| {
            neighbors[p].iter().map(|&o| lrd[o] / lrd[p]).sum::<f64>() / neighbors[p].len() as f64
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LofStatistic {
    /// Per-point maximum of `LOF_r` over the `r` range.
    pub scores: Vec<f64>,
    pub r_min: usize,
    pub r_max: usize,
    /// The default range `10..=20` did not fit the series.
    pub clipped: bool,
}

impl LofStatistic {
    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub const DEFAULT_R_RANGE: (usize, usize) = (10, 20);

fn standardize(xs: &[f64]) -> Vec<f64> {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    if sd > 0.0 {
        xs.iter().map(|x| (x - mean) / sd).collect()
    } else {
        vec![0.0; xs.len()]
    }
}

/// Max-over-r LOF of each point `(t̃_j, x̃_j)`, with both the uniformly spaced
/// time axis and the values standardized.
pub fn lof_statistic(values: &[f64]) -> Result<LofStatistic> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "LOF statistic needs at least two points".into(),
        ));
    }
    let (lo, hi) = DEFAULT_R_RANGE;
    let r_max = hi.min(n - 1);
    let r_min = lo.min(r_max);
    let clipped = r_max != hi || r_min != lo;
    let t: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let points: Vec<Point> = standardize(&t)
        .into_iter()
        .zip(standardize(values))
        .map(|(a, b)| [a, b])
        .collect();
    let mut scores = vec![f64::NEG_INFINITY; n];
    for r in r_min..=r_max {
        for (best, s) in scores.iter_mut().zip(lof_scores(&points, r)?) {
            *best = best.max(s);
        }
    }
    Ok(LofStatistic {
        scores,
        r_min,
        r_max,
        clipped,
    })
}
