//! Empirical ROC AUC (Mann–Whitney, ties count one half) with a percentile
//! bootstrap interval.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocResult {
    pub auc: f64,
    pub ci: ConfidenceInterval,
    /// `(score, is_h1)` sorted by ascending score.
    pub pairs: Vec<(f64, bool)>,
}

fn check(scores: &[f64], what: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} scores are empty")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument(format!("{what} scores contain NaN")));
    }
    Ok(())
}

/// `P(score_H1 > score_H0) + ½ P(tie)` via mid-ranks.
pub fn auc(scores_h1: &[f64], scores_h0: &[f64]) -> Result<f64> {
    check(scores_h1, "H1")?;
    check(scores_h0, "H0")?;
    Ok(auc_unchecked(scores_h1, scores_h0))
}

fn auc_unchecked(h1: &[f64], h0: &[f64]) -> f64 {
    let mut all: Vec<(f64, bool)> = h1
        .iter()
        .map(|&s| (s, true))
        .chain(h0.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1..=j+1 share their mean
        let mid = (i + j + 2) as f64 / 2.0;
        rank_sum += mid * all[i..=j].iter().filter(|p| p.1).count() as f64;
        i = j + 1;
    }
    let n1 = h1.len() as f64;
    let n0 = h0.len() as f64;
    (rank_sum - n1 * (n1 + 1.0) / 2.0) / (n1 * n0)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub const DEFAULT_BOOTSTRAP: usize = 2000;

/// AUC plus a `level` percentile-bootstrap interval resampling each group
/// with replacement.
pub fn empirical_auc(
    scores_h1: &[f64],
    scores_h0: &[f64],
    resamples: usize,
    level: f64,
    seed: u64,
) -> Result<RocResult> {
    let point = auc(scores_h1, scores_h0)?;
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidArgument(format!("CI level {level} not in (0, 1)")));
    }
    let (mut lower, mut upper) = (point, point);
    if resamples > 0 {
        let mut rng = rng::stream(seed, &[0xb007]);
        let mut b1 = vec![0.0; scores_h1.len()];
        let mut b0 = vec![0.0; scores_h0.len()];
        let mut stats = Vec::with_capacity(resamples);
        for _ in 0..resamples {
            b1.iter_mut()
                .for_each(|v| *v = scores_h1[rng.random_range(0..scores_h1.len())]);
            b0.iter_mut()
                .for_each(|v| *v = scores_h0[rng.random_range(0..scores_h0.len())]);
            stats.push(auc_unchecked(&b1, &b0));
        }
        stats.sort_by(f64::total_cmp);
        let tail = (1.0 - level) / 2.0;
        lower = percentile(&stats, tail).min(point);
        upper = percentile(&stats, 1.0 - tail).max(point);
    }
    let mut pairs: Vec<(f64, bool)> = scores_h1
        .iter()
        .map(|&s| (s, true))
        .chain(scores_h0.iter().map(|&s| (s, false)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(RocResult {
        auc: point,
        ci: ConfidenceInterval {
            level,
            lower,
            upper,
        },
        pairs,
    })
}
