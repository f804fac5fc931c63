use crate::error::Result;
use crate::training::kmeans_1d;

const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ZScores {
    pub z: Vec<f64>,
    /// Some cluster had zero spread and its σ was floored.
    pub degenerate: bool,
}

impl ZScores {
    /// `max_j |Z_j|`.
    pub fn max_abs(&self) -> f64 {
        self.z.iter().fold(0.0, |acc, z| acc.max(z.abs()))
    }
}

/// Standardized residual of each value against its k-means cluster
/// (population standard deviation within the cluster).
pub fn z_value_scores(values: &[f64], k: usize, seed: u64) -> Result<ZScores> {
    let km = kmeans_1d(values, k, seed)?;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&x, &c) in values.iter().zip(&km.assignments) {
        sums[c] += x;
        counts[c] += 1;
    }
    let means: Vec<f64> = (0..k).map(|c| sums[c] / counts[c].max(1) as f64).collect();
    let mut sq = vec![0.0; k];
    for (&x, &c) in values.iter().zip(&km.assignments) {
        sq[c] += (x - means[c]).powi(2);
    }
    let mut degenerate = false;
    let sigmas: Vec<f64> = (0..k)
        .map(|c| {
            let sd = (sq[c] / counts[c].max(1) as f64).sqrt();
            if sd < SIGMA_FLOOR {
                degenerate = true;
                SIGMA_FLOOR
            } else {
                sd
            }
        })
        .collect();
    let z = values
        .iter()
        .zip(&km.assignments)
        .map(|(&x, &c)| (x - means[c]) / sigmas[c])
        .collect();
    Ok(ZScores { z, degenerate })
}
