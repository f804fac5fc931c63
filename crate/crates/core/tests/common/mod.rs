#![allow(dead_code)]

use hmm_influence::{EmissionModel, HmmModel, ObservationSequence};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_distribution<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn stochastic<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        for (c, v) in random_distribution(rng, cols).into_iter().enumerate() {
            out[[r, c]] = v;
        }
    }
    out
}

pub fn random_discrete_model<R: Rng>(rng: &mut R, m: usize, k: usize) -> HmmModel {
    HmmModel::new(
        random_distribution(rng, m),
        stochastic(rng, m, m),
        EmissionModel::Discrete {
            table: stochastic(rng, m, k),
        },
    )
    .unwrap()
}

pub fn random_gaussian_model<R: Rng>(rng: &mut R, m: usize) -> HmmModel {
    let means = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
    let sigmas = (0..m).map(|_| rng.random_range(0.2..1.5)).collect();
    HmmModel::new(
        random_distribution(rng, m),
        stochastic(rng, m, m),
        EmissionModel::GaussianGeneral { means, sigmas },
    )
    .unwrap()
}

pub fn random_symbols<R: Rng>(rng: &mut R, n: usize, k: usize) -> ObservationSequence {
    ObservationSequence::symbols((0..n).map(|_| rng.random_range(0..k)).collect()).unwrap()
}

pub fn random_reals<R: Rng>(rng: &mut R, n: usize) -> ObservationSequence {
    ObservationSequence::reals((0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
