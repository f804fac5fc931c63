//! Ancestral sampling from the joint law of hidden path and observations.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{EmissionModel, HmmModel, ObservationSequence, Observations};
use crate::rng;

fn categorical<R: Rng + ?Sized>(rng: &mut R, probs: impl IntoIterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            last_positive = k;
        }
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding left u above the cumulative total
    last_positive
}

/// Draws `(hidden path, observations)` of length `n`; deterministic in `seed`.
pub fn sample(model: &HmmModel, n: usize, seed: u64) -> Result<(Vec<usize>, ObservationSequence)> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample length must be at least 1".into()));
    }
    model.validate()?;
    let mut rng = rng::stream(seed, &[]);
    let mut path = Vec::with_capacity(n);
    let mut state = categorical(&mut rng, model.initial.iter().copied());
    for i in 0..n {
        if i > 0 {
            state = categorical(&mut rng, model.transition.row(state).iter().copied());
        }
        path.push(state);
    }
    let values = match &model.emission {
        EmissionModel::Discrete { table } => Observations::Symbols(
            path.iter()
                .map(|&s| categorical(&mut rng, table.row(s).iter().copied()))
                .collect(),
        ),
        EmissionModel::GaussianHomoscedastic { means, sigma } => Observations::Reals(
            path.iter()
                .map(|&s| Normal::new(means[s], *sigma).unwrap().sample(&mut rng))
                .collect(),
        ),
        EmissionModel::GaussianGeneral { means, sigmas } => Observations::Reals(
            path.iter()
                .map(|&s| Normal::new(means[s], sigmas[s]).unwrap().sample(&mut rng))
                .collect(),
        ),
    };
    Ok((path, ObservationSequence::new(values, None)?))
}
