//! Kullback–Leibler influence of individual observations on the posterior
//! hidden path of a hidden Markov model, computed for every position in
//! linear time, plus the EM fitting and outlier-detection benchmark built
//! around it.

pub mod cli;
pub mod error;
pub mod forward_backward;
pub mod influence;
pub mod io;
pub mod model;
pub mod outliers;
pub mod reference;
pub mod rng;
pub mod sample;
pub mod training;

pub use error::{Error, Result};
pub use forward_backward::{forward_backward, posterior_marginals, ForwardBackward};
pub use influence::{
    forward_star, kld_influence, loo_marginal, theorem_kld, windowed_influence, InfluenceProfile,
    StarForward, WindowInfluenceProfile,
};
pub use model::{EmissionModel, HmmModel, Observation, ObservationSequence, Observations};
pub use sample::sample;
