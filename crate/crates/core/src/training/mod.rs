//! Parameter estimation: Baum–Welch EM and the 1-D k-means used to seed it.

pub mod em;
pub mod kmeans;

pub use em::{em_fit, transition_rate, EmConfig, EmResult, InitStrategy, RestartSummary};
pub use kmeans::{kmeans_1d, KMeans1d};
