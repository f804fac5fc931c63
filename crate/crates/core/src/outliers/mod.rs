//! Outlier detection statistics and the contamination benchmark.

pub mod lof;
pub mod roc;
pub mod simulation;
pub mod zvalue;

pub use lof::{lof_scores, lof_statistic, LofStatistic, Point};
pub use roc::{auc, empirical_auc, ConfidenceInterval, RocResult};
pub use simulation::{
    evaluate, run_benchmark, run_replicates, simulate, BenchmarkRow, Hypothesis, Method,
    ScoredReplicate, SimulationConfig,
};
pub use zvalue::{z_value_scores, ZScores};
