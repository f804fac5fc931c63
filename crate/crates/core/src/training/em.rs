//! Baum–Welch EM with optional tied transitions and a shared variance.
//!
//! The E-step reuses [`forward_backward`]; the M-step is closed form:
//!
//! * means: posterior-weighted averages;
//! * shared variance: `(1/n) Σ_i Σ_s w_i(s) (x_i - μ_s)²`;
//! * tied rate: `η = (expected off-diagonal transitions) / (n - 1)`, giving
//!   `1 - η` on the diagonal and `η / (m - 1)` elsewhere;
//! * initial law: posterior of the first state.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward_backward::{forward_backward, ForwardBackward};
use crate::model::{EmissionModel, HmmModel, ObservationSequence, Observations};
use crate::rng;
use crate::training::kmeans::kmeans_1d;

/// Lower bound on fitted variances.
pub const VARIANCE_FLOOR: f64 = 1e-8;
const DEGENERATE_WEIGHT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitStrategy {
    KMeans,
    RandomQuantiles,
}

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub num_states: usize,
    pub max_iters: usize,
    /// Relative log-likelihood change that stops the iterations.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
    pub tie_transitions: bool,
    pub homoscedastic: bool,
    pub init: InitStrategy,
    /// Keep `γ` uniform instead of re-estimating it.
    pub uniform_initial: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            num_states: 3,
            max_iters: 500,
            tolerance: 1e-8,
            restarts: 20,
            seed: 0,
            tie_transitions: true,
            homoscedastic: true,
            init: InitStrategy::KMeans,
            uniform_initial: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartSummary {
    pub restart: usize,
    pub iterations: usize,
    pub final_log_likelihood: Option<f64>,
    pub converged: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub model: HmmModel,
    /// Log-likelihood before every M-step, ending with the returned model's.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    pub best_restart: usize,
    pub restarts: Vec<RestartSummary>,
}

impl EmResult {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood.last().unwrap()
    }

    pub fn iterations(&self) -> usize {
        self.log_likelihood.len() - 1
    }
}

struct Run {
    model: HmmModel,
    trace: Vec<f64>,
    converged: bool,
}

fn validate(obs: &ObservationSequence, cfg: &EmConfig) -> Result<()> {
    if cfg.num_states == 0 {
        return Err(Error::InvalidArgument("EM needs at least one state".into()));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(Error::InvalidArgument("EM tolerance must be positive".into()));
    }
    if cfg.restarts == 0 {
        return Err(Error::InvalidArgument("EM needs at least one restart".into()));
    }
    if obs.len() <= cfg.num_states {
        return Err(Error::InvalidArgument(format!(
            "EM needs more observations ({}) than states ({})",
            obs.len(),
            cfg.num_states
        )));
    }
    Ok(())
}

pub fn em_fit(obs: &ObservationSequence, cfg: &EmConfig) -> Result<EmResult> {
    validate(obs, cfg)?;
    let runs: Vec<Result<Run>> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let init = initial_model(obs, cfg, r)?;
            run_em(init, obs, cfg)
        })
        .collect();

    let mut summaries = Vec::with_capacity(cfg.restarts);
    let mut best: Option<(usize, Run)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        match run {
            Ok(run) => {
                summaries.push(RestartSummary {
                    restart: r,
                    iterations: run.trace.len() - 1,
                    final_log_likelihood: run.trace.last().copied(),
                    converged: run.converged,
                    degenerate: false,
                });
                let ll = *run.trace.last().unwrap();
                let better = match &best {
                    None => true,
                    Some((_, b)) => ll > *b.trace.last().unwrap(),
                };
                if better {
                    best = Some((r, run));
                }
            }
            Err(e) if e.is_numeric() => summaries.push(RestartSummary {
                restart: r,
                iterations: 0,
                final_log_likelihood: None,
                converged: false,
                degenerate: true,
            }),
            Err(e) => return Err(e),
        }
    }
    let (best_restart, run) = best.ok_or(Error::EmDegenerate {
        restarts: cfg.restarts,
    })?;
    Ok(EmResult {
        model: run.model,
        log_likelihood: run.trace,
        converged: run.converged,
        best_restart,
        restarts: summaries,
    })
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn initial_transition(m: usize) -> Array2<f64> {
    HmmModel::tied_transition(m, 0.1)
}

fn initial_model(obs: &ObservationSequence, cfg: &EmConfig, restart: usize) -> Result<HmmModel> {
    let m = cfg.num_states;
    let mut rng = rng::stream(cfg.seed, &[restart as u64]);
    let initial = vec![1.0 / m as f64; m];
    let emission = match &obs.values {
        Observations::Reals(xs) => {
            let sd = population_std(xs).max(VARIANCE_FLOOR.sqrt());
            let mut means = match cfg.init {
                InitStrategy::KMeans => kmeans_1d(xs, m, rng.random())?.means,
                InitStrategy::RandomQuantiles => {
                    let mut sorted = xs.clone();
                    sorted.sort_by(f64::total_cmp);
                    (0..m)
                        .map(|s| quantile(&sorted, (s as f64 + 0.5) / m as f64))
                        .collect()
                }
            };
            let jitter = match (cfg.init, restart) {
                (InitStrategy::KMeans, 0) => 0.0,
                (InitStrategy::KMeans, _) => 0.25 * sd,
                (InitStrategy::RandomQuantiles, _) => 0.1 * sd,
            };
            if jitter > 0.0 {
                let noise = Normal::new(0.0, jitter).unwrap();
                means.iter_mut().for_each(|mu| *mu += noise.sample(&mut rng));
            }
            if cfg.homoscedastic {
                EmissionModel::GaussianHomoscedastic { means, sigma: sd }
            } else {
                EmissionModel::GaussianGeneral {
                    means,
                    sigmas: vec![sd; m],
                }
            }
        }
        Observations::Symbols(symbols) => {
            let k = symbols.iter().max().unwrap() + 1;
            let mut table = Array2::zeros((m, k));
            for mut row in table.rows_mut() {
                row.iter_mut().for_each(|v| *v = 1.0 + rng.random::<f64>());
                let total = row.sum();
                row.mapv_inplace(|v| v / total);
            }
            EmissionModel::Discrete { table }
        }
    };
    HmmModel::new(initial, initial_transition(m), emission)
}

fn converged(prev: f64, ll: f64, tol: f64) -> bool {
    (ll - prev).abs() <= tol * prev.abs() || (ll - prev).abs() < 1e-12
}

fn run_em(mut model: HmmModel, obs: &ObservationSequence, cfg: &EmConfig) -> Result<Run> {
    let mut trace = Vec::new();
    let mut done = false;
    for it in 0..=cfg.max_iters {
        let fb = forward_backward(&model, obs)?;
        let ll = fb.log_evidence;
        if let Some(&prev) = trace.last() {
            done = converged(prev, ll, cfg.tolerance);
        }
        trace.push(ll);
        if done || it == cfg.max_iters {
            break;
        }
        model = m_step(&model, &fb, obs, cfg)?;
    }
    Ok(Run {
        model,
        trace,
        converged: done,
    })
}

/// Sum over `i` of the normalized two-slice posteriors `P(S_{i-1}=r, S_i=s | E)`.
fn expected_transitions(model: &HmmModel, fb: &ForwardBackward) -> Array2<f64> {
    let (n, m) = fb.fwd.dim();
    let mut counts = Array2::zeros((m, m));
    let mut xi = Array2::<f64>::zeros((m, m));
    let mut weighted = vec![0.0; m];
    for i in 1..n {
        let max = fb
            .log_emission
            .row(i)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        for s in 0..m {
            weighted[s] = (fb.log_emission[[i, s]] - max).exp() * fb.bwd[[i, s]];
        }
        let mut total = 0.0;
        for r in 0..m {
            for s in 0..m {
                let v = fb.fwd[[i - 1, r]] * model.transition[[r, s]] * weighted[s];
                xi[[r, s]] = v;
                total += v;
            }
        }
        counts.scaled_add(1.0 / total, &xi);
    }
    counts
}

fn m_step(
    model: &HmmModel,
    fb: &ForwardBackward,
    obs: &ObservationSequence,
    cfg: &EmConfig,
) -> Result<HmmModel> {
    let post = fb.posterior_marginals();
    let (n, m) = post.dim();
    let weights: Vec<f64> = (0..m).map(|s| post.column(s).sum()).collect();
    if weights.iter().any(|&w| w < DEGENERATE_WEIGHT) {
        return Err(Error::EmDegenerate { restarts: 1 });
    }

    let initial = if cfg.uniform_initial {
        model.initial.clone()
    } else {
        post.row(0).to_vec()
    };

    let counts = expected_transitions(model, fb);
    let transition = if cfg.tie_transitions {
        let total = counts.sum();
        let diag: f64 = (0..m).map(|s| counts[[s, s]]).sum();
        let eta = if total > 0.0 { (total - diag) / total } else { 0.0 };
        HmmModel::tied_transition(m, eta)
    } else {
        let mut t = model.transition.clone();
        for r in 0..m {
            let row_total = counts.row(r).sum();
            if row_total > 0.0 {
                for s in 0..m {
                    t[[r, s]] = counts[[r, s]] / row_total;
                }
            }
        }
        t
    };

    let emission = match (&model.emission, &obs.values) {
        (EmissionModel::Discrete { table }, Observations::Symbols(symbols)) => {
            let mut next = Array2::zeros(table.dim());
            for (i, &y) in symbols.iter().enumerate() {
                for s in 0..m {
                    next[[s, y]] += post[[i, s]];
                }
            }
            for s in 0..m {
                next.row_mut(s).mapv_inplace(|v| v / weights[s]);
            }
            EmissionModel::Discrete { table: next }
        }
        (_, Observations::Reals(xs)) => {
            let means: Vec<f64> = (0..m)
                .map(|s| (0..n).map(|i| post[[i, s]] * xs[i]).sum::<f64>() / weights[s])
                .collect();
            let sq = |s: usize| -> f64 {
                (0..n)
                    .map(|i| post[[i, s]] * (xs[i] - means[s]).powi(2))
                    .sum::<f64>()
            };
            if cfg.homoscedastic {
                let var = ((0..m).map(sq).sum::<f64>() / n as f64).max(VARIANCE_FLOOR);
                EmissionModel::GaussianHomoscedastic {
                    means,
                    sigma: var.sqrt(),
                }
            } else {
                let sigmas = (0..m)
                    .map(|s| (sq(s) / weights[s]).max(VARIANCE_FLOOR).sqrt())
                    .collect();
                EmissionModel::GaussianGeneral { means, sigmas }
            }
        }
        _ => {
            return Err(Error::InvalidArgument(
                "observation type does not match the emission model".into(),
            ))
        }
    };

    let mut initial = initial;
    let total: f64 = initial.iter().sum();
    initial.iter_mut().for_each(|v| *v /= total);
    HmmModel::new(initial, transition, emission)
}

/// Off-diagonal mass of the first transition row (`η` for tied models).
pub fn transition_rate(model: &HmmModel) -> f64 {
    if model.num_states() == 1 {
        0.0
    } else {
        1.0 - model.transition[[0, 0]]
    }
}
