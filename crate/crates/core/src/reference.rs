//! Reference implementations used as oracles and as the quadratic baseline.
//!
//! * Exhaustive enumeration over all `mⁿ` hidden paths of the joint
//!   `γ(s_1) Π α(s_{i-1}, s_i) Π β(s_i, x_i)`. Only practical for tiny `n`.
//! * The naive engine: for every `j`, rerun forward–backward with the removed
//!   observations summed out, then take the KLD between the two posterior
//!   Markov chains over the whole path with the chain rule. `O(n² m²)`.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward_backward::{forward_backward_from_log_emissions, ForwardBackward};
use crate::influence::{
    kl_from_log_weights, labels_of, log_sum_exp, InfluenceProfile, WindowInfluenceProfile,
};
use crate::model::{HmmModel, ObservationSequence, Observations};

const MAX_ENUMERATION_PATHS: usize = 1 << 22;

/// All hidden paths with their log joint. Positions in `removed` contribute
/// no emission factor (their observation is summed out).
pub fn enumerate_log_joint(
    model: &HmmModel,
    obs: &ObservationSequence,
    removed: std::ops::Range<usize>,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let m = model.num_states();
    let n = obs.len();
    let total = m
        .checked_pow(n as u32)
        .filter(|&t| t <= MAX_ENUMERATION_PATHS)
        .ok_or_else(|| Error::InvalidArgument(format!("{m}^{n} paths is too many to enumerate")))?;
    let mut log_beta = vec![vec![0.0; m]; n];
    for (i, row) in log_beta.iter_mut().enumerate() {
        if removed.contains(&i) {
            continue;
        }
        for (s, v) in row.iter_mut().enumerate() {
            *v = model.log_emission_density(s, obs.get(i))?;
        }
    }
    let mut out = Vec::with_capacity(total);
    let mut path = vec![0usize; n];
    for code in 0..total {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % m;
            c /= m;
        }
        let mut lp = model.initial[path[0]].ln() + log_beta[0][path[0]];
        for i in 1..n {
            lp += model.transition[[path[i - 1], path[i]]].ln() + log_beta[i][path[i]];
        }
        out.push((path.clone(), lp));
    }
    Ok(out)
}

pub fn enumeration_log_evidence(model: &HmmModel, obs: &ObservationSequence) -> Result<f64> {
    let joint = enumerate_log_joint(model, obs, 0..0)?;
    let lps: Vec<f64> = joint.iter().map(|(_, lp)| *lp).collect();
    Ok(log_sum_exp(&lps))
}

fn marginals_from_joint(joint: &[(Vec<usize>, f64)], n: usize, m: usize) -> Array2<f64> {
    let lps: Vec<f64> = joint.iter().map(|(_, lp)| *lp).collect();
    let z = log_sum_exp(&lps);
    let mut out = Array2::zeros((n, m));
    for (path, lp) in joint {
        let w = (lp - z).exp();
        for (i, &s) in path.iter().enumerate() {
            out[[i, s]] += w;
        }
    }
    out
}

/// `P(S_i = · | E)` by enumeration.
pub fn enumeration_marginals(model: &HmmModel, obs: &ObservationSequence) -> Result<Array2<f64>> {
    let joint = enumerate_log_joint(model, obs, 0..0)?;
    Ok(marginals_from_joint(&joint, obs.len(), model.num_states()))
}

/// `P(S_i = · | E_-J)` for `J = removed`, by enumeration.
pub fn enumeration_marginals_without(
    model: &HmmModel,
    obs: &ObservationSequence,
    removed: std::ops::Range<usize>,
) -> Result<Array2<f64>> {
    let joint = enumerate_log_joint(model, obs, removed)?;
    Ok(marginals_from_joint(&joint, obs.len(), model.num_states()))
}

/// KLD over whole hidden paths from `P(S_{1:n} | E_-J)` to `P(S_{1:n} | E)`.
pub fn enumeration_path_kld(
    model: &HmmModel,
    obs: &ObservationSequence,
    removed: std::ops::Range<usize>,
) -> Result<f64> {
    let full = enumerate_log_joint(model, obs, 0..0)?;
    let loo = enumerate_log_joint(model, obs, removed)?;
    let lp: Vec<f64> = loo.iter().map(|(_, v)| *v).collect();
    let lq: Vec<f64> = full.iter().map(|(_, v)| *v).collect();
    kl_from_log_weights(&lp, &lq).ok_or(Error::ImpossibleLooEvidence { index: 0 })
}

/// `Σ_y P(S_j = s, E with X_j = y)` over every symbol `y`, renormalized over
/// `s`. Discrete models only.
pub fn symbol_sum_loo_marginal(
    model: &HmmModel,
    obs: &ObservationSequence,
    j: usize,
) -> Result<Vec<f64>> {
    let k = model
        .emission
        .num_symbols()
        .ok_or_else(|| Error::InvalidArgument("symbol summation needs a discrete model".into()))?;
    let Observations::Symbols(symbols) = &obs.values else {
        return Err(Error::InvalidArgument("symbol summation needs symbol observations".into()));
    };
    let m = model.num_states();
    let mut acc = vec![0.0; m];
    for y in 0..k {
        let mut sub = symbols.clone();
        sub[j] = y;
        let sub = ObservationSequence::symbols(sub)?;
        for (path, lp) in enumerate_log_joint(model, &sub, 0..0)? {
            acc[path[j]] += lp.exp();
        }
    }
    let total: f64 = acc.iter().sum();
    if total <= 0.0 {
        return Err(Error::ImpossibleLooEvidence { index: j });
    }
    Ok(acc.into_iter().map(|v| v / total).collect())
}

/// Chain-rule KLD between the posterior Markov chains of two
/// forward–backward runs on the same model.
///
/// Given `S_{t-1} = r`, both chains move to `s` with weight
/// `α(r, s) e_t(s) B_t(s)`. The `α` factor cancels in the log-ratio, so the
/// per-step divergence is `Σ_s P(s) d(s) - log Zp + log Zq` with `d` shared
/// by every `r`.
fn posterior_chain_kl(model: &HmmModel, p: &ForwardBackward, q: &ForwardBackward) -> Option<f64> {
    let (n, m) = p.fwd.dim();
    let alpha = &model.transition;
    let log_alpha = alpha.mapv(f64::ln);
    let mut lp = vec![0.0; m];
    let mut lq = vec![0.0; m];
    for s in 0..m {
        lp[s] = p.fwd[[0, s]].ln() + p.bwd[[0, s]].ln();
        lq[s] = q.fwd[[0, s]].ln() + q.bwd[[0, s]].ln();
    }
    let mut total = kl_from_log_weights(&lp, &lq)?;
    let z = log_sum_exp(&lp);
    let mut pi: Vec<f64> = lp.iter().map(|v| (v - z).exp()).collect();
    let mut next = vec![0.0; m];
    let mut tail_p = vec![0.0; m];
    let mut tail_q = vec![0.0; m];
    let mut ep = vec![0.0; m];
    let mut eq = vec![0.0; m];
    let mut wp = vec![0.0; m];
    for t in 1..n {
        next.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..m {
            tail_p[s] = p.log_emission[[t, s]] + p.bwd[[t, s]].ln();
            tail_q[s] = q.log_emission[[t, s]] + q.bwd[[t, s]].ln();
        }
        let cp = tail_p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let cq = tail_q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if cp == f64::NEG_INFINITY {
            return None;
        }
        for s in 0..m {
            ep[s] = (tail_p[s] - cp).exp();
            eq[s] = (tail_q[s] - cq).exp();
        }
        for r in 0..m {
            if pi[r] == 0.0 {
                continue;
            }
            let mut zp = 0.0;
            let mut zq = 0.0;
            let mut underflow = false;
            for s in 0..m {
                wp[s] = alpha[[r, s]] * ep[s];
                zp += wp[s];
                let wq = alpha[[r, s]] * eq[s];
                zq += wq;
                underflow |= wp[s] > 0.0 && wq == 0.0 && tail_q[s] > f64::NEG_INFINITY;
            }
            if zp == 0.0 {
                return None;
            }
            let step = if underflow {
                for s in 0..m {
                    lp[s] = log_alpha[[r, s]] + tail_p[s];
                    lq[s] = log_alpha[[r, s]] + tail_q[s];
                }
                kl_from_log_weights(&lp, &lq)?
            } else if zq == 0.0 || wp.iter().zip(&tail_q).any(|(w, lq)| *w > 0.0 && *lq == f64::NEG_INFINITY) {
                f64::INFINITY
            } else {
                let mut acc = 0.0;
                for s in 0..m {
                    if wp[s] > 0.0 {
                        acc += wp[s] * (tail_p[s] - tail_q[s]);
                    }
                }
                acc / zp - zp.ln() - cp + zq.ln() + cq
            };
            total += pi[r] * step;
            for s in 0..m {
                next[s] += pi[r] * wp[s] / zp;
            }
        }
        std::mem::swap(&mut pi, &mut next);
    }
    Some(total)
}

fn removed_run(
    model: &HmmModel,
    log_emission: &Array2<f64>,
    removed: std::ops::Range<usize>,
) -> Result<ForwardBackward> {
    let mut masked = log_emission.clone();
    for i in removed {
        masked.row_mut(i).fill(0.0);
    }
    forward_backward_from_log_emissions(model, masked)
}

/// Quadratic-time influence profile; same contract as
/// [`crate::influence::kld_influence`].
pub fn kld_influence_naive(model: &HmmModel, obs: &ObservationSequence) -> Result<InfluenceProfile> {
    let log_emission = model.log_emissions(obs)?;
    let full = forward_backward_from_log_emissions(model, log_emission.clone())?;
    let n = obs.len();
    let m = model.num_states();
    let per_j: Vec<Result<(f64, Vec<f64>)>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let loo = removed_run(model, &log_emission, j..j + 1)?;
            let k = posterior_chain_kl(model, &loo, &full)
                .ok_or(Error::ImpossibleLooEvidence { index: j })?;
            let row = loo.posterior_marginals().row(j).to_vec();
            Ok((k, row))
        })
        .collect();
    let mut k = Vec::with_capacity(n);
    let mut loo_marginals = Array2::zeros((n, m));
    for (j, item) in per_j.into_iter().enumerate() {
        let (kj, row) = item?;
        k.push(kj);
        loo_marginals
            .row_mut(j)
            .iter_mut()
            .zip(&row)
            .for_each(|(d, v)| *d = *v);
    }
    Ok(InfluenceProfile {
        k,
        loo_marginals,
        marginals: full.posterior_marginals(),
        labels: labels_of(obs),
    })
}

/// Quadratic-time windowed profile.
pub fn windowed_influence_naive(
    model: &HmmModel,
    obs: &ObservationSequence,
    h: usize,
) -> Result<WindowInfluenceProfile> {
    let n = obs.len();
    if h == 0 || h > n {
        return Err(Error::InvalidArgument(format!(
            "window length {h} must lie in 1..={n}"
        )));
    }
    let log_emission = model.log_emissions(obs)?;
    let full = forward_backward_from_log_emissions(model, log_emission.clone())?;
    let k: Result<Vec<f64>> = (0..=n - h)
        .into_par_iter()
        .map(|j| {
            let loo = removed_run(model, &log_emission, j..j + h)?;
            posterior_chain_kl(model, &loo, &full).ok_or(Error::ImpossibleLooEvidence { index: j })
        })
        .collect();
    let labels = labels_of(obs);
    Ok(WindowInfluenceProfile {
        h,
        k: k?,
        start_labels: labels[..=n - h].to_vec(),
        end_labels: labels[h - 1..].to_vec(),
    })
}

/// Law of `S_i` under `(γ, α)` alone.
pub fn chain_marginals(model: &HmmModel, n: usize) -> Array2<f64> {
    let m = model.num_states();
    let mut out = Array2::zeros((n, m));
    let mut cur = model.initial.clone();
    for i in 0..n {
        for s in 0..m {
            out[[i, s]] = cur[s];
        }
        cur = (0..m)
            .map(|s| (0..m).map(|r| cur[r] * model.transition[[r, s]]).sum())
            .collect();
    }
    out
}
