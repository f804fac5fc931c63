//! Scaled forward–backward recursions.
//!
//! Forward rows are normalized to sum to one and backward rows are divided by
//! their maximum; the discarded factors are accumulated in log space so that
//!
//! ```text
//! F_i(s) = fwd[i][s] * exp(log_scale_fwd[i])
//! B_i(s) = bwd[i][s] * exp(log_scale_bwd[i])
//! ```
//!
//! Emission densities enter each step as `exp(log β(s, x_i) - max_s log β)`,
//! with the per-index maximum folded into the accumulators.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::model::{HmmModel, ObservationSequence};

#[derive(Debug, Clone)]
pub struct ForwardBackward {
    pub fwd: Array2<f64>,
    pub log_scale_fwd: Array1<f64>,
    pub bwd: Array2<f64>,
    pub log_scale_bwd: Array1<f64>,
    pub log_evidence: f64,
    /// `log β(s, x_i)` as evaluated for this run.
    pub log_emission: Array2<f64>,
}

/// Per-index emission factors `exp(log β - max)` and the maxima.
pub(crate) fn scaled_emissions(log_emission: &Array2<f64>) -> Result<(Array2<f64>, Vec<f64>)> {
    let (n, m) = log_emission.dim();
    let mut scaled = Array2::zeros((n, m));
    let mut offsets = Vec::with_capacity(n);
    for i in 0..n {
        let row = log_emission.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::ImpossibleEvidence { index: i });
        }
        for s in 0..m {
            scaled[[i, s]] = (row[s] - max).exp();
        }
        offsets.push(max);
    }
    Ok((scaled, offsets))
}

/// `out(s) = Σ_r v(r) α(r, s)`.
pub(crate) fn propagate(v: ArrayView1<f64>, transition: &Array2<f64>, out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        for (o, &a) in out.iter_mut().zip(transition.row(r).iter()) {
            *o += vr * a;
        }
    }
}

pub fn forward_backward(model: &HmmModel, obs: &ObservationSequence) -> Result<ForwardBackward> {
    let log_emission = model.log_emissions(obs)?;
    forward_backward_from_log_emissions(model, log_emission)
}

/// Runs the recursions on a precomputed `n × m` log-emission matrix.
pub fn forward_backward_from_log_emissions(
    model: &HmmModel,
    log_emission: Array2<f64>,
) -> Result<ForwardBackward> {
    let (n, m) = log_emission.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("empty observation sequence".into()));
    }
    if m != model.num_states() {
        return Err(Error::InvalidArgument(format!(
            "log-emission matrix has {m} columns, model has {} states",
            model.num_states()
        )));
    }
    let (emit, offsets) = scaled_emissions(&log_emission)?;
    let alpha = &model.transition;

    let mut fwd = Array2::zeros((n, m));
    let mut log_scale_fwd = Array1::zeros(n);
    let mut pred = vec![0.0; m];
    for i in 0..n {
        if i == 0 {
            pred.copy_from_slice(&model.initial);
        } else {
            propagate(fwd.row(i - 1), alpha, &mut pred);
        }
        let mut total = 0.0;
        for s in 0..m {
            let v = pred[s] * emit[[i, s]];
            fwd[[i, s]] = v;
            total += v;
        }
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::ImpossibleEvidence { index: i });
        }
        fwd.row_mut(i).mapv_inplace(|v| v / total);
        let prev = if i == 0 { 0.0 } else { log_scale_fwd[i - 1] };
        log_scale_fwd[i] = prev + total.ln() + offsets[i];
    }

    let mut bwd = Array2::zeros((n, m));
    let mut log_scale_bwd = Array1::zeros(n);
    bwd.row_mut(n - 1).fill(1.0);
    let mut weighted = vec![0.0; m];
    for i in (1..n).rev() {
        for s in 0..m {
            weighted[s] = emit[[i, s]] * bwd[[i, s]];
        }
        let mut max = 0.0f64;
        for r in 0..m {
            let v: f64 = alpha
                .row(r)
                .iter()
                .zip(&weighted)
                .map(|(a, w)| a * w)
                .sum();
            bwd[[i - 1, r]] = v;
            max = max.max(v);
        }
        if max <= 0.0 || !max.is_finite() {
            return Err(Error::ImpossibleEvidence { index: i });
        }
        bwd.row_mut(i - 1).mapv_inplace(|v| v / max);
        log_scale_bwd[i - 1] = log_scale_bwd[i] + offsets[i] + max.ln();
    }

    let log_evidence = log_scale_fwd[n - 1];
    Ok(ForwardBackward {
        fwd,
        log_scale_fwd,
        bwd,
        log_scale_bwd,
        log_evidence,
        log_emission,
    })
}

impl ForwardBackward {
    pub fn len(&self) -> usize {
        self.fwd.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_states(&self) -> usize {
        self.fwd.ncols()
    }

    /// `log Σ_s F_i(s) B_i(s)`, which equals `log P(E)` at every index.
    pub fn log_evidence_at(&self, i: usize) -> f64 {
        let dot: f64 = self
            .fwd
            .row(i)
            .iter()
            .zip(self.bwd.row(i).iter())
            .map(|(f, b)| f * b)
            .sum();
        self.log_scale_fwd[i] + self.log_scale_bwd[i] + dot.ln()
    }

    /// Row `i` is `P(S_i = · | E)`.
    pub fn posterior_marginals(&self) -> Array2<f64> {
        let mut post = &self.fwd * &self.bwd;
        for mut row in post.rows_mut() {
            let total = row.sum();
            row.mapv_inplace(|v| v / total);
        }
        post
    }
}

pub fn posterior_marginals(fb: &ForwardBackward) -> Array2<f64> {
    fb.posterior_marginals()
}
