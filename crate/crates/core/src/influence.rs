//! Kullback–Leibler influence of observations on the hidden-path posterior.
//!
//! For each position `j`, `K_j` is the KLD from `P(S_{1:n} | E_{-j})` to
//! `P(S_{1:n} | E)`. Given `S_j`, the two laws agree on the rest of the path,
//! so the divergence reduces to the one between the marginals of `S_j`:
//!
//! ```text
//! P(S_j = s | E)    ∝ F_j(s)  B_j(s)
//! P(S_j = s | E_-j) ∝ F*_j(s) B_j(s),   F*_j(s) = Σ_r F_{j-1}(r) α(r, s),  F*_1 = γ
//! ```
//!
//! `F`, `B` and `F*` are computed once for the whole sequence, giving all
//! `K_j` in `O(n m²)`. Windows of `h` consecutive observations are handled by
//! the chain rule over the sub-path `S_j..S_{j+h-1}` in `O(n h m²)`.

use ndarray::{Array1, Array2};
use std::io::Write;

use crate::error::{Error, Result};
use crate::forward_backward::{forward_backward, propagate, ForwardBackward};
use crate::model::{HmmModel, ObservationSequence};

/// Scaled `F*_i` rows. Row `i` sums to one and carries the cumulative scale
/// of `F_{i-1}` (`log_scale[0] = 0`, `fstar[0] = γ`).
#[derive(Debug, Clone)]
pub struct StarForward {
    pub fstar: Array2<f64>,
    pub log_scale: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct InfluenceProfile {
    /// `K_j` in nats.
    pub k: Vec<f64>,
    /// Row `j` is `P(S_j = · | E_-j)`.
    pub loo_marginals: Array2<f64>,
    /// Row `j` is `P(S_j = · | E)`.
    pub marginals: Array2<f64>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct WindowInfluenceProfile {
    pub h: usize,
    /// Entry `j` removes observations `j..j+h`.
    pub k: Vec<f64>,
    /// Labels of the first and last position of each window.
    pub start_labels: Vec<String>,
    pub end_labels: Vec<String>,
}

pub fn forward_star(model: &HmmModel, fb: &ForwardBackward) -> StarForward {
    let (n, m) = fb.fwd.dim();
    let mut fstar = Array2::zeros((n, m));
    let mut log_scale = Array1::zeros(n);
    fstar
        .row_mut(0)
        .iter_mut()
        .zip(&model.initial)
        .for_each(|(d, g)| *d = *g);
    let mut buf = vec![0.0; m];
    for i in 1..n {
        propagate(fb.fwd.row(i - 1), &model.transition, &mut buf);
        fstar
            .row_mut(i)
            .iter_mut()
            .zip(&buf)
            .for_each(|(d, v)| *d = *v);
        log_scale[i] = fb.log_scale_fwd[i - 1];
    }
    StarForward { fstar, log_scale }
}

/// `P(S_j = · | E_-j)` for a 0-based position `j`.
pub fn loo_marginal(star: &StarForward, fb: &ForwardBackward, j: usize) -> Result<Vec<f64>> {
    if j >= fb.len() {
        return Err(Error::InvalidArgument(format!(
            "position {j} out of range for {} observations",
            fb.len()
        )));
    }
    let mut p: Vec<f64> = star
        .fstar
        .row(j)
        .iter()
        .zip(fb.bwd.row(j).iter())
        .map(|(f, b)| f * b)
        .collect();
    let total: f64 = p.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::ImpossibleLooEvidence { index: j });
    }
    p.iter_mut().for_each(|v| *v /= total);
    Ok(p)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// KLD between the laws proportional to `exp(log_p)` and `exp(log_q)`.
///
/// Zero-mass terms of `p` contribute nothing; mass of `p` where `q` has
/// none gives `+∞`. Returns `None` when `p` has no mass at all.
pub(crate) fn kl_from_log_weights(log_p: &[f64], log_q: &[f64]) -> Option<f64> {
    let zp = log_sum_exp(log_p);
    if zp == f64::NEG_INFINITY {
        return None;
    }
    let zq = log_sum_exp(log_q);
    let mut acc = 0.0;
    for (&lp, &lq) in log_p.iter().zip(log_q) {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        if lq == f64::NEG_INFINITY {
            return Some(f64::INFINITY);
        }
        let p = (lp - zp).exp();
        acc += p * ((lp - lq) + (zq - zp));
    }
    Some(acc)
}

/// `K_j` straight from (possibly rescaled) `F*_j`, `F_j`, `B_j` vectors:
///
/// ```text
/// K_j = Σ_s F*B(s)/ΣF*B · log( F*(s)/F(s) · ΣFB / ΣF*B )
/// ```
pub fn theorem_kld(fstar: &[f64], f: &[f64], b: &[f64]) -> f64 {
    let z_star: f64 = fstar.iter().zip(b).map(|(x, y)| x * y).sum();
    let z: f64 = f.iter().zip(b).map(|(x, y)| x * y).sum();
    let mut acc = 0.0;
    for s in 0..fstar.len() {
        let w = fstar[s] * b[s] / z_star;
        if w == 0.0 {
            continue;
        }
        if f[s] == 0.0 {
            return f64::INFINITY;
        }
        acc += w * ((fstar[s] / f[s]) * (z / z_star)).ln();
    }
    acc
}

/// KLD between `S_j` laws `∝ F*_j ⊙ B'_j` (observations removed) and
/// `∝ F*_j ⊙ β_j ⊙ B_j` (all observations).
fn window_marginal_kl(
    fstar: &[f64],
    bwd_removed: &[f64],
    bwd: &[f64],
    log_beta: &[f64],
    buf_p: &mut [f64],
    buf_q: &mut [f64],
) -> Option<f64> {
    for s in 0..fstar.len() {
        let lf = fstar[s].ln();
        buf_p[s] = lf + bwd_removed[s].ln();
        buf_q[s] = lf + bwd[s].ln() + log_beta[s];
    }
    kl_from_log_weights(buf_p, buf_q)
}

pub fn kld_influence(model: &HmmModel, obs: &ObservationSequence) -> Result<InfluenceProfile> {
    let fb = forward_backward(model, obs)?;
    let star = forward_star(model, &fb);
    influence_from_parts(&fb, &star, labels_of(obs))
}

/// Assembles the profile from precomputed `F`, `B` and `F*`.
pub fn influence_from_parts(
    fb: &ForwardBackward,
    star: &StarForward,
    labels: Vec<String>,
) -> Result<InfluenceProfile> {
    let (n, m) = fb.fwd.dim();
    let marginals = fb.posterior_marginals();
    let mut loo_marginals = Array2::zeros((n, m));
    let mut k = Vec::with_capacity(n);
    let mut buf_p = vec![0.0; m];
    let mut buf_q = vec![0.0; m];
    for j in 0..n {
        let p = loo_marginal(star, fb, j)?;
        loo_marginals
            .row_mut(j)
            .iter_mut()
            .zip(&p)
            .for_each(|(d, v)| *d = *v);
        let fstar = star.fstar.row(j);
        let bwd = fb.bwd.row(j);
        let kj = window_marginal_kl(
            fstar.as_slice().unwrap(),
            bwd.as_slice().unwrap(),
            bwd.as_slice().unwrap(),
            fb.log_emission.row(j).as_slice().unwrap(),
            &mut buf_p,
            &mut buf_q,
        )
        .ok_or(Error::ImpossibleLooEvidence { index: j })?;
        k.push(kj);
    }
    Ok(InfluenceProfile {
        k,
        loo_marginals,
        marginals,
        labels,
    })
}

pub fn windowed_influence(
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
    let fb = forward_backward(model, obs)?;
    let star = forward_star(model, &fb);
    let m = model.num_states();
    let log_alpha = model.transition.mapv(f64::ln);

    let mut k = Vec::with_capacity(n - h + 1);
    let mut bwd_removed = Array2::<f64>::zeros((h, m));
    let mut buf_p = vec![0.0; m];
    let mut buf_q = vec![0.0; m];
    let mut pi = vec![0.0; m];
    let mut next = vec![0.0; m];
    let mut row_p = vec![0.0; m];

    for j in 0..=(n - h) {
        let end = j + h - 1;
        // backward through the window with its emissions summed out
        bwd_removed.row_mut(h - 1).assign(&fb.bwd.row(end));
        for t in (0..h - 1).rev() {
            let mut max = 0.0f64;
            for r in 0..m {
                let v: f64 = model
                    .transition
                    .row(r)
                    .iter()
                    .zip(bwd_removed.row(t + 1).iter())
                    .map(|(a, b)| a * b)
                    .sum();
                bwd_removed[[t, r]] = v;
                max = max.max(v);
            }
            if max <= 0.0 {
                return Err(Error::ImpossibleLooEvidence { index: j });
            }
            bwd_removed.row_mut(t).mapv_inplace(|v| v / max);
        }

        let mut total = window_marginal_kl(
            star.fstar.row(j).as_slice().unwrap(),
            bwd_removed.row(0).as_slice().unwrap(),
            fb.bwd.row(j).as_slice().unwrap(),
            fb.log_emission.row(j).as_slice().unwrap(),
            &mut buf_p,
            &mut buf_q,
        )
        .ok_or(Error::ImpossibleLooEvidence { index: j })?;

        if h > 1 {
            let z: f64 = (0..m)
                .map(|s| star.fstar[[j, s]] * bwd_removed[[0, s]])
                .sum();
            for s in 0..m {
                pi[s] = star.fstar[[j, s]] * bwd_removed[[0, s]] / z;
            }
        }
        for t in 0..h.saturating_sub(1) {
            let pos = j + t + 1;
            next.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..m {
                if pi[r] == 0.0 {
                    continue;
                }
                for s in 0..m {
                    let la = log_alpha[[r, s]];
                    buf_p[s] = la + bwd_removed[[t + 1, s]].ln();
                    buf_q[s] = la + fb.log_emission[[pos, s]] + fb.bwd[[pos, s]].ln();
                }
                let step = kl_from_log_weights(&buf_p, &buf_q)
                    .ok_or(Error::ImpossibleLooEvidence { index: j })?;
                if step.is_infinite() {
                    total = f64::INFINITY;
                } else {
                    total += pi[r] * step;
                }
                let zr = log_sum_exp(&buf_p);
                for s in 0..m {
                    row_p[s] = (buf_p[s] - zr).exp();
                    next[s] += pi[r] * row_p[s];
                }
            }
            pi.copy_from_slice(&next);
        }
        k.push(total);
    }

    let labels = labels_of(obs);
    Ok(WindowInfluenceProfile {
        h,
        k,
        start_labels: labels[..=n - h].to_vec(),
        end_labels: labels[h - 1..].to_vec(),
    })
}

pub(crate) fn labels_of(obs: &ObservationSequence) -> Vec<String> {
    (0..obs.len()).map(|i| obs.label(i)).collect()
}

impl InfluenceProfile {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Positions sorted by decreasing `K_j` (ties by position).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.k.len()).collect();
        idx.sort_by(|&a, &b| self.k[b].total_cmp(&self.k[a]).then(a.cmp(&b)));
        idx
    }

    /// `label, K, p_loo_1..m, p_post_1..m`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let m = self.marginals.ncols();
        write!(w, "label\tK")?;
        for s in 1..=m {
            write!(w, "\tp_loo_{s}")?;
        }
        for s in 1..=m {
            write!(w, "\tp_post_{s}")?;
        }
        writeln!(w)?;
        for j in 0..self.k.len() {
            write!(w, "{}\t{:?}", self.labels[j], self.k[j])?;
            for v in self.loo_marginals.row(j) {
                write!(w, "\t{v:?}")?;
            }
            for v in self.marginals.row(j) {
                write!(w, "\t{v:?}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

impl WindowInfluenceProfile {
    /// `label_start, label_end, K`.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "label_start\tlabel_end\tK")?;
        for j in 0..self.k.len() {
            writeln!(
                w,
                "{}\t{}\t{:?}",
                self.start_labels[j], self.end_labels[j], self.k[j]
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EmissionModel;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn gaussian3() -> HmmModel {
        HmmModel::new(
            vec![0.2, 0.5, 0.3],
            HmmModel::tied_transition(3, 0.085),
            EmissionModel::GaussianHomoscedastic {
                means: vec![-0.372, 0.069, -0.068],
                sigma: 0.114,
            },
        )
        .unwrap()
    }

    fn obs() -> ObservationSequence {
        ObservationSequence::reals(vec![-0.4, -0.35, 0.1, -0.3, 0.05, 0.07, -0.1, -0.05, 0.3])
            .unwrap()
    }

    #[test]
    fn single_state_star_is_scale_only() {
        let model = HmmModel::new(
            vec![1.0],
            array![[1.0]],
            EmissionModel::GaussianHomoscedastic {
                means: vec![0.0],
                sigma: 1.0,
            },
        )
        .unwrap();
        let o = ObservationSequence::reals(vec![0.3, -1.0, 2.0]).unwrap();
        let fb = forward_backward(&model, &o).unwrap();
        let star = forward_star(&model, &fb);
        assert!(star.fstar.iter().all(|&v| v == 1.0));
        let prof = kld_influence(&model, &o).unwrap();
        assert!(prof.k.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn star_times_emission_reconstructs_forward() {
        let model = gaussian3();
        let fb = forward_backward(&model, &obs()).unwrap();
        let star = forward_star(&model, &fb);
        for i in 0..fb.len() {
            for s in 0..3 {
                let lhs = star.fstar[[i, s]].ln() + star.log_scale[i] + fb.log_emission[[i, s]];
                let rhs = fb.fwd[[i, s]].ln() + fb.log_scale_fwd[i];
                assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn loo_marginal_of_single_observation_is_initial() {
        let model = gaussian3();
        let o = ObservationSequence::reals(vec![0.5]).unwrap();
        let fb = forward_backward(&model, &o).unwrap();
        let star = forward_star(&model, &fb);
        let p = loo_marginal(&star, &fb, 0).unwrap();
        assert_eq!(p, model.initial);
        assert!(loo_marginal(&star, &fb, 1).is_err());
    }

    #[test]
    fn theorem_formula_matches_profile() {
        let model = gaussian3();
        let o = obs();
        let fb = forward_backward(&model, &o).unwrap();
        let star = forward_star(&model, &fb);
        let prof = influence_from_parts(&fb, &star, labels_of(&o)).unwrap();
        for j in 0..o.len() {
            let f: Vec<f64> = fb.fwd.row(j).to_vec();
            let k = theorem_kld(
                star.fstar.row(j).as_slice().unwrap(),
                &f,
                fb.bwd.row(j).as_slice().unwrap(),
            );
            assert_abs_diff_eq!(k, prof.k[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_conventions() {
        assert_eq!(kl_from_log_weights(&[0.0, f64::NEG_INFINITY], &[0.0, 0.0]), Some(2f64.ln()));
        assert_eq!(
            kl_from_log_weights(&[0.0, 0.0], &[0.0, f64::NEG_INFINITY]),
            Some(f64::INFINITY)
        );
        assert_eq!(kl_from_log_weights(&[f64::NEG_INFINITY], &[0.0]), None);
        assert_eq!(theorem_kld(&[1.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]), f64::INFINITY);
    }

    #[test]
    fn window_bounds() {
        let model = gaussian3();
        assert!(windowed_influence(&model, &obs(), 0).is_err());
        assert!(windowed_influence(&model, &obs(), 10).is_err());
        let full = windowed_influence(&model, &obs(), 9).unwrap();
        assert_eq!(full.k.len(), 1);
    }

    #[test]
    fn tsv_layout() {
        let prof = kld_influence(&gaussian3(), &obs()).unwrap();
        let mut out = Vec::new();
        prof.write_tsv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "label\tK\tp_loo_1\tp_loo_2\tp_loo_3\tp_post_1\tp_post_2\tp_post_3"
        );
        assert_eq!(lines.count(), 9);
    }
}
