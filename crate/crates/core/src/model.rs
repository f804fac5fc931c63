//! Homogeneous HMM parameters and observation sequences.
//!
//! A model holds the initial law `γ`, the row-stochastic transition matrix
//! `α(r, s) = P(S_i = s | S_{i-1} = r)` and an emission model `β(s, x)`.
//! Emission densities are evaluated in log space; inference code works on the
//! `n × m` matrix returned by [`HmmModel::log_emissions`].

use ndarray::Array2;
use std::f64::consts::PI;

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum EmissionModel {
    /// Row `s` is the law of the symbol emitted from state `s`.
    Discrete { table: Array2<f64> },
    /// State-dependent means with one shared standard deviation.
    GaussianHomoscedastic { means: Vec<f64>, sigma: f64 },
    GaussianGeneral { means: Vec<f64>, sigmas: Vec<f64> },
}

impl EmissionModel {
    pub fn num_states(&self) -> usize {
        match self {
            EmissionModel::Discrete { table } => table.nrows(),
            EmissionModel::GaussianHomoscedastic { means, .. } => means.len(),
            EmissionModel::GaussianGeneral { means, .. } => means.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, EmissionModel::Discrete { .. })
    }

    /// Number of symbols for discrete emissions.
    pub fn num_symbols(&self) -> Option<usize> {
        match self {
            EmissionModel::Discrete { table } => Some(table.ncols()),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            EmissionModel::Discrete { table } => {
                if table.ncols() == 0 {
                    return Err(Error::InvalidModel(
                        "discrete emission table has no symbols".into(),
                    ));
                }
                for (s, row) in table.rows().into_iter().enumerate() {
                    check_distribution(row.iter().copied(), &format!("emission row {s}"))?;
                }
            }
            EmissionModel::GaussianHomoscedastic { means, sigma } => {
                check_finite(means, "means")?;
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "sigma must be positive and finite, got {sigma}"
                    )));
                }
            }
            EmissionModel::GaussianGeneral { means, sigmas } => {
                check_finite(means, "means")?;
                if sigmas.len() != means.len() {
                    return Err(Error::InvalidModel(format!(
                        "{} means but {} sigmas",
                        means.len(),
                        sigmas.len()
                    )));
                }
                if let Some(bad) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
                    return Err(Error::InvalidModel(format!(
                        "sigmas must be positive and finite, got {bad}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A single observed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observation {
    Symbol(usize),
    Real(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observations {
    Symbols(Vec<usize>),
    Reals(Vec<f64>),
}

/// Observed sequence `x_1..x_n`, with optional labels (years, positions, ...)
/// carried through to reports untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSequence {
    pub values: Observations,
    pub labels: Option<Vec<String>>,
}

impl ObservationSequence {
    pub fn symbols(values: Vec<usize>) -> Result<Self> {
        Self::new(Observations::Symbols(values), None)
    }

    pub fn reals(values: Vec<f64>) -> Result<Self> {
        Self::new(Observations::Reals(values), None)
    }

    pub fn new(values: Observations, labels: Option<Vec<String>>) -> Result<Self> {
        let seq = ObservationSequence { values, labels };
        if seq.is_empty() {
            return Err(Error::InvalidArgument(
                "observation sequence must be non-empty".into(),
            ));
        }
        if let Observations::Reals(v) = &seq.values {
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidObservation {
                    index,
                    reason: "non-finite value".into(),
                });
            }
        }
        if let Some(labels) = &seq.labels {
            if labels.len() != seq.len() {
                return Err(Error::InvalidArgument(format!(
                    "{} labels for {} observations",
                    labels.len(),
                    seq.len()
                )));
            }
        }
        Ok(seq)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} observations",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        match &self.values {
            Observations::Symbols(v) => v.len(),
            Observations::Reals(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Observation {
        match &self.values {
            Observations::Symbols(v) => Observation::Symbol(v[i]),
            Observations::Reals(v) => Observation::Real(v[i]),
        }
    }

    pub fn as_reals(&self) -> Option<&[f64]> {
        match &self.values {
            Observations::Reals(v) => Some(v),
            Observations::Symbols(_) => None,
        }
    }

    /// Label of position `i`, falling back to the 1-based index.
    pub fn label(&self, i: usize) -> String {
        match &self.labels {
            Some(labels) => labels[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    /// Copy with positions `start..end` removed (labels follow their values).
    pub fn without_range(&self, start: usize, end: usize) -> Result<Self> {
        let keep = |i: usize| i < start || i >= end;
        let values = match &self.values {
            Observations::Symbols(v) => Observations::Symbols(
                v.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, x)| *x).collect(),
            ),
            Observations::Reals(v) => Observations::Reals(
                v.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, x)| *x).collect(),
            ),
        };
        let labels = self.labels.as_ref().map(|l| {
            l.iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, x)| x.clone())
                .collect()
        });
        Self::new(values, labels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    pub initial: Vec<f64>,
    pub transition: Array2<f64>,
    pub emission: EmissionModel,
}

impl HmmModel {
    pub fn new(initial: Vec<f64>, transition: Array2<f64>, emission: EmissionModel) -> Result<Self> {
        let model = HmmModel {
            initial,
            transition,
            emission,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.initial.len();
        if m == 0 {
            return Err(Error::InvalidModel("model needs at least one state".into()));
        }
        check_distribution(self.initial.iter().copied(), "initial distribution")?;
        if self.transition.dim() != (m, m) {
            return Err(Error::InvalidModel(format!(
                "transition matrix is {:?}, expected {m}x{m}",
                self.transition.dim()
            )));
        }
        for (r, row) in self.transition.rows().into_iter().enumerate() {
            check_distribution(row.iter().copied(), &format!("transition row {r}"))?;
        }
        if self.emission.num_states() != m {
            return Err(Error::InvalidModel(format!(
                "emission model has {} states, expected {m}",
                self.emission.num_states()
            )));
        }
        self.emission.validate()
    }

    /// `β(state, x)`; a density value for Gaussian emissions.
    pub fn emission_density(&self, state: usize, x: Observation) -> Result<f64> {
        Ok(self.log_emission_density(state, x)?.exp())
    }

    pub fn log_emission_density(&self, state: usize, x: Observation) -> Result<f64> {
        let m = self.num_states();
        if state >= m {
            return Err(Error::InvalidArgument(format!(
                "state {state} out of range for {m} states"
            )));
        }
        match (&self.emission, x) {
            (EmissionModel::Discrete { table }, Observation::Symbol(sym)) => {
                if sym >= table.ncols() {
                    return Err(Error::InvalidObservation {
                        index: 0,
                        reason: format!("symbol {sym} out of range for {} symbols", table.ncols()),
                    });
                }
                Ok(table[[state, sym]].ln())
            }
            (EmissionModel::GaussianHomoscedastic { means, sigma }, Observation::Real(v)) => {
                Ok(log_normal_density(v, means[state], *sigma))
            }
            (EmissionModel::GaussianGeneral { means, sigmas }, Observation::Real(v)) => {
                Ok(log_normal_density(v, means[state], sigmas[state]))
            }
            (EmissionModel::Discrete { .. }, Observation::Real(_)) => Err(Error::InvalidObservation {
                index: 0,
                reason: "real value given to a discrete emission model".into(),
            }),
            (_, Observation::Symbol(_)) => Err(Error::InvalidObservation {
                index: 0,
                reason: "symbol given to a Gaussian emission model".into(),
            }),
        }
    }

    /// `n × m` matrix of `log β(s, x_i)`.
    pub fn log_emissions(&self, obs: &ObservationSequence) -> Result<Array2<f64>> {
        let m = self.num_states();
        let n = obs.len();
        let mut out = Array2::zeros((n, m));
        for i in 0..n {
            let x = obs.get(i);
            for s in 0..m {
                out[[i, s]] = self
                    .log_emission_density(s, x)
                    .map_err(|e| match e {
                        Error::InvalidObservation { reason, .. } => {
                            Error::InvalidObservation { index: i, reason }
                        }
                        other => other,
                    })?;
            }
        }
        Ok(out)
    }

    /// Relabels states so that new state `k` is old state `order[k]`.
    pub fn permuted(&self, order: &[usize]) -> HmmModel {
        let m = self.num_states();
        assert_eq!(order.len(), m);
        let pick = |v: &[f64]| order.iter().map(|&o| v[o]).collect::<Vec<f64>>();
        let transition = Array2::from_shape_fn((m, m), |(r, s)| self.transition[[order[r], order[s]]]);
        let emission = match &self.emission {
            EmissionModel::Discrete { table } => EmissionModel::Discrete {
                table: Array2::from_shape_fn(table.dim(), |(s, y)| table[[order[s], y]]),
            },
            EmissionModel::GaussianHomoscedastic { means, sigma } => {
                EmissionModel::GaussianHomoscedastic {
                    means: pick(means),
                    sigma: *sigma,
                }
            }
            EmissionModel::GaussianGeneral { means, sigmas } => EmissionModel::GaussianGeneral {
                means: pick(means),
                sigmas: pick(sigmas),
            },
        };
        HmmModel {
            initial: pick(&self.initial),
            transition,
            emission,
        }
    }

    /// States sorted by ascending emission mean; discrete models are returned
    /// unchanged.
    pub fn canonical(&self) -> HmmModel {
        let means = match &self.emission {
            EmissionModel::Discrete { .. } => return self.clone(),
            EmissionModel::GaussianHomoscedastic { means, .. } => means,
            EmissionModel::GaussianGeneral { means, .. } => means,
        };
        let mut order: Vec<usize> = (0..means.len()).collect();
        order.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
        self.permuted(&order)
    }

    /// Transition matrix with `1 - η` on the diagonal and `η / (m - 1)` elsewhere.
    pub fn tied_transition(m: usize, eta: f64) -> Array2<f64> {
        if m == 1 {
            return Array2::ones((1, 1));
        }
        let eta = eta.clamp(0.0, 1.0);
        let off = eta / (m - 1) as f64;
        Array2::from_shape_fn((m, m), |(r, s)| if r == s { 1.0 - eta } else { off })
    }
}

pub fn log_normal_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * PI).ln()
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{what} must be finite")))
    }
}

fn check_distribution(values: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut total = 0.0;
    for v in values {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidModel(format!(
                "{what} has invalid probability {v}"
            )));
        }
        total += v;
    }
    if (total - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::InvalidModel(format!(
            "{what} sums to {total}, expected 1"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn discrete() -> HmmModel {
        HmmModel::new(
            vec![0.5, 0.5],
            array![[0.9, 0.1], [0.2, 0.8]],
            EmissionModel::Discrete {
                table: array![[0.9, 0.1], [0.2, 0.8]],
            },
        )
        .unwrap()
    }

    #[test]
    fn discrete_lookup() {
        let m = discrete();
        assert_abs_diff_eq!(
            m.emission_density(0, Observation::Symbol(1)).unwrap(),
            0.1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn symbol_out_of_range() {
        let m = discrete();
        assert!(matches!(
            m.emission_density(0, Observation::Symbol(2)),
            Err(Error::InvalidObservation { .. })
        ));
        let obs = ObservationSequence::symbols(vec![0, 1, 5]).unwrap();
        match m.log_emissions(&obs) {
            Err(Error::InvalidObservation { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn standard_normal_at_zero() {
        let m = HmmModel::new(
            vec![1.0],
            array![[1.0]],
            EmissionModel::GaussianHomoscedastic {
                means: vec![0.0],
                sigma: 1.0,
            },
        )
        .unwrap();
        assert_abs_diff_eq!(
            m.emission_density(0, Observation::Real(0.0)).unwrap(),
            0.3989422804014327,
            epsilon = 1e-12
        );
    }

    #[test]
    fn temperature_scale_density_peak() {
        let sigma = 0.114;
        let m = HmmModel::new(
            vec![1.0],
            array![[1.0]],
            EmissionModel::GaussianHomoscedastic {
                means: vec![-0.372],
                sigma,
            },
        )
        .unwrap();
        let expected = 1.0 / (sigma * (2.0 * PI).sqrt());
        assert_abs_diff_eq!(
            m.emission_density(0, Observation::Real(-0.372)).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected, 3.4995, epsilon = 1e-3);
    }

    #[test]
    fn rejects_non_stochastic() {
        let bad = HmmModel::new(
            vec![0.6, 0.5],
            array![[0.9, 0.1], [0.2, 0.8]],
            EmissionModel::GaussianHomoscedastic {
                means: vec![0.0, 1.0],
                sigma: 1.0,
            },
        );
        assert!(matches!(bad, Err(Error::InvalidModel(_))));
        let bad = HmmModel::new(
            vec![0.5, 0.5],
            array![[0.9, 0.2], [0.2, 0.8]],
            EmissionModel::GaussianHomoscedastic {
                means: vec![0.0, 1.0],
                sigma: 1.0,
            },
        );
        assert!(matches!(bad, Err(Error::InvalidModel(_))));
        let bad = HmmModel::new(
            vec![0.5, 0.5],
            array![[0.9, 0.1], [0.2, 0.8]],
            EmissionModel::GaussianHomoscedastic {
                means: vec![0.0, 1.0],
                sigma: 0.0,
            },
        );
        assert!(matches!(bad, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn tied_transition_rows() {
        let t = HmmModel::tied_transition(3, 0.085);
        assert_abs_diff_eq!(t[[0, 0]], 0.915, epsilon = 1e-15);
        assert_abs_diff_eq!(t[[0, 2]], 0.0425, epsilon = 1e-15);
        for row in t.rows() {
            assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-15);
        }
        let clamped = HmmModel::tied_transition(2, 1.7);
        assert_eq!(clamped[[0, 1]], 1.0);
    }

    #[test]
    fn empty_sequence_rejected() {
        assert!(ObservationSequence::reals(vec![]).is_err());
    }
}
