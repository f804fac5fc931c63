//! Semi-parametric contamination benchmark.
//!
//! Each replicate subsamples the source series (order preserved). Under H1
//! every point independently receives `N(0, δ²)` noise with the contamination
//! probability. The replicate is then scored by three global statistics:
//! `T = max_j K_j` after a per-replicate EM fit, `S = max_j |Z_j|` against
//! k-means clusters and `L = max_j max_r LOF_r` on standardized axes.
//!
//! H1 replicates draw the contamination pattern and the unit noise before
//! scaling by `δ`, so a replicate index sees the same subsample and the same
//! contaminated positions for every `δ`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::influence::kld_influence;
use crate::model::ObservationSequence;
use crate::outliers::lof::lof_statistic;
use crate::outliers::roc::{empirical_auc, RocResult, DEFAULT_BOOTSTRAP};
use crate::outliers::zvalue::z_value_scores;
use crate::rng;
use crate::training::{em_fit, EmConfig};

const MAX_ATTEMPTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl Hypothesis {
    fn stream_id(self) -> u64 {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub source: Vec<f64>,
    /// Points per replicate.
    pub subsample: usize,
    pub contamination: f64,
    pub delta: f64,
    pub replicates: usize,
    pub seed: u64,
    pub num_states: usize,
    pub em_restarts: usize,
    /// Clusters for the Z-value statistic.
    pub clusters: usize,
}

impl SimulationConfig {
    pub fn new(source: Vec<f64>) -> Self {
        SimulationConfig {
            source,
            subsample: 53,
            contamination: 0.05,
            delta: 2.0,
            replicates: 1000,
            seed: 0,
            num_states: 3,
            em_restarts: 5,
            clusters: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subsample == 0 || self.subsample > self.source.len() {
            return Err(Error::InvalidArgument(format!(
                "subsample size {} must lie in 1..={}",
                self.subsample,
                self.source.len()
            )));
        }
        if !(0.0..=1.0).contains(&self.contamination) {
            return Err(Error::InvalidArgument(format!(
                "contamination probability {} not in [0, 1]",
                self.contamination
            )));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise level {} must be finite and >= 0",
                self.delta
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.source.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("source series must be finite".into()));
        }
        Ok(())
    }

    fn em_config(&self, seed: u64) -> EmConfig {
        EmConfig {
            num_states: self.num_states,
            restarts: self.em_restarts,
            seed,
            tie_transitions: true,
            homoscedastic: true,
            ..EmConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredReplicate {
    pub hypothesis: Hypothesis,
    /// Noise level; `None` under H0.
    pub delta: Option<f64>,
    pub replicate: usize,
    pub t_kld: f64,
    pub s_z: f64,
    pub l_lof: f64,
    /// Positions (within the subsample) that received noise.
    pub outliers: Vec<usize>,
    /// Fresh draws needed after numerically degenerate fits.
    pub retries: usize,
    pub z_degenerate: bool,
    pub lof_clipped: bool,
}

/// One subsampled (and possibly contaminated) series.
#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub values: Vec<f64>,
    pub source_indices: Vec<usize>,
    pub outliers: Vec<usize>,
}

pub fn draw_replicate(
    cfg: &SimulationConfig,
    hypothesis: Hypothesis,
    replicate: usize,
    attempt: usize,
) -> Replicate {
    let mut rng = rng::stream(
        cfg.seed,
        &[hypothesis.stream_id(), replicate as u64, attempt as u64],
    );
    let mut source_indices = index::sample(&mut rng, cfg.source.len(), cfg.subsample).into_vec();
    source_indices.sort_unstable();
    let mut values: Vec<f64> = source_indices.iter().map(|&i| cfg.source[i]).collect();
    let mut outliers = Vec::new();
    if hypothesis == Hypothesis::H1 {
        for (i, v) in values.iter_mut().enumerate() {
            let hit = rng.random::<f64>() < cfg.contamination;
            let z: f64 = StandardNormal.sample(&mut rng);
            if hit {
                *v += cfg.delta * z;
                outliers.push(i);
            }
        }
    }
    Replicate {
        values,
        source_indices,
        outliers,
    }
}

/// Scores one replicate, redrawing it when the fit degenerates.
pub fn simulate(
    cfg: &SimulationConfig,
    hypothesis: Hypothesis,
    replicate: usize,
) -> Result<ScoredReplicate> {
    cfg.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let rep = draw_replicate(cfg, hypothesis, replicate, attempt);
        let stream = [hypothesis.stream_id(), replicate as u64, attempt as u64];
        match score_series(cfg, &rep.values, rng::derive_seed(cfg.seed, &stream)) {
            Ok(scores) => {
                return Ok(ScoredReplicate {
                    hypothesis,
                    delta: (hypothesis == Hypothesis::H1).then_some(cfg.delta),
                    replicate,
                    t_kld: scores.t_kld,
                    s_z: scores.s_z,
                    l_lof: scores.l_lof,
                    outliers: rep.outliers,
                    retries: attempt,
                    z_degenerate: scores.z_degenerate,
                    lof_clipped: scores.lof_clipped,
                })
            }
            Err(e) if e.is_numeric() => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::EmDegenerate {
        restarts: cfg.em_restarts * MAX_ATTEMPTS,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesScores {
    pub t_kld: f64,
    pub s_z: f64,
    pub l_lof: f64,
    pub z_degenerate: bool,
    pub lof_clipped: bool,
}

/// The three global statistics of a single series.
pub fn score_series(cfg: &SimulationConfig, values: &[f64], seed: u64) -> Result<SeriesScores> {
    let obs = ObservationSequence::reals(values.to_vec())?;
    let fit = em_fit(&obs, &cfg.em_config(rng::derive_seed(seed, &[1])))?;
    let influence = kld_influence(&fit.model, &obs)?;
    let t_kld = influence.k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = z_value_scores(values, cfg.clusters, rng::derive_seed(seed, &[2]))?;
    let lof = lof_statistic(values)?;
    Ok(SeriesScores {
        t_kld,
        s_z: z.max_abs(),
        l_lof: lof.max(),
        z_degenerate: z.degenerate,
        lof_clipped: lof.clipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Kld,
    ZValue,
    Lof,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Kld, Method::ZValue, Method::Lof];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kld => "KLD",
            Method::ZValue => "Z-value",
            Method::Lof => "LOF",
        }
    }

    pub fn statistic(self, rep: &ScoredReplicate) -> f64 {
        match self {
            Method::Kld => rep.t_kld,
            Method::ZValue => rep.s_z,
            Method::Lof => rep.l_lof,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub method: Method,
    pub delta: f64,
    pub roc: RocResult,
    pub replicates: usize,
    pub seed: u64,
}

type Key = (Hypothesis, Option<u64>, usize);

fn key_of(r: &ScoredReplicate) -> Key {
    (r.hypothesis, r.delta.map(f64::to_bits), r.replicate)
}

/// Scores every replicate needed for the `δ` grid: one H0 set shared by all
/// `δ` and one H1 set per `δ`. Records already in `existing` are reused.
pub fn run_replicates(
    cfg: &SimulationConfig,
    deltas: &[f64],
    existing: &[ScoredReplicate],
) -> Result<Vec<ScoredReplicate>> {
    cfg.validate()?;
    let mut jobs: Vec<(Hypothesis, Option<f64>, usize)> = (0..cfg.replicates)
        .map(|r| (Hypothesis::H0, None, r))
        .collect();
    for &d in deltas {
        jobs.extend((0..cfg.replicates).map(|r| (Hypothesis::H1, Some(d), r)));
    }
    let cache: HashMap<Key, &ScoredReplicate> = existing.iter().map(|r| (key_of(r), r)).collect();
    jobs.into_par_iter()
        .map(|(hyp, delta, r)| {
            if let Some(hit) = cache.get(&(hyp, delta.map(f64::to_bits), r)) {
                return Ok((*hit).clone());
            }
            let mut local = cfg.clone();
            if let Some(d) = delta {
                local.delta = d;
            }
            simulate(&local, hyp, r)
        })
        .collect()
}

/// AUC table from scored replicates, one row per method and `δ`
/// (in order of first appearance among H1 records).
pub fn evaluate(
    records: &[ScoredReplicate],
    bootstrap: usize,
    seed: u64,
) -> Result<Vec<BenchmarkRow>> {
    let h0: Vec<&ScoredReplicate> = records
        .iter()
        .filter(|r| r.hypothesis == Hypothesis::H0)
        .collect();
    if h0.is_empty() {
        return Err(Error::InvalidArgument("no H0 replicates to evaluate".into()));
    }
    let mut deltas: Vec<f64> = Vec::new();
    for r in records.iter().filter(|r| r.hypothesis == Hypothesis::H1) {
        let d = r
            .delta
            .ok_or_else(|| Error::InvalidArgument("H1 replicate without delta".into()))?;
        if !deltas.iter().any(|x| x.to_bits() == d.to_bits()) {
            deltas.push(d);
        }
    }
    if deltas.is_empty() {
        return Err(Error::InvalidArgument("no H1 replicates to evaluate".into()));
    }
    let mut rows = Vec::new();
    for &delta in &deltas {
        let h1: Vec<&ScoredReplicate> = records
            .iter()
            .filter(|r| r.hypothesis == Hypothesis::H1 && r.delta.map(f64::to_bits) == Some(delta.to_bits()))
            .collect();
        for (mi, method) in Method::ALL.into_iter().enumerate() {
            let s1: Vec<f64> = h1.iter().map(|r| method.statistic(r)).collect();
            let s0: Vec<f64> = h0.iter().map(|r| method.statistic(r)).collect();
            let boot_seed = rng::derive_seed(seed, &[mi as u64, delta.to_bits()]);
            let roc = empirical_auc(&s1, &s0, bootstrap, 0.95, boot_seed)?;
            rows.push(BenchmarkRow {
                method,
                delta,
                roc,
                replicates: s1.len().min(s0.len()),
                seed,
            });
        }
    }
    Ok(rows)
}

/// Replicates for every `δ` plus the AUC table.
pub fn run_benchmark(
    cfg: &SimulationConfig,
    deltas: &[f64],
) -> Result<(Vec<BenchmarkRow>, Vec<ScoredReplicate>)> {
    let records = run_replicates(cfg, deltas, &[])?;
    let rows = evaluate(&records, DEFAULT_BOOTSTRAP, cfg.seed)?;
    Ok((rows, records))
}

/// `method, delta, auc, ci_lo, ci_hi, replicates, seed`.
pub fn write_report<W: Write>(rows: &[BenchmarkRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "method\tdelta\tauc\tci_lo\tci_hi\treplicates\tseed")?;
    for row in rows {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}",
            row.method.name(),
            row.delta,
            row.roc.auc,
            row.roc.ci.lower,
            row.roc.ci.upper,
            row.replicates,
            row.seed
        )?;
    }
    Ok(())
}

pub fn write_jsonl<W: Write>(records: &[ScoredReplicate], mut w: W) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<ScoredReplicate>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}
