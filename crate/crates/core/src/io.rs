//! Text formats: the model document and observation CSV files.
//!
//! # Model document
//!
//! ```text
//! # comment lines start with '#'
//! [initial]
//! 0.2 0.5 0.3
//!
//! [transition]
//! 0.915 0.0425 0.0425
//! 0.0425 0.915 0.0425
//! 0.0425 0.0425 0.915
//!
//! [emission]
//! type = gaussian-homoscedastic
//! means = -0.372 0.069 -0.068
//! sigma = 0.114
//! ```
//!
//! `[initial]` holds one row of `m` probabilities and `[transition]` holds
//! `m` rows (row `r` is the law of the next state from `r`). The emission
//! `type` is one of
//!
//! * `gaussian-homoscedastic` with keys `means` (m values) and `sigma`;
//! * `gaussian` with keys `means` and `sigmas` (m values each);
//! * `discrete` with key `symbols = k` followed by `m` bare rows of `k`
//!   probabilities.
//!
//! Numbers are whitespace separated; blank lines are ignored. The writer uses
//! the shortest representation that round-trips each `f64`.
//!
//! # Observation CSV
//!
//! One `value` column or two columns `label,value`. A first row whose value
//! field is not numeric is taken as a header.

use ndarray::Array2;
use std::fmt::Write as _;
use std::io::Read;

use crate::error::{Error, Result};
use crate::model::{EmissionModel, HmmModel, ObservationSequence, Observations};

fn parse_numbers(text: &str, line: usize) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::parse(line, format!("not a number: {tok:?}")))
        })
        .collect()
}

#[derive(Default)]
struct Section {
    rows: Vec<(usize, Vec<f64>)>,
    keys: Vec<(usize, String, String)>,
    line: usize,
}

impl Section {
    fn key(&self, name: &str) -> Option<(usize, &str)> {
        self.keys
            .iter()
            .find(|(_, k, _)| k == name)
            .map(|(l, _, v)| (*l, v.as_str()))
    }

    fn required(&self, name: &str, section: &str) -> Result<(usize, &str)> {
        self.key(name)
            .ok_or_else(|| Error::parse(self.line, format!("[{section}] is missing `{name}`")))
    }
}

pub fn parse_model(text: &str) -> Result<HmmModel> {
    let mut sections: Vec<(String, Section)> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap().trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| Error::parse(line, "unterminated section header"))?
                .trim()
                .to_string();
            if sections.iter().any(|(n, _)| *n == name) {
                return Err(Error::parse(line, format!("duplicate section [{name}]")));
            }
            sections.push((
                name,
                Section {
                    line,
                    ..Default::default()
                },
            ));
            continue;
        }
        let (_, section) = sections
            .last_mut()
            .ok_or_else(|| Error::parse(line, "content before the first section"))?;
        if let Some((k, v)) = content.split_once('=') {
            section
                .keys
                .push((line, k.trim().to_string(), v.trim().to_string()));
        } else {
            section.rows.push((line, parse_numbers(content, line)?));
        }
    }

    let find = |name: &str| -> Result<&Section> {
        sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::parse(text.lines().count().max(1), format!("missing section [{name}]")))
    };
    if let Some((name, s)) = sections
        .iter()
        .find(|(n, _)| !matches!(n.as_str(), "initial" | "transition" | "emission"))
    {
        return Err(Error::parse(s.line, format!("unknown section [{name}]")));
    }

    let initial_sec = find("initial")?;
    if initial_sec.rows.len() != 1 {
        return Err(Error::parse(initial_sec.line, "[initial] needs exactly one row"));
    }
    let initial = initial_sec.rows[0].1.clone();
    let m = initial.len();

    let trans_sec = find("transition")?;
    let transition = matrix_from_rows(&trans_sec.rows, m, m, trans_sec.line, "transition")?;

    let em = find("emission")?;
    let (tline, kind) = em.required("type", "emission")?;
    let vector = |key: &str| -> Result<Vec<f64>> {
        let (l, v) = em.required(key, "emission")?;
        let xs = parse_numbers(v, l)?;
        if xs.len() != m {
            return Err(Error::parse(l, format!("`{key}` needs {m} values, got {}", xs.len())));
        }
        Ok(xs)
    };
    let scalar = |key: &str| -> Result<f64> {
        let (l, v) = em.required(key, "emission")?;
        v.parse::<f64>()
            .map_err(|_| Error::parse(l, format!("`{key}` is not a number: {v:?}")))
    };
    let emission = match kind {
        "gaussian-homoscedastic" => EmissionModel::GaussianHomoscedastic {
            means: vector("means")?,
            sigma: scalar("sigma")?,
        },
        "gaussian" => EmissionModel::GaussianGeneral {
            means: vector("means")?,
            sigmas: vector("sigmas")?,
        },
        "discrete" => {
            let (l, v) = em.required("symbols", "emission")?;
            let k: usize = v
                .parse()
                .map_err(|_| Error::parse(l, format!("`symbols` is not a count: {v:?}")))?;
            EmissionModel::Discrete {
                table: matrix_from_rows(&em.rows, m, k, em.line, "emission")?,
            }
        }
        other => {
            return Err(Error::parse(tline, format!("unknown emission type {other:?}")));
        }
    };
    HmmModel::new(initial, transition, emission)
}

fn matrix_from_rows(
    rows: &[(usize, Vec<f64>)],
    nrows: usize,
    ncols: usize,
    line: usize,
    what: &str,
) -> Result<Array2<f64>> {
    if rows.len() != nrows {
        return Err(Error::parse(
            line,
            format!("[{what}] needs {nrows} rows, got {}", rows.len()),
        ));
    }
    let mut out = Array2::zeros((nrows, ncols));
    for (r, (l, row)) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::parse(
                *l,
                format!("expected {ncols} values, got {}", row.len()),
            ));
        }
        for (c, v) in row.iter().enumerate() {
            out[[r, c]] = *v;
        }
    }
    Ok(out)
}

fn join(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter()
        .map(|x| format!("{x:?}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn format_model(model: &HmmModel) -> String {
    let mut out = String::new();
    out.push_str("# hmm-influence model\n[initial]\n");
    writeln!(out, "{}", join(model.initial.iter().copied())).unwrap();
    out.push_str("\n[transition]\n");
    for row in model.transition.rows() {
        writeln!(out, "{}", join(row.iter().copied())).unwrap();
    }
    out.push_str("\n[emission]\n");
    match &model.emission {
        EmissionModel::GaussianHomoscedastic { means, sigma } => {
            out.push_str("type = gaussian-homoscedastic\n");
            writeln!(out, "means = {}", join(means.iter().copied())).unwrap();
            writeln!(out, "sigma = {sigma:?}").unwrap();
        }
        EmissionModel::GaussianGeneral { means, sigmas } => {
            out.push_str("type = gaussian\n");
            writeln!(out, "means = {}", join(means.iter().copied())).unwrap();
            writeln!(out, "sigmas = {}", join(sigmas.iter().copied())).unwrap();
        }
        EmissionModel::Discrete { table } => {
            out.push_str("type = discrete\n");
            writeln!(out, "symbols = {}", table.ncols()).unwrap();
            for row in table.rows() {
                writeln!(out, "{}", join(row.iter().copied())).unwrap();
            }
        }
    }
    out
}

/// Values read from an observation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSeries {
    pub labels: Option<Vec<String>>,
    pub values: Vec<f64>,
}

impl LabeledSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_reals(&self) -> Result<ObservationSequence> {
        ObservationSequence::new(Observations::Reals(self.values.clone()), self.labels.clone())
    }

    /// Interprets values as symbol indices (non-negative integers).
    pub fn to_symbols(&self) -> Result<ObservationSequence> {
        let symbols = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if v >= 0.0 && v.fract() == 0.0 && v < usize::MAX as f64 {
                    Ok(v as usize)
                } else {
                    Err(Error::InvalidObservation {
                        index: i,
                        reason: format!("{v} is not a symbol index"),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        ObservationSequence::new(Observations::Symbols(symbols), self.labels.clone())
    }

    /// Observations typed for `model`.
    pub fn for_model(&self, model: &HmmModel) -> Result<ObservationSequence> {
        if model.emission.is_discrete() {
            self.to_symbols()
        } else {
            self.to_reals()
        }
    }
}

pub fn read_series<R: Read>(reader: R) -> Result<LabeledSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(idx + 1, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let w = rec.len();
        if w == 0 || w > 2 {
            return Err(Error::parse(line, format!("expected 1 or 2 columns, got {w}")));
        }
        let value_field = &rec[w - 1];
        let parsed = value_field.parse::<f64>();
        if width.is_none() && values.is_empty() && parsed.is_err() {
            // header row
            width = Some(w);
            continue;
        }
        match width {
            Some(prev) if prev != w => {
                return Err(Error::parse(
                    line,
                    format!("expected {prev} columns, got {w}"),
                ))
            }
            _ => width = Some(w),
        }
        let v = parsed
            .map_err(|_| Error::parse(line, format!("value is not a number: {value_field:?}")))?;
        if !v.is_finite() {
            return Err(Error::parse(line, format!("value is not finite: {value_field:?}")));
        }
        values.push(v);
        if w == 2 {
            labels.push(rec[0].to_string());
        }
    }
    if values.is_empty() {
        return Err(Error::parse(1, "no data rows"));
    }
    Ok(LabeledSeries {
        labels: (width == Some(2)).then_some(labels),
        values,
    })
}

pub fn format_series(series: &LabeledSeries) -> String {
    let mut out = String::from("label,value\n");
    for (i, v) in series.values.iter().enumerate() {
        let label = match &series.labels {
            Some(l) => l[i].clone(),
            None => (i + 1).to_string(),
        };
        writeln!(out, "{label},{v:?}").unwrap();
    }
    out
}
