//! Command-line workflows: `train`, `influence`, `detect`, `sample`,
//! `simulate` and `evaluate`.
//!
//! Every run writes a JSON manifest next to its primary output recording the
//! resolved parameters, so the same invocation can be replayed exactly.
//! Exit codes: 0 success, 2 usage, 3 data or parse failure, 4 numeric failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::Error;
use crate::forward_backward::forward_backward;
use crate::influence::{kld_influence, windowed_influence};
use crate::io::{format_model, format_series, parse_model, read_series, LabeledSeries};
use crate::model::HmmModel;
use crate::outliers::lof::lof_statistic;
use crate::outliers::roc::DEFAULT_BOOTSTRAP;
use crate::outliers::simulation::{
    evaluate, read_jsonl, run_replicates, write_jsonl, write_report, SimulationConfig,
};
use crate::outliers::zvalue::z_value_scores;
use crate::reference::{kld_influence_naive, windowed_influence_naive};
use crate::sample::sample;
use crate::training::{em_fit, transition_rate, EmConfig, EmResult, InitStrategy};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            _ if e.is_numeric() => EXIT_NUMERIC,
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            code: EXIT_DATA,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "hmm-influence", version, about = "Kullback-Leibler influence of observations in HMMs")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a Gaussian HMM by EM and write the model document.
    Train(TrainArgs),
    /// Compute the influence profile of every observation (or window).
    Influence(InfluenceArgs),
    /// Score observations for outlyingness and flag the largest.
    Detect(DetectArgs),
    /// Draw a synthetic series from a model.
    Sample(SampleArgs),
    /// Run the contamination benchmark and write per-replicate scores.
    Simulate(SimulateArgs),
    /// Turn per-replicate scores into the AUC report.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug, Clone)]
struct FitArgs {
    /// Number of hidden states.
    #[arg(long, default_value_t = 3)]
    states: usize,
    /// Shared switching rate: 1-η on the diagonal, η/(m-1) elsewhere.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    tie_transitions: bool,
    /// One standard deviation shared by all states.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    homoscedastic: bool,
    #[arg(long, default_value_t = 20)]
    restarts: usize,
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Kmeans)]
    init: InitArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum InitArg {
    Kmeans,
    Quantiles,
}

impl FitArgs {
    fn config(&self, seed: u64) -> EmConfig {
        EmConfig {
            num_states: self.states,
            max_iters: self.max_iters,
            tolerance: self.tolerance,
            restarts: self.restarts,
            seed,
            tie_transitions: self.tie_transitions,
            homoscedastic: self.homoscedastic,
            init: match self.init {
                InitArg::Kmeans => InitStrategy::KMeans,
                InitArg::Quantiles => InitStrategy::RandomQuantiles,
            },
            uniform_initial: false,
        }
    }

    fn describe(&self) -> Value {
        json!({
            "states": self.states,
            "tie_transitions": self.tie_transitions,
            "homoscedastic": self.homoscedastic,
            "restarts": self.restarts,
            "max_iters": self.max_iters,
            "tolerance": self.tolerance,
            "init": self.init,
        })
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Observation CSV (`value` or `label,value`).
    #[arg(long)]
    input: PathBuf,
    /// Model document to write.
    #[arg(long)]
    output: PathBuf,
    /// Fit report TSV (default: <output>.fit.tsv).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Per-iteration log-likelihood TSV of the selected restart.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Order states by ascending mean.
    #[arg(long)]
    canonical: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Engine {
    Fast,
    Naive,
}

#[derive(Args, Debug)]
struct InfluenceArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Influence TSV to write.
    #[arg(long)]
    output: PathBuf,
    /// Number of consecutive observations removed together.
    #[arg(long, default_value_t = 1)]
    window: usize,
    #[arg(long, value_enum, default_value_t = Engine::Fast)]
    engine: Engine,
    /// Posterior marginal tracks TSV (`label, p_post_1..m`).
    #[arg(long)]
    marginals: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DetectMethod {
    Kld,
    Z,
    Lof,
}

#[derive(Args, Debug)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = DetectMethod::Kld)]
    method: DetectMethod,
    /// Flag every score at or above this value.
    #[arg(long, conflicts_with = "top_k")]
    threshold: Option<f64>,
    /// Flag the k largest scores (default 5).
    #[arg(long)]
    top_k: Option<usize>,
    /// Use this model instead of fitting one (kld only).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Clusters for the Z-value method.
    #[arg(long, default_value_t = 3)]
    clusters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Integer label of the first row (e.g. a year); rows count up from it.
    #[arg(long)]
    first_label: Option<i64>,
    /// Write the hidden path as a third file (`label,state`).
    #[arg(long)]
    path_output: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Source series CSV resampled by every replicate.
    #[arg(long)]
    source: PathBuf,
    /// Noise standard deviations for H1, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 2.0, 3.0])]
    delta: Vec<f64>,
    #[arg(long, default_value_t = 400)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Points drawn per replicate.
    #[arg(long, default_value_t = 53)]
    subsample: usize,
    #[arg(long, default_value_t = 0.05)]
    contamination: f64,
    #[arg(long, default_value_t = 3)]
    states: usize,
    /// EM restarts per replicate.
    #[arg(long, default_value_t = 5)]
    restarts: usize,
    /// Per-replicate scores (JSON lines).
    #[arg(long)]
    output: PathBuf,
    /// Reuse replicates already present in the output file.
    #[arg(long)]
    resume: bool,
    /// Also write the AUC report here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Per-replicate scores written by `simulate`.
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub parameters: Value,
    pub timings_ms: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    fn new(subcommand: &str, seed: Option<u64>) -> Self {
        RunManifest {
            subcommand: subcommand.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            parameters: Value::Null,
            timings_ms: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn input(&mut self, name: &str, path: &Path) {
        self.inputs.insert(name.into(), path.display().to_string());
    }

    fn output(&mut self, name: &str, path: &Path) {
        self.outputs.insert(name.into(), path.display().to_string());
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings_ms
            .insert(phase.into(), start.elapsed().as_secs_f64() * 1e3);
        out
    }

    fn warn(&mut self, message: String) {
        eprintln!("warning: {message}");
        self.warnings.push(message);
    }

    fn write(&self, explicit: Option<&Path>, primary: &Path) -> CliResult<()> {
        let path = match explicit {
            Some(p) => p.to_path_buf(),
            None => with_suffix(primary, "manifest.json"),
        };
        let file = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(file, self).map_err(|e| CliError {
            code: EXIT_DATA,
            message: e.to_string(),
        })
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn read_csv(path: &Path) -> CliResult<LabeledSeries> {
    let file = File::open(path)
        .map_err(|e| CliError::from(e).context(&format!("cannot open {}", path.display())))?;
    read_series(BufReader::new(file))
        .map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

fn read_model(path: &Path) -> CliResult<HmmModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::from(e).context(&format!("cannot open {}", path.display())))?;
    parse_model(&text).map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

impl CliError {
    fn context(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Parses `args` (including the program name) and runs the subcommand;
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Influence(a) => cmd_influence(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Sample(a) => cmd_sample(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn write_fit_report(path: &Path, fit: &EmResult) -> CliResult<()> {
    write_file(path, |w| {
        writeln!(w, "restart\titerations\tlog_likelihood\tconverged\tdegenerate\tselected")?;
        for r in &fit.restarts {
            let ll = r
                .final_log_likelihood
                .map_or_else(|| "NA".to_string(), |v| format!("{v:?}"));
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.restart,
                r.iterations,
                ll,
                r.converged,
                r.degenerate,
                r.restart == fit.best_restart
            )?;
        }
        Ok(())
    })
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("train", Some(a.seed));
    manifest.input("data", &a.input);
    let series = manifest.time("read", || read_csv(&a.input))?;
    let obs = series.to_reals()?;
    let cfg = a.fit.config(a.seed);
    let fit = manifest.time("fit", || em_fit(&obs, &cfg))?;
    let model = if a.canonical {
        fit.model.canonical()
    } else {
        fit.model.clone()
    };
    fs::write(&a.output, format_model(&model))?;
    manifest.output("model", &a.output);
    let report = a.report.clone().unwrap_or_else(|| with_suffix(&a.output, "fit.tsv"));
    write_fit_report(&report, &fit)?;
    manifest.output("report", &report);
    if let Some(trace) = &a.trace {
        write_file(trace, |w| {
            writeln!(w, "iteration\tlog_likelihood")?;
            for (i, ll) in fit.log_likelihood.iter().enumerate() {
                writeln!(w, "{i}\t{ll:?}")?;
            }
            Ok(())
        })?;
        manifest.output("trace", trace);
    }
    if !fit.converged {
        manifest.warn(format!(
            "selected restart did not converge within {} iterations",
            cfg.max_iters
        ));
    }
    let mut params = a.fit.describe();
    params["canonical"] = json!(a.canonical);
    params["final_log_likelihood"] = json!(fit.final_log_likelihood());
    params["iterations"] = json!(fit.iterations());
    params["best_restart"] = json!(fit.best_restart);
    if cfg.tie_transitions {
        params["eta"] = json!(transition_rate(&model));
    }
    manifest.parameters = params;
    manifest.write(a.manifest.as_deref(), &a.output)
}

fn cmd_influence(a: InfluenceArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("influence", None);
    manifest.input("model", &a.model);
    manifest.input("data", &a.input);
    let model = read_model(&a.model)?;
    let series = read_csv(&a.input)?;
    let obs = series.for_model(&model)?;
    if a.window == 0 || a.window > obs.len() {
        return Err(CliError::usage(format!(
            "--window {} must lie in 1..={}",
            a.window,
            obs.len()
        )));
    }
    if a.window == 1 {
        let prof = manifest.time("influence", || match a.engine {
            Engine::Fast => kld_influence(&model, &obs),
            Engine::Naive => kld_influence_naive(&model, &obs),
        })?;
        write_file(&a.output, |w| prof.write_tsv(w))?;
    } else {
        let prof = manifest.time("influence", || match a.engine {
            Engine::Fast => windowed_influence(&model, &obs, a.window),
            Engine::Naive => windowed_influence_naive(&model, &obs, a.window),
        })?;
        write_file(&a.output, |w| prof.write_tsv(w))?;
    }
    manifest.output("influence", &a.output);
    if let Some(path) = &a.marginals {
        let fb = forward_backward(&model, &obs)?;
        let post = fb.posterior_marginals();
        write_file(path, |w| {
            write!(w, "label")?;
            for s in 1..=post.ncols() {
                write!(w, "\tp_post_{s}")?;
            }
            writeln!(w)?;
            for (i, row) in post.rows().into_iter().enumerate() {
                write!(w, "{}", obs.label(i))?;
                for v in row {
                    write!(w, "\t{v:?}")?;
                }
                writeln!(w)?;
            }
            Ok(())
        })?;
        manifest.output("marginals", path);
    }
    manifest.parameters = json!({ "window": a.window, "engine": a.engine });
    manifest.write(a.manifest.as_deref(), &a.output)
}

fn cmd_detect(a: DetectArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("detect", Some(a.seed));
    manifest.input("data", &a.input);
    let series = read_csv(&a.input)?;
    let obs = series.to_reals()?;
    let n = obs.len();
    let mut params = json!({ "method": a.method });
    let scores: Vec<f64> = match a.method {
        DetectMethod::Kld => {
            let model = match &a.model {
                Some(p) => {
                    manifest.input("model", p);
                    read_model(p)?
                }
                None => {
                    let fit = manifest.time("fit", || em_fit(&obs, &a.fit.config(a.seed)))?;
                    params["fit"] = a.fit.describe();
                    fit.model
                }
            };
            manifest.time("score", || kld_influence(&model, &obs))?.k
        }
        DetectMethod::Z => {
            params["clusters"] = json!(a.clusters);
            let z = z_value_scores(&series.values, a.clusters, a.seed)?;
            if z.degenerate {
                manifest.warn("a cluster has zero spread; its sigma was floored".into());
            }
            z.z.iter().map(|v| v.abs()).collect()
        }
        DetectMethod::Lof => {
            let stat = lof_statistic(&series.values)?;
            if stat.clipped {
                manifest.warn(format!(
                    "series of length {n} is too short for r in 10..=20; using r in {}..={}",
                    stat.r_min, stat.r_max
                ));
            }
            params["r_range"] = json!([stat.r_min, stat.r_max]);
            stat.scores
        }
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| scores[y].total_cmp(&scores[x]).then(x.cmp(&y)));
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let flagged: Vec<bool> = match (a.threshold, a.top_k) {
        (Some(t), _) => {
            params["threshold"] = json!(t);
            scores.iter().map(|&s| s >= t).collect()
        }
        (None, k) => {
            let k = k.unwrap_or(5);
            if k == 0 || k > n {
                return Err(CliError::usage(format!("--top-k {k} must lie in 1..={n}")));
            }
            params["top_k"] = json!(k);
            rank.iter().map(|&r| r <= k).collect()
        }
    };
    write_file(&a.output, |w| {
        writeln!(w, "label\tscore\trank\tflagged")?;
        for i in 0..n {
            writeln!(
                w,
                "{}\t{:?}\t{}\t{}",
                obs.label(i),
                scores[i],
                rank[i],
                u8::from(flagged[i])
            )?;
        }
        Ok(())
    })?;
    manifest.output("flags", &a.output);
    manifest.parameters = params;
    manifest.write(a.manifest.as_deref(), &a.output)
}

fn cmd_sample(a: SampleArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("sample", Some(a.seed));
    manifest.input("model", &a.model);
    if a.length == 0 {
        return Err(CliError::usage("--length must be at least 1"));
    }
    let model = read_model(&a.model)?;
    let (path, obs) = sample(&model, a.length, a.seed)?;
    let labels: Vec<String> = match a.first_label {
        Some(first) => (0..a.length).map(|i| (first + i as i64).to_string()).collect(),
        None => (1..=a.length).map(|i| i.to_string()).collect(),
    };
    let values: Vec<f64> = match &obs.values {
        crate::model::Observations::Reals(v) => v.clone(),
        crate::model::Observations::Symbols(v) => v.iter().map(|&s| s as f64).collect(),
    };
    let series = LabeledSeries {
        labels: Some(labels.clone()),
        values,
    };
    fs::write(&a.output, format_series(&series))?;
    manifest.output("data", &a.output);
    if let Some(p) = &a.path_output {
        write_file(p, |w| {
            writeln!(w, "label,state")?;
            for (l, s) in labels.iter().zip(&path) {
                writeln!(w, "{l},{}", s + 1)?;
            }
            Ok(())
        })?;
        manifest.output("path", p);
    }
    manifest.parameters = json!({ "length": a.length, "first_label": a.first_label });
    manifest.write(a.manifest.as_deref(), &a.output)
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("simulate", Some(a.seed));
    manifest.input("source", &a.source);
    if a.replicates == 0 {
        return Err(CliError::usage("--replicates must be at least 1"));
    }
    if a.delta.is_empty() {
        return Err(CliError::usage("--delta needs at least one value"));
    }
    let series = read_csv(&a.source)?;
    let cfg = SimulationConfig {
        source: series.values.clone(),
        subsample: a.subsample,
        contamination: a.contamination,
        delta: a.delta[0],
        replicates: a.replicates,
        seed: a.seed,
        num_states: a.states,
        em_restarts: a.restarts,
        clusters: 3,
    };
    let existing = if a.resume && a.output.exists() {
        read_jsonl(BufReader::new(File::open(&a.output)?))?
    } else {
        Vec::new()
    };
    let records = manifest.time("simulate", || run_replicates(&cfg, &a.delta, &existing))?;
    let retries: usize = records.iter().map(|r| r.retries).sum();
    if retries > 0 {
        manifest.warn(format!("{retries} replicate draws were redrawn after degenerate fits"));
    }
    write_file(&a.output, |w| write_jsonl(&records, w))?;
    manifest.output("scores", &a.output);
    if let Some(report) = &a.report {
        let rows = manifest.time("evaluate", || evaluate(&records, a.bootstrap, a.seed))?;
        write_file(report, |w| write_report(&rows, w))?;
        manifest.output("report", report);
    }
    manifest.parameters = json!({
        "delta": a.delta,
        "replicates": a.replicates,
        "subsample": a.subsample,
        "contamination": a.contamination,
        "states": a.states,
        "restarts": a.restarts,
        "bootstrap": a.bootstrap,
        "resumed_records": existing.len(),
        "redraws": retries,
    });
    manifest.write(a.manifest.as_deref(), &a.output)
}

fn cmd_evaluate(a: EvaluateArgs) -> CliResult<()> {
    let mut manifest = RunManifest::new("evaluate", Some(a.seed));
    manifest.input("scores", &a.scores);
    let file = File::open(&a.scores)
        .map_err(|e| CliError::from(e).context(&format!("cannot open {}", a.scores.display())))?;
    let records = read_jsonl(BufReader::new(file))?;
    let rows = manifest.time("evaluate", || evaluate(&records, a.bootstrap, a.seed))?;
    write_file(&a.output, |w| write_report(&rows, w))?;
    manifest.output("report", &a.output);
    manifest.parameters = json!({ "bootstrap": a.bootstrap });
    manifest.write(a.manifest.as_deref(), &a.output)
}
