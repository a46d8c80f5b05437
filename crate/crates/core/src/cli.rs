//! The `spex` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    aggregate, compare_explanations, project_grid, relaxed_fraction, report_csv, slice_grid, Cell, Relation,
    RunRecord,
};
use crate::error::{Error, Result};
use crate::formula::{point_assignment, Formula};
use crate::model::{load_dataset, DatasetOptions, Network, Point};
use crate::rational::{format_rational, parse_rational, Rational};
use crate::search::Budget;
use crate::strategies::{parse_factor, parse_order, Engine, Explanation, Pipeline};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spex", version, about = "Space explanations for ReLU classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Explain the predicted class of every dataset row.
    Explain(ExplainArgs),
    /// Relate explanation files by inclusion of their spaces.
    Compare(CompareArgs),
    /// Existential projection of an explanation onto two features.
    Project(GridArgs),
    /// Slice of an explanation through its sample.
    Slice(GridArgs),
    /// Classify every dataset row.
    Eval(EvalArgs),
    /// Aggregate the metrics stored in explanation files.
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct ExplainArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Pipeline descriptor, e.g. `A;I:8;G:weak`; may be repeated.
    #[arg(long = "pipeline", required = true)]
    pipelines: Vec<String>,
    /// Factor used by the `mid` preset.
    #[arg(long)]
    preset_factor: Option<String>,
    /// Seconds allowed per sample and pipeline.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// Seconds allowed per pipeline stage.
    #[arg(long)]
    stage_timeout: Option<f64>,
    /// Seconds allowed for the whole run.
    #[arg(long, default_value_t = 7200.0)]
    run_timeout: f64,
    /// Feature traversal order, e.g. `x3,x1,x2`.
    #[arg(long)]
    order: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads; all cores by default.
    #[arg(long)]
    jobs: Option<usize>,
    /// The dataset's last column is a class label.
    #[arg(long)]
    labels: bool,
    /// Record zero elapsed time so that repeated runs give identical files.
    #[arg(long)]
    no_timing: bool,
    /// Skip measuring the relaxed-feature fraction.
    #[arg(long)]
    no_relaxed: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    network: PathBuf,
    /// Explanation files; all pairs are compared unless a baseline is given.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Compare every file against this one.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Compare on the slice through the first file's sample that frees
    /// these two features.
    #[arg(long)]
    slice: Option<String>,
    /// Summary CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-pair CSV with witnesses.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[arg(long)]
    network: PathBuf,
    /// Explanation file.
    expl: PathBuf,
    /// Two features, e.g. `x1,x2`.
    #[arg(long)]
    pair: String,
    #[arg(long, default_value_t = 50)]
    grid_res: usize,
    #[arg(long)]
    out: PathBuf,
    /// Slice point overriding the explanation's sample, e.g. `1,1,3`.
    #[arg(long)]
    sample: Option<String>,
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    labels: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    files: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// On-disk form of an explanation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationFile {
    pub formula: String,
    pub class: String,
    pub sample: Option<Vec<String>>,
    pub pipeline: String,
    pub validity: String,
    pub metrics: FileMetrics,
    pub network_sha256: String,
    pub tool_version: String,
    pub config: FileConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMetrics {
    pub terms: usize,
    pub solver_calls: u64,
    pub time_s: f64,
    pub relaxed: Option<String>,
    pub timed_out: bool,
    pub stages: Vec<FileStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStage {
    pub stage: String,
    pub time_s: f64,
    pub solver_calls: u64,
    pub timed_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileConfig {
    pub network: String,
    pub data: String,
    pub row: usize,
    pub pipeline: String,
    pub preset_factor: Option<String>,
    pub timeout_s: f64,
    pub stage_timeout_s: Option<f64>,
    pub order: Vec<String>,
}

pub fn tool_version() -> String {
    format!("spex v{}", env!("CARGO_PKG_VERSION"))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Parses arguments and runs a command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Explain(a) => explain(a),
        Command::Compare(a) => compare(a),
        Command::Project(a) => grid(a, false),
        Command::Slice(a) => grid(a, true),
        Command::Eval(a) => eval(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Invalid(_) => EXIT_INVALID,
                Error::Timeout => EXIT_TIMEOUT,
                _ => EXIT_CONFIG,
            }
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Argument(format!("--{name} must be positive, got {v}")))
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Argument(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn emit(out: Option<&Path>, contents: &str) -> Result<()> {
    match out {
        Some(p) => write_file(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn load_network(path: &Path) -> Result<Network> {
    crate::model::load_network(path)
}

fn explain(a: ExplainArgs) -> Result<i32> {
    positive("timeout", a.timeout)?;
    positive("run-timeout", a.run_timeout)?;
    if let Some(s) = a.stage_timeout {
        positive("stage-timeout", s)?;
    }
    let net = load_network(&a.network)?;
    let digest = file_digest(&a.network)?;
    let data = load_dataset(&a.data, &net, DatasetOptions { labels: a.labels })?;
    let names = net.feature_names();
    let factor = a.preset_factor.as_deref().map(parse_factor).transpose()?;
    let pipelines = a
        .pipelines
        .iter()
        .map(|p| Pipeline::parse(p, &names, factor.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let mut engine = Engine::new(net)?.with_stage_timeout(a.stage_timeout.map(Duration::from_secs_f64));
    if let Some(o) = &a.order {
        engine = engine.with_order(parse_order(o, &names)?)?;
    }
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;

    let run_budget = Budget::seconds(a.run_timeout);
    let tasks: Vec<(usize, usize)> = (0..data.points.len())
        .flat_map(|row| (0..pipelines.len()).map(move |k| (row, k)))
        .collect();
    let results: Vec<Result<Explanation>> = pool(a.jobs)?.install(|| {
        tasks
            .par_iter()
            .map(|&(row, k)| {
                let budget = Budget::seconds(a.timeout).min(run_budget);
                let point = &data.points[row];
                let mut e = engine.run(&pipelines[k], point, &budget)?;
                if !a.no_relaxed {
                    e.metrics.relaxed =
                        relaxed_fraction(e.formula(), point, engine.domains(), &names, &budget).ok();
                }
                if a.no_timing {
                    for s in &mut e.metrics.stages {
                        s.elapsed = Duration::ZERO;
                    }
                }
                Ok(e)
            })
            .collect()
    });

    let order_names: Vec<String> = engine.order().iter().map(|&i| names[i].clone()).collect();
    let (mut invalid, mut timeouts, mut failed) = (0, 0, 0);
    let mut records = Vec::new();
    for (&(row, k), result) in tasks.iter().zip(results) {
        let name = format!("sample_{row:04}_p{k}.json");
        match result {
            Ok(e) => {
                if e.metrics.timed_out() {
                    timeouts += 1;
                }
                let config = FileConfig {
                    network: a.network.display().to_string(),
                    data: a.data.display().to_string(),
                    row,
                    pipeline: pipelines[k].to_string(),
                    preset_factor: a.preset_factor.clone(),
                    timeout_s: a.timeout,
                    stage_timeout_s: a.stage_timeout,
                    order: order_names.clone(),
                };
                let file = explanation_file(&engine, &e, &digest, config);
                let json = serde_json::to_string_pretty(&file)? + "\n";
                write_file(&a.out.join(&name), &json)?;
                records.push(RunRecord::of(&e, &names));
            }
            Err(Error::Timeout) => {
                timeouts += 1;
                eprintln!("{name}: timed out");
            }
            Err(Error::Invalid(msg)) => {
                invalid += 1;
                eprintln!("{name}: validity check failed: {msg}");
            }
            Err(other) => {
                failed += 1;
                eprintln!("{name}: {other}");
            }
        }
    }
    write_file(&a.out.join("report.csv"), &report_csv(&aggregate(&records))?)?;
    Ok(if invalid > 0 {
        EXIT_INVALID
    } else if failed > 0 {
        EXIT_CONFIG
    } else if timeouts > 0 {
        EXIT_TIMEOUT
    } else {
        EXIT_OK
    })
}

pub fn explanation_file(engine: &Engine, e: &Explanation, digest: &str, config: FileConfig) -> ExplanationFile {
    let names = engine.feature_names();
    ExplanationFile {
        formula: e.formula().to_string(),
        class: engine.network().class_name(e.target_class()).to_string(),
        sample: e.sample().map(|p| p.values().iter().map(format_rational).collect()),
        pipeline: e.descriptor(names),
        validity: "pass".into(),
        metrics: FileMetrics {
            terms: e.metrics.terms,
            solver_calls: e.metrics.solver_calls(),
            time_s: e.metrics.elapsed().as_secs_f64(),
            relaxed: e.metrics.relaxed.as_ref().map(format_rational),
            timed_out: e.metrics.timed_out(),
            stages: e
                .metrics
                .stages
                .iter()
                .map(|s| FileStage {
                    stage: s.stage.clone(),
                    time_s: s.elapsed.as_secs_f64(),
                    solver_calls: s.solver_calls,
                    timed_out: s.timed_out,
                })
                .collect(),
        },
        network_sha256: digest.to_string(),
        tool_version: tool_version(),
        config,
    }
}

pub fn read_explanation_file(path: &Path) -> Result<ExplanationFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Reloads a file and re-runs its validity check against `engine`.
pub fn load_explanation(path: &Path, engine: &Engine, digest: &str, budget: &Budget) -> Result<Explanation> {
    let file = read_explanation_file(path)?;
    if file.network_sha256 != digest {
        return Err(Error::Context(format!(
            "{} was computed for a different network",
            path.display()
        )));
    }
    let class = engine.network().class_index(&file.class)?;
    let formula = Formula::parse(&file.formula)?;
    let sample = file
        .sample
        .map(|vs| vs.iter().map(|v| parse_rational(v)).collect::<Result<Vec<_>>>().map(Point::new))
        .transpose()?;
    let mut e = engine.explanation(formula, class, sample, budget)?;
    e.metrics.relaxed = file.metrics.relaxed.as_deref().map(parse_rational).transpose()?;
    Ok(e)
}

fn parse_pair(text: &str, names: &[String]) -> Result<(usize, usize)> {
    match parse_order(text, names)?.as_slice() {
        [a, b] if a != b => Ok((*a, *b)),
        _ => Err(Error::Argument(format!("expected two distinct features, got {text:?}"))),
    }
}

fn describe(engine: &Engine, p: &Option<Point>) -> String {
    p.as_ref().map(|p| engine.describe_point(p)).unwrap_or_default()
}

fn percent(count: usize, total: usize) -> String {
    if total == 0 {
        return "0%".into();
    }
    let s = format!("{:.2}", 100.0 * count as f64 / total as f64);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    format!("{s}%")
}

fn compare(a: CompareArgs) -> Result<i32> {
    positive("timeout", a.timeout)?;
    let net = load_network(&a.network)?;
    let digest = file_digest(&a.network)?;
    let engine = Engine::new(net)?;
    let names = engine.feature_names().to_vec();
    let budget = Budget::seconds(a.timeout);
    let load = |p: &PathBuf| load_explanation(p, &engine, &digest, &budget);
    let files = a.files.iter().map(load).collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = match &a.baseline {
        Some(_) => (0..files.len()).map(|i| (i, files.len())).collect(),
        None => (0..files.len())
            .flat_map(|i| (i + 1..files.len()).map(move |j| (i, j)))
            .collect(),
    };
    let mut all = files;
    let mut paths = a.files.clone();
    if let Some(b) = &a.baseline {
        all.push(load(b)?);
        paths.push(b.clone());
    }
    let slice = a.slice.as_deref().map(|s| parse_pair(s, &names)).transpose()?;

    let mut counts = [0usize; 4];
    let mut pair_rows = Vec::new();
    for &(i, j) in &pairs {
        let fixed = match slice {
            Some((x, y)) => {
                let s = all[i].sample().ok_or_else(|| {
                    Error::Context(format!("{} has no sample to slice through", paths[i].display()))
                })?;
                let mut fixed = point_assignment(s, &names);
                fixed.remove(&names[x]);
                fixed.remove(&names[y]);
                Some(fixed)
            }
            None => None,
        };
        let r = compare_explanations(&all[i], &all[j], engine.domains(), &names, fixed.as_ref(), &budget)?;
        let slot = Relation::ALL.iter().position(|&x| x == r.relation).unwrap();
        counts[slot] += 1;
        pair_rows.push([
            paths[i].display().to_string(),
            paths[j].display().to_string(),
            r.relation.symbol().to_string(),
            describe(&engine, &r.only_first),
            describe(&engine, &r.only_second),
        ]);
    }

    let total = pairs.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["relation", "count", "percent"])?;
    for (rel, n) in Relation::ALL.iter().zip(counts) {
        w.write_record([rel.symbol().to_string(), n.to_string(), percent(n, total)])?;
    }
    emit(a.out.as_deref(), &csv_string(w)?)?;
    if let Some(p) = &a.pairs {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["first", "second", "relation", "only_first", "only_second"])?;
        for row in &pair_rows {
            w.write_record(row)?;
        }
        write_file(p, &csv_string(w)?)?;
    }
    Ok(EXIT_OK)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}

fn grid(a: GridArgs, slice: bool) -> Result<i32> {
    positive("timeout", a.timeout)?;
    let net = load_network(&a.network)?;
    let digest = file_digest(&a.network)?;
    let engine = Engine::new(net)?;
    let names = engine.feature_names().to_vec();
    let budget = Budget::seconds(a.timeout);
    let e = load_explanation(&a.expl, &engine, &digest, &budget)?;
    let pair = parse_pair(&a.pair, &names)?;
    let domains = engine.network().domains();
    let g = if slice {
        let sample = match &a.sample {
            Some(text) => Point::new(
                text.split(',')
                    .map(|v| parse_rational(v.trim()))
                    .collect::<Result<Vec<Rational>>>()?,
            ),
            None => e
                .sample()
                .cloned()
                .ok_or_else(|| Error::Argument("explanation has no sample; pass --sample".into()))?,
        };
        if sample.len() != names.len() {
            return Err(Error::Length {
                expected: names.len(),
                got: sample.len(),
            });
        }
        slice_grid(e.formula(), domains, &names, pair, &sample, a.grid_res)?
    } else {
        pool(a.jobs)?.install(|| {
            project_grid(e.formula(), engine.domains(), domains, &names, pair, a.grid_res, &budget)
        })?
    };
    let stem = a
        .expl
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "explanation".into());
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let file = a
        .out
        .join(format!("{stem}_{}_{}_{}.csv", names[pair.0], names[pair.1], g.mode.name()));
    write_file(&file, &g.to_csv())?;
    Ok(if g.count(Cell::Unknown) > 0 { EXIT_TIMEOUT } else { EXIT_OK })
}

fn eval(a: EvalArgs) -> Result<i32> {
    let net = load_network(&a.network)?;
    let data = load_dataset(&a.data, &net, DatasetOptions { labels: a.labels })?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row", "predicted"];
    if a.labels {
        header.push("label");
    }
    w.write_record(&header)?;
    for (row, p) in data.points.iter().enumerate() {
        let c = net.classify(p)?;
        let mut rec = vec![row.to_string(), net.class_name(c).to_string()];
        if let Some(labels) = &data.labels {
            rec.push(net.class_name(labels[row]).to_string());
        }
        w.write_record(&rec)?;
    }
    emit(a.out.as_deref(), &csv_string(w)?)?;
    Ok(EXIT_OK)
}

fn stats(a: StatsArgs) -> Result<i32> {
    let mut records = Vec::new();
    for p in &a.files {
        let f = read_explanation_file(p)?;
        records.push(RunRecord {
            pipeline: f.pipeline,
            relaxed: f.metrics.relaxed.as_deref().map(parse_rational).transpose()?,
            terms: f.metrics.terms,
            time_s: f.metrics.time_s,
            solver_calls: f.metrics.solver_calls,
        });
    }
    emit(a.out.as_deref(), &report_csv(&aggregate(&records))?)?;
    Ok(EXIT_OK)
}
