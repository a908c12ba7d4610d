//! Experiment orchestration: method grids, sweeps, ablation layouts and
//! on-disk artifacts.
//!
//! Output layout under the plan's output directory:
//!
//! ```text
//! scores/<method>.jsonl      one {"sample_id","label","score"} per scored sample
//! reports/eval.json          EvalReport
//! reports/eval.csv           flat method,metric,value table
//! reports/skipped.json       per-method samples lacking a required input
//! sweeps/{k,window}.csv      param,method,auroc,tpr_at_fpr_<level>...,n
//! tables/<name>.csv          ablation and shuffle-control rows, same columns
//! traces/<sample_id>.json    token-level trace for requested samples
//! ```
//!
//! Scoring fans out over a fixed-size worker pool; results are gathered in
//! corpus order and then sorted by `sample_id`, so nothing written depends
//! on the worker count.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ConfigError, HarnessError};
use crate::metrics::{
    method_report, EvalReport, ScoredSample, TprAtFpr, DEFAULT_FPR_LEVEL, DEFAULT_HISTOGRAM_BINS,
};
use crate::records::{parse_corpus, Corpus, Label};
use crate::scalar::Scalar;
use crate::scoring::{
    sample_seed, score_sample_with, shuffle_permutation, Method, MethodConfig, SmoothingOrder,
    TokenScoreTrace,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    K,
    Window,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::K => "k",
            SweepAxis::Window => "window",
        }
    }
}

/// Everything needed to reproduce one evaluation run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub corpus_paths: Vec<PathBuf>,
    pub methods: Vec<MethodConfig>,
    pub fpr_levels: Vec<f64>,
    pub k_grid: Vec<f64>,
    pub window_grid: Vec<usize>,
    /// Sweeps to run in addition to the main evaluation.
    pub sweeps: Vec<SweepAxis>,
    pub out_dir: PathBuf,
    pub workers: usize,
    pub histogram_bins: usize,
    pub trace_ids: Vec<String>,
    pub trace_method: MethodConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            corpus_paths: Vec::new(),
            methods: Method::MAIN.iter().map(|&m| MethodConfig::new(m)).collect(),
            fpr_levels: vec![DEFAULT_FPR_LEVEL],
            k_grid: (1..=10).map(|i| (i * 5) as f64).collect(),
            window_grid: (1..=10).collect(),
            sweeps: Vec::new(),
            out_dir: PathBuf::from("gapk-out"),
            workers: default_workers(),
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
            trace_ids: Vec::new(),
            trace_method: MethodConfig::new(Method::GapK),
        }
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.methods.is_empty() {
            return Err(ConfigError::Other("at least one method is required".into()));
        }
        for m in &self.methods {
            m.validate()?;
        }
        self.trace_method.validate()?;
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.method.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::Other(
                "each method may appear only once".into(),
            ));
        }
        if self.fpr_levels.is_empty() || self.fpr_levels.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
            return Err(ConfigError::Other(
                "fpr levels must be non-empty and lie in (0, 1)".into(),
            ));
        }
        if self.k_grid.is_empty() || self.window_grid.is_empty() {
            return Err(ConfigError::Other("sweep grids must be non-empty".into()));
        }
        if let Some(&k) = self.k_grid.iter().find(|&&k| !(k > 0.0 && k <= 100.0)) {
            return Err(ConfigError::KPercent(k));
        }
        if self.window_grid.contains(&0) {
            return Err(ConfigError::Window);
        }
        if self.workers == 0 {
            return Err(ConfigError::Other("workers must be at least 1".into()));
        }
        if self.histogram_bins == 0 {
            return Err(ConfigError::Other(
                "histogram bins must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Fixed-size pool used for the per-sample map phase.
pub struct Workers {
    pool: rayon::ThreadPool,
}

impl Workers {
    pub fn new(n: usize) -> Result<Self, HarnessError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?;
        Ok(Self { pool })
    }

    pub fn count(&self) -> usize {
        self.pool.current_num_threads()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleScore<T> {
    pub sample_id: String,
    pub label: Option<Label>,
    pub score: T,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Skipped {
    pub sample_id: String,
    pub reason: String,
}

/// Scores of one method over a corpus, sorted by `sample_id`.
#[derive(Clone, Debug, PartialEq)]
pub struct MethodScores<T> {
    pub method: String,
    pub scores: Vec<SampleScore<T>>,
    pub skipped: Vec<Skipped>,
}

impl<T: Scalar> MethodScores<T> {
    /// Labeled scores in the form the metrics module consumes.
    pub fn labeled(&self) -> Vec<ScoredSample<T>> {
        self.scores
            .iter()
            .filter_map(|s| {
                s.label.map(|label| ScoredSample {
                    sample_id: s.sample_id.clone(),
                    label,
                    scores: BTreeMap::from([(self.method.clone(), s.score)]),
                })
            })
            .collect()
    }

    fn n_labeled(&self) -> usize {
        self.scores.iter().filter(|s| s.label.is_some()).count()
    }
}

type Permuter<'a> = dyn Fn(&str, usize) -> Vec<usize> + Sync + 'a;

fn seeded_permuter(order: SmoothingOrder) -> impl Fn(&str, usize) -> Vec<usize> + Sync {
    move |id: &str, len: usize| match order {
        SmoothingOrder::Sequential => (0..len).collect(),
        SmoothingOrder::Shuffled { seed } => shuffle_permutation(sample_seed(seed, id), len),
    }
}

/// Scores every record with one method. Records missing a required input are
/// listed in `skipped`.
pub fn score_corpus<T: Scalar>(
    corpus: &Corpus<T>,
    config: &MethodConfig,
    workers: &Workers,
) -> MethodScores<T> {
    score_corpus_with(
        corpus,
        config,
        workers,
        &seeded_permuter(config.smoothing_order),
    )
}

/// [`score_corpus`] with an explicit shuffle permutation source.
pub fn score_corpus_with<T: Scalar>(
    corpus: &Corpus<T>,
    config: &MethodConfig,
    workers: &Workers,
    permuter: &Permuter<'_>,
) -> MethodScores<T> {
    let results: Vec<_> = workers.pool.install(|| {
        corpus
            .records
            .par_iter()
            .map(|r| (r, score_sample_with(r, config, permuter)))
            .collect()
    });
    let mut scores = Vec::new();
    let mut skipped = Vec::new();
    for (record, result) in results {
        match result {
            Ok((score, _)) => scores.push(SampleScore {
                sample_id: record.sample_id.clone(),
                label: record.label,
                score,
            }),
            Err(e) => skipped.push(Skipped {
                sample_id: record.sample_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    scores.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    skipped.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    MethodScores {
        method: config.method.as_str().to_string(),
        scores,
        skipped,
    }
}

/// Applies corpus-level settings (currently `zlib_level`) to a method config.
pub fn apply_corpus_settings<T>(config: &MethodConfig, corpus: &Corpus<T>) -> MethodConfig {
    let mut config = config.clone();
    if let Some(level) = corpus
        .metadata
        .get("zlib_level")
        .and_then(|v| v.parse().ok())
    {
        config.zlib_level = level;
    }
    config
}

fn require_labels<T>(corpus: &Corpus<T>) -> Result<(), HarnessError> {
    if corpus.records.iter().any(|r| r.label.is_some()) {
        Ok(())
    } else {
        Err(HarnessError::NoLabels)
    }
}

fn scored_or_empty<T: Scalar>(scores: MethodScores<T>) -> Result<MethodScores<T>, HarnessError> {
    if scores.n_labeled() == 0 {
        return Err(HarnessError::EmptyMethod {
            method: scores.method,
            skipped: scores.skipped.len(),
        });
    }
    Ok(scores)
}

/// Scores and evaluates every configured method on a labeled corpus.
pub fn evaluate_corpus<T: Scalar>(
    corpus: &Corpus<T>,
    methods: &[MethodConfig],
    fpr_levels: &[f64],
    histogram_bins: usize,
    workers: &Workers,
) -> Result<(EvalReport, Vec<MethodScores<T>>), HarnessError> {
    require_labels(corpus)?;
    let mut report = EvalReport::default();
    let mut all = Vec::with_capacity(methods.len());
    for config in methods {
        config.validate()?;
        let config = apply_corpus_settings(config, corpus);
        let scores = scored_or_empty(score_corpus(corpus, &config, workers))?;
        report.methods.push(method_report(
            &scores.labeled(),
            &scores.method,
            fpr_levels,
            histogram_bins,
        )?);
        all.push(scores);
    }
    Ok((report, all))
}

/// One row of a sweep or ablation table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub param: String,
    pub method: String,
    pub auroc: f64,
    pub tpr_at_fpr: Vec<TprAtFpr>,
    pub n: usize,
}

fn table_row<T: Scalar>(
    param: String,
    scores: MethodScores<T>,
    fpr_levels: &[f64],
) -> Result<TableRow, HarnessError> {
    let scores = scored_or_empty(scores)?;
    let report = method_report(&scores.labeled(), &scores.method, fpr_levels, 1)?;
    Ok(TableRow {
        param,
        method: scores.method,
        auroc: report.auroc,
        tpr_at_fpr: report.tpr_at_fpr,
        n: report.n_member + report.n_nonmember,
    })
}

fn format_param(v: f64) -> String {
    v.to_string()
}

/// AUROC/TPR for every method that uses the swept parameter, at each grid
/// value. Rows are grouped by parameter value, methods in plan order.
pub fn sweep<T: Scalar>(
    corpus: &Corpus<T>,
    methods: &[MethodConfig],
    axis: SweepAxis,
    grid: &[f64],
    fpr_levels: &[f64],
    workers: &Workers,
) -> Result<Vec<TableRow>, HarnessError> {
    require_labels(corpus)?;
    let relevant: Vec<&MethodConfig> = methods
        .iter()
        .filter(|m| match axis {
            SweepAxis::K => m.method.uses_k(),
            SweepAxis::Window => m.method.uses_window(),
        })
        .collect();
    if relevant.is_empty() {
        return Err(ConfigError::Other(format!(
            "no selected method depends on the {} parameter",
            axis.as_str()
        ))
        .into());
    }
    let mut rows = Vec::new();
    for &value in grid {
        for base in &relevant {
            let mut config = apply_corpus_settings(base, corpus);
            match axis {
                SweepAxis::K => config.k_percent = value,
                SweepAxis::Window => {
                    if value < 1.0 || value.fract() != 0.0 {
                        return Err(ConfigError::Window.into());
                    }
                    config.window = value as usize;
                }
            }
            config.validate()?;
            rows.push(table_row(
                format_param(value),
                score_corpus(corpus, &config, workers),
                fpr_levels,
            )?);
        }
    }
    Ok(rows)
}

/// Component ablation relative to Min-K%++: plain, with the top-1 gap, with
/// smoothing, and both (Gap-K%). All rows share `base`'s k and window.
pub fn ablation_table<T: Scalar>(
    corpus: &Corpus<T>,
    base: &MethodConfig,
    fpr_levels: &[f64],
    workers: &Workers,
) -> Result<Vec<TableRow>, HarnessError> {
    require_labels(corpus)?;
    base.validate()?;
    let rows = [
        ("Min-K%++", Method::MinKpp),
        ("+ Top-1", Method::GapKUnsmoothedTop1),
        ("+ Smoothing", Method::MinKppSmoothed),
        ("Gap-K%", Method::GapK),
    ];
    rows.into_iter()
        .map(|(label, method)| {
            let config = base.clone().with_method(method);
            table_row(
                label.to_string(),
                score_corpus(corpus, &config, workers),
                fpr_levels,
            )
        })
        .collect()
}

/// Sequential-locality control: no smoothing, smoothing after a seeded
/// shuffle of token order, and sequential smoothing.
pub fn shuffle_control<T: Scalar>(
    corpus: &Corpus<T>,
    config: &MethodConfig,
    seed: u64,
    fpr_levels: &[f64],
    workers: &Workers,
) -> Result<Vec<TableRow>, HarnessError> {
    let order = SmoothingOrder::Shuffled { seed };
    shuffle_control_with(corpus, config, &seeded_permuter(order), fpr_levels, workers)
}

/// [`shuffle_control`] with an explicit permutation source for the shuffled
/// row.
pub fn shuffle_control_with<T: Scalar>(
    corpus: &Corpus<T>,
    config: &MethodConfig,
    permuter: &Permuter<'_>,
    fpr_levels: &[f64],
    workers: &Workers,
) -> Result<Vec<TableRow>, HarnessError> {
    require_labels(corpus)?;
    config.validate()?;
    if !config.method.uses_window() {
        return Err(ConfigError::Other(format!(
            "shuffle control needs a smoothed method, got {}",
            config.method
        ))
        .into());
    }
    let sequential = config.clone().with_order(SmoothingOrder::Sequential);
    let unsmoothed = sequential.clone().with_window(1);
    // The seed is irrelevant here: the permuter decides the order.
    let shuffled = config
        .clone()
        .with_order(SmoothingOrder::Shuffled { seed: 0 });
    Ok(vec![
        table_row(
            "No smoothing".into(),
            score_corpus(corpus, &unsmoothed, workers),
            fpr_levels,
        )?,
        table_row(
            "Shuffled-order smoothing".into(),
            score_corpus_with(corpus, &shuffled, workers, permuter),
            fpr_levels,
        )?,
        table_row(
            "Sequential smoothing".into(),
            score_corpus(corpus, &sequential, workers),
            fpr_levels,
        )?,
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub sample_id: String,
    pub method: String,
    pub label: Option<Label>,
    pub score: f64,
    pub raw_scores: Vec<f64>,
    pub smoothed_scores: Vec<f64>,
    pub selected_indices: Vec<usize>,
}

/// Token-level traces for the requested samples.
pub fn trace_samples<T: Scalar>(
    corpus: &Corpus<T>,
    ids: &[String],
    config: &MethodConfig,
) -> Result<Vec<TraceRecord>, HarnessError> {
    config.validate()?;
    let config = apply_corpus_settings(config, corpus);
    let permuter = seeded_permuter(config.smoothing_order);
    ids.iter()
        .map(|id| {
            let record = corpus
                .get(id)
                .ok_or_else(|| ConfigError::Other(format!("unknown sample_id {id:?}")))?;
            let (score, trace): (T, TokenScoreTrace<T>) =
                score_sample_with(record, &config, &permuter)
                    .map_err(|e| ConfigError::Other(e.to_string()))?;
            let widen = |v: Vec<T>| v.into_iter().map(Scalar::widen).collect();
            Ok(TraceRecord {
                sample_id: id.clone(),
                method: config.method.as_str().to_string(),
                label: record.label,
                score: score.widen(),
                raw_scores: widen(trace.raw_scores),
                smoothed_scores: widen(trace.smoothed_scores),
                selected_indices: trace.selected_indices,
            })
        })
        .collect()
}

/// Writes a sweep or ablation table as CSV with header
/// `param,method,auroc,tpr_at_fpr_<level>...,n`.
pub fn write_table_csv<W: Write>(
    writer: W,
    rows: &[TableRow],
    fpr_levels: &[f64],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["param".to_string(), "method".into(), "auroc".into()];
    header.extend(fpr_levels.iter().map(|l| format!("tpr_at_fpr_{l}")));
    header.push("n".into());
    w.write_record(&header)?;
    for row in rows {
        let mut rec = vec![row.param.clone(), row.method.clone(), row.auroc.to_string()];
        for &level in fpr_levels {
            let tpr = row
                .tpr_at_fpr
                .iter()
                .find(|p| p.fpr == level)
                .map_or(f64::NAN, |p| p.tpr);
            rec.push(tpr.to_string());
        }
        rec.push(row.n.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Renders a table as aligned text for terminals.
pub fn format_table(rows: &[TableRow], fpr_levels: &[f64]) -> String {
    let mut out = format!("{:<26} {:<16} {:>8}", "param", "method", "auroc");
    for l in fpr_levels {
        out.push_str(&format!(" {:>12}", format!("tpr@{l}")));
    }
    out.push_str(&format!(" {:>6}\n", "n"));
    for r in rows {
        out.push_str(&format!(
            "{:<26} {:<16} {:>8.4}",
            r.param, r.method, r.auroc
        ));
        for &l in fpr_levels {
            let tpr = r
                .tpr_at_fpr
                .iter()
                .find(|p| p.fpr == l)
                .map_or(f64::NAN, |p| p.tpr);
            out.push_str(&format!(" {tpr:>12.4}"));
        }
        out.push_str(&format!(" {:>6}\n", r.n));
    }
    out
}

/// Replaces characters that are unsafe in file names.
pub fn file_stem_for(sample_id: &str) -> String {
    sample_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>,
) -> Result<(), HarnessError> {
    let err = |source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(err)?;
    }
    let mut buf = Vec::new();
    body(&mut buf).map_err(err)?;
    fs::write(path, buf).map_err(err)
}

fn csv_io(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    sample_id: &'a str,
    label: Option<Label>,
    score: f64,
}

/// Writes `scores/<method>.jsonl`.
pub fn write_scores<T: Scalar>(
    out_dir: &Path,
    scores: &MethodScores<T>,
) -> Result<(), HarnessError> {
    let path = out_dir
        .join("scores")
        .join(format!("{}.jsonl", scores.method));
    write_file(&path, |buf| {
        for s in &scores.scores {
            serde_json::to_writer(
                &mut *buf,
                &ScoreLine {
                    sample_id: &s.sample_id,
                    label: s.label,
                    score: s.score.widen(),
                },
            )?;
            buf.push(b'\n');
        }
        Ok(())
    })
}

#[derive(Serialize)]
struct SkipReport<'a> {
    method: &'a str,
    n_scored: usize,
    n_skipped: usize,
    skipped: &'a [Skipped],
}

/// Writes `reports/skipped.json`.
pub fn write_skip_report<T>(out_dir: &Path, all: &[MethodScores<T>]) -> Result<(), HarnessError> {
    let body: Vec<SkipReport> = all
        .iter()
        .map(|s| SkipReport {
            method: &s.method,
            n_scored: s.scores.len(),
            n_skipped: s.skipped.len(),
            skipped: &s.skipped,
        })
        .collect();
    write_file(&out_dir.join("reports").join("skipped.json"), |buf| {
        serde_json::to_writer_pretty(&mut *buf, &body)?;
        buf.push(b'\n');
        Ok(())
    })
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<(), HarnessError> {
    write_file(path, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value)?;
        buf.push(b'\n');
        Ok(())
    })
}

pub fn write_table(path: &Path, rows: &[TableRow], fpr_levels: &[f64]) -> Result<(), HarnessError> {
    write_file(path, |buf| {
        write_table_csv(buf, rows, fpr_levels).map_err(csv_io)
    })
}

pub fn write_traces(out_dir: &Path, traces: &[TraceRecord]) -> Result<(), HarnessError> {
    for t in traces {
        let path = out_dir
            .join("traces")
            .join(format!("{}.json", file_stem_for(&t.sample_id)));
        write_json(&path, t)?;
    }
    Ok(())
}

/// Results of [`run`] for one corpus.
#[derive(Clone, Debug)]
pub struct CorpusRun {
    pub corpus_path: PathBuf,
    pub out_dir: PathBuf,
    pub report: EvalReport,
    pub sweeps: Vec<(SweepAxis, Vec<TableRow>)>,
    pub skipped: BTreeMap<String, usize>,
}

/// Runs the whole plan and writes every artifact. With several corpora each
/// gets its own subdirectory named after the corpus file stem.
pub fn run<T: Scalar>(plan: &ExperimentPlan) -> Result<Vec<CorpusRun>, HarnessError> {
    plan.validate()?;
    if plan.corpus_paths.is_empty() {
        return Err(ConfigError::Other("no corpus given".into()).into());
    }
    let workers = Workers::new(plan.workers)?;
    let mut runs = Vec::new();
    for path in &plan.corpus_paths {
        let corpus: Corpus<T> = parse_corpus(path)?;
        let out_dir = if plan.corpus_paths.len() > 1 {
            let stem = path
                .file_name()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_else(|| "corpus".into());
            let stem = stem.split('.').next().unwrap_or("corpus").to_string();
            plan.out_dir.join(file_stem_for(&stem))
        } else {
            plan.out_dir.clone()
        };
        runs.push(run_corpus(plan, &corpus, path, &out_dir, &workers)?);
    }
    Ok(runs)
}

/// [`run`] for an already-parsed corpus.
pub fn run_corpus<T: Scalar>(
    plan: &ExperimentPlan,
    corpus: &Corpus<T>,
    corpus_path: &Path,
    out_dir: &Path,
    workers: &Workers,
) -> Result<CorpusRun, HarnessError> {
    plan.validate()?;
    let (report, all) = evaluate_corpus(
        corpus,
        &plan.methods,
        &plan.fpr_levels,
        plan.histogram_bins,
        workers,
    )?;
    for scores in &all {
        write_scores(out_dir, scores)?;
    }
    write_skip_report(out_dir, &all)?;
    write_json(&out_dir.join("reports").join("eval.json"), &report)?;
    write_file(&out_dir.join("reports").join("eval.csv"), |buf| {
        report.write_csv(buf).map_err(csv_io)
    })?;

    let mut sweeps = Vec::new();
    for &axis in &plan.sweeps {
        let grid: Vec<f64> = match axis {
            SweepAxis::K => plan.k_grid.clone(),
            SweepAxis::Window => plan.window_grid.iter().map(|&w| w as f64).collect(),
        };
        let rows = sweep(
            corpus,
            &plan.methods,
            axis,
            &grid,
            &plan.fpr_levels,
            workers,
        )?;
        write_table(
            &out_dir
                .join("sweeps")
                .join(format!("{}.csv", axis.as_str())),
            &rows,
            &plan.fpr_levels,
        )?;
        sweeps.push((axis, rows));
    }

    if !plan.trace_ids.is_empty() {
        let traces = trace_samples(corpus, &plan.trace_ids, &plan.trace_method)?;
        write_traces(out_dir, &traces)?;
    }

    Ok(CorpusRun {
        corpus_path: corpus_path.to_path_buf(),
        out_dir: out_dir.to_path_buf(),
        report,
        sweeps,
        skipped: all
            .iter()
            .map(|s| (s.method.clone(), s.skipped.len()))
            .collect(),
    })
}
