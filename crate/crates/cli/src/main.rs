mod args;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};
use thiserror::Error;

use gapk::harness::{
    self, ablation_table, apply_corpus_settings, default_workers, format_table, score_corpus,
    shuffle_control, sweep, trace_samples, ExperimentPlan, MethodScores, SweepAxis, TableRow,
    Workers,
};
use gapk::metrics::EvalReport;
use gapk::records::{parse_corpus, write_corpus, Corpus};
use gapk::synth::{synthesize, SynthConfig};
use gapk::{CorpusError, HarnessError, Method, MethodConfig, Scalar, SynthError};

use args::{
    Axis, Cli, Command, EvaluateArgs, MethodArgs, Precision, RunArgs, ScoreArgs,
    ShuffleControlArgs, SweepArgs, SynthArgs, TableArgs, TraceArgs, ValidateArgs,
};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        let msg = e.to_string();
        match e {
            HarnessError::Config(_) => CliError::Usage(msg),
            HarnessError::Corpus(_)
            | HarnessError::Metrics(_)
            | HarnessError::NoLabels
            | HarnessError::EmptyMethod { .. } => CliError::Data(msg),
            HarnessError::Output { .. } | HarnessError::Pool(_) => CliError::Internal(msg),
        }
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Validate(a) => validate(a),
        Command::Synth(a) => synth(a),
        Command::Score(a) => match a.run.precision {
            Precision::F64 => score::<f64>(a),
            Precision::F32 => score::<f32>(a),
        },
        Command::Evaluate(a) => match a.run.precision {
            Precision::F64 => evaluate::<f64>(a),
            Precision::F32 => evaluate::<f32>(a),
        },
        Command::Sweep(a) => match a.run.precision {
            Precision::F64 => sweep_cmd::<f64>(a),
            Precision::F32 => sweep_cmd::<f32>(a),
        },
        Command::Ablate(a) => match a.run.precision {
            Precision::F64 => ablate::<f64>(a),
            Precision::F32 => ablate::<f32>(a),
        },
        Command::ShuffleControl(a) => match a.table.run.precision {
            Precision::F64 => shuffle_cmd::<f64>(a),
            Precision::F32 => shuffle_cmd::<f32>(a),
        },
        Command::Trace(a) => match a.run.precision {
            Precision::F64 => trace::<f64>(a),
            Precision::F32 => trace::<f32>(a),
        },
    }
}

fn banner(command: &str, config: Value) {
    eprintln!("# gapk {command} {config}");
}

fn precision_name(p: Precision) -> &'static str {
    match p {
        Precision::F32 => "f32",
        Precision::F64 => "f64",
    }
}

fn load<T: Scalar>(path: &Path, params: Option<&MethodArgs>) -> Result<Corpus<T>> {
    let mut corpus: Corpus<T> = parse_corpus(path)?;
    if let Some(level) = params.and_then(|p| p.zlib_level) {
        corpus
            .metadata
            .insert("zlib_level".into(), level.to_string());
    }
    Ok(corpus)
}

fn workers(run: &RunArgs) -> Result<Workers> {
    let n = run.workers.unwrap_or_else(default_workers);
    if n == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    Ok(Workers::new(n)?)
}

fn check_config(config: &MethodConfig) -> Result<()> {
    config
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run_json(run: &RunArgs, workers: &Workers) -> Value {
    json!({ "workers": workers.count(), "precision": precision_name(run.precision) })
}

fn warn_skipped<T>(all: &[MethodScores<T>], total: usize) {
    for s in all.iter().filter(|s| !s.skipped.is_empty()) {
        eprintln!(
            "warning: {}: skipped {} of {} samples ({})",
            s.method,
            s.skipped.len(),
            total,
            s.skipped[0].reason
        );
    }
}

fn print_json(value: Result<Value, serde_json::Error>) -> Result<()> {
    let text = value
        .and_then(|v| serde_json::to_string_pretty(&v))
        .map_err(|e| CliError::Internal(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<()> {
    let corpus: Corpus<f64> = parse_corpus(&a.corpus)?;
    let count = |pred: fn(&Option<gapk::Label>) -> bool| {
        corpus.records.iter().filter(|r| pred(&r.label)).count()
    };
    let summary = json!({
        "records": corpus.len(),
        "member": count(|l| *l == Some(gapk::Label::Member)),
        "nonmember": count(|l| *l == Some(gapk::Label::Nonmember)),
        "unlabeled": count(|l| l.is_none()),
        "tokens": corpus.records.iter().map(|r| r.tokens.len()).sum::<usize>(),
        "with_text": corpus.records.iter().filter(|r| r.text.is_some()).count(),
        "with_neighbors": corpus.records.iter().filter(|r| r.neighbor_losses.is_some()).count(),
        "metadata": corpus.metadata,
    });
    if a.json {
        print_json(Ok(summary))
    } else {
        println!(
            "{}: ok, {} records ({} member, {} nonmember, {} unlabeled), {} tokens",
            a.corpus.display(),
            summary["records"],
            summary["member"],
            summary["nonmember"],
            summary["unlabeled"],
            summary["tokens"]
        );
        Ok(())
    }
}

fn score<T: Scalar>(a: ScoreArgs) -> Result<()> {
    let corpus: Corpus<T> = load(&a.corpus, Some(&a.params))?;
    let config = apply_corpus_settings(&a.params.config(a.method), &corpus);
    check_config(&config)?;
    let workers = workers(&a.run)?;
    banner(
        "score",
        json!({ "corpus": a.corpus, "config": config, "out": a.out, "run": run_json(&a.run, &workers) }),
    );
    let scores = score_corpus(&corpus, &config, &workers);
    warn_skipped(std::slice::from_ref(&scores), corpus.len());
    if let Some(out) = &a.out {
        harness::write_scores(out, &scores)?;
        harness::write_skip_report(out, std::slice::from_ref(&scores))?;
    }
    if a.run.json {
        for s in &scores.scores {
            println!(
                "{}",
                json!({ "sample_id": s.sample_id, "label": s.label, "score": s.score.widen() })
            );
        }
    } else {
        println!("{:<24} {:<10} {:>14}", "sample_id", "label", scores.method);
        for s in &scores.scores {
            let label = s.label.map_or("-", |l| l.as_str());
            println!(
                "{:<24} {:<10} {:>14.6}",
                s.sample_id,
                label,
                s.score.widen()
            );
        }
    }
    Ok(())
}

fn format_report(report: &EvalReport, fpr_levels: &[f64]) -> String {
    let mut out = format!("{:<16} {:>8}", "method", "auroc");
    for l in fpr_levels {
        out.push_str(&format!(" {:>12}", format!("tpr@{l}")));
    }
    out.push_str(&format!(" {:>8} {:>8}\n", "member", "nonmem"));
    for m in &report.methods {
        out.push_str(&format!("{:<16} {:>8.4}", m.method, m.auroc));
        for &l in fpr_levels {
            out.push_str(&format!(" {:>12.4}", m.tpr_at(l).unwrap_or(f64::NAN)));
        }
        out.push_str(&format!(" {:>8} {:>8}\n", m.n_member, m.n_nonmember));
    }
    out
}

fn evaluate<T: Scalar>(a: EvaluateArgs) -> Result<()> {
    let corpus: Corpus<T> = load(&a.corpus, Some(&a.params))?;
    let workers = workers(&a.run)?;
    let plan = ExperimentPlan {
        corpus_paths: vec![a.corpus.clone()],
        methods: a
            .methods
            .iter()
            .map(|&m| apply_corpus_settings(&a.params.config(m), &corpus))
            .collect(),
        fpr_levels: a.fpr.clone(),
        out_dir: a.out.clone(),
        workers: workers.count(),
        histogram_bins: a.bins,
        ..ExperimentPlan::default()
    };
    plan.validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    banner(
        "evaluate",
        json!({
            "corpus": a.corpus,
            "methods": plan.methods,
            "fpr_levels": plan.fpr_levels,
            "histogram_bins": plan.histogram_bins,
            "out": plan.out_dir,
            "run": run_json(&a.run, &workers),
        }),
    );
    let run = harness::run_corpus(&plan, &corpus, &a.corpus, &a.out, &workers)?;
    for (method, &n) in &run.skipped {
        if n > 0 {
            eprintln!("warning: {method}: skipped {n} of {} samples", corpus.len());
        }
    }
    if a.run.json {
        println!("{}", run.report.to_json());
    } else {
        print!("{}", format_report(&run.report, &a.fpr));
    }
    Ok(())
}

fn write_rows(path: &Path, rows: &[TableRow], fpr: &[f64], json_out: bool) -> Result<()> {
    harness::write_table(path, rows, fpr)?;
    if json_out {
        print_json(serde_json::to_value(rows))
    } else {
        print!("{}", format_table(rows, fpr));
        Ok(())
    }
}

fn check_fpr(fpr: &[f64]) -> Result<()> {
    if fpr.is_empty() || fpr.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
        return Err(CliError::Usage("fpr levels must lie in (0, 1)".into()));
    }
    Ok(())
}

fn sweep_cmd<T: Scalar>(a: SweepArgs) -> Result<()> {
    check_fpr(&a.fpr)?;
    let corpus: Corpus<T> = load(&a.corpus, Some(&a.params))?;
    let workers = workers(&a.run)?;
    let (axis, default_grid) = match a.axis {
        Axis::K => (SweepAxis::K, args::parse_grid("5:50:5")),
        Axis::Window => (SweepAxis::Window, args::parse_grid("1:10")),
    };
    let grid = a
        .grid
        .clone()
        .map_or_else(|| default_grid.map(|g| g.0), |g| Ok(g.0))
        .map_err(CliError::Usage)?;
    let methods: Vec<MethodConfig> = a
        .methods
        .iter()
        .map(|&m| apply_corpus_settings(&a.params.config(m), &corpus))
        .collect();
    for m in &methods {
        check_config(m)?;
    }
    banner(
        "sweep",
        json!({
            "corpus": a.corpus,
            "axis": axis,
            "grid": grid,
            "methods": methods,
            "fpr_levels": a.fpr,
            "out": a.out,
            "run": run_json(&a.run, &workers),
        }),
    );
    let rows = sweep(&corpus, &methods, axis, &grid, &a.fpr, &workers)?;
    let path = a.out.join("sweeps").join(format!("{}.csv", axis.as_str()));
    write_rows(&path, &rows, &a.fpr, a.run.json)
}

fn ablate<T: Scalar>(a: TableArgs) -> Result<()> {
    check_fpr(&a.fpr)?;
    let corpus: Corpus<T> = load(&a.corpus, Some(&a.params))?;
    let workers = workers(&a.run)?;
    let base = a.params.config(Method::GapK);
    check_config(&base)?;
    banner(
        "ablate",
        json!({
            "corpus": a.corpus,
            "base": base,
            "fpr_levels": a.fpr,
            "out": a.out,
            "run": run_json(&a.run, &workers),
        }),
    );
    let rows = ablation_table(&corpus, &base, &a.fpr, &workers)?;
    write_rows(
        &a.out.join("tables").join("ablation.csv"),
        &rows,
        &a.fpr,
        a.run.json,
    )
}

fn shuffle_cmd<T: Scalar>(a: ShuffleControlArgs) -> Result<()> {
    let t = &a.table;
    check_fpr(&t.fpr)?;
    let corpus: Corpus<T> = load(&t.corpus, Some(&t.params))?;
    let workers = workers(&t.run)?;
    let config = t.params.config(Method::GapK);
    check_config(&config)?;
    banner(
        "shuffle-control",
        json!({
            "corpus": t.corpus,
            "config": config,
            "seed": a.seed,
            "fpr_levels": t.fpr,
            "out": t.out,
            "run": run_json(&t.run, &workers),
        }),
    );
    let rows = shuffle_control(&corpus, &config, a.seed, &t.fpr, &workers)?;
    write_rows(
        &t.out.join("tables").join("shuffle_control.csv"),
        &rows,
        &t.fpr,
        t.run.json,
    )
}

fn trace<T: Scalar>(a: TraceArgs) -> Result<()> {
    let corpus: Corpus<T> = load(&a.corpus, Some(&a.params))?;
    let config = apply_corpus_settings(&a.params.config(a.method), &corpus);
    check_config(&config)?;
    banner(
        "trace",
        json!({ "corpus": a.corpus, "ids": a.ids, "config": config, "out": a.out }),
    );
    if let Some(missing) = a.ids.iter().find(|id| corpus.get(id).is_none()) {
        return Err(CliError::Data(format!("unknown sample_id {missing:?}")));
    }
    let traces = trace_samples(&corpus, &a.ids, &config)?;
    if let Some(out) = &a.out {
        harness::write_traces(out, &traces)?;
    }
    if a.run.json {
        return print_json(serde_json::to_value(&traces));
    }
    for t in &traces {
        let label = t.label.map_or("-", |l| l.as_str());
        println!("{} [{label}] {} = {:.6}", t.sample_id, t.method, t.score);
        if t.raw_scores.is_empty() {
            continue;
        }
        println!("  {:>5} {:>12} {:>12}", "pos", "raw", "smoothed");
        for (i, raw) in t.raw_scores.iter().enumerate() {
            let smoothed = t
                .smoothed_scores
                .get(i)
                .map_or(String::new(), |s| format!("{s:.6}"));
            let mark = if t.selected_indices.contains(&i) {
                " *"
            } else {
                ""
            };
            println!("  {i:>5} {raw:>12.6} {smoothed:>12}{mark}");
        }
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?
        }
        None => SynthConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = a.$field { config.$field = v; })* };
    }
    set!(
        seed,
        vocab_size,
        order,
        n_member,
        n_nonmember,
        seq_len,
        train_passes,
        dirichlet_alpha,
        n_neighbors,
        neighbor_mask_frac
    );
    config.validate()?;
    banner("synth", json!({ "config": config, "out": a.out }));
    let corpus: Corpus<f64> = synthesize(&config)?;
    write_corpus(&corpus, &a.out).map_err(|e| CliError::Internal(e.to_string()))?;
    println!("wrote {} records to {}", corpus.len(), a.out.display());
    Ok(())
}
