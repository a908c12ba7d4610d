//! Synthetic benchmark and harness end to end.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use gapk::harness::{
    self, ablation_table, evaluate_corpus, score_corpus, shuffle_control, shuffle_control_with,
    sweep, ExperimentPlan, SweepAxis, Workers,
};
use gapk::metrics;
use gapk::records::{parse_corpus, write_corpus, Corpus, Label, SampleRecord, TokenStats};
use gapk::scoring::{gap_scores, Method, MethodConfig};
use gapk::synth::{build_toy_lm, emit_records, synthesize, SynthConfig};

fn small_config() -> SynthConfig {
    SynthConfig {
        vocab_size: 16,
        n_member: 40,
        n_nonmember: 40,
        seq_len: 24,
        train_passes: 1,
        dirichlet_alpha: 1.0,
        n_neighbors: 3,
        ..SynthConfig::default()
    }
}

/// Brute-force statistics straight from the model's conditional.
fn brute(p: &[f64], target: usize) -> [f64; 4] {
    let logs: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let top1 = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean: f64 = p.iter().zip(&logs).map(|(a, b)| a * b).sum();
    let var: f64 = p
        .iter()
        .zip(&logs)
        .map(|(a, b)| a * (b - mean).powi(2))
        .sum();
    [logs[target], top1, mean, var.sqrt()]
}

#[test]
fn emitted_statistics_are_exact() {
    let bench = build_toy_lm(&small_config()).unwrap();
    let texts: Vec<Vec<u32>> = bench
        .members
        .iter()
        .chain(&bench.nonmembers)
        .cloned()
        .collect();
    let labels = vec![None; texts.len()];
    let corpus: Corpus<f64> = emit_records(&bench.lm, &texts, &labels).unwrap();
    let order = bench.lm.order;
    for (rec, seq) in corpus.records.iter().zip(&texts) {
        assert_eq!(rec.tokens.len(), seq.len() - order);
        rec.validate().unwrap();
        for (i, tok) in rec.tokens.iter().enumerate() {
            let t = i + order;
            let want = brute(&bench.lm.conditional(&seq[t - order..t]), seq[t] as usize);
            for (a, b) in tok.to_array().iter().zip(want) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn synthetic_corpus_survives_the_file_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.jsonl");
    let corpus: Corpus<f64> = synthesize(&small_config()).unwrap();
    write_corpus(&corpus, &path).unwrap();
    assert_eq!(parse_corpus::<f64>(&path).unwrap(), corpus);
    assert_eq!(corpus.metadata["zlib_level"], "6");
    assert!(corpus
        .records
        .iter()
        .all(|r| r.neighbor_losses.as_ref().unwrap().len() == 3));
}

fn tiny_corpus() -> Corpus<f64> {
    let rec = |id: &str, label, targets: &[f64]| SampleRecord {
        sample_id: id.to_string(),
        label: Some(label),
        text: None,
        tokens: targets
            .iter()
            .map(|&t| TokenStats::new(t, -0.1, -2.0, 1.0).unwrap())
            .collect(),
        neighbor_losses: None,
    };
    Corpus::new(vec![
        rec("d", Label::Nonmember, &[-3.0, -2.5, -0.2, -4.0, -1.0]),
        rec("a", Label::Member, &[-0.5, -0.2, -0.9, -1.0, -0.3]),
        rec("c", Label::Nonmember, &[-0.4, -0.3, -2.0, -0.6, -0.9]),
        rec("b", Label::Member, &[-1.5, -0.1, -0.2, -0.4, -0.1]),
    ])
}

#[test]
fn harness_auroc_equals_direct_metric_calls() {
    let corpus = tiny_corpus();
    let workers = Workers::new(2).unwrap();
    let methods = [
        MethodConfig::new(Method::Loss),
        MethodConfig::new(Method::MinK),
    ];
    let (report, _) = evaluate_corpus(&corpus, &methods, &[0.05], 5, &workers).unwrap();
    assert_eq!(report.methods.len(), 2);

    for cfg in &methods {
        let scored: Vec<metrics::ScoredSample<f64>> = corpus
            .records
            .iter()
            .map(|r| metrics::ScoredSample {
                sample_id: r.sample_id.clone(),
                label: r.label.unwrap(),
                scores: BTreeMap::from([(
                    cfg.method.to_string(),
                    gapk::scoring::score_sample(r, cfg).unwrap().0,
                )]),
            })
            .collect();
        let name = cfg.method.as_str();
        assert_eq!(
            report.get(name).unwrap().auroc,
            metrics::auroc(&scored, name).unwrap()
        );
    }
    // Loss: a=-0.58 b=-0.46 c=-0.84 d=-2.14 -> perfect separation.
    assert_eq!(report.get("loss").unwrap().auroc, 1.0);
}

#[test]
fn window_one_sweep_row_equals_unsmoothed_gap() {
    let corpus: Corpus<f64> = synthesize(&small_config()).unwrap();
    let workers = Workers::new(3).unwrap();
    let rows = sweep(
        &corpus,
        &[MethodConfig::new(Method::GapK)],
        SweepAxis::Window,
        &[1.0, 2.0, 3.0],
        &[0.05],
        &workers,
    )
    .unwrap();
    assert_eq!(rows.len(), 3);
    let (plain, _) = evaluate_corpus(
        &corpus,
        &[MethodConfig::new(Method::GapKUnsmoothedTop1)],
        &[0.05],
        10,
        &workers,
    )
    .unwrap();
    assert_eq!(rows[0].param, "1");
    assert_eq!(rows[0].auroc, plain.methods[0].auroc);
    assert_eq!(rows[0].tpr_at_fpr, plain.methods[0].tpr_at_fpr);
}

#[test]
fn k_sweep_covers_every_k_method() {
    let corpus: Corpus<f64> = synthesize(&small_config()).unwrap();
    let workers = Workers::new(2).unwrap();
    let methods: Vec<_> = Method::MAIN.iter().map(|&m| MethodConfig::new(m)).collect();
    let rows = sweep(
        &corpus,
        &methods,
        SweepAxis::K,
        &[5.0, 50.0],
        &[0.05],
        &workers,
    )
    .unwrap();
    let names: Vec<_> = rows
        .iter()
        .map(|r| (r.param.as_str(), r.method.as_str()))
        .collect();
    assert_eq!(
        names,
        vec![
            ("5", "mink"),
            ("5", "minkpp"),
            ("5", "gapk"),
            ("50", "mink"),
            ("50", "minkpp"),
            ("50", "gapk")
        ]
    );
    assert!(sweep(
        &corpus,
        &[MethodConfig::new(Method::Loss)],
        SweepAxis::K,
        &[5.0],
        &[0.05],
        &workers
    )
    .is_err());
}

#[test]
fn constant_gap_corpus_gives_chance_ablation() {
    let rec = |id: &str, label| SampleRecord {
        sample_id: id.to_string(),
        label: Some(label),
        text: None,
        tokens: vec![TokenStats::new(-0.3, -0.3, -1.0, 0.5).unwrap(); 6],
        neighbor_losses: None,
    };
    let corpus = Corpus::new(vec![
        rec("a", Label::Member),
        rec("b", Label::Nonmember),
        rec("c", Label::Member),
    ]);
    let workers = Workers::new(1).unwrap();
    let rows = ablation_table(&corpus, &MethodConfig::default(), &[0.05], &workers).unwrap();
    let labels: Vec<_> = rows.iter().map(|r| r.param.as_str()).collect();
    assert_eq!(labels, ["Min-K%++", "+ Top-1", "+ Smoothing", "Gap-K%"]);
    for r in &rows {
        assert_eq!(r.auroc, 0.5);
    }
    for rec in &corpus.records {
        assert!(gap_scores(rec, 1e-6).iter().all(|&g| g == 0.0));
    }
}

#[test]
fn unit_window_ablation_rows_coincide() {
    let corpus: Corpus<f64> = synthesize(&small_config()).unwrap();
    let workers = Workers::new(2).unwrap();
    let base = MethodConfig::default().with_window(1);
    let rows = ablation_table(&corpus, &base, &[0.05], &workers).unwrap();
    assert_eq!(rows[0].auroc, rows[2].auroc);
    assert_eq!(rows[1].auroc, rows[3].auroc);

    let rows = shuffle_control(&corpus, &base, 9, &[0.05], &workers).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows
        .iter()
        .all(|r| r.auroc == rows[0].auroc && r.tpr_at_fpr == rows[0].tpr_at_fpr));
}

#[test]
fn identity_permutation_makes_shuffled_row_sequential() {
    let corpus: Corpus<f64> = synthesize(&small_config()).unwrap();
    let workers = Workers::new(2).unwrap();
    let cfg = MethodConfig::default().with_window(3);
    let rows =
        shuffle_control_with(&corpus, &cfg, &|_, n| (0..n).collect(), &[0.05], &workers).unwrap();
    assert_eq!(rows[1].auroc, rows[2].auroc);
    assert_eq!(rows[1].tpr_at_fpr, rows[2].tpr_at_fpr);
    // A real shuffle generally differs.
    let rows = shuffle_control(&corpus, &cfg, 1, &[0.05], &workers).unwrap();
    let seq = score_corpus(&corpus, &cfg, &workers);
    let shuf = score_corpus(
        &corpus,
        &cfg.clone()
            .with_order(gapk::SmoothingOrder::Shuffled { seed: 1 }),
        &workers,
    );
    assert_ne!(seq.scores, shuf.scores);
    assert!(rows.iter().all(|r| r.auroc.is_finite()));
}

#[test]
fn skip_accounting_is_complete() {
    let mut corpus: Corpus<f64> = synthesize(&small_config()).unwrap();
    for r in corpus.records.iter_mut().step_by(3) {
        r.text = None;
        r.neighbor_losses = None;
    }
    let workers = Workers::new(4).unwrap();
    for m in Method::ALL {
        let s = score_corpus(&corpus, &MethodConfig::new(m), &workers);
        assert_eq!(s.scores.len() + s.skipped.len(), corpus.len(), "{m}");
    }
    let s = score_corpus(&corpus, &MethodConfig::new(Method::Zlib), &workers);
    assert_eq!(s.skipped.len(), corpus.len().div_ceil(3));
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .to_string();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn run_writes_the_documented_layout_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let corpus_path = dir.path().join("c.jsonl");
    write_corpus(&synthesize::<f64>(&small_config()).unwrap(), &corpus_path).unwrap();

    let plan = |workers, out: &str| ExperimentPlan {
        corpus_paths: vec![corpus_path.clone()],
        sweeps: vec![SweepAxis::K, SweepAxis::Window],
        k_grid: vec![10.0, 20.0],
        window_grid: vec![1, 4],
        out_dir: dir.path().join(out),
        workers,
        trace_ids: vec!["syn-00001".into()],
        ..ExperimentPlan::default()
    };
    let runs = harness::run::<f64>(&plan(1, "one")).unwrap();
    harness::run::<f64>(&plan(1, "again")).unwrap();
    harness::run::<f64>(&plan(4, "four")).unwrap();

    let one = read_tree(&dir.path().join("one"));
    let files: Vec<_> = one.keys().cloned().collect();
    for f in [
        "reports/eval.json",
        "reports/eval.csv",
        "reports/skipped.json",
        "scores/gapk.jsonl",
        "scores/neighbor.jsonl",
        "sweeps/k.csv",
        "sweeps/window.csv",
        "traces/syn-00001.json",
    ] {
        assert!(files.iter().any(|x| x == f), "missing {f} in {files:?}");
    }
    assert_eq!(one, read_tree(&dir.path().join("again")));
    assert_eq!(one, read_tree(&dir.path().join("four")));

    assert_eq!(runs[0].report.methods.len(), 6);
    let window_csv = String::from_utf8(one["sweeps/window.csv"].clone()).unwrap();
    assert!(window_csv.starts_with("param,method,auroc,tpr_at_fpr_0.05,n\n1,gapk,"));
}

#[test]
fn trace_reports_selected_windows() {
    let corpus: Corpus<f64> = synthesize(&small_config()).unwrap();
    let cfg = MethodConfig::new(Method::GapK);
    let traces = harness::trace_samples(&corpus, &["syn-00000".to_string()], &cfg).unwrap();
    let t = &traces[0];
    assert_eq!(t.raw_scores.len(), 22);
    assert_eq!(t.smoothed_scores.len(), 20);
    assert_eq!(t.selected_indices.len(), 4);
    let mean: f64 = t
        .selected_indices
        .iter()
        .map(|&i| t.smoothed_scores[i])
        .sum::<f64>()
        / 4.0;
    assert!((mean - t.score).abs() < 1e-12);
    assert!(harness::trace_samples(&corpus, &["nope".to_string()], &cfg).is_err());
}

#[test]
fn weakly_trained_snapshot() {
    let config = SynthConfig {
        order: 1,
        dirichlet_alpha: 1.0,
        train_passes: 1,
        ..SynthConfig::default()
    };
    let corpus: Corpus<f64> = synthesize(&config).unwrap();
    let methods: Vec<_> = Method::ALL.iter().map(|&m| MethodConfig::new(m)).collect();
    let (report, _) =
        evaluate_corpus(&corpus, &methods, &[0.05], 10, &Workers::new(2).unwrap()).unwrap();
    let expected = [
        ("loss", 0.6498, 0.088),
        ("zlib", 0.62514, 0.08),
        ("neighbor", 0.614732, 0.084),
        ("mink", 0.736884, 0.138),
        ("minkpp", 0.737752, 0.144),
        ("gapk", 0.71382, 0.114),
        ("minkpp_smoothed", 0.716956, 0.106),
        ("gapk_top1", 0.73384, 0.134),
    ];
    for (name, auroc, tpr) in expected {
        let m = report.get(name).unwrap();
        assert_eq!(m.auroc, auroc, "{name}");
        assert_eq!(m.tpr_at(0.05), Some(tpr), "{name}");
    }
}
