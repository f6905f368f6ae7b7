//! Acceptance criteria, one test each, printing a PASS/FAIL line per
//! criterion. The tests share a lock so wall-clock budgets are measured
//! without competing for cores.

use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use ndarray::{Array2, Array3, ArrayView3};
use rand::Rng as _;
use tsxb_core::attrib::{
    exact_shapley, explain, kernel_shap, make_grouping, shapley_sampling, AttributionConfig, ChunkSpec, Game,
    Method, Permutations,
};
use tsxb_core::channels::{channel_importance, subset_dataset};
use tsxb_core::eval::report::write_report;
use tsxb_core::eval::{
    compute_saliencies, evaluate_saliencies, gt_metrics, SaliencyRun, SuiteConfig, SuiteReport, AGGREGATE_MASK,
};
use tsxb_core::models::{accuracy, target_classes, train_random_kernel, train_tabular, Classifier, RandomKernelModel, TabularRidgeModel};
use tsxb_core::rng::substream;
use tsxb_core::synth::{generate, SynthConfig};
use tsxb_core::{
    fit_stats, normalize_saliency, Dataset, GroundTruthMask, MaskKind, MaskStats, Saliency, SaliencyMap, ScoreTarget,
    Stats,
};

const SEED: u64 = 0;
const KERNELS: usize = 2000;
const KERNEL_LAMBDA: f64 = 1000.0;
const TABULAR_LAMBDA: f64 = 1.0;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Print the verdict outside libtest's capture, then fail if needed.
fn verdict(id: u32, name: &str, pass: bool, detail: &str, secs: f64) {
    let line = format!(
        "criterion {id:>2} {:<4} {name}: {detail} [{secs:.1}s]\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

struct Fixture {
    train: Dataset,
    test: Dataset,
    gt_test: GroundTruthMask,
    kernel: RandomKernelModel<f64>,
    kernel_secs: f64,
    kernel_accuracy: f64,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let out = generate::<f64>(&SynthConfig {
            seed: SEED,
            ..SynthConfig::default()
        })
        .expect("default synthetic set");
        let start = Instant::now();
        let kernel = train_random_kernel(&out.train, KERNELS, SEED, KERNEL_LAMBDA).expect("kernel model");
        let kernel_secs = start.elapsed().as_secs_f64();
        let kernel_accuracy = accuracy(&kernel, &out.test).unwrap();
        Fixture {
            train: out.train,
            test: out.test,
            gt_test: out.gt_test,
            kernel,
            kernel_secs,
            kernel_accuracy,
        }
    })
}

fn tabular() -> &'static (TabularRidgeModel<f64>, f64) {
    static T: OnceLock<(TabularRidgeModel<f64>, f64)> = OnceLock::new();
    T.get_or_init(|| {
        let start = Instant::now();
        let m = train_tabular(&fixture().train, TABULAR_LAMBDA).expect("tabular model");
        (m, start.elapsed().as_secs_f64())
    })
}

// ---------------------------------------------------------------- 1 & 2

/// Two-class model with a pairwise interaction:
/// `P(1) = σ(b + w·x + γ (u·x)²)`.
struct Quadratic {
    shape: (usize, usize),
    w: Array2<f64>,
    u: Array2<f64>,
    b: f64,
    gamma: f64,
}

impl Classifier<f64> for Quadratic {
    fn n_classes(&self) -> usize {
        2
    }

    fn input_shape(&self) -> Option<(usize, usize)> {
        Some(self.shape)
    }

    fn predict_proba(&self, batch: ArrayView3<'_, f64>) -> tsxb_core::Result<Array2<f64>> {
        let n = batch.dim().0;
        let mut p = Array2::zeros((n, 2));
        for (i, x) in batch.outer_iter().enumerate() {
            let lin = (&x * &self.w).sum();
            let q = (&x * &self.u).sum();
            let p1 = 1.0 / (1.0 + (-(self.b + lin + self.gamma * q * q)).exp());
            p[[i, 0]] = 1.0 - p1;
            p[[i, 1]] = p1;
        }
        Ok(p)
    }
}

struct OracleStudy {
    max_shapley_diff: f64,
    max_kernel_diff: f64,
    max_efficiency: f64,
    instances: usize,
    secs: f64,
}

fn oracle_study() -> &'static OracleStudy {
    static S: OnceLock<OracleStudy> = OnceLock::new();
    S.get_or_init(|| {
        let start = Instant::now();
        let (mut sh, mut ks, mut eff) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..20u64 {
            let mut r = substream(SEED, 0xACC1, &[i]);
            let (d, l) = (1 + (i as usize % 2), 10);
            let n = 1 + (i as usize / 2) % 5;
            let spec = if d == 1 { ChunkSpec::chunks(n) } else { ChunkSpec::cross_channel(n) };
            let grouping = make_grouping(d, l, spec).unwrap();
            assert!(grouping.n_groups() <= 5);
            let mut draw = |scale: f64| Array2::from_shape_fn((d, l), |_| scale * r.random_range(-1.0..1.0));
            let model = Quadratic {
                shape: (d, l),
                w: draw(0.8),
                u: draw(0.5),
                b: 0.0,
                gamma: 1.5,
            };
            let x = draw(2.0);
            let base = draw(0.5);
            let game = Game::new(&model, x.view(), base.view(), &grouping, (i % 2) as usize).unwrap();
            let (full, empty) = game.endpoints().unwrap();
            let exact = exact_shapley(&game).unwrap();
            let mut rs = substream(SEED, 0xACC2, &[i]);
            let enumerated = shapley_sampling(&game, Permutations::All, &mut rs).unwrap();
            let kernel = kernel_shap(&game, 64, &mut rs).unwrap();
            for (a, b) in exact.iter().zip(&enumerated) {
                sh = sh.max((a - b).abs());
            }
            for (a, b) in exact.iter().zip(&kernel) {
                ks = ks.max((a - b).abs());
            }
            for phi in [&exact, &enumerated, &kernel] {
                eff = eff.max((phi.iter().sum::<f64>() - (full - empty)).abs());
            }
        }
        OracleStudy {
            max_shapley_diff: sh,
            max_kernel_diff: ks,
            max_efficiency: eff,
            instances: 20,
            secs: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_01_shapley_oracle_equivalence() {
    let _g = serial();
    let s = oracle_study();
    let pass = s.max_shapley_diff <= 1e-12 && s.max_kernel_diff <= 1e-6 && s.secs < 10.0;
    verdict(
        1,
        "shapley oracle equivalence",
        pass,
        &format!(
            "{} instances, G<=5: |enumerated - exact| <= {:.1e} (tol 1e-12), |kernel_shap - exact| <= {:.1e} (tol 1e-6)",
            s.instances, s.max_shapley_diff, s.max_kernel_diff
        ),
        s.secs,
    );
}

#[test]
fn criterion_02_efficiency_axiom() {
    let _g = serial();
    let s = oracle_study();
    verdict(
        2,
        "efficiency axiom",
        s.max_efficiency <= 1e-9,
        &format!("max |sum(phi) - (S(X) - S(baseline))| = {:.1e} (tol 1e-9)", s.max_efficiency),
        s.secs,
    );
}

// ---------------------------------------------------------------- 3

fn roc_pairs(s: &[f64], y: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] && !y[j] {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn ap_sweep(s: &[f64], y: &[bool]) -> f64 {
    let p = y.iter().filter(|&&v| v).count() as f64;
    let mut thresholds = s.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut prev, mut ap) = (0.0, 0.0);
    for t in thresholds {
        let sel: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= t).collect();
        let tp = sel.iter().filter(|&&i| y[i]).count() as f64;
        ap += (tp / p - prev) * (tp / sel.len() as f64);
        prev = tp / p;
    }
    ap
}

#[test]
fn criterion_03_gt_metric_correctness() {
    let _g = serial();
    let start = Instant::now();
    let (mut roc_err, mut ap_err) = (0.0f64, 0.0f64);
    for i in 0..100u64 {
        let mut r = substream(SEED, 0xACC3, &[i]);
        let d = r.random_range(1..=4usize);
        let l = r.random_range(2..=200 / d);
        // Half the instances use coarse scores to force ties.
        let coarse = i % 2 == 0;
        let scores = Array3::from_shape_fn((1, d, l), |_| {
            if coarse {
                r.random_range(0..5u8) as f64 / 4.0
            } else {
                r.random_range(0.0..1.0)
            }
        });
        let mut labels = Array3::from_shape_fn((1, d, l), |_| u8::from(r.random_range(0.0..1.0) < 0.3));
        labels[[0, 0, 0]] = 1;
        labels[[0, d - 1, l - 1]] = 0;
        let gt = GroundTruthMask::new(labels.clone()).unwrap();
        let got = gt_metrics(&Saliency::new(scores.clone(), "m"), &gt).unwrap();
        let s: Vec<f64> = scores.iter().copied().collect();
        let y: Vec<bool> = labels.iter().map(|&v| v == 1).collect();
        roc_err = roc_err.max((got.roc_auc - roc_pairs(&s, &y)).abs());
        ap_err = ap_err.max((got.ap - ap_sweep(&s, &y)).abs());
    }
    verdict(
        3,
        "ground-truth metric correctness",
        roc_err <= 1e-12 && ap_err <= 1e-12,
        &format!("100 instances (d*L <= 200): max ROC-AUC error {roc_err:.1e}, max AP error {ap_err:.1e} (tol 1e-12)"),
        start.elapsed().as_secs_f64(),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_random_baseline_gt() {
    let _g = serial();
    let f = fixture();
    let start = Instant::now();
    let random = tsxb_core::attrib::random_attribution::<f64>(f.test.data().dim(), SEED);
    let score = gt_metrics(&normalize_saliency(&random).unwrap(), &f.gt_test).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = (score.ap - 0.05).abs() <= 0.01 && (score.roc_auc - 0.50).abs() <= 0.02 && secs < 60.0;
    verdict(
        4,
        "random baseline AP/ROC",
        pass,
        &format!(
            "{} test instances: AP {:.4} (0.05 +- 0.01), ROC-AUC {:.4} (0.50 +- 0.02)",
            f.test.n_instances(),
            score.ap,
            score.roc_auc
        ),
        secs,
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_classifier_tier() {
    let _g = serial();
    let f = fixture();
    let (tab, tab_secs) = tabular();
    let tab_acc = accuracy(tab, &f.test).unwrap();
    let secs = f.kernel_secs + tab_secs;
    let pass = (0.45..=0.60).contains(&tab_acc) && f.kernel_accuracy >= 0.80 && secs < 600.0;
    verdict(
        5,
        "classifier tier",
        pass,
        &format!(
            "tabular ridge {tab_acc:.4} (in [0.45, 0.60]), random-kernel K={KERNELS} {:.4} (>= 0.80); training {:.0}s + {:.0}s",
            f.kernel_accuracy, f.kernel_secs, tab_secs
        ),
        secs,
    );
}

// ---------------------------------------------------------------- 6 & 7

struct SeparationRun {
    cfg: SuiteConfig,
    data: Dataset,
    gt: GroundTruthMask,
    stats: Stats,
    runs: Vec<SaliencyRun<f64>>,
    report: SuiteReport,
    secs: f64,
}

fn separation_run() -> &'static SeparationRun {
    static R: OnceLock<SeparationRun> = OnceLock::new();
    R.get_or_init(|| {
        let f = fixture();
        let start = Instant::now();
        let data = f.test.head(200);
        let gt = f.gt_test.head(200);
        let stats: MaskStats<f64> = fit_stats(&f.test);
        let cfg = SuiteConfig {
            methods: vec![Method::FeatureAblation],
            masks: MaskKind::ALL.to_vec(),
            chunks: vec![ChunkSpec::chunks(10)],
            seed: SEED,
            ..SuiteConfig::default()
        };
        let runs = compute_saliencies(&f.kernel, &data, &cfg, &stats).unwrap();
        let report = evaluate_saliencies(&f.kernel, &data, Some(&gt), &runs, &cfg, &stats).unwrap();
        SeparationRun {
            cfg,
            data,
            gt,
            stats,
            runs,
            report,
            secs: start.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_06_explainer_separation() {
    let _g = serial();
    let run = separation_run();
    let r = &run.report;
    let fa = r.row("feature_ablation", "10", AGGREGATE_MASK).unwrap();
    let rnd = r.row("random", "10", AGGREGATE_MASK).unwrap();
    let (fa_roc, rnd_roc) = (fa.roc.unwrap(), rnd.roc.unwrap());
    let detail;
    let pass = match (fa.auc_top, rnd.auc_top) {
        (Some(a), Some(b)) => {
            detail = format!(
                "200 instances: GT ROC-AUC FA {fa_roc:.4} vs random {rnd_roc:.4} (need +0.05); aggregated AUCS_top FA {a:.4} vs 1.15 x random = {:.4}{}",
                1.15 * b,
                if b < 0.0 { " (random aggregate is negative)" } else { "" }
            );
            fa_roc >= rnd_roc + 0.05 && a >= 1.15 * b && run.secs < 1800.0
        }
        _ => {
            detail = format!("flat rank: no mask kept, aggregated AUCS_top undefined (ROC FA {fa_roc:.4} vs random {rnd_roc:.4})");
            false
        }
    };
    verdict(6, "explainer separation", pass, &detail, run.secs);
}

#[test]
fn criterion_07_mask_filter_behavior() {
    let _g = serial();
    let run = separation_run();
    let start = Instant::now();
    let outcome = run.report.outcome("10").unwrap();
    let kept: Vec<&str> = outcome.decisions.iter().filter(|d| d.kept).map(|d| d.mask.name()).collect();
    let core_kept = outcome
        .decisions
        .iter()
        .any(|d| d.kept && matches!(d.mask, MaskKind::Zeros | MaskKind::LocalMean | MaskKind::GlobalMean));

    let dir = tempfile::tempdir().unwrap();
    write_report(&run.report, dir.path(), false).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let emitted = json["outcomes"][0]["decisions"].as_array().is_some_and(|d| d.len() == 6);

    let f = fixture();
    let std_cfg = SuiteConfig {
        masks: vec![MaskKind::StdNormal],
        ..run.cfg.clone()
    };
    let std_only = evaluate_saliencies(&f.kernel, &run.data, Some(&run.gt), &run.runs, &std_cfg, &run.stats);
    let (completed, flat) = match &std_only {
        Ok(r) => (true, r.outcomes[0].flat_rank),
        Err(_) => (false, false),
    };
    verdict(
        7,
        "mask filter behavior",
        core_kept && emitted && completed,
        &format!(
            "kept {kept:?} of 6 masks, filter report emitted: {emitted}; std_normal-only run completed: {completed}, flat rank triggered: {flat}"
        ),
        start.elapsed().as_secs_f64(),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_chunking_speedup() {
    let _g = serial();
    let f = fixture();
    let (tab, _) = tabular();
    let data = f.test.head(50);
    let targets = target_classes(tab, &data, ScoreTarget::Predicted).unwrap();
    let cfg = AttributionConfig::new(Method::ShapleySampling, SEED);
    let time = |spec| {
        let start = Instant::now();
        explain(tab, &data, &targets, spec, &cfg, None).unwrap();
        start.elapsed().as_secs_f64()
    };
    let chunked = time(ChunkSpec::chunks(10));
    let point = time(ChunkSpec::POINT_WISE);
    let ratio = point / chunked;
    verdict(
        8,
        "chunking speedup",
        ratio >= 10.0,
        &format!(
            "shapley_sampling, 50 instances, 25 permutations, tabular model: point-wise {point:.1}s vs 10 chunks {chunked:.2}s = {ratio:.0}x (need >= 10x)"
        ),
        point + chunked,
    );
}

// ---------------------------------------------------------------- 9

const SHAPLEY_INSTANCES: usize = 40;
const SHAPLEY_PERMUTATIONS: usize = 5;

#[test]
fn criterion_09_channel_actionability() {
    let _g = serial();
    let f = fixture();
    let run = separation_run();
    let start = Instant::now();
    let bottom_two = |s: &SaliencyMap, ds: &Dataset| {
        let mut ranking = channel_importance(s, ds).unwrap().ranking();
        let mut tail = ranking.split_off(ranking.len() - 2);
        tail.sort_unstable();
        tail
    };
    let fa_tail = bottom_two(&run.runs[0].saliency, &run.data);

    let data = f.test.head(SHAPLEY_INSTANCES);
    let targets = target_classes(&f.kernel, &data, ScoreTarget::Predicted).unwrap();
    let cfg = AttributionConfig {
        n_permutations: SHAPLEY_PERMUTATIONS,
        ..AttributionConfig::new(Method::ShapleySampling, SEED)
    };
    let shap = explain(&f.kernel, &data, &targets, ChunkSpec::chunks(10), &cfg, Some(&run.stats)).unwrap();
    let shap_tail = bottom_two(&shap, &data);

    let keep: Vec<usize> = (0..6).collect();
    let reduced = train_random_kernel(&subset_dataset(&f.train, &keep).unwrap(), KERNELS, SEED, KERNEL_LAMBDA).unwrap();
    let reduced_acc = accuracy(&reduced, &subset_dataset(&f.test, &keep).unwrap()).unwrap();
    let delta = reduced_acc - f.kernel_accuracy;
    verdict(
        9,
        "channel actionability",
        fa_tail == [6, 7] && shap_tail == [6, 7] && delta.abs() <= 0.03,
        &format!(
            "bottom two channels: feature_ablation {fa_tail:?} (200 inst.), shap_sampling {shap_tail:?} ({SHAPLEY_INSTANCES} inst., {SHAPLEY_PERMUTATIONS} perms); kernel accuracy without 6,7: {:.4} -> {reduced_acc:.4} ({delta:+.4}, need |.| <= 0.03)",
            f.kernel_accuracy
        ),
        start.elapsed().as_secs_f64(),
    );
}

// ---------------------------------------------------------------- 10

fn tsxb(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_tsxb")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn criterion_10_determinism() {
    let _g = serial();
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let (data, model) = (dir.path().join("data"), dir.path().join("model.bin"));
    tsxb(&[
        "gen-synth", "--out", p(&data), "--n-train", "300", "--n-test", "60", "--length", "100", "--window-len", "20",
        "--seed", "11",
    ]);
    tsxb(&["train", "--data", p(&data), "--kind", "random_kernel", "--kernels", "200", "--out", p(&model), "--seed", "11"]);
    let evaluate = |threads: &str, out: &Path| {
        tsxb(&[
            "--threads", threads, "--seed", "11", "evaluate", "--model", p(&model), "--data", p(&data), "--limit", "24",
            "--methods", "feature_ablation,feature_permutation,shap_sampling,kernel_shap", "--n-permutations", "3",
            "--n-samples", "128", "--chunks", "10,5x", "--baseline", "local_gaussian", "--out", p(out),
        ]);
        std::fs::read(out.join("scores.csv")).unwrap()
    };
    let one = evaluate("1", &dir.path().join("t1"));
    let four = evaluate("4", &dir.path().join("t4"));
    let rows = one.iter().filter(|&&b| b == b'\n').count() - 1;
    verdict(
        10,
        "determinism across thread counts",
        one == four && rows > 0,
        &format!(
            "evaluate with 4 explainers, 2 chunkings, 6 masks: scores.csv ({rows} rows, {} bytes) identical for --threads 1 and 4: {}",
            one.len(),
            one == four
        ),
        start.elapsed().as_secs_f64(),
    );
}
