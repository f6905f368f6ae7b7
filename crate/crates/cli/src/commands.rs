use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use tsxb_core::attrib::{explain, random_attribution, ChunkSpec, Method};
use tsxb_core::channels::{
    channel_importance, channel_importance_raw, select_top, selection_study, write_channels_csv, SelectionEntry,
    Trainer,
};
use tsxb_core::eval::report::{write_report, REPORT_FILE};
use tsxb_core::eval::{
    compute_saliencies, evaluate_saliencies, gt_metrics, QuantileSchedule, SaliencyRun, SuiteConfig, SuiteReport,
    AGGREGATE_MASK, RANDOM_CHUNK,
};
use tsxb_core::io::{load_dataset, load_saliency, save_dataset, save_saliency, MANIFEST_FILE};
use tsxb_core::models::{
    accuracy, load_model, save_model, target_classes, train_random_kernel, train_tabular, Classifier,
};
use tsxb_core::{
    fit_stats, normalize_saliency, synth, ChannelImportance, Dataset, GroundTruthMask, MaskStats, Model, SaliencyMap,
    SelectionReport,
};

use crate::config::{resolve_seed, ModelKind, RunConfig, StatsSource};
use crate::{
    ChannelsArgs, Cli, CliError, Command, EvaluateArgs, ExplainArgs, ExplainerArgs, GenSynthArgs, GtEvalArgs,
    ReportArgs, TrainArgs,
};

pub const RUNTIME_FILE: &str = "runtime.json";
pub const CHANNELS_FILE: &str = "channels.csv";
pub const IMPORTANCE_FILE: &str = "importance.json";
pub const SELECTION_FILE: &str = "selection.json";
pub const GT_FILE: &str = "gt.csv";

struct Ctx {
    cfg: RunConfig,
    seed: u64,
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    CliError::Config(msg.into()).into()
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| config_err(format!("{flag} is required (flag or config file)")))
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let seed = resolve_seed(cli.seed, &cfg)?;
    let threads = cli.threads.or(cfg.threads);
    let ctx = Ctx { cfg, seed };
    let run = move || match cli.command {
        Command::GenSynth(a) => gen_synth(&ctx, a),
        Command::Train(a) => train(&ctx, a),
        Command::Explain(a) => explain_cmd(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::GtEval(a) => gt_eval(&ctx, a),
        Command::Channels(a) => channels(&ctx, a),
        Command::Report(a) => report(a),
    };
    match threads {
        Some(0) => Err(config_err("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("building the worker pool")?
            .install(run),
        None => run(),
    }
}

/// `path` itself when it holds a manifest, else its `split` subdirectory
/// (the layout `gen-synth` writes).
fn dataset_dir(path: &Path, split: &str) -> Result<PathBuf> {
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(path.to_path_buf());
    }
    let sub = path.join(split);
    if sub.join(MANIFEST_FILE).is_file() {
        return Ok(sub);
    }
    Err(config_err(format!("no dataset found at {}", path.display())))
}

fn load_split(path: &Path, split: &str) -> Result<(Dataset, Option<GroundTruthMask>)> {
    let dir = dataset_dir(path, split)?;
    load_dataset(&dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn gen_synth(ctx: &Ctx, a: GenSynthArgs) -> Result<()> {
    let mut sc = ctx.cfg.synth.clone();
    macro_rules! set {
        ($($f:ident),*) => { $(if let Some(v) = a.$f { sc.$f = v; })* };
    }
    set!(n_train, n_test, length, window_len, n_channels, square_wave_prob, extra_nondisc_channels, label_threshold);
    sc.seed = ctx.seed;
    let out = require(a.out.or_else(|| ctx.cfg.out.clone()), "--out")?;
    let generated = synth::generate::<f64>(&sc)?;
    save_dataset(&generated.train, Some(&generated.gt_train), &out.join("train"))?;
    save_dataset(&generated.test, Some(&generated.gt_test), &out.join("test"))?;
    write_json(&sc, &out.join("synth.json"))?;
    println!(
        "wrote {} train and {} test instances ({} channels x {} points) to {}",
        generated.train.n_instances(),
        generated.test.n_instances(),
        sc.n_channels,
        sc.length,
        out.display()
    );
    Ok(())
}

fn load_model_file(path: &Path) -> Result<Model<f64>> {
    if !path.is_file() {
        return Err(config_err(format!("model file {} does not exist", path.display())));
    }
    load_model(path).with_context(|| format!("loading model {}", path.display()))
}

fn train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let data = require(a.data.or_else(|| ctx.cfg.data.clone()), "--data")?;
    let (train_ds, _) = load_split(&data, "train")?;
    let test_ds = match &a.test_data {
        Some(p) => Some(load_split(p, "test")?.0),
        None if data.join("test").join(MANIFEST_FILE).is_file() => Some(load_split(&data, "test")?.0),
        None => None,
    };
    let kind = a.kind.unwrap_or(ctx.cfg.classifier.kind);
    let kernels = a.kernels.unwrap_or(ctx.cfg.classifier.kernels);
    let lambda = a.lambda.or(ctx.cfg.classifier.lambda).unwrap_or(kind.default_lambda());
    let out = require(a.out.or_else(|| ctx.cfg.model.clone()), "--out")?;

    let start = Instant::now();
    let model = match kind {
        ModelKind::RandomKernel => Model::RandomKernel(train_random_kernel(&train_ds, kernels, ctx.seed, lambda)?),
        ModelKind::Tabular => Model::Tabular(train_tabular(&train_ds, lambda)?),
    };
    log::info!("trained {} in {:.1}s", model.kind(), start.elapsed().as_secs_f64());
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_model(&model, &out)?;
    match &test_ds {
        Some(t) => println!("{} test accuracy {:.4} ({} instances)", model.kind(), accuracy(&model, t)?, t.n_instances()),
        None => println!("{} train accuracy {:.4}", model.kind(), accuracy(&model, &train_ds)?),
    }
    Ok(())
}

/// Everything an explainer run needs, with `--limit` applied.
struct Prepared {
    model: Model<f64>,
    full: Dataset,
    data: Dataset,
    gt: Option<GroundTruthMask>,
    stats: MaskStats<f64>,
}

fn prepare(ctx: &Ctx, c: &ExplainerArgs) -> Result<Prepared> {
    let model = load_model_file(&require(c.model.clone().or_else(|| ctx.cfg.model.clone()), "--model")?)?;
    let (full, gt) = load_split(&require(c.data.clone().or_else(|| ctx.cfg.data.clone()), "--data")?, "test")?;
    let limit = c.limit.or(ctx.cfg.limit).unwrap_or(full.n_instances());
    if limit == 0 {
        return Err(config_err("--limit must be at least 1"));
    }
    let data = full.head(limit);
    let gt = gt.map(|g| g.head(limit));
    let stats = match c.stats_from.unwrap_or(ctx.cfg.stats_from) {
        StatsSource::Data => fit_stats(&full),
        StatsSource::Train => {
            let path = require(c.train_data.clone().or_else(|| ctx.cfg.train_data.clone()), "--train-data")?;
            fit_stats(&load_split(&path, "train")?.0)
        }
    };
    Ok(Prepared {
        model,
        full,
        data,
        gt,
        stats,
    })
}

/// Suite settings from the config file with the explainer flags applied.
fn suite_from(ctx: &Ctx, c: &ExplainerArgs, chunks: Option<Vec<ChunkSpec>>) -> SuiteConfig {
    let mut s = ctx.cfg.suite.clone();
    if let Some(m) = &c.methods {
        s.methods = m.clone();
    }
    if let Some(ch) = chunks {
        s.chunks = ch;
    }
    if let Some(b) = c.baseline {
        s.baseline = b;
    }
    if let Some(n) = c.n_permutations {
        s.n_permutations = n;
    }
    if c.n_samples.is_some() {
        s.n_samples = c.n_samples;
    }
    if let Some(t) = c.target {
        s.target = t.into();
    }
    s.seed = ctx.seed;
    s
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RuntimeEntry {
    method: String,
    chunk: String,
    seconds: f64,
    n_instances: usize,
}

fn run_dir_name(method: &str, chunk: &str) -> String {
    if chunk == RANDOM_CHUNK {
        method.to_string()
    } else {
        format!("{method}__{chunk}")
    }
}

fn explain_cmd(ctx: &Ctx, a: ExplainArgs) -> Result<()> {
    let suite = suite_from(ctx, &a.common, a.chunks.clone());
    let out = require(a.out.clone().or_else(|| ctx.cfg.out.clone()), "--out")?;
    let p = prepare(ctx, &a.common)?;
    create_dir(&out)?;
    let runs = compute_saliencies(&p.model, &p.data, &suite, &p.stats)?;
    let mut log_entries = Vec::new();
    for run in &runs {
        save_saliency(&run.saliency, &out.join(run_dir_name(&run.method, &run.chunk)))?;
        let seconds = run.runtime_s.unwrap_or(0.0);
        println!("{:<20} {:>6}  {seconds:9.2}s", run.method, run.chunk);
        log_entries.push(RuntimeEntry {
            method: run.method.clone(),
            chunk: run.chunk.clone(),
            seconds,
            n_instances: p.data.n_instances(),
        });
    }
    if suite.methods.contains(&Method::Random) {
        save_saliency(&random_attribution::<f64>(p.data.data().dim(), ctx.seed), &out.join(Method::Random.name()))?;
        println!("{:<20} {:>6}", Method::Random.name(), RANDOM_CHUNK);
    }
    write_json(&log_entries, &out.join(RUNTIME_FILE))
}

/// Saliency maps from one saliency directory or an `explain` output. The
/// first `n` instances are kept so the maps line up with a `--limit`ed run.
fn load_runs(dir: &Path, n: usize) -> Result<Vec<SaliencyRun<f64>>> {
    if !dir.exists() {
        return Err(config_err(format!("saliency path {} does not exist", dir.display())));
    }
    let runtimes: Vec<RuntimeEntry> = match fs::read_to_string(dir.join(RUNTIME_FILE)) {
        Ok(text) => serde_json::from_str(&text).context("parsing runtime log")?,
        Err(_) => Vec::new(),
    };
    let dirs: Vec<PathBuf> = if dir.join(MANIFEST_FILE).is_file() {
        vec![dir.to_path_buf()]
    } else {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)
            .with_context(|| format!("listing {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(MANIFEST_FILE).is_file())
            .collect();
        v.sort();
        v
    };
    if dirs.is_empty() {
        return Err(config_err(format!("no saliency maps under {}", dir.display())));
    }
    dirs.iter()
        .map(|d| {
            let mut s: SaliencyMap = load_saliency(d).with_context(|| format!("loading saliency {}", d.display()))?;
            let name = d.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            let (method, chunk) = match name.split_once("__") {
                Some((m, c)) => (m.to_string(), c.to_string()),
                None => (s.method.clone(), RANDOM_CHUNK.to_string()),
            };
            let have = s.dim().0;
            if have < n {
                return Err(config_err(format!("{} holds {have} instances, {n} needed", d.display())));
            }
            if have > n {
                s = s.head(n);
            }
            let runtime_s = runtimes.iter().find(|r| r.method == method && r.chunk == chunk).map(|r| r.seconds);
            Ok(SaliencyRun {
                method,
                chunk,
                saliency: s,
                runtime_s,
            })
        })
        .collect()
}

fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> Result<()> {
    let mut suite = suite_from(ctx, &a.common, a.chunks.clone());
    if let Some(m) = &a.masks {
        suite.masks = m.clone();
    }
    if let Some(m) = a.margin {
        suite.margin = m;
    }
    if let Some(f) = a.filter_mode {
        suite.filter_mode = f.into();
    }
    if let Some(ks) = &a.ks {
        suite.schedule = QuantileSchedule::new(ks.clone())?;
    }
    suite.auc.normalize_by_max |= a.normalize_by_max;
    suite.auc.clip_sbar |= a.clip_sbar;
    suite.validate()?;
    let out = require(a.out.clone().or_else(|| ctx.cfg.out.clone()), "--out")?;
    let p = prepare(ctx, &a.common)?;

    let runs = match &a.saliency {
        Some(dir) => load_runs(dir, p.data.n_instances())?
            .into_iter()
            .filter(|r| r.method != Method::Random.name())
            .collect(),
        None => compute_saliencies(&p.model, &p.data, &suite, &p.stats)?,
    };
    let report = evaluate_saliencies(&p.model, &p.data, p.gt.as_ref(), &runs, &suite, &p.stats)?;
    write_report(&report, &out, a.timings)?;
    print!("{}", summary(&report));
    Ok(())
}

/// Human-readable digest: mask decisions with their margin numbers, then
/// the aggregate score of every method.
pub fn summary(r: &SuiteReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}: {} instances, clean accuracy {:.4}, margin {}",
        r.dataset, r.n_instances, r.clean_accuracy, r.margin
    );
    for o in &r.outcomes {
        let _ = writeln!(s, "chunks {}:", o.chunk);
        for d in &o.decisions {
            let _ = writeln!(
                s,
                "  {:<16} {:<9} best {} {:.4} vs threshold {:.4} (random {:.4}, margin {})",
                d.mask.name(),
                if d.kept { "kept" } else { "discarded" },
                d.best_method,
                d.best_auc_top,
                d.threshold,
                d.random_auc_top,
                r.margin
            );
        }
        if o.flat_rank {
            let _ = writeln!(s, "  flat rank: every mask was discarded, aggregate scores are undefined");
        }
    }
    let _ = writeln!(
        s,
        "{:<20} {:>6} {:>9} {:>10} {:>7} {:>7} {:>7}",
        "method", "chunk", "auc_top", "auc_bottom", "f1s", "ap", "roc"
    );
    let cell = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    for row in r.rows.iter().filter(|row| row.mask == AGGREGATE_MASK) {
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>9} {:>10} {:>7} {:>7} {:>7}",
            row.method,
            row.chunk,
            cell(row.auc_top),
            cell(row.auc_bottom),
            cell(row.f1s),
            cell(row.ap),
            cell(row.roc)
        );
    }
    s
}

fn gt_eval(ctx: &Ctx, a: GtEvalArgs) -> Result<()> {
    let data = require(a.data.clone().or_else(|| ctx.cfg.data.clone()), "--data")?;
    let (ds, gt) = load_split(&data, "test")?;
    let gt = gt.ok_or_else(|| config_err(format!("{} has no ground-truth mask", data.display())))?;
    let n = a.limit.or(ctx.cfg.limit).unwrap_or(ds.n_instances()).min(ds.n_instances());
    let gt = gt.head(n);
    let mut runs = match &a.saliency {
        Some(dir) => load_runs(dir, n)?,
        None => Vec::new(),
    };
    if a.random || runs.is_empty() {
        runs.retain(|r| r.method != Method::Random.name());
        runs.push(SaliencyRun {
            method: Method::Random.name().into(),
            chunk: RANDOM_CHUNK.into(),
            saliency: random_attribution((n, ds.n_channels(), ds.length()), ctx.seed),
            runtime_s: None,
        });
    }
    let mut csv = String::from("method,chunk,ap,roc,n_used,n_skipped\n");
    for run in &runs {
        let score = gt_metrics(&normalize_saliency(&run.saliency)?, &gt)?;
        let _ = writeln!(
            csv,
            "{},{},{:.6},{:.6},{},{}",
            run.method, run.chunk, score.ap, score.roc_auc, score.n_used, score.n_skipped
        );
        println!(
            "{:<20} {:>6}  AP {:.4}  ROC-AUC {:.4}  ({} used, {} skipped)",
            run.method, run.chunk, score.ap, score.roc_auc, score.n_used, score.n_skipped
        );
    }
    if let Some(out) = &a.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn trainer_for(model: &Model<f64>) -> Box<Trainer<'static, f64>> {
    match model {
        Model::RandomKernel(m) => {
            let (k, seed, lambda) = (m.kernels().len(), m.seed(), m.head().lambda());
            Box::new(move |ds: &Dataset| Ok(Box::new(train_random_kernel(ds, k, seed, lambda)?) as Box<dyn Classifier<f64>>))
        }
        Model::Tabular(m) => {
            let lambda = m.head().lambda();
            Box::new(move |ds: &Dataset| Ok(Box::new(train_tabular(ds, lambda)?) as Box<dyn Classifier<f64>>))
        }
    }
}

fn channels(ctx: &Ctx, a: ChannelsArgs) -> Result<()> {
    let chunk = a
        .chunks
        .or_else(|| ctx.cfg.suite.chunks.first().copied())
        .unwrap_or(ChunkSpec::chunks(10));
    let suite = suite_from(ctx, &a.common, Some(vec![chunk]));
    let out = require(a.out.clone().or_else(|| ctx.cfg.out.clone()), "--out")?;
    let train_path = a.common.train_data.clone().or_else(|| ctx.cfg.train_data.clone());
    if a.retrain && (a.select.is_empty() || train_path.is_none()) {
        return Err(config_err("--retrain needs --select and --train-data"));
    }
    let p = prepare(ctx, &a.common)?;
    let d = p.data.n_channels();
    if let Some(&k) = a.select.iter().find(|&&k| k == 0 || k > d) {
        return Err(config_err(format!("--select {k} is outside 1..={d}")));
    }

    let runs: Vec<SaliencyRun<f64>> = match &a.saliency {
        Some(dir) => load_runs(dir, p.data.n_instances())?
            .into_iter()
            .filter(|r| r.chunk == chunk.label() || r.chunk == RANDOM_CHUNK)
            .filter(|r| suite.methods.iter().any(|m| m.name() == r.method))
            .collect(),
        None => {
            let targets = target_classes(&p.model, &p.data, suite.target)?;
            suite
                .methods
                .iter()
                .map(|&m| {
                    let saliency = explain(&p.model, &p.data, &targets, chunk, &suite.attribution(m), Some(&p.stats))?;
                    Ok(SaliencyRun {
                        method: m.name().into(),
                        chunk: chunk.label(),
                        saliency,
                        runtime_s: None,
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    if runs.is_empty() {
        return Err(config_err("no saliency maps match the requested methods and chunking"));
    }
    let importances: Vec<ChannelImportance> = runs
        .iter()
        .map(|r| {
            if a.raw {
                channel_importance_raw(&r.saliency, &p.data)
            } else {
                channel_importance(&r.saliency, &p.data)
            }
        })
        .collect::<tsxb_core::Result<_>>()?;

    create_dir(&out)?;
    write_channels_csv(&importances, &out.join(CHANNELS_FILE))?;
    write_json(&importances, &out.join(IMPORTANCE_FILE))?;
    for imp in &importances {
        let r: Vec<String> = imp.r.iter().map(|v| format!("{v:.4}")).collect();
        println!("{:<20} ranking {:?}  r = [{}]", imp.method, imp.ranking(), r.join(", "));
    }

    if a.select.is_empty() {
        return Ok(());
    }
    let lead = &importances[0];
    let selection = if a.retrain {
        let (train_ds, _) = load_split(&train_path.expect("checked above"), "train")?;
        let trainer = trainer_for(&p.model);
        selection_study(&train_ds, &p.full, lead, &a.select, &[(p.model.kind(), trainer.as_ref())])?
    } else {
        let entries = a
            .select
            .iter()
            .map(|&k| {
                let mut selected = select_top(&lead.r, k)?;
                selected.sort_unstable();
                Ok(SelectionEntry {
                    k,
                    selected,
                    accuracy_after: Default::default(),
                })
            })
            .collect::<tsxb_core::Result<_>>()?;
        SelectionReport {
            method: lead.method.clone(),
            dataset: lead.dataset.clone(),
            r: lead.r.clone(),
            ranking: lead.ranking(),
            accuracy_before: Default::default(),
            entries,
        }
    };
    write_json(&selection, &out.join(SELECTION_FILE))?;
    for e in &selection.entries {
        print!("top {} channels {:?}", e.k, e.selected);
        for (name, after) in &e.accuracy_after {
            let before = selection.accuracy_before[name];
            print!("  {name}: accuracy {before:.4} -> {after:.4} ({:+.4})", after - before);
        }
        println!();
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let path = a.input.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let report: SuiteReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let out = a.out.unwrap_or(a.input);
    write_report(&report, &out, a.timings)?;
    print!("{}", summary(&report));
    Ok(())
}
