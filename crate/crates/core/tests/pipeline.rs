use tsxb_core::attrib::{explain, AttributionConfig, ChunkSpec, Method};
use tsxb_core::eval::{evaluate_suite, gt_metrics, SuiteConfig, AGGREGATE_MASK};
use tsxb_core::io::{load_dataset, load_saliency, save_dataset, save_saliency};
use tsxb_core::models::{
    accuracy, load_model, predict, save_model, target_classes, train_random_kernel, train_tabular, Model,
};
use tsxb_core::synth::{generate, SynthConfig};
use tsxb_core::{fit_stats, normalize_saliency, MaskKind, ScoreTarget};

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_train: 240,
        n_test: 40,
        length: 80,
        window_len: 20,
        seed,
        ..SynthConfig::default()
    }
}

#[test]
fn synth_train_explain_evaluate() {
    let out = generate::<f64>(&small(3)).unwrap();
    let model = train_random_kernel(&out.train, 300, 3, 1000.0).unwrap();
    let acc = accuracy(&model, &out.test).unwrap();
    assert!(acc > 0.6, "accuracy {acc}");

    let stats = fit_stats(&out.test);
    let cfg = SuiteConfig {
        methods: vec![Method::FeatureAblation, Method::ShapleySampling],
        chunks: vec![ChunkSpec::chunks(5)],
        n_permutations: 3,
        seed: 3,
        ..SuiteConfig::default()
    };
    let report = evaluate_suite(&model, &out.test, Some(&out.gt_test), &cfg, &stats).unwrap();
    assert_eq!(report.n_instances, 40);
    for m in ["feature_ablation", "shap_sampling", "random"] {
        let row = report.row(m, "5", AGGREGATE_MASK).expect(m);
        assert!(row.roc.is_some() && row.ap.is_some());
    }
    // Group-level explainers should at least not rank the mask below chance.
    let fa = report.row("feature_ablation", "5", AGGREGATE_MASK).unwrap();
    assert!(fa.roc.unwrap() > 0.5, "{fa:?}");
    let outcome = report.outcome("5").unwrap();
    assert_eq!(outcome.decisions.len(), MaskKind::ALL.len());
}

#[test]
fn persisted_artifacts_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate::<f64>(&small(4)).unwrap();

    save_dataset(&out.test, Some(&out.gt_test), &dir.path().join("test")).unwrap();
    let (ds, gt) = load_dataset::<f64>(&dir.path().join("test")).unwrap();
    assert_eq!(ds.data(), out.test.data());
    assert_eq!(ds.labels(), out.test.labels());
    assert_eq!(gt.unwrap(), out.gt_test);

    let model = Model::Tabular(train_tabular(&out.train, 1.0).unwrap());
    let path = dir.path().join("model.bin");
    save_model(&model, &path).unwrap();
    let loaded: Model<f64> = load_model(&path).unwrap();
    assert_eq!(predict(&loaded, &ds).unwrap(), predict(&model, &ds).unwrap());

    let targets = target_classes(&model, &ds, ScoreTarget::Predicted).unwrap();
    let cfg = AttributionConfig::new(Method::FeatureAblation, 4);
    let sal = explain(&model, &ds.head(5), &targets[..5], ChunkSpec::chunks(4), &cfg, None).unwrap();
    save_saliency(&sal, &dir.path().join("sal")).unwrap();
    let back = load_saliency::<f64>(&dir.path().join("sal")).unwrap();
    assert_eq!(back.values, sal.values);
    assert_eq!(back.method, sal.method);
}

#[test]
fn single_precision_pipeline_tracks_double() {
    let out = generate::<f64>(&small(5)).unwrap();
    let (train32, test32) = (out.train.cast::<f32>(), out.test.cast::<f32>());
    let m64 = train_tabular(&out.train, 1.0).unwrap();
    let m32 = train_tabular(&train32, 1.0).unwrap();
    let (a64, a32) = (accuracy(&m64, &out.test).unwrap(), accuracy(&m32, &test32).unwrap());
    assert!((a64 - a32).abs() <= 0.05, "{a64} vs {a32}");

    let cfg = AttributionConfig::new(Method::FeatureAblation, 5);
    let t = target_classes(&m64, &out.test, ScoreTarget::TrueLabel).unwrap();
    let s64 = explain(&m64, &out.test, &t, ChunkSpec::chunks(8), &cfg, None).unwrap();
    let s32 = explain(&m32, &test32, &t, ChunkSpec::chunks(8), &cfg, None).unwrap();
    let g64 = gt_metrics(&normalize_saliency(&s64).unwrap(), &out.gt_test).unwrap();
    let g32 = gt_metrics(&normalize_saliency(&s32).unwrap(), &out.gt_test).unwrap();
    assert!((g64.roc_auc - g32.roc_auc).abs() < 0.02, "{g64:?} vs {g32:?}");
}
