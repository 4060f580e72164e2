use rwre_lab::environment::OmegaDistribution;
use rwre_lab::experiments::{run_with_workers, ExperimentConfig, ExperimentSpec};

fn config(dist: OmegaDistribution, exp: serde_json::Value, seed: u64) -> ExperimentConfig {
    let spec: ExperimentSpec = serde_json::from_value(exp).unwrap();
    ExperimentConfig::new(dist, spec, seed)
}

#[test]
fn homogeneous_speed_is_one_third() {
    let cfg = config(
        OmegaDistribution::homogeneous(2.0 / 3.0),
        serde_json::json!({ "kind": "speed", "t": 20_000, "paths": 40, "left_context": 100 }),
        3,
    );
    let out = run_with_workers(&cfg, 1).unwrap();
    let v = out.report.details["v_exact"].as_f64().unwrap();
    assert!((v - 1.0 / 3.0).abs() < 1e-15);
    let est = out.report.details["v_estimate"].as_f64().unwrap();
    assert!((est - 1.0 / 3.0).abs() < 0.01, "{est}");
}

#[test]
fn block_exponential_without_paths_is_empty() {
    let cfg = config(
        OmegaDistribution::fixture(),
        serde_json::json!({ "kind": "block-exponential", "n": 256, "blocks": 5, "paths": 0 }),
        1,
    );
    let out = run_with_workers(&cfg, 1).unwrap();
    assert_eq!(out.report.n_samples, 0);
    assert_eq!(out.report.ks, None);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let cases = [
        serde_json::json!({ "kind": "moments-check", "environments": 20 }),
        serde_json::json!({ "kind": "speed", "t": 5_000, "paths": 16, "left_context": 50 }),
        serde_json::json!({ "kind": "variance-stable", "n": 64, "reps": 60 }),
        serde_json::json!({ "kind": "laplace-sandwich", "blocks": 60, "mc_blocks": 4, "samples": 300 }),
        serde_json::json!({ "kind": "excursion-identity", "blocks": 10, "samples": 500 }),
        serde_json::json!({ "kind": "scan", "counts": [16, 56, 343] }),
        serde_json::json!({ "kind": "annealed-stable", "n": 200, "reps": 30 }),
    ];
    for exp in cases {
        let cfg = config(OmegaDistribution::fixture(), exp, 11);
        let one = run_with_workers(&cfg, 1).unwrap();
        let four = run_with_workers(&cfg, 4).unwrap();
        assert_eq!(one.report.to_json(), four.report.to_json(), "{}", cfg.experiment.name());
        assert_eq!(one.artifacts, four.artifacts, "{}", cfg.experiment.name());
    }
}

#[test]
fn report_lists_artifact_digests_and_config_hash() {
    let cfg = config(
        OmegaDistribution::fixture(),
        serde_json::json!({ "kind": "moments-check", "environments": 4 }),
        2,
    );
    let out = run_with_workers(&cfg, 1).unwrap();
    assert_eq!(out.report.config_hash, cfg.hash());
    assert_eq!(out.report.artifacts.len(), out.artifacts.len());
    for (d, a) in out.report.artifacts.iter().zip(&out.artifacts) {
        assert_eq!(d.name, a.name);
        assert_eq!(d.sha256, a.sha256());
    }
    let json: serde_json::Value = serde_json::from_str(&out.report.to_json()).unwrap();
    for key in [
        "experiment",
        "params",
        "n_samples",
        "ks",
        "hill",
        "fitted_b",
        "censored_rate",
        "seed",
    ] {
        assert!(json.get(key).is_some(), "report lacks {key}");
    }
}

#[test]
fn config_hash_ignores_field_order() {
    let a = ExperimentConfig::from_json(
        r#"{"seed": 4, "experiment": {"paths": 10, "kind": "speed"}, "distribution": {"kind": "beta", "alpha": 3.5, "beta": 2}}"#,
    )
    .unwrap();
    let b = ExperimentConfig::from_json(
        r#"{"distribution": {"beta": 2, "alpha": 3.5, "kind": "beta"}, "experiment": {"kind": "speed", "paths": 10}, "seed": 4}"#,
    )
    .unwrap();
    assert_eq!(a.hash(), b.hash());
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut parsed = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        if path.file_name().unwrap() == "two-point.json" {
            let dist: OmegaDistribution = serde_json::from_str(&text).unwrap();
            assert_eq!(dist, OmegaDistribution::fixture());
            continue;
        }
        ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        parsed += 1;
    }
    assert!(parsed >= 12);
}
