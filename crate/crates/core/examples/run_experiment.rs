//! Run an experiment from a JSON config and write its report and CSV
//! artifacts, as `rwre-lab run` does.
//!
//! cargo run --release --example run_experiment [config.json]

use rwre_lab::experiments::{run, ExperimentConfig};

const DEFAULT: &str = r#"{
    "distribution": {"kind": "two_point", "omega_a": 0.2, "omega_b": 0.8695652173913044, "q": 0.11859940658821025},
    "experiment": {"kind": "laplace-sandwich", "blocks": 200, "mc_blocks": 10, "samples": 2000},
    "seed": 3
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = match std::env::args().nth(1) {
        Some(path) => std::fs::read_to_string(path)?,
        None => DEFAULT.to_string(),
    };
    let cfg = ExperimentConfig::from_json(&text)?;
    let out = run(&cfg)?;
    for c in &out.report.checks {
        println!(
            "{} {}: {} (threshold {})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    let dir = std::env::temp_dir()
        .join("rwre-lab-example")
        .join(cfg.experiment.name());
    out.write(&dir)?;
    println!("config hash {}", out.report.config_hash);
    println!(
        "wrote {} artifacts and report.json to {}",
        out.artifacts.len(),
        dir.display()
    );
    Ok(())
}
