//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Statistical criteria are reported, not asserted, so the run exits zero
//! unless an experiment errors. Set `ACCEPTANCE_STRICT=1` to exit nonzero on
//! any FAIL line.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rwre_lab::environment::{solve_s, Environment, OmegaDistribution};
use rwre_lab::experiments::{run_with_workers, ExperimentConfig, ExperimentSpec, Outcome, PlantSpec};
use rwre_lab::quenched::{crossing_moments, ReflectionPolicy};

const SEED: u64 = 1;

fn beta() -> OmegaDistribution {
    OmegaDistribution::Beta { alpha: 3.5, beta: 2.0 }
}

fn spec(json: serde_json::Value) -> ExperimentSpec {
    serde_json::from_value(json).expect("valid experiment")
}

struct Line {
    passed: bool,
    text: String,
}

struct Harness {
    lines: Vec<Line>,
    runs: Vec<(ExperimentConfig, Outcome)>,
    workers: usize,
}

impl Harness {
    fn run(&mut self, dist: OmegaDistribution, exp: ExperimentSpec) -> (Outcome, Duration) {
        let cfg = ExperimentConfig::new(dist, exp, SEED);
        let t0 = Instant::now();
        let out =
            run_with_workers(&cfg, self.workers).unwrap_or_else(|e| panic!("{} failed: {e}", cfg.experiment.name()));
        let took = t0.elapsed();
        self.runs.push((cfg, out.clone()));
        (out, took)
    }

    fn record(&mut self, id: usize, name: &str, passed: bool, detail: String) {
        let text = format!("{} {id:>2} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        println!("{text}");
        self.lines.push(Line { passed, text });
    }
}

fn summary(out: &Outcome) -> String {
    out.report
        .checks
        .iter()
        .map(|c| {
            format!(
                "{}={:.4} ({} {})",
                c.name,
                c.value,
                if c.at_most { "<=" } else { ">=" },
                c.threshold
            )
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn within(took: Duration, limit_s: u64) -> bool {
    took <= Duration::from_secs(limit_s)
}

/// `(E T, Var T)` for the walk started at `start`, reflected at `reflect`
/// and absorbed at `absorb`, by a dense solve of the first-step equations.
fn dense_moments(omega: impl Fn(i64) -> f64, reflect: i64, absorb: i64, start: i64) -> (f64, f64) {
    let n = (absorb - reflect) as usize;
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        let x = reflect + i as i64;
        let w = if x == reflect { 1.0 } else { omega(x) };
        if i + 1 < n {
            a[(i, i + 1)] -= w;
        }
        if i > 0 {
            a[(i, i - 1)] -= 1.0 - w;
        }
    }
    let lu = a.lu();
    let m = lu.solve(&DVector::from_element(n, 1.0)).expect("nonsingular");
    let rhs = m.map(|v| 2.0 * v - 1.0);
    let s = lu.solve(&rhs).expect("nonsingular");
    let i = (start - reflect) as usize;
    let mean = m[i];
    (mean, s[i] - mean * mean)
}

/// Largest relative error of the library's crossing moments against the
/// dense solve over `count` random windows.
fn dense_check(dist: &OmegaDistribution, count: usize, seed: u64) -> f64 {
    let sampler = dist.sampler().expect("sampler");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let depth = rng.random_range(0..12i64);
        let len = rng.random_range(1..25i64);
        let omegas: Vec<f64> = (0..depth + len).map(|_| sampler.sample(&mut rng)).collect();
        let env = Environment::new(-depth, omegas.clone()).expect("environment");
        let got = crossing_moments(&env, None, 0, len, ReflectionPolicy::Fixed { site: -depth }).expect("moments");
        let (mean, var) = dense_moments(|x| omegas[(x + depth) as usize], -depth, len, 0);
        worst = worst
            .max((got.mean - mean).abs() / mean)
            .max((got.variance - var).abs() / var.abs().max(f64::MIN_POSITIVE));
    }
    worst
}

fn main() {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut h = Harness {
        lines: Vec::new(),
        runs: Vec::new(),
        workers,
    };
    let fixture = OmegaDistribution::fixture();
    let s = solve_s(&fixture).expect("fixture index").s;
    println!("fixture: {fixture:?}, s = {s}");

    // 1
    let t0 = Instant::now();
    let (fx, _) = h.run(fixture.clone(), spec(serde_json::json!({ "kind": "moments-check" })));
    let (bx, _) = h.run(beta(), spec(serde_json::json!({ "kind": "moments-check" })));
    let dense = dense_check(&fixture, 50, 11).max(dense_check(&beta(), 50, 12));
    let took = t0.elapsed();
    h.record(
        1,
        "exact moments vs first-step oracle",
        fx.report.passed && bx.report.passed && dense <= 1e-9 && within(took, 10),
        format!(
            "fixture {}; beta {}; dense solve max rel err {dense:.2e}; {:.1} s",
            summary(&fx),
            summary(&bx),
            took.as_secs_f64()
        ),
    );

    // 2
    let (sp, took) = h.run(fixture.clone(), spec(serde_json::json!({ "kind": "speed" })));
    let homogeneous = OmegaDistribution::homogeneous(2.0 / 3.0).speed().expect("transient");
    h.record(
        2,
        "speed law",
        sp.report.passed && (homogeneous - 1.0 / 3.0).abs() < 1e-15 && within(took, 60),
        format!(
            "{}; v_exact {:.6}, estimate {:.6}; homogeneous 2/3 gives {homogeneous}; {:.1} s",
            summary(&sp),
            sp.report.details["v_exact"].as_f64().unwrap_or(f64::NAN),
            sp.report.details["v_estimate"].as_f64().unwrap_or(f64::NAN),
            took.as_secs_f64()
        ),
    );

    // 3
    let (mt, took) = h.run(beta(), spec(serde_json::json!({ "kind": "m-tail" })));
    let (mt_fixture, _) = h.run(fixture.clone(), spec(serde_json::json!({ "kind": "m-tail" })));
    h.record(
        3,
        "block maximum tail index (Beta(3.5, 2), s = 1.5)",
        mt.report.passed && within(took, 120),
        format!(
            "{}; hill {:.4}; {:.1} s",
            summary(&mt),
            mt.report.hill.unwrap_or(f64::NAN),
            took.as_secs_f64()
        ),
    );
    println!(
        "INFO  3 two-point fixture (atoms, not gated): hill {:.4}",
        mt_fixture.report.hill.unwrap_or(f64::NAN)
    );

    // 4
    let (vs, took) = h.run(fixture.clone(), spec(serde_json::json!({ "kind": "variance-stable" })));
    h.record(
        4,
        "variance stable scaling",
        vs.report.passed && within(took, 900),
        format!(
            "{}; fitted b {:.4}; {:.1} s",
            summary(&vs),
            vs.report.fitted_b.unwrap_or(f64::NAN),
            took.as_secs_f64()
        ),
    );

    // 5
    let (ls, took) = h.run(fixture.clone(), spec(serde_json::json!({ "kind": "laplace-sandwich" })));
    h.record(
        5,
        "Laplace sandwich",
        ls.report.passed && within(took, 600),
        format!("{}; {:.1} s", summary(&ls), took.as_secs_f64()),
    );

    // 6
    let (be, took) = h.run(
        fixture.clone(),
        spec(serde_json::json!({ "kind": "block-exponential" })),
    );
    h.record(
        6,
        "big-block exponential limit",
        be.report.passed && within(took, 900),
        format!(
            "{}; n_samples {}; {:.1} s",
            summary(&be),
            be.report.n_samples,
            took.as_secs_f64()
        ),
    );

    // 7
    let plant = PlantSpec {
        mu_lo: 105.0,
        mu_hi: 140.0,
        m_cap: 10.0,
        max_attempts: 100,
    };
    let (clt, took) = h.run(
        fixture.clone(),
        spec(serde_json::json!({ "kind": "clt-subsequence", "a": 12, "plant": plant })),
    );
    h.record(
        7,
        "Gaussian-event subsequence CLT (planted)",
        clt.report.passed && within(took, 1200),
        format!(
            "{}; attempt {}; {:.1} s",
            summary(&clt),
            clt.report.details["attempt"],
            took.as_secs_f64()
        ),
    );

    // 8
    let (ex, took) = h.run(fixture.clone(), spec(serde_json::json!({ "kind": "exp-subsequence" })));
    h.record(
        8,
        "exponential-event subsequence (C = 20)",
        ex.report.passed && within(took, 1200),
        format!("{}; {:.1} s", summary(&ex), took.as_secs_f64()),
    );

    // 9
    let (ei, took) = h.run(
        fixture.clone(),
        spec(serde_json::json!({ "kind": "excursion-identity" })),
    );
    h.record(
        9,
        "excursion identity",
        ei.report.passed && within(took, 300),
        format!("{}; {:.1} s", summary(&ei), took.as_secs_f64()),
    );

    // 10
    let rerun_workers = if workers == 1 { 3 } else { 1 };
    let mut mismatches = Vec::new();
    for (cfg, first) in &h.runs {
        let again = run_with_workers(cfg, rerun_workers).expect("rerun");
        let same = first.report.to_json() == again.report.to_json()
            && first.artifacts.len() == again.artifacts.len()
            && first
                .artifacts
                .iter()
                .zip(&again.artifacts)
                .all(|(a, b)| a.name == b.name && a.bytes == b.bytes);
        if !same {
            mismatches.push(cfg.experiment.name());
        }
    }
    let n_runs = h.runs.len();
    h.record(
        10,
        "determinism",
        mismatches.is_empty(),
        format!("{n_runs} runs repeated on {rerun_workers} worker(s); mismatched: {mismatches:?}"),
    );

    let failed = h.lines.iter().filter(|l| !l.passed).count();
    println!("{} of {} criteria passed", h.lines.len() - failed, h.lines.len());
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        for l in h.lines.iter().filter(|l| !l.passed) {
            eprintln!("{}", l.text);
        }
        std::process::exit(1);
    }
}
