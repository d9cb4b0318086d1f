//! End-to-end tests of the `hetsim` binary: exit codes, output schemas, and
//! determinism of emitted files.

use std::path::Path;
use std::process::{Command, Output};

use hetsim_cli::output::{validate_results_json, CSV_HEADER};

fn hetsim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetsim"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const BIRTH_DEATH: &str = r#"
[system]
n = 1
lambda = 0.5
buffer_b = 2
profile = { kind = "homogeneous" }

[run]
horizon_events = 200000
warmup_events = 20000
batches = 16
seed = 7

[policy]
kind = "jfsq"
"#;

#[test]
fn simulate_writes_schema_and_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BIRTH_DEATH);
    let out = hetsim(&["simulate", "--config", &cfg, "--out", "results"], tmp.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("results/results.csv")).unwrap();
    assert!(csv.starts_with(&format!("{CSV_HEADER}\n")));
    assert!(csv.lines().any(|l| l.contains(",p_wait,")));
    let json = std::fs::read_to_string(tmp.path().join("results/results.json")).unwrap();
    let doc = validate_results_json(&json).unwrap();
    assert_eq!(doc.meta.method, "simulation");
}

#[test]
fn missing_config_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hetsim(&["simulate", "--config", "nope.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_is_bit_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BIRTH_DEATH);
    assert!(hetsim(&["simulate", "--config", &cfg, "--out", "a"], tmp.path()).status.success());
    assert!(hetsim(&["simulate", "--config", &cfg, "--out", "b"], tmp.path()).status.success());
    let a = std::fs::read(tmp.path().join("a/results.csv")).unwrap();
    let b = std::fs::read(tmp.path().join("b/results.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn exact_birth_death_golden_values() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BIRTH_DEATH);
    let out = hetsim(&["exact", "--config", &cfg, "--out", "exact"], tmp.path());
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let json = std::fs::read_to_string(tmp.path().join("exact/results.json")).unwrap();
    let doc = validate_results_json(&json).unwrap();
    assert_eq!(doc.meta.method, "exact");
    let get = |name: &str| {
        doc.results
            .iter()
            .find(|r| r.metric == name)
            .unwrap_or_else(|| panic!("missing {name}"))
            .estimate
    };
    assert!((get("p_wait") - 3.0 / 7.0).abs() < 1e-10);
    assert!((get("p_block") - 1.0 / 7.0).abs() < 1e-10);
    assert!((get("mean_wait") - 1.0 / 3.0).abs() < 1e-10);
    assert!((get("mean_qbar") - 4.0 / 7.0).abs() < 1e-10);
    assert!(get("stein_identity:r=1:eta=0") <= 1e-8);
    assert!(doc.results.iter().any(|r| r.metric == "moment_lhs:r=1"));
}

#[test]
fn exact_and_simulate_agree() {
    let tmp = tempfile::tempdir().unwrap();
    let body = BIRTH_DEATH
        .replace("n = 1", "n = 2")
        .replace("lambda = 0.5", "lambda = 0.7")
        .replace("horizon_events = 200000", "horizon_events = 2000000");
    let cfg = write_config(tmp.path(), "c.toml", &body);
    assert!(hetsim(&["exact", "--config", &cfg, "--out", "e"], tmp.path()).status.success());
    assert!(hetsim(&["simulate", "--config", &cfg, "--out", "s"], tmp.path()).status.success());
    let exact =
        validate_results_json(&std::fs::read_to_string(tmp.path().join("e/results.json")).unwrap())
            .unwrap();
    let sim =
        validate_results_json(&std::fs::read_to_string(tmp.path().join("s/results.json")).unwrap())
            .unwrap();
    for metric in ["p_wait", "p_block", "mean_qbar", "mean_wait"] {
        let ex = exact.results.iter().find(|r| r.metric == metric).unwrap();
        let si = sim.results.iter().find(|r| r.metric == metric).unwrap();
        assert!(
            (ex.estimate - si.estimate).abs() <= 3.0 * si.stderr,
            "{metric}: exact {} vs sim {} ± {}",
            ex.estimate,
            si.estimate,
            si.stderr
        );
    }
}

#[test]
fn exact_oversized_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let body = BIRTH_DEATH.replace("n = 1", "n = 20").replace("buffer_b = 2", "buffer_b = 3");
    let cfg = write_config(tmp.path(), "c.toml", &body);
    let out = hetsim(&["exact", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn extreme_alphas_run_sanely() {
    // α near 0 gives λ = 1 - n^(-α) ≈ 0: a light-load run with negligible
    // waiting. α near 1 is the heavy end and must also simply run.
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"
[system]
n = 10
alpha = 0.01
buffer_b = 2
profile = { kind = "homogeneous" }

[run]
horizon_events = 300000
seed = 5

[policy]
kind = "jfsq"
"#;
    let cfg = write_config(tmp.path(), "light.toml", body);
    let out = hetsim(&["simulate", "--config", &cfg, "--out", "r"], tmp.path());
    assert!(out.status.success());
    let doc =
        validate_results_json(&std::fs::read_to_string(tmp.path().join("r/results.json")).unwrap())
            .unwrap();
    let p_wait = doc.results.iter().find(|r| r.metric == "p_wait").unwrap().estimate;
    assert!(p_wait < 0.05, "λ ≈ 0.023 barely loads 10 servers, got p_wait = {p_wait}");

    let heavy = body.replace("alpha = 0.01", "alpha = 0.99");
    let cfg = write_config(tmp.path(), "heavy.toml", &heavy);
    let out = hetsim(&["simulate", "--config", &cfg, "--out", "h"], tmp.path());
    assert!(out.status.success());
}

const SWEEP: &str = r#"
[system]
n = 4
alpha = 0.3
buffer_b = 2
profile = { kind = "homogeneous" }

[run]
horizon_events = 60000
warmup_events = 10000
batches = 8
seed = 11
replications = 2

[policy]
kind = "jfsq"

[sweep]
n_grid = [8, 16, 32]
alpha_grid = [0.3]
"#;

#[test]
fn sweep_emits_fits_and_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", SWEEP);
    let out = hetsim(
        &["sweep", "--config", &cfg, "--out", "sw", "--plot", "--metric", "p_wait"],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let fits = std::fs::read_to_string(tmp.path().join("sw/fits.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&fits).unwrap();
    let fit = &parsed["series"][0]["fits"][0];
    assert!(fit["slope"].is_number());
    assert!(fit["r_squared"].is_number());
    let svg = std::fs::read_to_string(tmp.path().join("sw/plot.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 1);
    assert_well_formed_xml(&svg);
    let csv = std::fs::read_to_string(tmp.path().join("sw/sweep.csv")).unwrap();
    assert!(csv.starts_with(&format!("{CSV_HEADER}\n")));
    // 3 grid points in the table.
    assert_eq!(csv.lines().filter(|l| l.contains(",p_wait,")).count(), 3);
}

#[test]
fn sweep_empty_grid_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SWEEP.replace("n_grid = [8, 16, 32]", "n_grid = []");
    let cfg = write_config(tmp.path(), "c.toml", &body);
    let out = hetsim(&["sweep", "--config", &cfg], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_too_few_points_exits_five_with_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let body = SWEEP.replace("n_grid = [8, 16, 32]", "n_grid = [8, 16]");
    let cfg = write_config(tmp.path(), "c.toml", &body);
    let out = hetsim(&["sweep", "--config", &cfg, "--out", "sw"], tmp.path());
    assert_eq!(out.status.code(), Some(5));
    assert!(tmp.path().join("sw/sweep.csv").exists());
    assert!(tmp.path().join("sw/fits.json").exists());
}

const DRIFT: &str = r#"
[system]
n = 3
lambda = 0.5
buffer_b = 2
profile = { kind = "explicit", rates = [1.5, 1.0, 0.5] }

[run]
horizon_events = 1000
seed = 3

[policy]
kind = "jfsq"

[drift]
delta = 0.5
"#;

#[test]
fn drift_check_reference_lemma() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", DRIFT);
    let out = hetsim(&["drift-check", "--config", &cfg, "--lemma", "most_n1", "--out", "d"], tmp.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("d/drift_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["violations"], 0);
    assert!(report["checked"].as_u64().unwrap() > 0);
}

#[test]
fn drift_check_empty_premise_is_exit_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", DRIFT);
    let out =
        hetsim(&["drift-check", "--config", &cfg, "--lemma", "most_n2", "--out", "d"], tmp.path());
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("d/drift_report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["checked"], 0);
}

#[test]
fn drift_check_unknown_lemma_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", DRIFT);
    let out = hetsim(&["drift-check", "--config", &cfg, "--lemma", "bogus"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overrides_flow_through() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", BIRTH_DEATH);
    let out = hetsim(
        &[
            "simulate",
            "--config",
            &cfg,
            "--override",
            "run.seed=99",
            "--override",
            "system.n=2",
            "--override",
            "system.lambda=0.6",
            "--out",
            "r",
        ],
        tmp.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let doc =
        validate_results_json(&std::fs::read_to_string(tmp.path().join("r/results.json")).unwrap())
            .unwrap();
    assert_eq!(doc.meta.seed, 99);
    assert_eq!(doc.meta.n, 2);
}

/// Minimal XML well-formedness: tags balance and nest properly.
fn assert_well_formed_xml(text: &str) {
    let mut stack: Vec<String> = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        let Some(end_rel) = rest[start..].find('>') else { panic!("unclosed tag") };
        let tag = &rest[start + 1..start + end_rel];
        rest = &rest[start + end_rel + 1..];
        if let Some(name) = tag.strip_prefix('/') {
            let open = stack.pop().unwrap_or_else(|| panic!("unmatched </{name}>"));
            assert_eq!(open, name, "mismatched close tag");
        } else if tag.ends_with('/') || tag.starts_with('?') || tag.starts_with('!') {
            // self-closing or declaration
        } else {
            let name: String =
                tag.split_whitespace().next().unwrap_or("").to_string();
            stack.push(name);
        }
    }
    assert!(stack.is_empty(), "unclosed tags: {stack:?}");
}
