//! Subcommand drivers. Each returns the list of files it wrote; errors map
//! onto stable exit codes (0 ok, 2 config, 3 estimation, 4 scale, 5 fit).

use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hetsim_core::engine::replicate;
use hetsim_core::error::{Error, Result};
use hetsim_core::metrics::{eta_threshold, EtaVariant, RunMetrics};
use hetsim_core::model::{check_assumptions, constants, Regime, SystemConfig};
use hetsim_core::oracle::drift::{drift_check, DriftReport, LemmaId, Region};
use hetsim_core::oracle::{
    build_generator, exact_metrics, moment_inequality_check, solve, stein_identity_check,
    StateSpace, MAX_STATES,
};
use hetsim_core::sweep::{fit_exponent, run_sweep, MetricId, ScalingFit, SweepRow};

use crate::config::ConfigFile;
use crate::output::{
    csv_string, json_string, metric_rows, sweep_csv_string, write_text, MetricRow, ResultsDoc,
    ResultsMeta,
};
use crate::plot::{render_loglog_svg, Series};

/// Stable exit code for an error class.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::State(_) => 2,
        Error::Estimation(_) | Error::Numerical { .. } => 3,
        Error::Scale(_) => 4,
        Error::Fit(_) => 5,
    }
}

fn meta_for(cfg: &ConfigFile, config: &SystemConfig, method: &str) -> ResultsMeta {
    ResultsMeta {
        n: config.n(),
        alpha: config.alpha(),
        lambda: config.lambda(),
        b: config.buffer_b(),
        policy: cfg
            .policy()
            .map(|p| p.to_string())
            .unwrap_or_else(|_| cfg.policy.kind.clone()),
        profile: cfg.system.profile.to_string(),
        seed: cfg.run.seed,
        method: method.to_string(),
    }
}

fn emit_results(
    out_dir: &Path,
    meta: &ResultsMeta,
    rows: Vec<MetricRow>,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::config(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("results.csv");
    let json_path = out_dir.join("results.json");
    write_text(&csv_path, &csv_string(meta, &rows))?;
    let doc = ResultsDoc { meta: meta.clone(), results: rows };
    write_text(&json_path, &(json_string(&doc)? + "\n"))?;
    Ok(vec![csv_path, json_path])
}

/// Runs the configured replications and writes results.{csv,json}.
pub fn cmd_simulate(cfg: &ConfigFile, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let spec = cfg.run_spec()?;
    let metrics = replicate(&spec, cfg.replications())?;
    let meta = meta_for(cfg, &spec.config, "simulation");
    emit_results(out_dir, &meta, metric_rows(&metrics))
}

/// Exact pipeline: solve the chain, emit the same schema with method=exact
/// plus generator-identity and moment-inequality rows.
pub fn cmd_exact(cfg: &ConfigFile, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let config = cfg.system_config()?;
    let policy = cfg.policy()?;
    // Size guard up front so oversized systems exit with the scale code.
    StateSpace::new(config.n(), config.buffer_b() as u32)?;
    let generator = build_generator(&config, policy)?;
    let dist = solve(&generator)?;
    let metrics: RunMetrics = exact_metrics(&dist, &config, policy)?;
    let mut rows = metric_rows(&metrics);
    rows.push(MetricRow {
        metric: "solve_residual".into(),
        estimate: dist.residual,
        stderr: 0.0,
    });

    // Identity rows over r and a small η set (plus the regime threshold
    // when the config defines one).
    let mut etas: Vec<(String, f64)> = vec![("0".into(), 0.0), ("0.5".into(), 0.5)];
    let konst1 = constants(&config, 1)?;
    if config.regime() != Regime::Direct && konst1.nu > 0.0 {
        let eta = eta_threshold(&config, &konst1, EtaVariant::Proof)?;
        etas.push(("regime".into(), eta));
    }
    for r in 1..=3u32 {
        for (tag, eta) in &etas {
            let v = stein_identity_check(&dist, &config, policy, r, *eta)?;
            rows.push(MetricRow {
                metric: format!("stein_identity:r={r}:eta={tag}"),
                estimate: v,
                stderr: 0.0,
            });
        }
    }
    for r in 1..=3u32 {
        let konst = constants(&config, r)?;
        // Direct-λ configs have no regime threshold; report at η = 0.5.
        let eta = match config.regime() {
            Regime::Direct => Some(0.5),
            _ if konst.nu <= 0.0 => Some(0.5),
            _ => None,
        };
        let rep = moment_inequality_check(&dist, &config, &konst, r, eta)?;
        rows.push(MetricRow { metric: format!("moment_eta:r={r}"), estimate: rep.eta, stderr: 0.0 });
        rows.push(MetricRow { metric: format!("moment_lhs:r={r}"), estimate: rep.lhs, stderr: 0.0 });
        rows.push(MetricRow { metric: format!("moment_rhs:r={r}"), estimate: rep.rhs, stderr: 0.0 });
        rows.push(MetricRow {
            metric: format!("moment_satisfied:r={r}"),
            estimate: rep.satisfied as u8 as f64,
            stderr: 0.0,
        });
        if let Some(bound) = rep.theorem_bound {
            rows.push(MetricRow {
                metric: format!("moment_theorem_bound:r={r}"),
                estimate: bound,
                stderr: 0.0,
            });
        }
    }
    let meta = meta_for(cfg, &config, "exact");
    emit_results(out_dir, &meta, rows)
}

#[derive(Serialize)]
struct SeriesFits {
    alpha: f64,
    profile: String,
    policy: String,
    fits: Vec<ScalingFit>,
    fit_errors: Vec<String>,
}

#[derive(Serialize)]
struct SweepFitsDoc {
    metric: String,
    series: Vec<SeriesFits>,
    point_errors: Vec<String>,
    assumption_flags: Vec<String>,
}

/// Runs the sweep grid, writes sweep.csv + fits.json (+ plot.svg).
pub fn cmd_sweep(
    cfg: &ConfigFile,
    out_dir: &Path,
    plot: bool,
    metric: MetricId,
) -> Result<Vec<PathBuf>> {
    let spec = cfg.sweep_spec()?;
    let rows = run_sweep(&spec)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::config(format!("cannot create {}: {e}", out_dir.display())))?;
    let csv_path = out_dir.join("sweep.csv");
    write_text(&csv_path, &sweep_csv_string(&rows, "simulation"))?;
    let mut written = vec![csv_path];

    // Group rows into (alpha, profile, policy) series ordered by N.
    let mut series: BTreeMap<(String, String, String), Vec<&SweepRow>> = BTreeMap::new();
    for row in &rows {
        series
            .entry((
                row.point.alpha.to_string(),
                row.point.profile.clone(),
                row.point.policy.clone(),
            ))
            .or_default()
            .push(row);
    }

    let mut fits_doc = SweepFitsDoc {
        metric: metric.to_string(),
        series: Vec::new(),
        point_errors: rows
            .iter()
            .filter_map(|r| {
                r.error.as_ref().map(|e| format!("{} n={}: {e}", r.point.policy, r.point.n))
            })
            .collect(),
        assumption_flags: rows
            .iter()
            .filter(|r| r.metrics.is_some() && !r.assumptions_ok)
            .map(|r| {
                format!(
                    "n={} alpha={} profile={} policy={}",
                    r.point.n, r.point.alpha, r.point.profile, r.point.policy
                )
            })
            .collect(),
    };
    let mut plot_series = Vec::new();
    let mut first_fit_error: Option<Error> = None;
    for ((alpha, profile, policy), group) in &series {
        let owned: Vec<SweepRow> = group.iter().map(|r| (*r).clone()).collect();
        let mut fits = Vec::new();
        let mut fit_errors = Vec::new();
        match fit_exponent(&owned, metric) {
            Ok(f) => fits.push(f),
            Err(e) => {
                fit_errors.push(e.to_string());
                if first_fit_error.is_none() {
                    first_fit_error = Some(e);
                }
            }
        }
        fits_doc.series.push(SeriesFits {
            alpha: alpha.parse().unwrap_or(f64::NAN),
            profile: profile.clone(),
            policy: policy.clone(),
            fits,
            fit_errors,
        });
        let points: Vec<(f64, f64)> = group
            .iter()
            .filter_map(|r| {
                let est = metric.extract(r.metrics.as_ref()?)?;
                Some((r.point.n as f64, est.value))
            })
            .collect();
        if !points.is_empty() {
            plot_series.push(Series {
                label: format!("α={alpha} {profile} {policy}"),
                points,
            });
        }
    }
    let fits_path = out_dir.join("fits.json");
    write_text(&fits_path, &(json_string(&fits_doc)? + "\n"))?;
    written.push(fits_path);

    if plot {
        let svg = render_loglog_svg(
            &format!("{metric} vs N"),
            "N",
            &metric.to_string(),
            &plot_series,
        );
        let svg_path = out_dir.join("plot.svg");
        write_text(&svg_path, &svg)?;
        written.push(svg_path);
    }

    // Partial outputs stay on disk; a fit failure still exits with code 5.
    if let Some(e) = first_fit_error {
        return Err(e);
    }
    Ok(written)
}

/// Enumerates or samples the lemma's premise region and writes the report.
/// Violations are part of the report, not an error.
pub fn cmd_drift_check(cfg: &ConfigFile, lemma_arg: &str, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let config = cfg.system_config()?;
    let policy = cfg.policy()?;
    let drift_cfg = cfg.drift.clone().unwrap_or_default();
    let lemma: LemmaId = if lemma_arg == "most_n1" {
        LemmaId::MostN1 { delta: drift_cfg.delta.unwrap_or(0.5) }
    } else {
        lemma_arg.parse()?
    };
    let r = drift_cfg.r.unwrap_or(1);
    let enumerable = StateSpace::new(config.n(), config.buffer_b() as u32).is_ok();
    let region = if enumerable {
        Region::Enumerate
    } else {
        Region::Sample { count: drift_cfg.samples.unwrap_or(100_000), seed: cfg.run.seed }
    };
    let report: DriftReport = drift_check(lemma, &config, policy, region, r)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Error::config(format!("cannot create {}: {e}", out_dir.display())))?;
    let path = out_dir.join("drift_report.json");
    write_text(&path, &(json_string(&report)? + "\n"))?;
    Ok(vec![path])
}

/// Re-exported size guard for tests.
pub fn oracle_state_guard(n: usize, b: u32) -> Result<()> {
    StateSpace::new(n, b).map(|_| ())
}

/// Assumption report emission helper used by simulate/sweep callers that
/// want the flags without rerunning checks.
pub fn assumptions_summary(config: &SystemConfig) -> String {
    let rep = check_assumptions(config, 1);
    format!("regime={} satisfied={}", rep.regime, rep.satisfied)
}

pub use hetsim_core::oracle::MAX_STATES as ORACLE_MAX_STATES;

#[allow(dead_code)]
fn _assert_guard_limit() {
    let _ = MAX_STATES;
}
