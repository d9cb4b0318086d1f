//! Experiment orchestration over grids of (N, α, profile, policy), plus
//! log-log exponent fits of metrics against the system size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::engine::{replicate, InitialState, RunSpec};
use crate::error::{Error, Result};
use crate::metrics::{check_fit_usable, Estimate, EtaVariant, ProbeId, RunMetrics};
use crate::model::{check_assumptions, make_profile, ProfileSpec, SystemConfig};
use crate::policy::PolicySpec;

/// Metric selector for fits, plots, and CSV lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricId {
    PWait,
    PBlock,
    MeanWait,
    MeanQbar,
    /// Clipped moment of order r at the regime threshold.
    Clipped(u32),
}

impl MetricId {
    pub fn extract(&self, m: &RunMetrics) -> Option<Estimate> {
        match self {
            MetricId::PWait => Some(m.p_wait),
            MetricId::PBlock => Some(m.p_block),
            MetricId::MeanWait => Some(m.mean_wait),
            MetricId::MeanQbar => Some(m.mean_qbar),
            MetricId::Clipped(r) => m.clipped_moments.get(r).copied(),
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricId::PWait => write!(f, "p_wait"),
            MetricId::PBlock => write!(f, "p_block"),
            MetricId::MeanWait => write!(f, "mean_wait"),
            MetricId::MeanQbar => write!(f, "mean_qbar"),
            MetricId::Clipped(r) => write!(f, "h{r}"),
        }
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p_wait" => Ok(MetricId::PWait),
            "p_block" => Ok(MetricId::PBlock),
            "mean_wait" => Ok(MetricId::MeanWait),
            "mean_qbar" => Ok(MetricId::MeanQbar),
            "h1" => Ok(MetricId::Clipped(1)),
            "h2" => Ok(MetricId::Clipped(2)),
            "h3" => Ok(MetricId::Clipped(3)),
            _ => Err(Error::config(format!("unknown metric {s:?}"))),
        }
    }
}

/// Grid specification. Every (n, α, profile, policy) combination becomes one
/// point, run with `replications` merged replications.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub n_grid: Vec<usize>,
    pub alpha_grid: Vec<f64>,
    pub profiles: Vec<ProfileSpec>,
    pub policies: Vec<PolicySpec>,
    pub buffer_b: usize,
    pub horizon_events: u64,
    pub warmup_events: u64,
    pub batches: u32,
    pub seed: u64,
    pub replications: u32,
    pub probes: Vec<ProbeId>,
    pub eta_variant: EtaVariant,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.is_empty() {
            return Err(Error::config("empty n_grid"));
        }
        if !self.n_grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("n_grid must be strictly increasing"));
        }
        if self.alpha_grid.is_empty() || self.profiles.is_empty() || self.policies.is_empty() {
            return Err(Error::config("alpha_grid, profiles, and policies must be non-empty"));
        }
        if self.replications < 1 {
            return Err(Error::config("replications must be at least 1"));
        }
        Ok(())
    }
}

/// Identity of one grid point, kept alongside its results for provenance.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PointDesc {
    pub n: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub buffer_b: usize,
    pub profile: String,
    pub policy: String,
    pub seed: u64,
    pub replications: u32,
}

/// One sweep row: either merged metrics or the error that stopped the point.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub point: PointDesc,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
    /// Whether the regime's finite-size assumptions held at this point.
    pub assumptions_ok: bool,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs every grid point (in parallel), failures recorded per point.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let mut points = Vec::new();
    for &n in &spec.n_grid {
        for &alpha in &spec.alpha_grid {
            for profile in &spec.profiles {
                for &policy in &spec.policies {
                    points.push((n, alpha, profile.clone(), policy));
                }
            }
        }
    }
    let rows: Vec<SweepRow> = points
        .into_par_iter()
        .enumerate()
        .map(|(idx, (n, alpha, profile_spec, policy))| {
            let point_seed = splitmix64(spec.seed ^ (idx as u64).wrapping_mul(0xA076_1D64_78BD_642F));
            let mut desc = PointDesc {
                n,
                alpha,
                lambda: f64::NAN,
                buffer_b: spec.buffer_b,
                profile: profile_spec.to_string(),
                policy: policy.to_string(),
                seed: point_seed,
                replications: spec.replications,
            };
            let outcome = (|| -> Result<(RunMetrics, bool, f64)> {
                let profile = make_profile(&profile_spec, n)?;
                let config = SystemConfig::with_alpha(n, alpha, spec.buffer_b, profile)?;
                let lambda = config.lambda();
                let assumptions_ok = check_assumptions(&config, 1).satisfied;
                let run_spec = RunSpec {
                    config,
                    policy,
                    horizon_events: spec.horizon_events,
                    warmup_events: spec.warmup_events,
                    batches: spec.batches,
                    seed: point_seed,
                    probes: spec.probes.clone(),
                    initial: InitialState::Empty,
                    eta_variant: spec.eta_variant,
                };
                let metrics = replicate(&run_spec, spec.replications)?;
                Ok((metrics, assumptions_ok, lambda))
            })();
            match outcome {
                Ok((metrics, assumptions_ok, lambda)) => {
                    desc.lambda = lambda;
                    SweepRow { point: desc, metrics: Some(metrics), error: None, assumptions_ok }
                }
                Err(e) => SweepRow {
                    point: desc,
                    metrics: None,
                    error: Some(e.to_string()),
                    assumptions_ok: false,
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Ordinary least squares of log(metric) on log(N).
#[derive(Clone, Debug, Serialize)]
pub struct ScalingFit {
    pub metric: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// -min(α, 1-α): the dominant size exponent of the delay bounds with
    /// logarithmic factors ignored.
    pub predicted_exponent: Option<f64>,
    pub points_used: usize,
}

/// Fits the scaling exponent of a metric over sweep rows (one series).
/// Only points whose estimate exceeds three standard errors enter the fit.
pub fn fit_exponent(rows: &[SweepRow], metric: MetricId) -> Result<ScalingFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut alpha = None;
    for row in rows {
        let Some(m) = &row.metrics else { continue };
        let Some(est) = metric.extract(m) else { continue };
        if !check_fit_usable(&est) {
            continue;
        }
        xs.push((row.point.n as f64).ln());
        ys.push(est.value.ln());
        alpha.get_or_insert(row.point.alpha);
    }
    if xs.len() < 3 {
        return Err(Error::fit(format!(
            "{} usable points for {metric}; the exponent fit needs at least 3",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    let predicted_exponent = alpha.map(|a| -a.min(1.0 - a));
    Ok(ScalingFit {
        metric: metric.to_string(),
        slope,
        intercept,
        r_squared,
        predicted_exponent,
        points_used: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn synthetic_row(n: usize, value: f64) -> SweepRow {
        let est = Estimate { value, stderr: value.abs() * 1e-6 + 1e-300 };
        let metrics = RunMetrics {
            p_wait: est,
            p_block: est,
            mean_wait: est,
            mean_qbar: est,
            mean_qbar_arrival: None,
            mean_qwait: est,
            clipped_moments: BTreeMap::new(),
            clipped_eta: BTreeMap::new(),
            event_occupancy: BTreeMap::new(),
            counts: Default::default(),
        };
        SweepRow {
            point: PointDesc {
                n,
                alpha: 0.3,
                lambda: 0.9,
                buffer_b: 2,
                profile: "homogeneous".into(),
                policy: "jfsq".into(),
                seed: 1,
                replications: 1,
            },
            metrics: Some(metrics),
            error: None,
            assumptions_ok: true,
        }
    }

    #[test]
    fn exact_power_law_recovers_slope() {
        let rows: Vec<SweepRow> = [100usize, 1000, 10_000]
            .iter()
            .map(|&n| synthetic_row(n, (n as f64).powf(-0.5)))
            .collect();
        let fit = fit_exponent(&rows, MetricId::PWait).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-9, "slope {}", fit.slope);
        assert!((fit.r_squared - 1.0).abs() < 1e-9);
        assert_eq!(fit.points_used, 3);
        assert_eq!(fit.predicted_exponent, Some(-0.3));
    }

    #[test]
    fn constant_metric_has_zero_slope() {
        let rows: Vec<SweepRow> =
            [10usize, 100, 1000].iter().map(|&n| synthetic_row(n, 0.25)).collect();
        let fit = fit_exponent(&rows, MetricId::PBlock).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn too_few_points_is_fit_error() {
        let rows: Vec<SweepRow> =
            [10usize, 100].iter().map(|&n| synthetic_row(n, 0.5)).collect();
        assert!(matches!(fit_exponent(&rows, MetricId::PWait), Err(Error::Fit(_))));
    }

    #[test]
    fn noisy_points_are_dropped() {
        let mut rows: Vec<SweepRow> = [10usize, 100, 1000, 10_000]
            .iter()
            .map(|&n| synthetic_row(n, (n as f64).powf(-0.4)))
            .collect();
        // Throw one point into the noise: estimate below 3 stderr.
        if let Some(m) = &mut rows[3].metrics {
            m.p_wait.stderr = m.p_wait.value;
        }
        let fit = fit_exponent(&rows, MetricId::PWait).unwrap();
        assert_eq!(fit.points_used, 3);
    }

    #[test]
    fn small_sweep_runs_and_is_deterministic() {
        let spec = SweepSpec {
            n_grid: vec![2, 4, 8],
            alpha_grid: vec![0.4],
            profiles: vec![ProfileSpec::Homogeneous, ProfileSpec::TwoGroup {
                fraction_fast: 0.5,
                rate_ratio: 2.0,
            }],
            policies: vec![PolicySpec::Jfsq],
            buffer_b: 2,
            horizon_events: 20_000,
            warmup_events: 4_000,
            batches: 8,
            seed: 17,
            replications: 2,
            probes: vec![],
            eta_variant: EtaVariant::Proof,
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.metrics.is_some()));
        let rows2 = run_sweep(&spec).unwrap();
        for (a, b) in rows.iter().zip(&rows2) {
            assert_eq!(
                serde_json::to_string(&a.metrics).unwrap(),
                serde_json::to_string(&b.metrics).unwrap()
            );
            assert_eq!(a.point, b.point);
        }
    }

    #[test]
    fn one_point_sweep_matches_replicate() {
        let profile_spec = ProfileSpec::Homogeneous;
        let spec = SweepSpec {
            n_grid: vec![4],
            alpha_grid: vec![0.4],
            profiles: vec![profile_spec.clone()],
            policies: vec![PolicySpec::Jsq],
            buffer_b: 2,
            horizon_events: 30_000,
            warmup_events: 6_000,
            batches: 8,
            seed: 23,
            replications: 3,
            probes: vec![],
            eta_variant: EtaVariant::Proof,
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        let profile = make_profile(&profile_spec, 4).unwrap();
        let config = SystemConfig::with_alpha(4, 0.4, 2, profile).unwrap();
        let run_spec = RunSpec {
            config,
            policy: PolicySpec::Jsq,
            horizon_events: 30_000,
            warmup_events: 6_000,
            batches: 8,
            seed: row.point.seed,
            probes: vec![],
            initial: InitialState::Empty,
            eta_variant: EtaVariant::Proof,
        };
        let direct = replicate(&run_spec, 3).unwrap();
        assert_eq!(
            serde_json::to_string(row.metrics.as_ref().unwrap()).unwrap(),
            serde_json::to_string(&direct).unwrap()
        );
    }

    #[test]
    fn per_point_failures_do_not_stop_the_sweep() {
        let spec = SweepSpec {
            n_grid: vec![1, 2],
            alpha_grid: vec![0.4],
            profiles: vec![ProfileSpec::Homogeneous],
            policies: vec![PolicySpec::Jfsq],
            buffer_b: 2,
            horizon_events: 10_000,
            warmup_events: 1_000,
            batches: 4,
            seed: 3,
            replications: 1,
            probes: vec![],
            eta_variant: EtaVariant::Proof,
        };
        // n = 1 with alpha gives λ = 0 and fails; n = 2 succeeds.
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_some());
        assert!(rows[1].metrics.is_some());
    }
}
