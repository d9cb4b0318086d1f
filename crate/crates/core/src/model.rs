//! System parameterization: service-rate profiles, heavy-traffic load,
//! capacity indices, regime classification, and the heterogeneity constants
//! used by the drift and moment machinery.
//!
//! Servers are always indexed in descending order of service rate, so
//! index 0 is the fastest server and `epsilon` (the slowest rate) is
//! `rates[n-1]`. Rates are normalized so they sum to the server count.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Relative tolerance for the rate-normalization invariant.
pub const NORMALIZATION_TOL: f64 = 1e-9;

/// Relative slack used when comparing cumulative capacity against a target,
/// so that targets constructed to sit exactly on a prefix boundary resolve
/// to that prefix despite floating-point rounding.
const CAPACITY_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Service profiles
// ---------------------------------------------------------------------------

/// Parametric description of a service-rate profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    /// All servers at rate 1.
    Homogeneous,
    /// Two rate groups; `fraction_fast` of servers run `rate_ratio` times
    /// faster than the rest.
    TwoGroup { fraction_fast: f64, rate_ratio: f64 },
    /// Rates interpolate linearly from `ratio` down to 1 before normalization.
    LinearDecay { ratio: f64 },
    /// Rates decay geometrically by `factor` per server before normalization.
    GeometricDecay { factor: f64 },
    /// Raw rate list, one entry per server; rescaled to sum to `n`.
    Explicit { rates: Vec<f64> },
}

impl ProfileSpec {
    pub fn build(&self, n: usize) -> Result<ServiceProfile> {
        make_profile(self, n)
    }
}

impl fmt::Display for ProfileSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileSpec::Homogeneous => write!(f, "homogeneous"),
            ProfileSpec::TwoGroup { fraction_fast, rate_ratio } => {
                write!(f, "two_group:{fraction_fast}:{rate_ratio}")
            }
            ProfileSpec::LinearDecay { ratio } => write!(f, "linear:{ratio}"),
            ProfileSpec::GeometricDecay { factor } => write!(f, "geometric:{factor}"),
            ProfileSpec::Explicit { rates } => {
                write!(f, "explicit:")?;
                for (i, r) in rates.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{r}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for ProfileSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, Some(r)),
            None => (s, None),
        };
        let num = |txt: &str| -> Result<f64> {
            txt.trim()
                .parse::<f64>()
                .map_err(|_| Error::config(format!("invalid number in profile spec: {txt:?}")))
        };
        match (kind, rest) {
            ("homogeneous", None) => Ok(ProfileSpec::Homogeneous),
            ("two_group", Some(r)) => {
                let (a, b) = r
                    .split_once(':')
                    .ok_or_else(|| Error::config("two_group needs fraction_fast:rate_ratio"))?;
                Ok(ProfileSpec::TwoGroup { fraction_fast: num(a)?, rate_ratio: num(b)? })
            }
            ("linear", Some(r)) => Ok(ProfileSpec::LinearDecay { ratio: num(r)? }),
            ("geometric", Some(r)) => Ok(ProfileSpec::GeometricDecay { factor: num(r)? }),
            ("explicit", Some(r)) => {
                let rates = r.split(',').map(num).collect::<Result<Vec<_>>>()?;
                Ok(ProfileSpec::Explicit { rates })
            }
            _ => Err(Error::config(format!("unknown profile spec {s:?}"))),
        }
    }
}

/// Service rates of one system, sorted descending and normalized to sum to
/// the server count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceProfile {
    rates: Vec<f64>,
    epsilon: f64,
    mu1: f64,
}

impl ServiceProfile {
    /// Number of servers.
    pub fn n(&self) -> usize {
        self.rates.len()
    }

    /// Rates, fastest first.
    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    /// Rate of server `i` (0-based, fastest first).
    pub fn rate(&self, i: usize) -> f64 {
        self.rates[i]
    }

    /// Slowest rate.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Fastest rate.
    pub fn mu1(&self) -> f64 {
        self.mu1
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Sum of the fastest `m` rates.
    pub fn prefix_rate(&self, m: usize) -> f64 {
        self.rates[..m].iter().sum()
    }

    /// True when no two servers share a rate (bit-exact comparison).
    pub fn strictly_decreasing(&self) -> bool {
        self.rates.windows(2).all(|w| w[0] > w[1])
    }

    /// Half-open 0-based index range `[lo, hi)` of servers whose rate is
    /// bit-identical to server `i`'s. Equal rates are contiguous because the
    /// vector is sorted.
    pub fn equal_rate_range(&self, i: usize) -> (usize, usize) {
        let r = self.rates[i];
        let mut lo = i;
        while lo > 0 && self.rates[lo - 1] == r {
            lo -= 1;
        }
        let mut hi = i + 1;
        while hi < self.rates.len() && self.rates[hi] == r {
            hi += 1;
        }
        (lo, hi)
    }
}

/// Builds a normalized, descending-sorted profile from a spec.
pub fn make_profile(spec: &ProfileSpec, n: usize) -> Result<ServiceProfile> {
    if n == 0 {
        return Err(Error::config("profile needs at least one server"));
    }
    let raw: Vec<f64> = match spec {
        ProfileSpec::Homogeneous => vec![1.0; n],
        ProfileSpec::TwoGroup { fraction_fast, rate_ratio } => {
            if !(0.0..=1.0).contains(fraction_fast) {
                return Err(Error::config("fraction_fast must lie in [0, 1]"));
            }
            if !(*rate_ratio > 0.0) {
                return Err(Error::config("rate_ratio must be positive"));
            }
            let n_fast = ((fraction_fast * n as f64).round() as usize).min(n);
            (0..n)
                .map(|i| if i < n_fast { *rate_ratio } else { 1.0 })
                .collect()
        }
        ProfileSpec::LinearDecay { ratio } => {
            if !(*ratio > 0.0) {
                return Err(Error::config("linear decay ratio must be positive"));
            }
            if n == 1 {
                vec![1.0]
            } else {
                (0..n)
                    .map(|i| ratio - (ratio - 1.0) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        }
        ProfileSpec::GeometricDecay { factor } => {
            if !(*factor > 0.0) {
                return Err(Error::config("geometric decay factor must be positive"));
            }
            (0..n).map(|i| factor.powi(i as i32)).collect()
        }
        ProfileSpec::Explicit { rates } => {
            if rates.is_empty() {
                return Err(Error::config("explicit profile has no rates"));
            }
            if rates.len() != n {
                return Err(Error::config(format!(
                    "explicit profile has {} rates but n = {n}",
                    rates.len()
                )));
            }
            rates.clone()
        }
    };
    if raw.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::config("all service rates must be positive and finite"));
    }
    let mut rates = raw;
    rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = rates.iter().sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::config("rate total overflows; rates are too extreme to normalize"));
    }
    let scale = n as f64 / total;
    for r in &mut rates {
        *r *= scale;
    }
    let epsilon = *rates.last().unwrap();
    let mu1 = rates[0];
    if !(epsilon > 0.0) || !mu1.is_finite() {
        return Err(Error::config("normalized rates degenerate to zero or infinity"));
    }
    Ok(ServiceProfile { rates, epsilon, mu1 })
}

/// Smallest prefix length `m` such that the fastest `m` servers' aggregate
/// rate covers `target`. Returns 0 for a zero target.
pub fn capacity_index(profile: &ServiceProfile, target: f64) -> Result<usize> {
    if target < 0.0 || !target.is_finite() {
        return Err(Error::config("capacity target must be finite and non-negative"));
    }
    if target == 0.0 {
        return Ok(0);
    }
    let slack = CAPACITY_TOL * target.max(1.0);
    let mut cum = 0.0;
    for (i, r) in profile.rates().iter().enumerate() {
        cum += r;
        if cum >= target - slack {
            return Ok(i + 1);
        }
    }
    Err(Error::config(format!(
        "target {target} exceeds total capacity {}",
        profile.total_rate()
    )))
}

// ---------------------------------------------------------------------------
// System configuration
// ---------------------------------------------------------------------------

/// Heavy-traffic regime classification.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SubHalfinWhitt,
    SuperHalfinWhitt,
    Direct,
}

impl Regime {
    pub fn from_alpha(alpha: f64) -> Result<Regime> {
        if alpha > 0.0 && alpha < 0.5 {
            Ok(Regime::SubHalfinWhitt)
        } else if (0.5..1.0).contains(&alpha) {
            Ok(Regime::SuperHalfinWhitt)
        } else {
            Err(Error::config(format!("alpha must lie in (0, 1], got {alpha}")))
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::SubHalfinWhitt => write!(f, "sub_halfin_whitt"),
            Regime::SuperHalfinWhitt => write!(f, "super_halfin_whitt"),
            Regime::Direct => write!(f, "direct"),
        }
    }
}

/// Full system parameterization.
///
/// The load is stored as the slack `gap = 1 - λ`; for `alpha`-specified
/// systems `gap = n^(-alpha)` exactly, so the derived scales
/// `n^alpha = 1/gap` and `n^(1-alpha) = n·gap` are consistent with the
/// stored λ even when λ came from a direct override.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemConfig {
    n: usize,
    alpha: Option<f64>,
    gap: f64,
    buffer_b: usize,
    profile: ServiceProfile,
    regime: Regime,
}

impl SystemConfig {
    /// Heavy-traffic load λ = 1 - n^(-alpha).
    pub fn with_alpha(
        n: usize,
        alpha: f64,
        buffer_b: usize,
        profile: ServiceProfile,
    ) -> Result<Self> {
        let regime = Regime::from_alpha(alpha)?;
        if alpha >= 1.0 {
            return Err(Error::config("alpha must lie in (0, 1)"));
        }
        if profile.n() != n {
            return Err(Error::config("profile size does not match n"));
        }
        if buffer_b < 1 {
            return Err(Error::config("buffer bound b must be at least 1"));
        }
        let gap = (n as f64).powf(-alpha);
        if gap >= 1.0 {
            return Err(Error::config(format!(
                "n = {n}, alpha = {alpha} gives load λ = {} outside (0, 1); \
                 use a direct λ override for degenerate sizes",
                1.0 - gap
            )));
        }
        Ok(SystemConfig { n, alpha: Some(alpha), gap, buffer_b, profile, regime })
    }

    /// Direct load override; regime-specific probes are unavailable.
    pub fn with_lambda(
        n: usize,
        lambda: f64,
        buffer_b: usize,
        profile: ServiceProfile,
    ) -> Result<Self> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(Error::config(format!("λ must lie in (0, 1), got {lambda}")));
        }
        if profile.n() != n {
            return Err(Error::config("profile size does not match n"));
        }
        if buffer_b < 1 {
            return Err(Error::config("buffer bound b must be at least 1"));
        }
        Ok(SystemConfig {
            n,
            alpha: None,
            gap: 1.0 - lambda,
            buffer_b,
            profile,
            regime: Regime::Direct,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn lambda(&self) -> f64 {
        1.0 - self.gap
    }

    /// Per-server load slack 1 - λ (equals n^(-alpha) when alpha is set).
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Total arrival rate λ·n.
    pub fn arrival_rate(&self) -> f64 {
        self.lambda() * self.n as f64
    }

    pub fn buffer_b(&self) -> usize {
        self.buffer_b
    }

    pub fn profile(&self) -> &ServiceProfile {
        &self.profile
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    /// The scale n^alpha, read through the load slack: 1/(1-λ).
    pub fn n_alpha(&self) -> f64 {
        1.0 / self.gap
    }

    /// The scale n^(1-alpha), read through the load slack: n·(1-λ).
    pub fn n_one_minus_alpha(&self) -> f64 {
        self.n as f64 * self.gap
    }

    /// Critical index N₂: smallest prefix whose capacity covers λ·n.
    pub fn critical_index(&self) -> Result<usize> {
        capacity_index(&self.profile, self.arrival_rate())
    }

    /// N₁(δ): smallest prefix whose capacity covers (1-δ)·n.
    pub fn prefix_index(&self, delta: f64) -> Result<usize> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::config(format!("δ must lie in (0, 1), got {delta}")));
        }
        capacity_index(&self.profile, (1.0 - delta) * self.n as f64)
    }
}

/// Capacity indices for a fixed config: the critical index N₂ plus N₁(δ)
/// for each requested δ.
#[derive(Clone, Debug, Serialize)]
pub struct CapacityIndices {
    pub n2: usize,
    pub n1: Vec<(f64, usize)>,
}

impl CapacityIndices {
    pub fn compute(config: &SystemConfig, deltas: &[f64]) -> Result<Self> {
        let n2 = config.critical_index()?;
        let n1 = deltas
            .iter()
            .map(|&d| Ok((d, config.prefix_index(d)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CapacityIndices { n2, n1 })
    }

    pub fn n1_for(&self, delta: f64) -> Option<usize> {
        self.n1.iter().find(|(d, _)| *d == delta).map(|(_, m)| *m)
    }
}

// ---------------------------------------------------------------------------
// Heterogeneity constants
// ---------------------------------------------------------------------------

/// Constants derived from the profile that quantify how much heterogeneity
/// penalizes the delay bounds.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct HeterogeneityConstants {
    /// ν = (b-1)·μ_{N₂}/ε.
    pub nu: f64,
    /// k_sub = 16(b-1)·μ_{N₂}/ε² = 16ν/ε.
    pub k_sub: f64,
    /// k_super = 24r(b-1)·μ₁/ε.
    pub k_super: f64,
    /// c₀ = 1 - 3/(4ν); -∞ when ν = 0 (b = 1).
    pub c0: f64,
    /// c₁ = 1/(6μ₁).
    pub c1: f64,
    /// Moment order the constants were computed for.
    pub r: u32,
    /// Rate at the critical index (1-based index `n2`).
    pub mu_n2: f64,
    pub n2: usize,
}

/// Computes the heterogeneity constants for a config and moment order.
pub fn constants(config: &SystemConfig, r: u32) -> Result<HeterogeneityConstants> {
    if r < 1 {
        return Err(Error::config("moment order r must be at least 1"));
    }
    let n2 = config.critical_index()?;
    if n2 == 0 {
        return Err(Error::config("degenerate load: critical index N₂ = 0"));
    }
    let profile = config.profile();
    let mu_n2 = profile.rate(n2 - 1);
    let eps = profile.epsilon();
    let bm1 = (config.buffer_b() - 1) as f64;
    let nu = bm1 * mu_n2 / eps;
    Ok(HeterogeneityConstants {
        nu,
        k_sub: 16.0 * bm1 * mu_n2 / (eps * eps),
        k_super: 24.0 * r as f64 * bm1 * profile.mu1() / eps,
        c0: 1.0 - 3.0 / (4.0 * nu),
        c1: 1.0 / (6.0 * profile.mu1()),
        r,
        mu_n2,
        n2,
    })
}

// ---------------------------------------------------------------------------
// Assumption checker
// ---------------------------------------------------------------------------

/// One inequality of the regime assumptions, reported as `lhs ≤ rhs`.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl AssumptionCheck {
    fn new(name: &'static str, lhs: f64, rhs: f64) -> Self {
        AssumptionCheck { name, lhs, rhs, holds: lhs <= rhs }
    }
}

/// Outcome of the regime assumption checks. Never blocks execution; callers
/// decide what to do with unsatisfied assumptions.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub regime: Regime,
    pub checks: Vec<AssumptionCheck>,
    pub satisfied: bool,
}

/// Evaluates the regime's finite-size conditions. All logarithms are natural.
/// Direct-λ configs have no applicable conditions and report unsatisfied.
pub fn check_assumptions(config: &SystemConfig, r: u32) -> AssumptionReport {
    let n = config.n() as f64;
    let log_n = n.ln();
    let b = config.buffer_b() as f64;
    let eps = config.profile().epsilon();
    let mu1 = config.profile().mu1();
    let rr = r as f64;
    let mut checks = Vec::new();
    match config.regime() {
        Regime::SubHalfinWhitt => {
            let alpha = config.alpha().unwrap();
            let lower = (2.0 * (rr + 1.0) / log_n)
                .max(27.0 * (rr + 1.0) * b * log_n / n.powf(0.25 - 0.5 * alpha));
            checks.push(AssumptionCheck::new("epsilon_lower", lower, eps));
            checks.push(AssumptionCheck::new("epsilon_upper", eps, 0.5));
            checks.push(AssumptionCheck::new(
                "mu1_over_epsilon_sq",
                mu1 / (eps * eps),
                config.n_one_minus_alpha() / (64.0 * b * (2.0 * log_n * log_n + 3.0)),
            ));
        }
        Regime::SuperHalfinWhitt => {
            checks.push(AssumptionCheck::new(
                "mu1_over_epsilon",
                mu1 / eps,
                config.n_one_minus_alpha() / (24.0 * rr * b * log_n * log_n),
            ));
        }
        Regime::Direct => {}
    }
    let satisfied = !checks.is_empty() && checks.iter().all(|c| c.holds);
    AssumptionReport { regime: config.regime(), checks, satisfied }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn homogeneous_profile_is_identity() {
        let p = make_profile(&ProfileSpec::Homogeneous, 4).unwrap();
        assert_eq!(p.rates(), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(p.epsilon(), 1.0);
        assert_eq!(p.mu1(), 1.0);
    }

    #[test]
    fn explicit_profile_rescales() {
        let p = make_profile(&ProfileSpec::Explicit { rates: vec![4.0, 2.0, 1.0, 1.0] }, 4)
            .unwrap();
        assert_eq!(p.rates(), &[2.0, 1.0, 0.5, 0.5]);
        assert!(close(p.total_rate(), 4.0, 1e-12));
    }

    #[test]
    fn two_group_solves_rate_split() {
        // 2 fast at 3x + 2 slow summing to 4 forces slow = 0.5.
        let p = make_profile(
            &ProfileSpec::TwoGroup { fraction_fast: 0.5, rate_ratio: 3.0 },
            4,
        )
        .unwrap();
        assert_eq!(p.rates(), &[1.5, 1.5, 0.5, 0.5]);
    }

    #[test]
    fn profile_errors() {
        assert!(make_profile(&ProfileSpec::Explicit { rates: vec![] }, 0).is_err());
        assert!(make_profile(&ProfileSpec::Explicit { rates: vec![1.0, -2.0] }, 2).is_err());
        assert!(make_profile(&ProfileSpec::TwoGroup { fraction_fast: 0.5, rate_ratio: 0.0 }, 4)
            .is_err());
        assert!(make_profile(&ProfileSpec::GeometricDecay { factor: -1.0 }, 3).is_err());
        assert!(make_profile(&ProfileSpec::Explicit { rates: vec![1.0] }, 2).is_err());
    }

    #[test]
    fn capacity_index_examples() {
        let p = make_profile(&ProfileSpec::Explicit { rates: vec![4.0, 2.0, 1.0, 1.0] }, 4)
            .unwrap();
        assert_eq!(capacity_index(&p, 2.0).unwrap(), 1);
        assert_eq!(capacity_index(&p, 3.0).unwrap(), 2);
        let h = make_profile(&ProfileSpec::Homogeneous, 4).unwrap();
        assert_eq!(capacity_index(&h, 0.0).unwrap(), 0);
        assert!(capacity_index(&h, 5.0).is_err());
    }

    #[test]
    fn capacity_index_homogeneous_is_ceiling() {
        let p = make_profile(&ProfileSpec::Homogeneous, 10).unwrap();
        for target in [0.1, 1.0, 1.5, 7.3, 9.999, 10.0] {
            assert_eq!(capacity_index(&p, target).unwrap(), target.ceil() as usize);
        }
    }

    #[test]
    fn regime_boundary_is_super() {
        assert_eq!(Regime::from_alpha(0.5).unwrap(), Regime::SuperHalfinWhitt);
        assert_eq!(Regime::from_alpha(0.49).unwrap(), Regime::SubHalfinWhitt);
        assert!(Regime::from_alpha(0.0).is_err());
    }

    #[test]
    fn config_scales_are_consistent() {
        let p = make_profile(&ProfileSpec::Homogeneous, 100).unwrap();
        let c = SystemConfig::with_alpha(100, 0.3, 2, p).unwrap();
        assert!(close(c.n_alpha(), 100f64.powf(0.3), 1e-10));
        assert!(close(c.n_one_minus_alpha(), 100f64.powf(0.7), 1e-9));
        assert!(close(c.lambda(), 1.0 - 100f64.powf(-0.3), 1e-12));
        assert_eq!(c.regime(), Regime::SubHalfinWhitt);
    }

    #[test]
    fn lambda_override_is_direct_regime() {
        let p = make_profile(&ProfileSpec::Homogeneous, 1).unwrap();
        let c = SystemConfig::with_lambda(1, 0.5, 2, p).unwrap();
        assert_eq!(c.regime(), Regime::Direct);
        assert_eq!(c.arrival_rate(), 0.5);
        // n = 1 with alpha always gives λ = 0, which must be rejected.
        let p1 = make_profile(&ProfileSpec::Homogeneous, 1).unwrap();
        assert!(SystemConfig::with_alpha(1, 0.5, 2, p1).is_err());
    }

    #[test]
    fn constants_homogeneous() {
        let p = make_profile(&ProfileSpec::Homogeneous, 4).unwrap();
        let c = SystemConfig::with_lambda(4, 0.75, 2, p).unwrap();
        let k = constants(&c, 1).unwrap();
        assert!(close(k.nu, 1.0, 1e-12));
        assert!(close(k.k_sub, 16.0, 1e-12));
        assert!(close(k.k_super, 24.0, 1e-12));
        assert!(close(k.c0, 0.25, 1e-12));
        assert!(close(k.c1, 1.0 / 6.0, 1e-12));
    }

    #[test]
    fn constants_zero_buffer_slack() {
        let p = make_profile(&ProfileSpec::Homogeneous, 4).unwrap();
        let c = SystemConfig::with_lambda(4, 0.75, 1, p).unwrap();
        let k = constants(&c, 1).unwrap();
        assert_eq!(k.nu, 0.0);
        assert_eq!(k.k_sub, 0.0);
        assert_eq!(k.k_super, 0.0);
    }

    #[test]
    fn constants_heterogeneous() {
        // Rates (2, 1, 0.5, 0.5), λN = 3 → N₂ = 2, μ_{N₂} = 1, ε = 0.5.
        // ν = (b-1)·μ_{N₂}/ε = 2·1/0.5 = 4 and k_sub = 16·ν/ε = 128.
        let p = make_profile(&ProfileSpec::Explicit { rates: vec![2.0, 1.0, 0.5, 0.5] }, 4)
            .unwrap();
        let c = SystemConfig::with_lambda(4, 0.75, 3, p).unwrap();
        let k = constants(&c, 2).unwrap();
        assert_eq!(k.n2, 2);
        assert!(close(k.mu_n2, 1.0, 1e-12));
        assert!(close(k.nu, 4.0, 1e-12));
        assert!(close(k.k_sub, 128.0, 1e-12));
        assert!(close(k.k_sub, 16.0 * k.nu / 0.5, 1e-12));
        // k_super = 24·r·(b-1)·μ₁/ε = 24·2·2·2/0.5 = 384.
        assert!(close(k.k_super, 384.0, 1e-12));
    }

    #[test]
    fn assumptions_super_large_system() {
        // N = 10⁶, α = 0.5, b = 2, r = 1, homogeneous: RHS ≈ 0.109 < 1.
        let p = make_profile(&ProfileSpec::Homogeneous, 1_000_000).unwrap();
        let c = SystemConfig::with_alpha(1_000_000, 0.5, 2, p).unwrap();
        let rep = check_assumptions(&c, 1);
        assert!(!rep.satisfied);
        let chk = &rep.checks[0];
        assert_eq!(chk.name, "mu1_over_epsilon");
        assert!(close(chk.lhs, 1.0, 1e-12));
        assert!(close(chk.rhs, 1000.0 / (48.0 * 1e6f64.ln().powi(2)), 1e-9));
        assert!(close(chk.rhs, 0.10915, 1e-4));
    }

    #[test]
    fn assumptions_sub_small_system() {
        // N = 10, α = 0.3, ε = 0.5: lower bound 2(r+1)/ln 10 ≈ 1.737 > 0.5.
        let p = make_profile(&ProfileSpec::Homogeneous, 10).unwrap();
        let c = SystemConfig::with_alpha(10, 0.3, 2, p).unwrap();
        let rep = check_assumptions(&c, 1);
        assert!(!rep.satisfied);
        let lower = rep.checks.iter().find(|c| c.name == "epsilon_lower").unwrap();
        assert!(lower.lhs >= 4.0 / 10f64.ln() - 1e-12);
        assert!(close(4.0 / 10f64.ln(), 1.7372, 1e-4));
        assert!(!lower.holds);
    }

    #[test]
    fn assumptions_report_is_consistent() {
        for (n, alpha) in [(100usize, 0.3), (1000, 0.5), (50, 0.7)] {
            let p = make_profile(&ProfileSpec::Homogeneous, n).unwrap();
            let c = SystemConfig::with_alpha(n, alpha, 2, p).unwrap();
            let rep = check_assumptions(&c, 2);
            for chk in &rep.checks {
                assert!(chk.lhs.is_finite() && chk.rhs.is_finite());
                assert_eq!(chk.holds, chk.lhs <= chk.rhs);
            }
            assert_eq!(rep.satisfied, rep.checks.iter().all(|c| c.holds));
        }
    }

    #[test]
    fn profile_spec_string_roundtrip() {
        for s in [
            "homogeneous",
            "two_group:0.5:3",
            "linear:4",
            "geometric:0.9",
            "explicit:2,1,0.5",
        ] {
            let spec: ProfileSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("two_group:0.5".parse::<ProfileSpec>().is_err());
        assert!("nope".parse::<ProfileSpec>().is_err());
    }

    #[test]
    fn equal_rate_ranges() {
        let p = make_profile(&ProfileSpec::Explicit { rates: vec![2.0, 1.0, 1.0, 0.5] }, 4)
            .unwrap();
        assert_eq!(p.equal_rate_range(0), (0, 1));
        assert_eq!(p.equal_rate_range(1), (1, 3));
        assert_eq!(p.equal_rate_range(2), (1, 3));
        assert!(!p.strictly_decreasing());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalization_holds(raw in proptest::collection::vec(0.01f64..100.0, 1..40)) {
                let n = raw.len();
                let p = make_profile(&ProfileSpec::Explicit { rates: raw }, n).unwrap();
                prop_assert!((p.total_rate() - n as f64).abs() <= NORMALIZATION_TOL * n as f64);
                prop_assert!(p.rates().windows(2).all(|w| w[0] >= w[1]));
                prop_assert!(p.epsilon() > 0.0);
            }

            #[test]
            fn capacity_index_monotone(raw in proptest::collection::vec(0.05f64..10.0, 2..20),
                                       t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
                let n = raw.len();
                let p = make_profile(&ProfileSpec::Explicit { rates: raw }, n).unwrap();
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let total = n as f64;
                let a = capacity_index(&p, lo * total).unwrap();
                let b = capacity_index(&p, hi * total).unwrap();
                prop_assert!(a <= b);
            }
        }
    }
}
