//! Numerical drift verification: for each state satisfying a lemma's case
//! premise, the exact drift ∇V(q) = Σ rate(q→q')·(V(q')-V(q)) is computed
//! from the routing distribution and compared against the claimed negative
//! bound with the proof's own constants.
//!
//! Finite-size side conditions (the lemma's largeness premises, exact
//! capacity splits, and rate ties across prefix boundaries) are evaluated
//! once per report, so that any violating state can be traced to a failed
//! side condition rather than silently passed or hidden.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::metrics::{busy_count, idle_prefix_count, q_wait, sub_busy_budget, super_wait_offset};
use crate::model::{constants, HeterogeneityConstants, Regime, SystemConfig};
use crate::oracle::StateSpace;
use crate::policy::{route_distribution, PolicySpec, QueueLen};

/// Detailed per-state records kept in a report, in addition to every
/// violating state (violations are never dropped).
const RECORD_CAP: usize = 1_024;
/// Cap on level compositions enumerated by the premise sampler.
const MAX_COMPOSITIONS: usize = 5_000_000;
/// Absolute slack when comparing a drift against its claimed bound.
const DRIFT_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Lemma and region identifiers
// ---------------------------------------------------------------------------

/// Which drift lemma to verify.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LemmaId {
    /// Idle count among the fastest N₁(δ) servers decreases at rate δN/2.
    MostN1 { delta: f64 },
    /// Idle count among the fastest N₂ servers decreases at rate
    /// μ_{N₂}·√N·ln N above that level.
    MostN2,
    /// Unified collapse function, sub-regime constants (two proof cases).
    SscSub,
    /// Unified collapse function, super-regime constants (two proof cases).
    SscSuper,
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LemmaId::MostN1 { delta } => write!(f, "most_n1:{delta}"),
            LemmaId::MostN2 => write!(f, "most_n2"),
            LemmaId::SscSub => write!(f, "ssc_sub"),
            LemmaId::SscSuper => write!(f, "ssc_super"),
        }
    }
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "most_n2" => Ok(LemmaId::MostN2),
            "ssc_sub" => Ok(LemmaId::SscSub),
            "ssc_super" => Ok(LemmaId::SscSuper),
            _ => {
                if let Some(d) = s.strip_prefix("most_n1:") {
                    let delta = d
                        .parse::<f64>()
                        .map_err(|_| Error::config(format!("invalid δ in lemma id {s:?}")))?;
                    if !(delta > 0.0 && delta < 1.0) {
                        return Err(Error::config(format!("δ must lie in (0, 1), got {delta}")));
                    }
                    Ok(LemmaId::MostN1 { delta })
                } else {
                    Err(Error::config(format!("unknown lemma {s:?}")))
                }
            }
        }
    }
}

/// How to cover the premise region.
#[derive(Clone, Copy, Debug)]
pub enum Region {
    /// Enumerate the whole state space (subject to the size guard).
    Enumerate,
    /// Draw uniformly from the premise set of each case, with replacement.
    Sample { count: usize, seed: u64 },
}

/// Proof case within a lemma.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    /// Single-case lemmas (prefix idle counts).
    Single,
    /// Waiting jobs are the binding term of the unified function.
    Case1,
    /// Busy-server budget is the binding term.
    Case2,
}

// ---------------------------------------------------------------------------
// Report types
// ---------------------------------------------------------------------------

/// One checked state.
#[derive(Clone, Debug, Serialize)]
pub struct DriftRecord {
    pub state: Vec<QueueLen>,
    pub case: CaseLabel,
    pub v_value: f64,
    pub drift: f64,
    pub bound: f64,
    pub satisfied: bool,
}

/// A finite-size side condition, normalized to `lhs ≤ rhs`.
#[derive(Clone, Debug, Serialize)]
pub struct SideCondition {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl SideCondition {
    fn new(name: &'static str, lhs: f64, rhs: f64) -> Self {
        SideCondition { name, lhs, rhs, holds: lhs <= rhs }
    }
}

/// Per-case tally.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CaseSummary {
    pub case: CaseLabel,
    pub checked: u64,
    pub satisfied: u64,
    pub violations: u64,
    /// Premise states skipped because no server was idle (the proofs route
    /// the arrival to an idle server).
    pub excluded_no_idle: u64,
    /// Largest drift minus bound seen (≤ 0 when every state satisfied).
    pub worst_margin: f64,
}

/// Outcome of a drift check. Violations are a reportable product, not an
/// error; exit decisions belong to the caller.
#[derive(Clone, Debug, Serialize)]
pub struct DriftReport {
    pub lemma: String,
    pub policy: String,
    pub cases: Vec<CaseSummary>,
    pub side_conditions: Vec<SideCondition>,
    pub checked: u64,
    pub violations: u64,
    /// Every violating state plus a capped sample of satisfied ones.
    pub records: Vec<DriftRecord>,
}

impl DriftReport {
    /// True when every violation (if any) can be attributed to a failed
    /// finite-size side condition.
    pub fn violations_covered_by_side_conditions(&self) -> bool {
        self.violations == 0 || self.side_conditions.iter().any(|c| !c.holds)
    }
}

// ---------------------------------------------------------------------------
// Lemma internals
// ---------------------------------------------------------------------------

/// Per-state derived quantities shared by the V evaluations.
struct StateView {
    q_wait: f64,
    busy: usize,
    idle_prefix: usize,
}

enum LemmaKind {
    PrefixIdle { prefix: usize, premise_min: f64, bound: f64 },
    Unified { offset_a: f64, budget_b: f64, premise_min: f64, bound_case1: f64, bound_case2: f64 },
}

struct LemmaEval<'c> {
    config: &'c SystemConfig,
    kind: LemmaKind,
}

impl<'c> LemmaEval<'c> {
    fn new(
        lemma: LemmaId,
        config: &'c SystemConfig,
        konst: &HeterogeneityConstants,
    ) -> Result<Self> {
        let n = config.n() as f64;
        let n1ma = config.n_one_minus_alpha();
        let eps = config.profile().epsilon();
        let bm1 = (config.buffer_b() - 1).max(1) as f64;
        let kind = match lemma {
            LemmaId::MostN1 { delta } => LemmaKind::PrefixIdle {
                prefix: config.prefix_index(delta)?,
                premise_min: 1.0,
                bound: -delta * n / 2.0,
            },
            LemmaId::MostN2 => LemmaKind::PrefixIdle {
                prefix: konst.n2,
                premise_min: n.sqrt() * n.ln(),
                bound: -konst.mu_n2 * n.sqrt() * n.ln(),
            },
            LemmaId::SscSub => {
                if konst.nu <= 0.0 {
                    return Err(Error::config("ssc_sub needs buffer bound b ≥ 2"));
                }
                LemmaKind::Unified {
                    offset_a: 0.0,
                    budget_b: sub_busy_budget(config, konst),
                    premise_min: konst.c0 * n1ma,
                    bound_case1: -eps * konst.c0 * n1ma / bm1,
                    bound_case2: -eps * n1ma / (4.0 * bm1),
                }
            }
            LemmaId::SscSuper => {
                if konst.nu <= 0.0 {
                    return Err(Error::config("ssc_super needs buffer bound b ≥ 2"));
                }
                let a = super_wait_offset(config, konst);
                let scale = konst.c1 * n1ma + a;
                LemmaKind::Unified {
                    offset_a: a,
                    budget_b: n,
                    premise_min: konst.c1 * n1ma,
                    bound_case1: -eps * scale / bm1,
                    bound_case2: -eps * scale / (2.0 * bm1),
                }
            }
        };
        Ok(LemmaEval { config, kind })
    }

    fn view(&self, q: &[QueueLen]) -> StateView {
        let prefix = match &self.kind {
            LemmaKind::PrefixIdle { prefix, .. } => *prefix,
            LemmaKind::Unified { .. } => 0,
        };
        StateView {
            q_wait: q_wait(q),
            busy: busy_count(q),
            idle_prefix: idle_prefix_count(q, prefix),
        }
    }

    fn value(&self, view: &StateView) -> f64 {
        match &self.kind {
            LemmaKind::PrefixIdle { .. } => view.idle_prefix as f64,
            LemmaKind::Unified { offset_a, budget_b, .. } => {
                (view.q_wait - offset_a).min(budget_b - view.busy as f64)
            }
        }
    }

    /// Case label for a premise state, or None when the premise fails.
    fn case_of(&self, view: &StateView) -> Option<CaseLabel> {
        match &self.kind {
            LemmaKind::PrefixIdle { premise_min, .. } => {
                (self.value(view) >= *premise_min).then_some(CaseLabel::Single)
            }
            LemmaKind::Unified { offset_a, budget_b, premise_min, .. } => {
                if self.value(view) < *premise_min {
                    return None;
                }
                let first = view.q_wait - offset_a;
                let second = *budget_b - view.busy as f64;
                Some(if first <= second { CaseLabel::Case1 } else { CaseLabel::Case2 })
            }
        }
    }

    fn bound_for(&self, case: CaseLabel) -> f64 {
        match (&self.kind, case) {
            (LemmaKind::PrefixIdle { bound, .. }, _) => *bound,
            (LemmaKind::Unified { bound_case1, .. }, CaseLabel::Case1) => *bound_case1,
            (LemmaKind::Unified { bound_case2, .. }, _) => *bound_case2,
        }
    }

    /// Exact drift from the routing distribution and departure rates,
    /// using O(1) incremental V deltas per transition.
    fn drift(&self, q: &[QueueLen], view: &StateView, policy: PolicySpec) -> Result<f64> {
        let config = self.config;
        let b = config.buffer_b() as QueueLen;
        let dist = route_distribution(policy, q, config.profile(), b)?;
        let v0 = self.value(view);
        let mut drift = 0.0;
        for (m, &p) in dist.assign.iter().enumerate() {
            if p > 0.0 {
                let dv = self.delta_v(view, v0, q[m], true, m);
                drift += config.arrival_rate() * p * dv;
            }
        }
        for (n, &x) in q.iter().enumerate() {
            if x >= 1 {
                let dv = self.delta_v(view, v0, x, false, n);
                drift += config.profile().rate(n) * dv;
            }
        }
        Ok(drift)
    }

    /// V(q ± e_server) − V(q) for one transition.
    fn delta_v(&self, view: &StateView, v0: f64, level: QueueLen, arrival: bool, server: usize) -> f64 {
        match &self.kind {
            LemmaKind::PrefixIdle { prefix, .. } => {
                if server >= *prefix {
                    0.0
                } else if arrival && level == 0 {
                    -1.0
                } else if !arrival && level == 1 {
                    1.0
                } else {
                    0.0
                }
            }
            LemmaKind::Unified { offset_a, budget_b, .. } => {
                let (mut first, mut second) =
                    (view.q_wait - offset_a, budget_b - view.busy as f64);
                if arrival {
                    if level == 0 {
                        second -= 1.0;
                    } else {
                        first += 1.0;
                    }
                } else if level == 1 {
                    second += 1.0;
                } else {
                    first -= 1.0;
                }
                first.min(second) - v0
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Side conditions
// ---------------------------------------------------------------------------

fn capacity_split_excess(config: &SystemConfig, prefix: usize, target: f64) -> f64 {
    config.profile().prefix_rate(prefix) - target
}

/// 1.0 when a rate tie crosses the boundary after `prefix` servers, else 0.
fn tie_across_boundary(config: &SystemConfig, prefix: usize) -> f64 {
    if prefix == 0 || prefix >= config.n() {
        return 0.0;
    }
    let (_, hi) = config.profile().equal_rate_range(prefix - 1);
    if hi > prefix {
        1.0
    } else {
        0.0
    }
}

fn side_conditions(
    lemma: LemmaId,
    config: &SystemConfig,
    konst: &HeterogeneityConstants,
) -> Result<Vec<SideCondition>> {
    let n = config.n() as f64;
    let log_n = n.ln();
    let eps = config.profile().epsilon();
    let b = config.buffer_b() as f64;
    let split_tol = 1e-9 * n;
    let mut out = Vec::new();
    match lemma {
        LemmaId::MostN1 { delta } => {
            let n1 = config.prefix_index(delta)?;
            out.push(SideCondition::new("delta_lower", 2.0 * config.gap(), delta));
            out.push(SideCondition::new("delta_upper", delta, 0.5));
            out.push(SideCondition::new(
                "exact_capacity_split_n1",
                capacity_split_excess(config, n1, (1.0 - delta) * n).abs(),
                split_tol,
            ));
            out.push(SideCondition::new(
                "no_rate_tie_across_n1",
                tie_across_boundary(config, n1),
                0.0,
            ));
        }
        LemmaId::MostN2 => {
            out.push(SideCondition::new("mu_n2_upper", konst.mu_n2, n.sqrt() / log_n));
            out.push(SideCondition::new(
                "exact_capacity_split_n2",
                capacity_split_excess(config, konst.n2, config.arrival_rate()).abs(),
                split_tol,
            ));
            out.push(SideCondition::new(
                "no_rate_tie_across_n2",
                tie_across_boundary(config, konst.n2),
                0.0,
            ));
        }
        LemmaId::SscSub => {
            out.push(SideCondition::new("epsilon_lower", 2.0 * (konst.r as f64 + 1.0) / log_n, eps));
            // N^(1-2α) ≥ 128(r+1)(b-1)²·μ_{N₂}·ln N / ε².
            out.push(SideCondition::new(
                "size_sub",
                128.0 * (konst.r as f64 + 1.0) * (b - 1.0) * (b - 1.0) * konst.mu_n2 * log_n
                    / (eps * eps),
                n * config.gap() * config.gap(),
            ));
            // The case-2 constant needs ν ≥ 3; the proof states b ≥ 5.
            out.push(SideCondition::new("nu_case2", 3.0, konst.nu));
            out.push(SideCondition::new("buffer_case2", 5.0, b));
            out.push(SideCondition::new(
                "exact_capacity_split_n2",
                capacity_split_excess(config, konst.n2, config.arrival_rate()).abs(),
                split_tol,
            ));
            out.push(SideCondition::new(
                "regime_is_sub",
                if config.regime() == Regime::SubHalfinWhitt { 0.0 } else { 1.0 },
                0.0,
            ));
        }
        LemmaId::SscSuper => {
            out.push(SideCondition::new(
                "size_super",
                12.0 * konst.r as f64 * config.profile().mu1() * log_n,
                config.n_one_minus_alpha(),
            ));
            out.push(SideCondition::new(
                "regime_is_super",
                if config.regime() == Regime::SuperHalfinWhitt { 0.0 } else { 1.0 },
                0.0,
            ));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// drift_check
// ---------------------------------------------------------------------------

struct Tally {
    case: CaseLabel,
    checked: u64,
    satisfied: u64,
    violations: u64,
    excluded_no_idle: u64,
    worst_margin: f64,
}

impl Tally {
    fn new(case: CaseLabel) -> Self {
        Tally {
            case,
            checked: 0,
            satisfied: 0,
            violations: 0,
            excluded_no_idle: 0,
            worst_margin: f64::NEG_INFINITY,
        }
    }

    fn summary(&self) -> CaseSummary {
        CaseSummary {
            case: self.case,
            checked: self.checked,
            satisfied: self.satisfied,
            violations: self.violations,
            excluded_no_idle: self.excluded_no_idle,
            worst_margin: if self.checked == 0 { 0.0 } else { self.worst_margin },
        }
    }
}

/// Verifies a lemma's drift inequality over the premise region.
///
/// Every state whose case precondition holds gets its exact drift compared
/// against the claimed bound; states the proofs exclude (no idle server)
/// are counted separately. An empty premise region is a valid outcome with
/// zero checked states.
pub fn drift_check(
    lemma: LemmaId,
    config: &SystemConfig,
    policy: PolicySpec,
    region: Region,
    r: u32,
) -> Result<DriftReport> {
    let konst = constants(config, r)?;
    let eval = LemmaEval::new(lemma, config, &konst)?;
    let sides = side_conditions(lemma, config, &konst)?;
    let mut tallies = match lemma {
        LemmaId::MostN1 { .. } | LemmaId::MostN2 => vec![Tally::new(CaseLabel::Single)],
        _ => vec![Tally::new(CaseLabel::Case1), Tally::new(CaseLabel::Case2)],
    };
    let mut records: Vec<DriftRecord> = Vec::new();
    let mut kept_ok = 0usize;

    let check_state = |q: &[QueueLen],
                           records: &mut Vec<DriftRecord>,
                           kept_ok: &mut usize,
                           tallies: &mut Vec<Tally>|
     -> Result<()> {
        let view = eval.view(q);
        let Some(case) = eval.case_of(&view) else {
            return Ok(());
        };
        let tally = tallies.iter_mut().find(|t| t.case == case).unwrap();
        if view.busy == config.n() {
            tally.excluded_no_idle += 1;
            return Ok(());
        }
        let drift = eval.drift(q, &view, policy)?;
        let bound = eval.bound_for(case);
        let satisfied = drift <= bound + DRIFT_TOL;
        tally.checked += 1;
        tally.worst_margin = tally.worst_margin.max(drift - bound);
        if satisfied {
            tally.satisfied += 1;
        } else {
            tally.violations += 1;
        }
        if !satisfied || *kept_ok < RECORD_CAP {
            if satisfied {
                *kept_ok += 1;
            }
            records.push(DriftRecord {
                state: q.to_vec(),
                case,
                v_value: eval.value(&view),
                drift,
                bound,
                satisfied,
            });
        }
        Ok(())
    };

    match region {
        Region::Enumerate => {
            let space = StateSpace::new(config.n(), config.buffer_b() as QueueLen)?;
            let mut q = Vec::with_capacity(config.n());
            for idx in 0..space.len() {
                space.decode_into(idx, &mut q);
                check_state(&q, &mut records, &mut kept_ok, &mut tallies)?;
            }
        }
        Region::Sample { count, seed } => {
            let cases: Vec<CaseLabel> = tallies.iter().map(|t| t.case).collect();
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            for case in cases {
                let sampler = PremiseSampler::prepare(&eval, config, case)?;
                let Some(sampler) = sampler else {
                    continue; // empty premise region for this case
                };
                let mut q = vec![0 as QueueLen; config.n()];
                for _ in 0..count {
                    sampler.draw(&mut q, &mut rng);
                    debug_assert_eq!(eval.case_of(&eval.view(&q)), Some(case));
                    check_state(&q, &mut records, &mut kept_ok, &mut tallies)?;
                }
            }
        }
    }

    let checked = tallies.iter().map(|t| t.checked).sum();
    let violations = tallies.iter().map(|t| t.violations).sum();
    Ok(DriftReport {
        lemma: lemma.to_string(),
        policy: policy.to_string(),
        cases: tallies.iter().map(Tally::summary).collect(),
        side_conditions: sides,
        checked,
        violations,
        records,
    })
}

// ---------------------------------------------------------------------------
// Uniform premise sampling
// ---------------------------------------------------------------------------

/// Draws states uniformly from one case's premise set.
///
/// Prefix-idle lemmas factor into (idle count in the prefix) × (free
/// entries), so the idle count is drawn from its exact combinatorial weight.
/// Unified lemmas depend on the state only through the level composition
/// (n₀, …, n_b), so a premise-filtered composition is drawn with multinomial
/// weight and the levels are assigned to servers by a random shuffle.
enum PremiseSampler {
    PrefixIdle {
        prefix: usize,
        n: usize,
        b: QueueLen,
        /// (idle count j, cumulative probability).
        cdf: Vec<(usize, f64)>,
    },
    Composition {
        n: usize,
        /// (composition, cumulative probability).
        cdf: Vec<(Vec<usize>, f64)>,
    },
}

impl PremiseSampler {
    fn prepare(
        eval: &LemmaEval<'_>,
        config: &SystemConfig,
        case: CaseLabel,
    ) -> Result<Option<Self>> {
        let n = config.n();
        let b = config.buffer_b() as QueueLen;
        let lf = LogFactorials::new(n);
        match &eval.kind {
            LemmaKind::PrefixIdle { prefix, premise_min, .. } => {
                let j_min = premise_min.ceil() as usize;
                if j_min > *prefix {
                    return Ok(None);
                }
                // weight(j) ∝ C(prefix, j)·b^(prefix-j); tail entries free.
                let log_b = (b as f64).ln();
                let weights: Vec<(usize, f64)> = (j_min..=*prefix)
                    .map(|j| {
                        (j, lf.log_choose(*prefix, j) + (*prefix - j) as f64 * log_b)
                    })
                    .collect();
                Ok(Some(PremiseSampler::PrefixIdle {
                    prefix: *prefix,
                    n,
                    b,
                    cdf: normalize_log_weights(weights),
                }))
            }
            LemmaKind::Unified { .. } => {
                let parts = b as usize + 1;
                let count = compositions_count(n, parts);
                if count > MAX_COMPOSITIONS {
                    return Err(Error::scale(format!(
                        "{count} level compositions exceed the sampling cap"
                    )));
                }
                let mut weights: Vec<(Vec<usize>, f64)> = Vec::new();
                for_each_composition(n, parts, &mut |comp| {
                    let view = StateView {
                        q_wait: comp
                            .iter()
                            .enumerate()
                            .skip(2)
                            .map(|(l, &c)| (l - 1) as f64 * c as f64)
                            .sum(),
                        busy: n - comp[0],
                        idle_prefix: 0,
                    };
                    if eval.case_of(&view) == Some(case) {
                        let mut lw = lf.log_factorial(n);
                        for &c in comp {
                            lw -= lf.log_factorial(c);
                        }
                        weights.push((comp.to_vec(), lw));
                    }
                });
                if weights.is_empty() {
                    return Ok(None);
                }
                Ok(Some(PremiseSampler::Composition {
                    n,
                    cdf: normalize_log_weights(weights),
                }))
            }
        }
    }

    fn draw<R: Rng>(&self, q: &mut Vec<QueueLen>, rng: &mut R) {
        match self {
            PremiseSampler::PrefixIdle { prefix, n, b, cdf } => {
                let j = *pick_from_cdf(cdf, rng);
                q.clear();
                // Prefix: j idle positions uniform, the rest uniform in [1, b].
                q.extend(std::iter::repeat(0 as QueueLen).take(*prefix));
                for slot in q.iter_mut().take(*prefix).skip(j) {
                    *slot = rng.gen_range(1..=*b);
                }
                partial_shuffle(&mut q[..*prefix], rng);
                for _ in *prefix..*n {
                    q.push(rng.gen_range(0..=*b));
                }
            }
            PremiseSampler::Composition { n, cdf } => {
                let comp = pick_from_cdf(cdf, rng);
                q.clear();
                for (level, &count) in comp.iter().enumerate() {
                    q.extend(std::iter::repeat(level as QueueLen).take(count));
                }
                debug_assert_eq!(q.len(), *n);
                partial_shuffle(q, rng);
            }
        }
    }
}

fn normalize_log_weights<T>(mut weights: Vec<(T, f64)>) -> Vec<(T, f64)> {
    let max = weights.iter().map(|(_, w)| *w).fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (_, w) in &mut weights {
        *w = (*w - max).exp();
        total += *w;
    }
    let mut acc = 0.0;
    for (_, w) in &mut weights {
        acc += *w / total;
        *w = acc;
    }
    weights
}

fn pick_from_cdf<'a, T, R: Rng>(cdf: &'a [(T, f64)], rng: &mut R) -> &'a T {
    let u: f64 = rng.gen();
    let pos = cdf.partition_point(|(_, c)| *c < u).min(cdf.len() - 1);
    &cdf[pos].0
}

fn partial_shuffle<R: Rng>(slice: &mut [QueueLen], rng: &mut R) {
    for i in (1..slice.len()).rev() {
        slice.swap(i, rng.gen_range(0..=i));
    }
}

struct LogFactorials {
    table: Vec<f64>,
}

impl LogFactorials {
    fn new(n: usize) -> Self {
        let mut table = vec![0.0; n + 1];
        for i in 1..=n {
            table[i] = table[i - 1] + (i as f64).ln();
        }
        LogFactorials { table }
    }

    fn log_factorial(&self, k: usize) -> f64 {
        self.table[k]
    }

    fn log_choose(&self, n: usize, k: usize) -> f64 {
        self.table[n] - self.table[k] - self.table[n - k]
    }
}

fn compositions_count(n: usize, parts: usize) -> usize {
    // C(n + parts - 1, parts - 1), saturating.
    let mut acc: u128 = 1;
    for i in 0..(parts - 1) {
        acc = acc.saturating_mul((n + parts - 1 - i) as u128) / (i as u128 + 1);
    }
    acc.min(usize::MAX as u128) as usize
}

fn for_each_composition(n: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    let mut comp = vec![0usize; parts];
    fn recurse(rest: usize, part: usize, comp: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if part == comp.len() - 1 {
            comp[part] = rest;
            f(comp);
            return;
        }
        for take in 0..=rest {
            comp[part] = take;
            recurse(rest - take, part + 1, comp, f);
        }
    }
    recurse(n, 0, &mut comp, f);
}
