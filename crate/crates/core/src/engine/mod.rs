//! Continuous-time discrete-event simulation of the queue CTMC under a
//! routing policy, with warm-up, batch-means estimation, per-job waiting
//! times, and optional probe occupancies.
//!
//! A single run is strictly sequential and deterministic in
//! (seed, replication index); replications execute in parallel and merge
//! through associative accumulators.

pub mod state;
pub mod stats;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metrics::{
    eta_threshold, Counts, Estimate, EtaVariant, ProbeId, RunMetrics,
};
use crate::model::{constants, Regime, ServiceProfile, SystemConfig};
use crate::policy::{PolicySpec, QueueLen, RoutingDecision};
use state::{SimState, REBUILD_INTERVAL};
use stats::{CountRatio, SampleMean, TimeWeighted};

/// Initial queue configuration. The default all-empty start relies on the
/// warm-up window; the alternatives exist for mixing diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Empty,
    AllOne,
    Full,
}

impl InitialState {
    fn build(&self, n: usize, b: QueueLen) -> Vec<QueueLen> {
        let level = match self {
            InitialState::Empty => 0,
            InitialState::AllOne => 1.min(b),
            InitialState::Full => b,
        };
        vec![level; n]
    }
}

/// Everything one run needs.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub config: SystemConfig,
    pub policy: PolicySpec,
    pub horizon_events: u64,
    pub warmup_events: u64,
    pub batches: u32,
    pub seed: u64,
    pub probes: Vec<ProbeId>,
    pub initial: InitialState,
    pub eta_variant: EtaVariant,
}

impl RunSpec {
    pub fn new(config: SystemConfig, policy: PolicySpec, horizon_events: u64, seed: u64) -> Self {
        // Default warm-up is 20% of the horizon; 32 batches.
        RunSpec {
            config,
            policy,
            horizon_events,
            warmup_events: horizon_events / 5,
            batches: 32,
            seed,
            probes: Vec::new(),
            initial: InitialState::Empty,
            eta_variant: EtaVariant::Proof,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon_events == 0 {
            return Err(Error::config("horizon_events must be positive"));
        }
        if self.warmup_events >= self.horizon_events {
            return Err(Error::config("warmup_events must be below horizon_events"));
        }
        if self.batches < 2 {
            return Err(Error::config("batch-means estimation needs at least 2 batches"));
        }
        self.policy.validate(self.config.n())?;
        for p in &self.probes {
            p.validate()?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Probe and threshold precomputation
// ---------------------------------------------------------------------------

enum ProbeKind {
    E0 { n1: usize, n2: usize, thr_n1: f64, thr_n2: f64 },
    ESub { budget_b: f64, threshold: f64 },
    ESuper { offset_a: f64, threshold: f64 },
    Vn1 { n1: usize },
    Vn2 { n2: usize },
    VSub { budget_b: f64 },
    VSuper { offset_a: f64 },
}

impl ProbeKind {
    fn value(&self, st: &SimState, n: usize) -> f64 {
        match self {
            ProbeKind::E0 { n1, n2, thr_n1, thr_n2 } => {
                let ok = (st.levels.idle_prefix(*n1) as f64) <= *thr_n1
                    && (st.levels.idle_prefix(*n2) as f64) <= *thr_n2;
                ok as u8 as f64
            }
            ProbeKind::ESub { budget_b, threshold } => {
                let v = st.q_wait().min(budget_b - st.busy_count as f64);
                (v <= *threshold) as u8 as f64
            }
            ProbeKind::ESuper { offset_a, threshold } => {
                let v = (st.q_wait() - offset_a).min((n - st.busy_count) as f64);
                (v <= *threshold) as u8 as f64
            }
            ProbeKind::Vn1 { n1 } => st.levels.idle_prefix(*n1) as f64,
            ProbeKind::Vn2 { n2 } => st.levels.idle_prefix(*n2) as f64,
            ProbeKind::VSub { budget_b } => {
                st.q_wait().min(budget_b - st.busy_count as f64)
            }
            ProbeKind::VSuper { offset_a } => {
                (st.q_wait() - offset_a).min((n - st.busy_count) as f64)
            }
        }
    }
}

/// Probes are evaluated with order-1 heterogeneity constants.
fn build_probes(spec: &RunSpec) -> Result<Vec<(String, ProbeKind)>> {
    let config = &spec.config;
    let n = config.n() as f64;
    let log_n = n.ln();
    let mut out = Vec::new();
    for id in &spec.probes {
        let konst = constants(config, 1)?;
        let kind = match id {
            ProbeId::E0 { delta } => ProbeKind::E0 {
                n1: config.prefix_index(*delta)?,
                n2: konst.n2,
                thr_n1: 1.0 + 8.0 * log_n * log_n,
                thr_n2: 5.0 * n.sqrt() * log_n,
            },
            ProbeId::Vn1Idle { delta } => ProbeKind::Vn1 { n1: config.prefix_index(*delta)? },
            ProbeId::Vn2Idle => ProbeKind::Vn2 { n2: konst.n2 },
            ProbeId::ESub => {
                require_nu(&konst)?;
                ProbeKind::ESub {
                    budget_b: crate::metrics::sub_busy_budget(config, &konst),
                    threshold: (1.0 - 3.0 / (8.0 * konst.nu)) * config.n_one_minus_alpha(),
                }
            }
            ProbeId::ESuper => {
                require_nu(&konst)?;
                ProbeKind::ESuper {
                    offset_a: crate::metrics::super_wait_offset(config, &konst),
                    threshold: 3.0 * konst.c1 * config.n_one_minus_alpha(),
                }
            }
            ProbeId::VUnifiedSub => {
                require_nu(&konst)?;
                ProbeKind::VSub { budget_b: crate::metrics::sub_busy_budget(config, &konst) }
            }
            ProbeId::VUnifiedSuper => {
                require_nu(&konst)?;
                ProbeKind::VSuper {
                    offset_a: crate::metrics::super_wait_offset(config, &konst),
                }
            }
        };
        out.push((id.to_string(), kind));
    }
    Ok(out)
}

fn require_nu(konst: &crate::model::HeterogeneityConstants) -> Result<()> {
    if konst.nu <= 0.0 {
        return Err(Error::config("probe requires ν > 0 (buffer bound b ≥ 2)"));
    }
    Ok(())
}

/// Clipped-moment thresholds η(r) for r = 1..3; empty for direct-λ configs.
fn clipped_thresholds(spec: &RunSpec) -> Result<Vec<(u32, f64)>> {
    if spec.config.regime() == Regime::Direct {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for r in 1..=3u32 {
        let konst = constants(&spec.config, r)?;
        if konst.nu > 0.0 {
            out.push((r, eta_threshold(&spec.config, &konst, spec.eta_variant)?));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Accumulators
// ---------------------------------------------------------------------------

struct Accumulators {
    qbar: TimeWeighted,
    qwait: TimeWeighted,
    clipped: Vec<(u32, f64, TimeWeighted)>,
    probes: Vec<(String, TimeWeighted)>,
    p_wait: CountRatio,
    p_block: CountRatio,
    waits: SampleMean,
    qbar_arrivals: SampleMean,
    post_warmup_admitted: u64,
    counts: Counts,
    initial_jobs: u64,
}

impl Accumulators {
    fn new(clip: &[(u32, f64)], probes: &[(String, ProbeKind)]) -> Self {
        Accumulators {
            qbar: TimeWeighted::default(),
            qwait: TimeWeighted::default(),
            clipped: clip.iter().map(|&(r, eta)| (r, eta, TimeWeighted::default())).collect(),
            probes: probes
                .iter()
                .map(|(name, _)| (name.clone(), TimeWeighted::default()))
                .collect(),
            p_wait: CountRatio::default(),
            p_block: CountRatio::default(),
            waits: SampleMean::default(),
            qbar_arrivals: SampleMean::default(),
            post_warmup_admitted: 0,
            counts: Counts::default(),
            initial_jobs: 0,
        }
    }

    fn close_batches(&mut self) {
        self.qbar.close_batch();
        self.qwait.close_batch();
        for (_, _, acc) in &mut self.clipped {
            acc.close_batch();
        }
        for (_, acc) in &mut self.probes {
            acc.close_batch();
        }
        self.p_wait.close_batch();
        self.p_block.close_batch();
        self.waits.close_batch();
        self.qbar_arrivals.close_batch();
    }

    fn merge(&mut self, other: &Accumulators) {
        self.qbar.merge(&other.qbar);
        self.qwait.merge(&other.qwait);
        for ((_, _, a), (_, _, b)) in self.clipped.iter_mut().zip(&other.clipped) {
            a.merge(b);
        }
        for ((_, a), (_, b)) in self.probes.iter_mut().zip(&other.probes) {
            a.merge(b);
        }
        self.p_wait.merge(&other.p_wait);
        self.p_block.merge(&other.p_block);
        self.waits.merge(&other.waits);
        self.qbar_arrivals.merge(&other.qbar_arrivals);
        self.post_warmup_admitted += other.post_warmup_admitted;
        self.counts.arrivals += other.counts.arrivals;
        self.counts.admitted += other.counts.admitted;
        self.counts.blocked += other.counts.blocked;
        self.counts.departures += other.counts.departures;
        self.counts.final_jobs += other.counts.final_jobs;
        self.initial_jobs += other.initial_jobs;
    }

    fn finalize(self) -> Result<RunMetrics> {
        if self.post_warmup_admitted == 0 {
            return Err(Error::estimation("no admitted jobs after warm-up"));
        }
        let mut clipped_moments = BTreeMap::new();
        let mut clipped_eta = BTreeMap::new();
        for (r, eta, acc) in &self.clipped {
            clipped_moments.insert(*r, acc.estimate());
            clipped_eta.insert(*r, *eta);
        }
        let mut event_occupancy = BTreeMap::new();
        for (name, acc) in &self.probes {
            event_occupancy.insert(name.clone(), acc.estimate());
        }
        let mean_wait = if self.waits.count() > 0 {
            self.waits.estimate()
        } else {
            Estimate::exact(f64::NAN)
        };
        Ok(RunMetrics {
            p_wait: self.p_wait.estimate(),
            p_block: self.p_block.estimate(),
            mean_wait,
            mean_qbar: self.qbar.estimate(),
            mean_qbar_arrival: Some(self.qbar_arrivals.estimate()),
            mean_qwait: self.qwait.estimate(),
            clipped_moments,
            clipped_eta,
            event_occupancy,
            counts: self.counts,
        })
    }
}

// ---------------------------------------------------------------------------
// Fast routing against the level index
// ---------------------------------------------------------------------------

/// Bit-identical rate groups as index ranges, precomputed once per run.
fn rate_groups(profile: &ServiceProfile) -> Vec<(u32, u32)> {
    let n = profile.n();
    let mut groups = vec![(0u32, 0u32); n];
    let mut lo = 0usize;
    while lo < n {
        let mut hi = lo + 1;
        while hi < n && profile.rate(hi) == profile.rate(lo) {
            hi += 1;
        }
        for g in groups.iter_mut().take(hi).skip(lo) {
            *g = (lo as u32, hi as u32);
        }
        lo = hi;
    }
    groups
}

/// Same selection law as `policy::route`, evaluated in O(log N) against the
/// level index (O(d) for sampling policies).
fn route_fast<R: Rng>(
    st: &SimState,
    policy: PolicySpec,
    profile: &ServiceProfile,
    groups: &[(u32, u32)],
    b: QueueLen,
    rng: &mut R,
) -> RoutingDecision {
    let n = profile.n();
    let pick_rate_aware = |st: &SimState, level: QueueLen, rng: &mut R| -> usize {
        let i0 = st.levels.min_index(level);
        let (lo, hi) = groups[i0];
        if hi - lo == 1 {
            return i0;
        }
        let c = st.levels.count_range(level, lo as usize, hi as usize);
        if c == 1 {
            i0
        } else {
            st.levels.select_from(level, lo as usize, rng.gen_range(0..c))
        }
    };
    let server = match policy {
        PolicySpec::Jfsq => {
            let level = st.levels.lowest_nonempty();
            pick_rate_aware(st, level, rng)
        }
        PolicySpec::Jsq => {
            let level = st.levels.lowest_nonempty();
            let c = st.levels.count(level);
            if c == 1 {
                st.levels.min_index(level)
            } else {
                st.levels.select(level, rng.gen_range(0..c))
            }
        }
        PolicySpec::Jiq => {
            if st.levels.count(0) > 0 {
                pick_rate_aware(st, 0, rng)
            } else {
                rng.gen_range(0..n)
            }
        }
        PolicySpec::PowerOfD { d } => {
            let sample = rand::seq::index::sample(rng, n, d);
            let mut best = usize::MAX;
            for i in sample.iter() {
                if best == usize::MAX
                    || st.q[i] < st.q[best]
                    || (st.q[i] == st.q[best] && profile.rate(i) > profile.rate(best))
                {
                    best = i;
                }
            }
            let ties: Vec<usize> = {
                let mut v = Vec::new();
                // Re-walk the sample for exact (length, rate) ties.
                let sample2 = sample;
                for i in sample2.iter() {
                    if st.q[i] == st.q[best] && profile.rate(i) == profile.rate(best) {
                        v.push(i);
                    }
                }
                v
            };
            if ties.len() == 1 {
                ties[0]
            } else {
                ties[rng.gen_range(0..ties.len())]
            }
        }
        PolicySpec::Random => rng.gen_range(0..n),
    };
    if st.q[server] == b {
        RoutingDecision::Block
    } else {
        RoutingDecision::Assign(server)
    }
}

// ---------------------------------------------------------------------------
// Event loop
// ---------------------------------------------------------------------------

fn sim_once(spec: &RunSpec, replication: u64) -> Result<Accumulators> {
    spec.validate()?;
    let config = &spec.config;
    let n = config.n();
    let b = config.buffer_b() as QueueLen;
    let profile = config.profile();
    let arrival_rate = config.arrival_rate();
    let groups = rate_groups(profile);
    let probes = build_probes(spec)?;
    let clip = clipped_thresholds(spec)?;

    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    rng.set_stream(replication);
    let initial = spec.initial.build(n, b);
    let mut st = SimState::new(profile, b, &initial);
    let mut acc = Accumulators::new(&clip, &probes);
    acc.initial_jobs = st.total_jobs;

    let post = spec.horizon_events - spec.warmup_events;
    let batch_len = (post / spec.batches as u64).max(1);
    let mut cur_batch = 0u64;

    for event_idx in 0..spec.horizon_events {
        let total_rate = arrival_rate + st.busy_rate;
        let dt: f64 = rng.sample::<f64, _>(Exp1) / total_rate;
        let collecting = event_idx >= spec.warmup_events;
        if collecting {
            let batch =
                ((event_idx - spec.warmup_events) / batch_len).min(spec.batches as u64 - 1);
            if batch != cur_batch {
                acc.close_batches();
                cur_batch = batch;
            }
            let qb = st.qbar(n);
            acc.qbar.add(qb, dt);
            acc.qwait.add(st.q_wait(), dt);
            for (r, eta, slot) in &mut acc.clipped {
                slot.add((qb - *eta).max(0.0).powi(*r as i32), dt);
            }
            for ((_, kind), (_, slot)) in probes.iter().zip(&mut acc.probes) {
                slot.add(kind.value(&st, n), dt);
            }
        }
        st.clock += dt;

        let u: f64 = rng.gen::<f64>() * total_rate;
        if u < arrival_rate {
            acc.counts.arrivals += 1;
            if collecting {
                acc.qbar_arrivals.record(st.qbar(n));
            }
            match route_fast(&st, spec.policy, profile, &groups, b, &mut rng) {
                RoutingDecision::Assign(i) => {
                    let was_busy = st.q[i] >= 1;
                    if collecting {
                        acc.p_wait.record(was_busy);
                        acc.p_block.record(false);
                        acc.post_warmup_admitted += 1;
                    }
                    acc.counts.admitted += 1;
                    let old = st.q[i];
                    st.q[i] = old + 1;
                    st.levels.move_server(i, old, old + 1);
                    st.total_jobs += 1;
                    if was_busy {
                        st.pending[i].push_back(st.clock);
                    } else {
                        st.busy_rates.add(i, profile.rate(i));
                        st.busy_rate += profile.rate(i);
                        st.busy_count += 1;
                        if collecting {
                            acc.waits.record(0.0);
                        }
                    }
                }
                RoutingDecision::Block => {
                    acc.counts.blocked += 1;
                    if collecting {
                        acc.p_wait.record(true);
                        acc.p_block.record(true);
                    }
                }
            }
        } else {
            // Departure. Structurally busy_rate > 0 here: with no busy
            // server the total rate equals the arrival rate and the arrival
            // branch always wins.
            assert!(
                st.busy_count > 0,
                "departure drawn with no busy server: internal invariant broken"
            );
            let mut server = st.busy_rates.select(u - arrival_rate);
            if st.q[server] == 0 {
                // Float-drift edge between the incremental total and the
                // tree sums; fall back to the nearest busy server.
                server = (0..n)
                    .map(|k| (server + k) % n)
                    .find(|&s| st.q[s] >= 1)
                    .unwrap();
            }
            let old = st.q[server];
            st.q[server] = old - 1;
            st.levels.move_server(server, old, old - 1);
            st.total_jobs -= 1;
            acc.counts.departures += 1;
            if old == 1 {
                st.busy_rates.add(server, -profile.rate(server));
                st.busy_rate -= profile.rate(server);
                st.busy_count -= 1;
                debug_assert!(st.pending[server].is_empty());
            } else if let Some(ts) = st.pending[server].pop_front() {
                if collecting {
                    acc.waits.record(st.clock - ts);
                }
            }
        }

        if (event_idx + 1) % REBUILD_INTERVAL == 0 {
            st.rebuild_rates(profile);
        }
    }
    acc.close_batches();
    acc.counts.final_jobs = st.total_jobs;

    // Conservation invariants; failure indicates an engine bug.
    assert_eq!(acc.counts.arrivals, acc.counts.admitted + acc.counts.blocked);
    assert_eq!(
        acc.initial_jobs + acc.counts.admitted,
        acc.counts.departures + st.total_jobs
    );
    Ok(acc)
}

/// Runs one replication identified by its stream index.
pub fn run_replication(spec: &RunSpec, replication: u64) -> Result<RunMetrics> {
    sim_once(spec, replication)?.finalize()
}

/// Runs the spec's single replication (stream 0).
pub fn run(spec: &RunSpec) -> Result<RunMetrics> {
    run_replication(spec, 0)
}

/// Runs independent replications on decorrelated streams of the same seed
/// and merges the accumulators; point estimates are the event-weighted
/// pooling of the replications.
pub fn replicate(spec: &RunSpec, replications: u32) -> Result<RunMetrics> {
    if replications < 1 {
        return Err(Error::config("replications must be at least 1"));
    }
    let results: Vec<Result<Accumulators>> = (0..replications)
        .into_par_iter()
        .map(|rep| {
            sim_once(spec, rep as u64).map_err(|e| attach_replication(e, rep))
        })
        .collect();
    let mut merged: Option<Accumulators> = None;
    for acc in results {
        let acc = acc?;
        match &mut merged {
            None => merged = Some(acc),
            Some(m) => m.merge(&acc),
        }
    }
    merged.unwrap().finalize()
}

fn attach_replication(e: Error, rep: u32) -> Error {
    match e {
        Error::Config(m) => Error::Config(format!("replication {rep}: {m}")),
        Error::State(m) => Error::State(format!("replication {rep}: {m}")),
        Error::Estimation(m) => Error::Estimation(format!("replication {rep}: {m}")),
        Error::Scale(m) => Error::Scale(format!("replication {rep}: {m}")),
        Error::Numerical { msg, residual } => {
            Error::Numerical { msg: format!("replication {rep}: {msg}"), residual }
        }
        Error::Fit(m) => Error::Fit(format!("replication {rep}: {m}")),
    }
}
