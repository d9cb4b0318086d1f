//! Exact finite-state analysis: full generator construction over the
//! enumerated queue-state space, stationary solve, exact metrics, the
//! generator-coupling identity, and the iterative moment inequality.

pub mod drift;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{
    clipped_moment_sample, eta_threshold, q_wait, qbar, stein_g_scaled, Counts, Estimate,
    EtaVariant, RunMetrics,
};
use crate::model::{constants, HeterogeneityConstants, Regime, SystemConfig};
use crate::policy::{route_distribution, PolicySpec, QueueLen};

/// Hard cap on the enumerated state count (b+1)^N.
pub const MAX_STATES: usize = 1_000_000;
/// Dense linear solves above this state count cost too much memory and time;
/// larger systems use power iteration on the uniformized chain.
const DENSE_LIMIT: usize = 2_048;
/// Residual contract for accepted solves.
pub const RESIDUAL_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// State enumeration
// ---------------------------------------------------------------------------

/// Mixed-radix enumeration of all queue vectors in [0, b]^N.
#[derive(Clone, Copy, Debug)]
pub struct StateSpace {
    n: usize,
    b: QueueLen,
    len: usize,
}

impl StateSpace {
    pub fn new(n: usize, b: QueueLen) -> Result<Self> {
        let mut len: usize = 1;
        for _ in 0..n {
            len = len
                .checked_mul(b as usize + 1)
                .filter(|&l| l <= MAX_STATES)
                .ok_or_else(|| {
                    Error::scale(format!(
                        "state space (b+1)^N = {}^{n} exceeds {MAX_STATES}",
                        b + 1
                    ))
                })?;
        }
        Ok(StateSpace { n, b, len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> QueueLen {
        self.b
    }

    pub fn decode_into(&self, idx: usize, q: &mut Vec<QueueLen>) {
        q.clear();
        let base = self.b as usize + 1;
        let mut rest = idx;
        for _ in 0..self.n {
            q.push((rest % base) as QueueLen);
            rest /= base;
        }
    }

    pub fn decode(&self, idx: usize) -> Vec<QueueLen> {
        let mut q = Vec::with_capacity(self.n);
        self.decode_into(idx, &mut q);
        q
    }

    pub fn encode(&self, q: &[QueueLen]) -> usize {
        let base = self.b as usize + 1;
        let mut idx = 0usize;
        for &x in q.iter().rev() {
            idx = idx * base + x as usize;
        }
        idx
    }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Sparse CTMC generator: off-diagonal rows plus the diagonal, with
/// row sums exactly zero by construction.
pub struct Generator {
    pub space: StateSpace,
    /// Off-diagonal transitions (target state, rate) per source state.
    pub rows: Vec<Vec<(u32, f64)>>,
    pub diag: Vec<f64>,
}

impl Generator {
    /// Exit rate bound max |diagonal|.
    pub fn max_exit_rate(&self) -> f64 {
        self.diag.iter().fold(0.0, |m, d| m.max(-d))
    }

    /// π·G, the stationary residual vector.
    pub fn left_apply(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.space.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let w = pi[i];
            if w == 0.0 {
                continue;
            }
            out[i] += w * self.diag[i];
            for &(j, rate) in row {
                out[j as usize] += w * rate;
            }
        }
        out
    }
}

/// Builds the generator for a config under a routing policy. Arrivals move
/// mass λN·P(assign m) to q+e_m (blocked arrivals are self-loops and carry no
/// rate), departures move rate μₙ from every busy server to q-e_n.
pub fn build_generator(config: &SystemConfig, policy: PolicySpec) -> Result<Generator> {
    let space = StateSpace::new(config.n(), config.buffer_b() as QueueLen)?;
    policy.validate(config.n())?;
    let profile = config.profile();
    let b = config.buffer_b() as QueueLen;
    let arrival_rate = config.arrival_rate();
    let mut rows = Vec::with_capacity(space.len());
    let mut diag = Vec::with_capacity(space.len());
    let mut q = Vec::with_capacity(config.n());
    for idx in 0..space.len() {
        space.decode_into(idx, &mut q);
        let dist = route_distribution(policy, &q, profile, b)?;
        let mut row: Vec<(u32, f64)> = Vec::new();
        for (m, &p) in dist.assign.iter().enumerate() {
            if p > 0.0 {
                q[m] += 1;
                let target = space.encode(&q);
                q[m] -= 1;
                row.push((target as u32, arrival_rate * p));
            }
        }
        for n in 0..q.len() {
            if q[n] >= 1 {
                q[n] -= 1;
                let target = space.encode(&q);
                q[n] += 1;
                row.push((target as u32, profile.rate(n)));
            }
        }
        let total: f64 = row.iter().map(|(_, r)| r).sum();
        rows.push(row);
        diag.push(-total);
    }
    Ok(Generator { space, rows, diag })
}

// ---------------------------------------------------------------------------
// Stationary solve
// ---------------------------------------------------------------------------

/// Stationary distribution over the enumerated states.
#[derive(Clone, Debug, Serialize)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
    /// ‖πG‖∞ after the solve.
    pub residual: f64,
}

/// Solves πG = 0, Σπ = 1. Small systems use a dense LU factorization;
/// larger ones power iteration on the uniformized chain with constant
/// 1.1 × max exit rate.
pub fn solve(generator: &Generator) -> Result<StationaryDistribution> {
    let m = generator.space.len();
    let mut pi = if m <= DENSE_LIMIT {
        solve_dense(generator)?
    } else {
        solve_power(generator)?
    };
    for p in &mut pi {
        if *p < 0.0 {
            if *p < -1e-12 {
                return Err(Error::Numerical {
                    msg: format!("stationary solve produced probability {p}"),
                    residual: f64::NAN,
                });
            }
            *p = 0.0;
        }
    }
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }
    let residual = generator
        .left_apply(&pi)
        .iter()
        .fold(0.0f64, |acc, r| acc.max(r.abs()));
    if residual > RESIDUAL_TOL {
        return Err(Error::Numerical {
            msg: "stationary solve did not reach the residual tolerance".to_string(),
            residual,
        });
    }
    Ok(StationaryDistribution { pi, residual })
}

fn solve_dense(generator: &Generator) -> Result<Vec<f64>> {
    let m = generator.space.len();
    // Aᵀπ system: columns of A are generator rows; the last equation is
    // replaced by the normalization Σπ = 1.
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (i, row) in generator.rows.iter().enumerate() {
        a[(i, i)] += generator.diag[i];
        for &(j, rate) in row {
            a[(j as usize, i)] += rate;
        }
    }
    for j in 0..m {
        a[(m - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    rhs[m - 1] = 1.0;
    let lu = a.lu();
    let x = lu.solve(&rhs).ok_or(Error::Numerical {
        msg: "singular dense stationary system".to_string(),
        residual: f64::NAN,
    })?;
    Ok(x.iter().copied().collect())
}

fn solve_power(generator: &Generator) -> Result<Vec<f64>> {
    let m = generator.space.len();
    let uniformization = 1.1 * generator.max_exit_rate();
    let mut pi = vec![1.0 / m as f64; m];
    let mut next = vec![0.0; m];
    let max_iters = 400_000usize;
    let check_every = 200usize;
    for iter in 0..max_iters {
        next.fill(0.0);
        for (i, row) in generator.rows.iter().enumerate() {
            let w = pi[i];
            if w == 0.0 {
                continue;
            }
            next[i] += w * (1.0 + generator.diag[i] / uniformization);
            for &(j, rate) in row {
                next[j as usize] += w * (rate / uniformization);
            }
        }
        let total: f64 = next.iter().sum();
        for v in &mut next {
            *v /= total;
        }
        std::mem::swap(&mut pi, &mut next);
        if (iter + 1) % check_every == 0 {
            let residual = generator
                .left_apply(&pi)
                .iter()
                .fold(0.0f64, |acc, r| acc.max(r.abs()));
            if residual <= RESIDUAL_TOL / 10.0 {
                return Ok(pi);
            }
        }
    }
    let residual = generator
        .left_apply(&pi)
        .iter()
        .fold(0.0f64, |acc, r| acc.max(r.abs()));
    if residual <= RESIDUAL_TOL {
        Ok(pi)
    } else {
        Err(Error::Numerical {
            msg: format!("power iteration did not converge in {max_iters} iterations"),
            residual,
        })
    }
}

// ---------------------------------------------------------------------------
// Exact metrics
// ---------------------------------------------------------------------------

/// Exact steady-state metrics under π. Arrival-conditioned probabilities
/// equal stationary expectations because arrivals are Poisson.
pub fn exact_metrics(
    dist: &StationaryDistribution,
    config: &SystemConfig,
    policy: PolicySpec,
) -> Result<RunMetrics> {
    let space = StateSpace::new(config.n(), config.buffer_b() as QueueLen)?;
    let profile = config.profile();
    let b = config.buffer_b() as QueueLen;
    let mut p_wait = 0.0;
    let mut p_block = 0.0;
    let mut mean_qbar = 0.0;
    let mut mean_qwait = 0.0;
    let mut q = Vec::with_capacity(config.n());

    // Clipped moments need per-order thresholds; skip them for direct-λ
    // configs, which have no regime η.
    let regime_etas: Vec<(u32, f64, HeterogeneityConstants)> = match config.regime() {
        Regime::Direct => Vec::new(),
        _ => {
            let mut v = Vec::new();
            for r in 1..=3u32 {
                let k = constants(config, r)?;
                if k.nu > 0.0 {
                    let eta = eta_threshold(config, &k, EtaVariant::Proof)?;
                    v.push((r, eta, k));
                }
            }
            v
        }
    };
    let mut clipped = vec![0.0; regime_etas.len()];

    for idx in 0..space.len() {
        space.decode_into(idx, &mut q);
        let w = dist.pi[idx];
        if w == 0.0 {
            continue;
        }
        let rd = route_distribution(policy, &q, profile, b)?;
        let busy_mass: f64 = rd
            .assign
            .iter()
            .enumerate()
            .filter(|(m, _)| q[*m] >= 1)
            .map(|(_, p)| p)
            .sum();
        p_wait += w * (busy_mass + rd.block);
        p_block += w * rd.block;
        let qb = qbar(&q);
        mean_qbar += w * qb;
        mean_qwait += w * q_wait(&q);
        for (slot, (r, eta, _)) in clipped.iter_mut().zip(&regime_etas) {
            *slot += w * clipped_moment_sample(qb, *eta, *r);
        }
    }

    if p_block >= 1.0 - 1e-15 {
        return Err(Error::estimation("blocking probability is 1; waiting time undefined"));
    }
    let mean_wait = mean_qwait / (config.arrival_rate() * (1.0 - p_block));

    let mut clipped_moments = std::collections::BTreeMap::new();
    let mut clipped_eta = std::collections::BTreeMap::new();
    for (value, (r, eta, _)) in clipped.iter().zip(&regime_etas) {
        clipped_moments.insert(*r, Estimate::exact(*value));
        clipped_eta.insert(*r, *eta);
    }

    Ok(RunMetrics {
        p_wait: Estimate::exact(p_wait),
        p_block: Estimate::exact(p_block),
        mean_wait: Estimate::exact(mean_wait),
        mean_qbar: Estimate::exact(mean_qbar),
        mean_qbar_arrival: Some(Estimate::exact(mean_qbar)),
        mean_qwait: Estimate::exact(mean_qwait),
        clipped_moments,
        clipped_eta,
        event_occupancy: std::collections::BTreeMap::new(),
        counts: Counts::default(),
    })
}

// ---------------------------------------------------------------------------
// Generator-coupling identity
// ---------------------------------------------------------------------------

/// |E_π[Gg(Q̄)]| for the clipped-moment test function of order r at
/// threshold η. Stationarity makes this vanish for any bounded g, so the
/// value doubles as a solve-quality check (≤ 1e-8 on accepted solves).
pub fn stein_identity_check(
    dist: &StationaryDistribution,
    config: &SystemConfig,
    policy: PolicySpec,
    r: u32,
    eta: f64,
) -> Result<f64> {
    let space = StateSpace::new(config.n(), config.buffer_b() as QueueLen)?;
    let mut total = 0.0;
    let mut q = Vec::with_capacity(config.n());
    for idx in 0..space.len() {
        let w = dist.pi[idx];
        if w == 0.0 {
            continue;
        }
        space.decode_into(idx, &mut q);
        total += w * generator_applied_to_g(&q, config, policy, r, eta)?;
    }
    Ok(total.abs())
}

/// (Gg)(q): the generator applied to g(q̄), expanded over arrival and
/// departure transitions.
fn generator_applied_to_g(
    q: &[QueueLen],
    config: &SystemConfig,
    policy: PolicySpec,
    r: u32,
    eta: f64,
) -> Result<f64> {
    let scale = config.n_alpha();
    let n = config.n() as f64;
    let b = config.buffer_b() as QueueLen;
    let rd = route_distribution(policy, q, config.profile(), b)?;
    let qb = qbar(q);
    let (g0, _, _) = stein_g_scaled(qb, eta, r, scale);
    let (g_up, _, _) = stein_g_scaled(qb + 1.0 / n, eta, r, scale);
    let (g_dn, _, _) = stein_g_scaled(qb - 1.0 / n, eta, r, scale);
    let busy_rate: f64 = q
        .iter()
        .enumerate()
        .filter(|(_, &x)| x >= 1)
        .map(|(i, _)| config.profile().rate(i))
        .sum();
    Ok(config.arrival_rate() * (1.0 - rd.block) * (g_up - g0) + busy_rate * (g_dn - g0))
}

// ---------------------------------------------------------------------------
// Iterative moment inequality
// ---------------------------------------------------------------------------

/// Both sides of the order-r moment relation, evaluated exactly under π.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentInequalityReport {
    pub r: u32,
    pub eta: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// Collapse-controlled service term of the right side.
    pub term_service: f64,
    /// Gradient remainder 2^(r+2)/n^(r-α).
    pub term_gradient: f64,
    /// Lower-order moment term (r/n^(1-α))·E[h^(r-1)(Q̄+1/n)].
    pub term_iteration: f64,
    pub satisfied: bool,
    /// The final moment bound of the regime, for comparison only; it is not
    /// asserted at small N where the size assumptions fail.
    pub theorem_bound: Option<f64>,
}

/// Evaluates E[hʳ(Q̄)] against the expanded right side
/// E[n^α·hʳ(Q̄)·(λ + n^(-α) - (1/n)·Σμₙ·I(Qₙ≥1))·I(Q̄ > η+1/n)]
///   + 2^(r+2)/n^(r-α) + (r/n^(1-α))·E[h^(r-1)(Q̄+1/n)].
/// `eta` defaults to the regime threshold; direct-λ configs must supply it.
pub fn moment_inequality_check(
    dist: &StationaryDistribution,
    config: &SystemConfig,
    konst: &HeterogeneityConstants,
    r: u32,
    eta: Option<f64>,
) -> Result<MomentInequalityReport> {
    let eta = match eta {
        Some(e) => e,
        None => eta_threshold(config, konst, EtaVariant::Proof)?,
    };
    let space = StateSpace::new(config.n(), config.buffer_b() as QueueLen)?;
    let n = config.n() as f64;
    let scale = config.n_alpha();
    let lambda = config.lambda();
    let gap = config.gap();
    let mut lhs = 0.0;
    let mut term_service = 0.0;
    let mut lower_moment = 0.0;
    let mut q = Vec::with_capacity(config.n());
    for idx in 0..space.len() {
        let w = dist.pi[idx];
        if w == 0.0 {
            continue;
        }
        space.decode_into(idx, &mut q);
        let qb = qbar(&q);
        lhs += w * clipped_moment_sample(qb, eta, r);
        if qb > eta + 1.0 / n {
            let busy_rate: f64 = q
                .iter()
                .enumerate()
                .filter(|(_, &x)| x >= 1)
                .map(|(i, _)| config.profile().rate(i))
                .sum();
            term_service += w
                * scale
                * clipped_moment_sample(qb, eta, r)
                * (lambda + gap - busy_rate / n);
        }
        lower_moment += w * clipped_moment_sample(qb + 1.0 / n, eta, r - 1);
    }
    let term_gradient = 2f64.powi(r as i32 + 2) / (n.powi(r as i32) * gap);
    let term_iteration = r as f64 / config.n_one_minus_alpha() * lower_moment;
    let rhs = term_service + term_gradient + term_iteration;
    let theorem_bound = match config.regime() {
        Regime::SubHalfinWhitt => {
            Some((konst.k_sub / config.n_one_minus_alpha()).powi(r as i32))
        }
        Regime::SuperHalfinWhitt => {
            Some(10.0 * (2.0 * r as f64 / config.n_one_minus_alpha()).powi(r as i32))
        }
        Regime::Direct => None,
    };
    Ok(MomentInequalityReport {
        r,
        eta,
        lhs,
        rhs,
        term_service,
        term_gradient,
        term_iteration,
        satisfied: lhs <= rhs * (1.0 + 1e-12) + 1e-300,
        theorem_bound,
    })
}
