//! Routing policies: queue-length-aware dispatch rules mapping a state and
//! profile to a destination server (or a blocking decision), plus exact
//! routing distributions used by the finite-state analysis.
//!
//! Servers are indexed fastest-first, so within a set of shortest queues the
//! lowest index is the fastest; exact rate ties are broken uniformly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ServiceProfile;

/// Queue length of one server, in [0, b].
pub type QueueLen = u32;

/// Outcome of routing one arrival.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoutingDecision {
    /// Destination server (0-based).
    Assign(usize),
    /// Selected server already holds b jobs; the arrival is discarded.
    Block,
}

/// Dispatch policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    /// Shortest queue, ties to the fastest server, rate ties uniform.
    Jfsq,
    /// Shortest queue, uniform among ties (rate-unaware).
    Jsq,
    /// Fastest idle server; uniform over all servers when none idle.
    Jiq,
    /// Sample d distinct servers, apply the rate-aware shortest-queue rule
    /// within the sample.
    PowerOfD { d: usize },
    /// Uniform over all servers.
    Random,
}

impl PolicySpec {
    pub fn validate(&self, n: usize) -> Result<()> {
        if let PolicySpec::PowerOfD { d } = self {
            if *d < 1 || *d > n {
                return Err(Error::config(format!("pod requires 1 ≤ d ≤ {n}, got {d}")));
            }
        }
        Ok(())
    }
}

impl fmt::Display for PolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicySpec::Jfsq => write!(f, "jfsq"),
            PolicySpec::Jsq => write!(f, "jsq"),
            PolicySpec::Jiq => write!(f, "jiq"),
            PolicySpec::PowerOfD { d } => write!(f, "pod:{d}"),
            PolicySpec::Random => write!(f, "random"),
        }
    }
}

impl FromStr for PolicySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jfsq" => Ok(PolicySpec::Jfsq),
            "jsq" => Ok(PolicySpec::Jsq),
            "jiq" => Ok(PolicySpec::Jiq),
            "random" => Ok(PolicySpec::Random),
            _ => {
                if let Some(d) = s.strip_prefix("pod:") {
                    let d = d
                        .parse::<usize>()
                        .map_err(|_| Error::config(format!("invalid pod sample size {d:?}")))?;
                    Ok(PolicySpec::PowerOfD { d })
                } else {
                    Err(Error::config(format!("unknown policy {s:?}")))
                }
            }
        }
    }
}

fn validate_state(q: &[QueueLen], profile: &ServiceProfile, b: QueueLen) -> Result<()> {
    if q.len() != profile.n() {
        return Err(Error::state(format!(
            "state has {} entries, profile has {}",
            q.len(),
            profile.n()
        )));
    }
    if let Some(bad) = q.iter().find(|&&x| x > b) {
        return Err(Error::state(format!("queue length {bad} exceeds buffer bound {b}")));
    }
    Ok(())
}

/// Servers tied under the rate-aware shortest-queue rule on `candidates`:
/// minimum queue length, then maximum rate. Returns the tied index set.
fn rate_aware_ties(
    q: &[QueueLen],
    profile: &ServiceProfile,
    candidates: impl Iterator<Item = usize> + Clone,
) -> Vec<usize> {
    let best = candidates
        .clone()
        .min_by(|&a, &b| {
            q[a].cmp(&q[b]).then(
                profile
                    .rate(b)
                    .partial_cmp(&profile.rate(a))
                    .unwrap(),
            )
        })
        .expect("non-empty candidate set");
    let (blen, brate) = (q[best], profile.rate(best));
    candidates
        .filter(|&i| q[i] == blen && profile.rate(i) == brate)
        .collect()
}

fn pick_uniform<R: Rng + ?Sized>(ties: &[usize], rng: &mut R) -> usize {
    if ties.len() == 1 {
        ties[0]
    } else {
        ties[rng.gen_range(0..ties.len())]
    }
}

fn decide(q: &[QueueLen], b: QueueLen, server: usize) -> RoutingDecision {
    if q[server] == b {
        RoutingDecision::Block
    } else {
        RoutingDecision::Assign(server)
    }
}

/// Routes one arrival. Full servers are not excluded before selection;
/// blocking is decided after, from the selected server's occupancy.
pub fn route<R: Rng + ?Sized>(
    policy: PolicySpec,
    q: &[QueueLen],
    profile: &ServiceProfile,
    b: QueueLen,
    rng: &mut R,
) -> Result<RoutingDecision> {
    validate_state(q, profile, b)?;
    policy.validate(q.len())?;
    let n = q.len();
    let server = match policy {
        PolicySpec::Jfsq => {
            let ties = rate_aware_ties(q, profile, 0..n);
            pick_uniform(&ties, rng)
        }
        PolicySpec::Jsq => {
            let min = *q.iter().min().unwrap();
            let ties: Vec<usize> = (0..n).filter(|&i| q[i] == min).collect();
            pick_uniform(&ties, rng)
        }
        PolicySpec::Jiq => {
            if q.iter().any(|&x| x == 0) {
                let ties = rate_aware_ties(q, profile, (0..n).filter(|&i| q[i] == 0));
                pick_uniform(&ties, rng)
            } else {
                rng.gen_range(0..n)
            }
        }
        PolicySpec::PowerOfD { d } => {
            let sample: Vec<usize> = rand::seq::index::sample(rng, n, d).into_vec();
            let ties = rate_aware_ties(q, profile, sample.iter().copied());
            pick_uniform(&ties, rng)
        }
        PolicySpec::Random => rng.gen_range(0..n),
    };
    Ok(decide(q, b, server))
}

/// Exact distribution of [`route`]'s outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct RouteDistribution {
    /// P(assign to server i); zero for servers that would block.
    pub assign: Vec<f64>,
    /// P(arrival blocked).
    pub block: f64,
}

impl RouteDistribution {
    fn from_selection(select: Vec<f64>, q: &[QueueLen], b: QueueLen) -> Self {
        let mut assign = select;
        let mut block = 0.0;
        for (i, p) in assign.iter_mut().enumerate() {
            if q[i] == b {
                block += *p;
                *p = 0.0;
            }
        }
        RouteDistribution { assign, block }
    }

    pub fn total(&self) -> f64 {
        self.assign.iter().sum::<f64>() + self.block
    }
}

/// Exact routing probabilities for a state, consistent with [`route`] in the
/// sense that empirical routing frequencies converge to this distribution.
pub fn route_distribution(
    policy: PolicySpec,
    q: &[QueueLen],
    profile: &ServiceProfile,
    b: QueueLen,
) -> Result<RouteDistribution> {
    validate_state(q, profile, b)?;
    policy.validate(q.len())?;
    let n = q.len();
    let mut select = vec![0.0; n];
    match policy {
        PolicySpec::Jfsq => {
            let ties = rate_aware_ties(q, profile, 0..n);
            let p = 1.0 / ties.len() as f64;
            for i in ties {
                select[i] = p;
            }
        }
        PolicySpec::Jsq => {
            let min = *q.iter().min().unwrap();
            let ties: Vec<usize> = (0..n).filter(|&i| q[i] == min).collect();
            let p = 1.0 / ties.len() as f64;
            for i in ties {
                select[i] = p;
            }
        }
        PolicySpec::Jiq => {
            if q.iter().any(|&x| x == 0) {
                let ties = rate_aware_ties(q, profile, (0..n).filter(|&i| q[i] == 0));
                let p = 1.0 / ties.len() as f64;
                for i in ties {
                    select[i] = p;
                }
            } else {
                select.fill(1.0 / n as f64);
            }
        }
        PolicySpec::PowerOfD { d } => {
            pod_selection(q, profile, d, &mut select);
        }
        PolicySpec::Random => select.fill(1.0 / n as f64),
    }
    Ok(RouteDistribution::from_selection(select, q, b))
}

/// Exact selection probabilities for the power-of-d rule.
///
/// Servers are grouped by identical (queue length, rate) preference key and
/// groups ordered best-first. The sampled winner is uniform over the sample's
/// intersection with the best group it hits, so by symmetry each member of
/// group k is selected with probability
/// P(sample ⊆ group k ∪ worse, sample ∩ group k ≠ ∅) / |group k|.
fn pod_selection(q: &[QueueLen], profile: &ServiceProfile, d: usize, select: &mut [f64]) {
    let n = q.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        q[a].cmp(&q[b])
            .then(profile.rate(b).partial_cmp(&profile.rate(a)).unwrap())
            .then(a.cmp(&b))
    });
    // Hypergeometric prefix probability C(a, d)/C(n, d).
    let frac = |a: usize| -> f64 {
        if a < d {
            return 0.0;
        }
        (0..d).map(|t| (a - t) as f64 / (n - t) as f64).product()
    };
    let mut pos = 0;
    while pos < n {
        let key = (q[order[pos]], profile.rate(order[pos]));
        let mut end = pos;
        while end < n && (q[order[end]], profile.rate(order[end])) == key {
            end += 1;
        }
        let group = &order[pos..end];
        let worse = n - end;
        let p_group = frac(worse + group.len()) - frac(worse);
        let per = p_group / group.len() as f64;
        for &i in group {
            select[i] = per;
        }
        pos = end;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_profile, ProfileSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn profile(rates: &[f64]) -> ServiceProfile {
        make_profile(&ProfileSpec::Explicit { rates: rates.to_vec() }, rates.len()).unwrap()
    }

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    #[test]
    fn jfsq_prefers_fastest_shortest() {
        let p = profile(&[3.0, 2.0, 1.0]);
        let got = route(PolicySpec::Jfsq, &[1, 0, 0], &p, 2, &mut rng(1)).unwrap();
        assert_eq!(got, RoutingDecision::Assign(1));
    }

    #[test]
    fn jfsq_blocks_when_all_full() {
        let p = profile(&[1.0, 1.0, 1.0]);
        let got = route(PolicySpec::Jfsq, &[2, 2, 2], &p, 2, &mut rng(1)).unwrap();
        assert_eq!(got, RoutingDecision::Block);
    }

    #[test]
    fn jiq_takes_only_idle() {
        let p = profile(&[3.0, 2.0, 1.0]);
        let got = route(PolicySpec::Jiq, &[1, 1, 0], &p, 2, &mut rng(7)).unwrap();
        assert_eq!(got, RoutingDecision::Assign(2));
    }

    #[test]
    fn jsq_splits_ties_evenly() {
        let p = profile(&[1.0, 1.0]);
        let mut r = rng(42);
        let mut first = 0u32;
        let draws = 10_000;
        for _ in 0..draws {
            match route(PolicySpec::Jsq, &[0, 0], &p, 2, &mut r).unwrap() {
                RoutingDecision::Assign(0) => first += 1,
                RoutingDecision::Assign(1) => {}
                other => panic!("unexpected {other:?}"),
            }
        }
        // 3σ band around one half for a fair coin.
        let sigma = (draws as f64 * 0.25).sqrt();
        assert!((first as f64 - draws as f64 / 2.0).abs() <= 3.0 * sigma);
    }

    #[test]
    fn malformed_states_rejected() {
        let p = profile(&[1.0, 1.0]);
        assert!(route(PolicySpec::Jsq, &[0], &p, 2, &mut rng(0)).is_err());
        assert!(route(PolicySpec::Jsq, &[0, 3], &p, 2, &mut rng(0)).is_err());
        assert!(route_distribution(PolicySpec::PowerOfD { d: 5 }, &[0, 0], &p, 2).is_err());
    }

    #[test]
    fn distribution_examples() {
        let p = profile(&[3.0, 2.0, 1.0]);
        let d = route_distribution(PolicySpec::Jfsq, &[1, 0, 0], &p, 2).unwrap();
        assert_eq!(d.assign, vec![0.0, 1.0, 0.0]);
        assert_eq!(d.block, 0.0);

        let p2 = profile(&[1.0, 1.0]);
        let d = route_distribution(PolicySpec::PowerOfD { d: 1 }, &[0, 1], &p2, 2).unwrap();
        assert_eq!(d.assign, vec![0.5, 0.5]);

        let d = route_distribution(PolicySpec::Random, &[2, 0], &p2, 2).unwrap();
        assert_eq!(d.assign, vec![0.0, 0.5]);
        assert_eq!(d.block, 0.5);
    }

    #[test]
    fn jfsq_never_picks_slower_equal_length() {
        let p = profile(&[3.0, 2.0, 1.0]);
        for q in [[0, 0, 0], [1, 1, 0], [1, 1, 1], [2, 1, 1]] {
            let d = route_distribution(PolicySpec::Jfsq, &q, &p, 2).unwrap();
            for i in 0..3 {
                for j in (i + 1)..3 {
                    if q[i] == q[j] && p.rate(i) > p.rate(j) {
                        assert_eq!(d.assign[j], 0.0, "q = {q:?}, j = {j}");
                    }
                }
            }
        }
    }

    #[test]
    fn jfsq_block_iff_min_is_b() {
        let p = profile(&[2.0, 1.0]);
        for q in [[0u32, 0], [2, 0], [2, 1], [2, 2], [1, 1]] {
            let d = route_distribution(PolicySpec::Jfsq, &q, &p, 2).unwrap();
            let min = *q.iter().min().unwrap();
            assert_eq!(d.block > 0.0, min == 2, "q = {q:?}");
        }
    }

    /// Empirical routing frequencies match the exact distribution in total
    /// variation, for every policy over a grid of states.
    #[test]
    fn route_agrees_with_distribution() {
        let p = profile(&[3.0, 2.0, 2.0, 1.0]);
        let b = 2;
        let states: Vec<Vec<QueueLen>> = vec![
            vec![0, 0, 0, 0],
            vec![1, 0, 0, 2],
            vec![1, 1, 1, 1],
            vec![2, 1, 1, 0],
            vec![2, 2, 2, 2],
        ];
        let policies = [
            PolicySpec::Jfsq,
            PolicySpec::Jsq,
            PolicySpec::Jiq,
            PolicySpec::PowerOfD { d: 2 },
            PolicySpec::PowerOfD { d: 3 },
            PolicySpec::Random,
        ];
        let m = 100_000u32;
        let tol = 4.0 / (m as f64).sqrt();
        let mut r = rng(2024);
        for policy in policies {
            for q in &states {
                let exact = route_distribution(policy, q, &p, b).unwrap();
                assert!((exact.total() - 1.0).abs() < 1e-12);
                let mut counts = vec![0u32; q.len() + 1];
                for _ in 0..m {
                    match route(policy, q, &p, b, &mut r).unwrap() {
                        RoutingDecision::Assign(i) => counts[i] += 1,
                        RoutingDecision::Block => counts[q.len()] += 1,
                    }
                }
                let mut tv = 0.0;
                for i in 0..q.len() {
                    tv += (counts[i] as f64 / m as f64 - exact.assign[i]).abs();
                }
                tv += (counts[q.len()] as f64 / m as f64 - exact.block).abs();
                tv /= 2.0;
                assert!(tv <= tol, "policy {policy}, q {q:?}: tv {tv} > {tol}");
            }
        }
    }

    /// Relabeling equal-rate servers permutes JSQ/Random distributions the
    /// same way.
    #[test]
    fn permutation_equivariance_on_equal_rates() {
        let p = profile(&[1.0, 1.0, 1.0]);
        let q = vec![2, 0, 1];
        let perm = [1usize, 2, 0]; // new[i] = old[perm[i]]
        let qp: Vec<QueueLen> = perm.iter().map(|&j| q[j]).collect();
        for policy in [PolicySpec::Jsq, PolicySpec::Random] {
            let d = route_distribution(policy, &q, &p, 2).unwrap();
            let dp = route_distribution(policy, &qp, &p, 2).unwrap();
            for i in 0..3 {
                assert_eq!(dp.assign[i], d.assign[perm[i]]);
            }
            assert_eq!(dp.block, d.block);
        }
    }

    #[test]
    fn policy_string_roundtrip() {
        for s in ["jfsq", "jsq", "jiq", "pod:3", "random"] {
            let p: PolicySpec = s.parse().unwrap();
            assert_eq!(p.to_string(), s);
        }
        assert!("pod:x".parse::<PolicySpec>().is_err());
        assert!("".parse::<PolicySpec>().is_err());
    }

    #[test]
    fn pod_full_sample_matches_jfsq() {
        let p = profile(&[2.0, 1.0, 1.0]);
        for q in [[0u32, 0, 0], [1, 0, 2], [1, 1, 1]] {
            let pod = route_distribution(PolicySpec::PowerOfD { d: 3 }, &q, &p, 2).unwrap();
            let jfsq = route_distribution(PolicySpec::Jfsq, &q, &p, 2).unwrap();
            for i in 0..3 {
                assert!((pod.assign[i] - jfsq.assign[i]).abs() < 1e-12);
            }
        }
    }
}
