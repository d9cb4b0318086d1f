//! Simulation state: the queue vector plus index structures that keep every
//! event O(log N) — per-level Fenwick trees over server indices (minimum
//! extraction, uniform selection, prefix counts) and a rate-weighted Fenwick
//! tree over busy servers for departure sampling.

use std::collections::VecDeque;

use crate::model::ServiceProfile;
use crate::policy::QueueLen;

/// Binary indexed tree over server indices holding 0/1 membership counts.
#[derive(Clone, Debug)]
pub struct CountFenwick {
    tree: Vec<u32>,
    len: usize,
}

impl CountFenwick {
    pub fn new(len: usize) -> Self {
        CountFenwick { tree: vec![0; len + 1], len }
    }

    pub fn add(&mut self, index: usize, delta: i32) {
        let mut i = index + 1;
        while i <= self.len {
            self.tree[i] = (self.tree[i] as i64 + delta as i64) as u32;
            i += i & i.wrapping_neg();
        }
    }

    /// Members with index < `end`.
    pub fn prefix(&self, end: usize) -> u32 {
        let mut i = end.min(self.len);
        let mut total = 0;
        while i > 0 {
            total += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        total
    }

    pub fn total(&self) -> u32 {
        self.prefix(self.len)
    }

    /// Index of the k-th member (0-based k). Caller guarantees k < total.
    pub fn select(&self, k: u32) -> usize {
        let mut rem = k as i64;
        let mut pos = 0usize;
        let mut step = self.len.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.len && (self.tree[next] as i64) <= rem {
                rem -= self.tree[next] as i64;
                pos = next;
            }
            step >>= 1;
        }
        pos // 0-based index of the (k+1)-th member
    }
}

/// Fenwick tree over f64 service-rate weights of busy servers.
#[derive(Clone, Debug)]
pub struct RateFenwick {
    tree: Vec<f64>,
    len: usize,
}

impl RateFenwick {
    pub fn new(len: usize) -> Self {
        RateFenwick { tree: vec![0.0; len + 1], len }
    }

    pub fn add(&mut self, index: usize, weight: f64) {
        let mut i = index + 1;
        while i <= self.len {
            self.tree[i] += weight;
            i += i & i.wrapping_neg();
        }
    }

    pub fn total(&self) -> f64 {
        let mut i = self.len;
        let mut total = 0.0;
        while i > 0 {
            total += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        total
    }

    /// Largest index whose prefix weight is ≤ `target`; used to draw a busy
    /// server proportionally to its rate. Caller clamps `target` below the
    /// total weight.
    pub fn select(&self, target: f64) -> usize {
        let mut rem = target;
        let mut pos = 0usize;
        let mut step = self.len.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= self.len && self.tree[next] <= rem {
                rem -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        pos.min(self.len - 1)
    }
}

/// Per-level server index: `fenwicks[l]` holds the servers whose queue
/// length is exactly l. Partition invariant: every server sits in exactly
/// the tree of its level.
#[derive(Clone, Debug)]
pub struct LevelIndex {
    levels: Vec<CountFenwick>,
    counts: Vec<u32>,
}

impl LevelIndex {
    pub fn new(n: usize, b: QueueLen, q: &[QueueLen]) -> Self {
        let mut levels = Vec::with_capacity(b as usize + 1);
        for _ in 0..=b {
            levels.push(CountFenwick::new(n));
        }
        let mut counts = vec![0u32; b as usize + 1];
        for (i, &x) in q.iter().enumerate() {
            levels[x as usize].add(i, 1);
            counts[x as usize] += 1;
        }
        LevelIndex { levels, counts }
    }

    pub fn move_server(&mut self, server: usize, from: QueueLen, to: QueueLen) {
        self.levels[from as usize].add(server, -1);
        self.counts[from as usize] -= 1;
        self.levels[to as usize].add(server, 1);
        self.counts[to as usize] += 1;
    }

    pub fn count(&self, level: QueueLen) -> u32 {
        self.counts[level as usize]
    }

    /// Lowest level with at least one server (the shortest queue length).
    pub fn lowest_nonempty(&self) -> QueueLen {
        self.counts
            .iter()
            .position(|&c| c > 0)
            .expect("levels partition the servers") as QueueLen
    }

    /// Fastest (lowest-index) server at a level.
    pub fn min_index(&self, level: QueueLen) -> usize {
        self.levels[level as usize].select(0)
    }

    /// k-th server (by index order) at a level.
    pub fn select(&self, level: QueueLen, k: u32) -> usize {
        self.levels[level as usize].select(k)
    }

    /// Servers at `level` with index in [lo, hi).
    pub fn count_range(&self, level: QueueLen, lo: usize, hi: usize) -> u32 {
        let f = &self.levels[level as usize];
        f.prefix(hi) - f.prefix(lo)
    }

    /// k-th server at `level` among those with index ≥ lo.
    pub fn select_from(&self, level: QueueLen, lo: usize, k: u32) -> usize {
        let f = &self.levels[level as usize];
        f.select(f.prefix(lo) + k)
    }

    /// Idle servers among the fastest `m`.
    pub fn idle_prefix(&self, m: usize) -> u32 {
        self.levels[0].prefix(m)
    }
}

/// Mutable simulation state of the queue CTMC.
pub struct SimState {
    pub q: Vec<QueueLen>,
    pub clock: f64,
    pub levels: LevelIndex,
    pub busy_rates: RateFenwick,
    /// Running Σ μₙ·I(qₙ ≥ 1); rebuilt exactly every REBUILD_INTERVAL events.
    pub busy_rate: f64,
    pub busy_count: usize,
    pub total_jobs: u64,
    /// Arrival timestamps of jobs queued behind the one in service, FIFO.
    pub pending: Vec<VecDeque<f64>>,
}

/// Events between exact rebuilds of the incremental rate sums.
pub const REBUILD_INTERVAL: u64 = 1 << 20;

impl SimState {
    pub fn new(profile: &ServiceProfile, b: QueueLen, initial: &[QueueLen]) -> Self {
        let n = profile.n();
        debug_assert_eq!(initial.len(), n);
        let levels = LevelIndex::new(n, b, initial);
        let mut busy_rates = RateFenwick::new(n);
        let mut busy_rate = 0.0;
        let mut busy_count = 0;
        let mut total_jobs = 0u64;
        let mut pending = Vec::with_capacity(n);
        for (i, &x) in initial.iter().enumerate() {
            if x >= 1 {
                busy_rates.add(i, profile.rate(i));
                busy_rate += profile.rate(i);
                busy_count += 1;
            }
            total_jobs += x as u64;
            let mut fifo = VecDeque::new();
            for _ in 1..x.max(1) {
                fifo.push_back(0.0);
            }
            pending.push(fifo);
        }
        SimState {
            q: initial.to_vec(),
            clock: 0.0,
            levels,
            busy_rates,
            busy_rate,
            busy_count,
            total_jobs,
            pending,
        }
    }

    /// Recomputes the incremental sums exactly, bounding float drift.
    pub fn rebuild_rates(&mut self, profile: &ServiceProfile) {
        let n = profile.n();
        self.busy_rates = RateFenwick::new(n);
        self.busy_rate = 0.0;
        for i in 0..n {
            if self.q[i] >= 1 {
                self.busy_rates.add(i, profile.rate(i));
                self.busy_rate += profile.rate(i);
            }
        }
    }

    pub fn qbar(&self, n: usize) -> f64 {
        self.total_jobs as f64 / n as f64
    }

    /// Waiting jobs Σ(qₙ-1)·I(qₙ≥2) = total jobs minus busy servers.
    pub fn q_wait(&self) -> f64 {
        (self.total_jobs - self.busy_count as u64) as f64
    }
}
