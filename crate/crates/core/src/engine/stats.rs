//! Batch-means accumulators. Each statistic keeps a pooled point estimate
//! plus streaming moments of its per-batch means; merging adds fields, so
//! merged estimates are the event-weighted pooling of the inputs and the
//! merge is commutative in IEEE arithmetic.

use crate::metrics::Estimate;

/// Streaming first and second moments of batch means.
#[derive(Clone, Copy, Debug, Default)]
pub struct BatchMoments {
    count: u64,
    sum: f64,
    sum_sq: f64,
}

impl BatchMoments {
    pub fn push(&mut self, mean: f64) {
        self.count += 1;
        self.sum += mean;
        self.sum_sq += mean * mean;
    }

    pub fn merge(&mut self, other: &BatchMoments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Standard error of the grand mean over batches.
    pub fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

/// Time-weighted statistic: ∫value·dt pooled, batch means over batch spans.
#[derive(Clone, Copy, Debug, Default)]
pub struct TimeWeighted {
    integral: f64,
    span: f64,
    batch: BatchMoments,
    cur_integral: f64,
    cur_span: f64,
}

impl TimeWeighted {
    pub fn add(&mut self, value: f64, dt: f64) {
        self.cur_integral += value * dt;
        self.cur_span += dt;
    }

    pub fn close_batch(&mut self) {
        if self.cur_span > 0.0 {
            self.batch.push(self.cur_integral / self.cur_span);
            self.integral += self.cur_integral;
            self.span += self.cur_span;
        }
        self.cur_integral = 0.0;
        self.cur_span = 0.0;
    }

    pub fn merge(&mut self, other: &TimeWeighted) {
        debug_assert_eq!(other.cur_span, 0.0, "merge requires closed batches");
        self.integral += other.integral;
        self.span += other.span;
        self.batch.merge(&other.batch);
    }

    pub fn estimate(&self) -> Estimate {
        let value = if self.span > 0.0 { self.integral / self.span } else { f64::NAN };
        Estimate { value, stderr: self.batch.stderr() }
    }
}

/// Ratio of counted events (e.g. waiting arrivals per arrival).
#[derive(Clone, Copy, Debug, Default)]
pub struct CountRatio {
    hits: u64,
    total: u64,
    batch: BatchMoments,
    cur_hits: u64,
    cur_total: u64,
}

impl CountRatio {
    pub fn record(&mut self, hit: bool) {
        self.cur_total += 1;
        self.cur_hits += hit as u64;
    }

    pub fn close_batch(&mut self) {
        if self.cur_total > 0 {
            self.batch.push(self.cur_hits as f64 / self.cur_total as f64);
            self.hits += self.cur_hits;
            self.total += self.cur_total;
        }
        self.cur_hits = 0;
        self.cur_total = 0;
    }

    pub fn merge(&mut self, other: &CountRatio) {
        debug_assert_eq!(other.cur_total, 0, "merge requires closed batches");
        self.hits += other.hits;
        self.total += other.total;
        self.batch.merge(&other.batch);
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn estimate(&self) -> Estimate {
        let value = if self.total > 0 {
            self.hits as f64 / self.total as f64
        } else {
            f64::NAN
        };
        Estimate { value, stderr: self.batch.stderr() }
    }
}

/// Mean of recorded samples (e.g. per-job waiting times).
#[derive(Clone, Copy, Debug, Default)]
pub struct SampleMean {
    sum: f64,
    count: u64,
    batch: BatchMoments,
    cur_sum: f64,
    cur_count: u64,
}

impl SampleMean {
    pub fn record(&mut self, x: f64) {
        self.cur_sum += x;
        self.cur_count += 1;
    }

    pub fn close_batch(&mut self) {
        if self.cur_count > 0 {
            self.batch.push(self.cur_sum / self.cur_count as f64);
            self.sum += self.cur_sum;
            self.count += self.cur_count;
        }
        self.cur_sum = 0.0;
        self.cur_count = 0;
    }

    pub fn merge(&mut self, other: &SampleMean) {
        debug_assert_eq!(other.cur_count, 0, "merge requires closed batches");
        self.sum += other.sum;
        self.count += other.count;
        self.batch.merge(&other.batch);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn estimate(&self) -> Estimate {
        let value = if self.count > 0 { self.sum / self.count as f64 } else { f64::NAN };
        Estimate { value, stderr: self.batch.stderr() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn time_weighted_pools_batches() {
        let mut t = TimeWeighted::default();
        t.add(1.0, 2.0);
        t.close_batch();
        t.add(3.0, 2.0);
        t.close_batch();
        let e = t.estimate();
        assert_eq!(e.value, 2.0);
        // Batch means 1 and 3: sample sd = √2, stderr = √2/√2 = 1.
        assert!((e.stderr - 1.0).abs() < 1e-12);
    }

    #[test]
    fn merge_is_commutative_and_pooling() {
        let mut a = CountRatio::default();
        for i in 0..100 {
            a.record(i % 4 == 0);
        }
        a.close_batch();
        let mut b = CountRatio::default();
        for i in 0..300 {
            b.record(i % 2 == 0);
        }
        b.close_batch();
        let mut ab = a;
        ab.merge(&b);
        let mut ba = b;
        ba.merge(&a);
        assert_eq!(ab.estimate().value, ba.estimate().value);
        assert_eq!(ab.estimate().stderr, ba.estimate().stderr);
        // Event-weighted pooling: (25 + 150)/400.
        assert_eq!(ab.estimate().value, 175.0 / 400.0);
    }

    #[test]
    fn empty_batches_are_skipped() {
        let mut s = SampleMean::default();
        s.close_batch();
        s.record(2.0);
        s.close_batch();
        s.close_batch();
        assert_eq!(s.estimate().value, 2.0);
        assert_eq!(s.estimate().stderr, 0.0);
        assert_eq!(s.count(), 1);
    }
}
