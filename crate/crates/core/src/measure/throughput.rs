use serde::{Deserialize, Serialize};

use super::MeasureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub start_us: u64,
    pub bytes: u64,
    pub frames: u64,
}

/// Received bytes bucketed into fixed windows starting at `origin_us`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThroughputSeries {
    window_us: u64,
    origin_us: u64,
    end_us: Option<u64>,
    buckets: Vec<Bucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputSummary {
    pub window_us: u64,
    pub per_window_bps: Vec<f64>,
    pub min_bps: f64,
    pub avg_bps: f64,
    pub max_bps: f64,
}

impl ThroughputSeries {
    pub fn new(origin_us: u64, window_us: u64) -> Self {
        assert!(window_us > 0, "window must be positive");
        Self {
            window_us,
            origin_us,
            end_us: None,
            buckets: Vec::new(),
        }
    }

    pub fn window_us(&self) -> u64 {
        self.window_us
    }

    pub fn origin_us(&self) -> u64 {
        self.origin_us
    }

    fn ensure(&mut self, idx: usize) {
        while self.buckets.len() <= idx {
            let start_us = self.origin_us + self.buckets.len() as u64 * self.window_us;
            self.buckets.push(Bucket {
                start_us,
                bytes: 0,
                frames: 0,
            });
        }
    }

    /// Counts a frame received at `at_us`; frames before the origin are ignored.
    pub fn record(&mut self, at_us: u64, bytes: u64) {
        if at_us < self.origin_us {
            return;
        }
        let idx = ((at_us - self.origin_us) / self.window_us) as usize;
        self.ensure(idx);
        let b = &mut self.buckets[idx];
        b.bytes += bytes;
        b.frames += 1;
    }

    /// Ends the observation; windows finishing after `end_us` are partial.
    pub fn close(&mut self, end_us: u64) {
        self.end_us = Some(end_us);
        let complete = self.complete_windows();
        if complete > 0 {
            self.ensure(complete - 1);
        }
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    /// Windows fully inside the observation. Without an explicit end the
    /// last bucket counts as partial.
    pub fn complete_windows(&self) -> usize {
        match self.end_us {
            Some(end) => (end.saturating_sub(self.origin_us) / self.window_us) as usize,
            None => self.buckets.len().saturating_sub(1),
        }
    }

    pub fn summary(&self) -> Result<ThroughputSummary, MeasureError> {
        let n = self.complete_windows();
        if n == 0 {
            return Err(MeasureError::NoCompleteWindow);
        }
        let secs = self.window_us as f64 / 1e6;
        let per_window_bps: Vec<f64> = (0..n)
            .map(|i| {
                let bytes = self.buckets.get(i).map_or(0, |b| b.bytes);
                8.0 * bytes as f64 / secs
            })
            .collect();
        let min_bps = per_window_bps.iter().copied().fold(f64::INFINITY, f64::min);
        let max_bps = per_window_bps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let avg_bps = per_window_bps.iter().sum::<f64>() / n as f64;
        Ok(ThroughputSummary {
            window_us: self.window_us,
            per_window_bps,
            min_bps,
            avg_bps,
            max_bps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn one_megabyte_per_second_is_eight_mbps() {
        let mut s = ThroughputSeries::new(0, 1_000_000);
        for i in 0..1000 {
            s.record(i * 1000, 1000);
        }
        s.close(1_000_000);
        let sum = s.summary().unwrap();
        assert_eq!(sum.per_window_bps, vec![8e6]);
        assert_eq!(sum.avg_bps, 8e6);
    }

    #[test]
    fn trailing_partial_window_excluded() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut s = ThroughputSeries::new(500, 100_000);
        let mut raw = Vec::new();
        for _ in 0..5000 {
            let t = 500 + rng.random_range(0..1_050_000u64);
            let b = rng.random_range(1..1500u64);
            raw.push((t, b));
            s.record(t, b);
        }
        let sum = s.summary().unwrap();
        // brute force over the 10 complete windows
        assert_eq!(sum.per_window_bps.len(), 10);
        let mut expect = Vec::new();
        for w in 0..10u64 {
            let lo = 500 + w * 100_000;
            let bytes: u64 = raw
                .iter()
                .filter(|(t, _)| *t >= lo && *t < lo + 100_000)
                .map(|(_, b)| b)
                .sum();
            expect.push(bytes as f64 * 8.0 / 0.1);
        }
        assert_eq!(sum.per_window_bps, expect);
        let avg = expect.iter().sum::<f64>() / 10.0;
        assert!((sum.avg_bps - avg).abs() < 1e-6);
        assert_eq!(sum.min_bps, expect.iter().copied().fold(f64::MAX, f64::min));
        assert_eq!(sum.max_bps, expect.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn bucket_starts_step_by_window() {
        let mut s = ThroughputSeries::new(0, 10);
        s.record(95, 1);
        s.close(100);
        let starts: Vec<_> = s.buckets().iter().map(|b| b.start_us).collect();
        assert_eq!(starts, (0..10).map(|i| i * 10).collect::<Vec<_>>());
        assert_eq!(s.summary().unwrap().per_window_bps.len(), 10);
    }

    #[test]
    fn needs_a_complete_window() {
        let mut s = ThroughputSeries::new(0, 1_000_000);
        s.record(10, 10);
        assert_eq!(s.summary(), Err(MeasureError::NoCompleteWindow));
        s.close(999_999);
        assert_eq!(s.summary(), Err(MeasureError::NoCompleteWindow));
    }
}
