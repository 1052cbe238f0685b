use serde::{Deserialize, Serialize};

use super::MeasureError;

/// Echo probe outcomes.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RttStats {
    samples: Vec<(u64, u64)>,
    timeouts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RttSummary {
    pub probes: u64,
    pub answered: u64,
    pub min_us: u64,
    pub avg_us: f64,
    pub p50_us: u64,
    pub p95_us: u64,
    pub max_us: u64,
    pub loss_fraction: f64,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// `ceil(pct/100 * n)`, ranks counted from 1.
pub fn nearest_rank(sorted: &[u64], pct: u32) -> u64 {
    assert!(!sorted.is_empty() && pct <= 100);
    let n = sorted.len() as u64;
    let rank = (u64::from(pct) * n).div_ceil(100).max(1);
    sorted[(rank - 1) as usize]
}

impl RttStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_answer(&mut self, probe_seq: u64, rtt_us: u64) {
        self.samples.push((probe_seq, rtt_us));
    }

    pub fn record_timeout(&mut self) {
        self.timeouts += 1;
    }

    pub fn samples(&self) -> &[(u64, u64)] {
        &self.samples
    }

    pub fn timeouts(&self) -> u64 {
        self.timeouts
    }

    pub fn probes(&self) -> u64 {
        self.samples.len() as u64 + self.timeouts
    }

    pub fn loss_fraction(&self) -> f64 {
        if self.probes() == 0 {
            0.0
        } else {
            self.timeouts as f64 / self.probes() as f64
        }
    }

    pub fn summary(&self) -> Result<RttSummary, MeasureError> {
        if self.samples.is_empty() {
            return Err(MeasureError::AllProbesLost {
                probes: self.probes(),
                loss_fraction: self.loss_fraction(),
            });
        }
        let mut sorted: Vec<u64> = self.samples.iter().map(|&(_, r)| r).collect();
        sorted.sort_unstable();
        let total: u128 = sorted.iter().map(|&v| u128::from(v)).sum();
        Ok(RttSummary {
            probes: self.probes(),
            answered: sorted.len() as u64,
            min_us: sorted[0],
            avg_us: total as f64 / sorted.len() as f64,
            p50_us: nearest_rank(&sorted, 50),
            p95_us: nearest_rank(&sorted, 95),
            max_us: sorted[sorted.len() - 1],
            loss_fraction: self.loss_fraction(),
        })
    }
}
