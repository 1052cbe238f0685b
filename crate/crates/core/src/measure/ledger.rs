use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MeasureError;
use crate::iec::{MessageClass, TelemetryEnvelope};
use crate::transport::TransportRole;

pub const DEFAULT_WINDOW: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowId {
    pub source_id: u16,
    pub class: MessageClass,
    pub transport: TransportRole,
}

impl FlowId {
    pub fn new(source_id: u16, class: MessageClass, transport: TransportRole) -> Self {
        Self {
            source_id,
            class,
            transport,
        }
    }
}

impl std::fmt::Display for FlowId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "CEI{:02}-{}-{}",
            self.source_id,
            self.class,
            self.transport.as_str()
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RxClass {
    FirstDelivery,
    Duplicate,
    Reordered,
    IntegrityFailure,
}

/// Exact received-set over an unbounded sequence space: a ring bitmap for
/// the newest `window` sequence numbers plus the missing ranges that have
/// slid out of it.
#[derive(Debug, Clone)]
struct SeqSet {
    base: u64,
    window: u64,
    words: Vec<u64>,
    /// start -> end (exclusive) of never-received ranges below `base`
    missing: BTreeMap<u64, u64>,
}

impl SeqSet {
    fn new(window: u64) -> Self {
        assert!(window.is_power_of_two() && window >= 64);
        Self {
            base: 0,
            window,
            words: vec![0; (window / 64) as usize],
            missing: BTreeMap::new(),
        }
    }

    fn slot(&self, seq: u64) -> (usize, u64) {
        let i = seq & (self.window - 1);
        ((i / 64) as usize, 1 << (i % 64))
    }

    fn add_missing(&mut self, start: u64, end: u64) {
        if start >= end {
            return;
        }
        if let Some((_, e)) = self.missing.range_mut(..=start).next_back() {
            if *e == start {
                *e = end;
                return;
            }
        }
        self.missing.insert(start, end);
    }

    fn take_missing(&mut self, seq: u64) -> bool {
        let Some((&start, &end)) = self.missing.range(..=seq).next_back() else {
            return false;
        };
        if seq >= end {
            return false;
        }
        self.missing.remove(&start);
        if start < seq {
            self.missing.insert(start, seq);
        }
        if seq + 1 < end {
            self.missing.insert(seq + 1, end);
        }
        true
    }

    fn slide_to(&mut self, new_base: u64) {
        let keep_end = new_base.min(self.base + self.window);
        let mut run_start = None;
        for seq in self.base..keep_end {
            let (w, bit) = self.slot(seq);
            let present = self.words[w] & bit != 0;
            self.words[w] &= !bit;
            match (present, run_start) {
                (false, None) => run_start = Some(seq),
                (true, Some(s)) => {
                    self.add_missing(s, seq);
                    run_start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = run_start {
            self.add_missing(s, keep_end);
        }
        self.add_missing(keep_end, new_base);
        self.base = new_base;
    }

    /// Marks `seq` received; `false` when it already was.
    fn insert(&mut self, seq: u64) -> bool {
        if seq < self.base {
            return self.take_missing(seq);
        }
        if seq >= self.base + self.window {
            self.slide_to(seq + 1 - self.window);
        }
        let (w, bit) = self.slot(seq);
        let fresh = self.words[w] & bit == 0;
        self.words[w] |= bit;
        fresh
    }
}

/// Per-flow transmit/receive accounting.
#[derive(Debug, Clone)]
pub struct FlowLedger {
    flow: FlowId,
    tx_count: u64,
    rx_events: u64,
    first_deliveries: u64,
    reorder_count: u64,
    duplicate_count: u64,
    integrity_failures: u64,
    highest_seq_seen: Option<u64>,
    seen: SeqSet,
    /// errors the flow hit while running (connection loss etc.)
    errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub flow: FlowId,
    pub tx_count: u64,
    pub rx_unique_count: u64,
    pub first_deliveries: u64,
    pub reorder_count: u64,
    pub duplicate_count: u64,
    pub integrity_failures: u64,
    pub highest_seq_seen: Option<u64>,
    pub loss_rate: Option<f64>,
    /// Loss excluding corrupted-but-delivered frames.
    pub loss_rate_excluding_corrupt: Option<f64>,
    pub errors: Vec<String>,
}

impl FlowLedger {
    pub fn new(flow: FlowId) -> Self {
        Self::with_window(flow, DEFAULT_WINDOW)
    }

    /// `window` must be a power of two, at least 64.
    pub fn with_window(flow: FlowId, window: u64) -> Self {
        Self {
            flow,
            tx_count: 0,
            rx_events: 0,
            first_deliveries: 0,
            reorder_count: 0,
            duplicate_count: 0,
            integrity_failures: 0,
            highest_seq_seen: None,
            seen: SeqSet::new(window),
            errors: Vec::new(),
        }
    }

    pub fn flow(&self) -> FlowId {
        self.flow
    }

    pub fn record_tx(&mut self) {
        self.tx_count += 1;
    }

    pub fn set_tx_count(&mut self, n: u64) {
        self.tx_count = n;
    }

    pub fn record_error(&mut self, err: impl Into<String>) {
        self.errors.push(err.into());
    }

    pub fn record_rx(&mut self, envelope: &TelemetryEnvelope) -> Result<RxClass, MeasureError> {
        if envelope.source_id != self.flow.source_id || envelope.message_class != self.flow.class {
            return Err(MeasureError::WrongFlow {
                ledger: self.flow,
                source_id: envelope.source_id,
                class: envelope.message_class,
            });
        }
        Ok(self.classify(envelope.seq, envelope.verify()))
    }

    /// Classifies a receive event given its sequence number and whether its
    /// payload passed the integrity check.
    pub fn classify(&mut self, seq: u64, intact: bool) -> RxClass {
        self.rx_events += 1;
        if !intact {
            self.integrity_failures += 1;
            return RxClass::IntegrityFailure;
        }
        if !self.seen.insert(seq) {
            self.duplicate_count += 1;
            return RxClass::Duplicate;
        }
        let class = match self.highest_seq_seen {
            Some(h) if seq < h => {
                self.reorder_count += 1;
                RxClass::Reordered
            }
            _ => {
                self.first_deliveries += 1;
                RxClass::FirstDelivery
            }
        };
        self.highest_seq_seen = Some(self.highest_seq_seen.map_or(seq, |h| h.max(seq)));
        class
    }

    pub fn tx_count(&self) -> u64 {
        self.tx_count
    }

    pub fn rx_unique_count(&self) -> u64 {
        self.first_deliveries + self.reorder_count
    }

    pub fn rx_events(&self) -> u64 {
        self.rx_events
    }

    pub fn first_deliveries(&self) -> u64 {
        self.first_deliveries
    }

    pub fn duplicate_count(&self) -> u64 {
        self.duplicate_count
    }

    pub fn reorder_count(&self) -> u64 {
        self.reorder_count
    }

    pub fn integrity_failures(&self) -> u64 {
        self.integrity_failures
    }

    pub fn highest_seq_seen(&self) -> Option<u64> {
        self.highest_seq_seen
    }

    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    /// Fraction of transmitted messages never delivered intact.
    pub fn loss_rate(&self) -> Result<f64, MeasureError> {
        if self.tx_count == 0 {
            return Err(MeasureError::EmptyFlow(self.flow));
        }
        let lost = self.tx_count.saturating_sub(self.rx_unique_count());
        Ok(lost as f64 / self.tx_count as f64)
    }

    /// Loss rate counting corrupted arrivals as delivered.
    pub fn loss_rate_excluding_corrupt(&self) -> Result<f64, MeasureError> {
        if self.tx_count == 0 {
            return Err(MeasureError::EmptyFlow(self.flow));
        }
        let lost = self
            .tx_count
            .saturating_sub(self.rx_unique_count() + self.integrity_failures);
        Ok(lost as f64 / self.tx_count as f64)
    }

    pub fn summary(&self) -> LedgerSummary {
        LedgerSummary {
            flow: self.flow,
            tx_count: self.tx_count,
            rx_unique_count: self.rx_unique_count(),
            first_deliveries: self.first_deliveries,
            reorder_count: self.reorder_count,
            duplicate_count: self.duplicate_count,
            integrity_failures: self.integrity_failures,
            highest_seq_seen: self.highest_seq_seen,
            loss_rate: self.loss_rate().ok(),
            loss_rate_excluding_corrupt: self.loss_rate_excluding_corrupt().ok(),
            errors: self.errors.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::checksum;
    use rand::{Rng, SeedableRng};
    use std::collections::HashSet;

    fn flow() -> FlowId {
        FlowId::new(1, MessageClass::D1, TransportRole::Datagram)
    }

    fn env(seq: u64) -> TelemetryEnvelope {
        TelemetryEnvelope::new(1, MessageClass::D1, seq, seq * 1000, seq.to_be_bytes().to_vec())
    }

    #[test]
    fn first_then_duplicate() {
        let mut l = FlowLedger::new(flow());
        assert_eq!(l.record_rx(&env(4)).unwrap(), RxClass::FirstDelivery);
        assert_eq!(l.record_rx(&env(5)).unwrap(), RxClass::FirstDelivery);
        assert_eq!(l.record_rx(&env(5)).unwrap(), RxClass::Duplicate);
        assert_eq!(l.record_rx(&env(3)).unwrap(), RxClass::Reordered);
        assert_eq!(l.record_rx(&env(3)).unwrap(), RxClass::Duplicate);
    }

    #[test]
    fn bit_flip_is_integrity_failure() {
        let mut l = FlowLedger::new(flow());
        l.set_tx_count(1);
        let mut e = env(0);
        e.payload[2] ^= 0x04;
        assert_ne!(checksum(&e.payload), e.integrity);
        assert_eq!(l.record_rx(&e).unwrap(), RxClass::IntegrityFailure);
        assert_eq!(l.rx_unique_count(), 0);
        assert_eq!(l.loss_rate().unwrap(), 1.0);
        assert_eq!(l.loss_rate_excluding_corrupt().unwrap(), 0.0);
    }

    #[test]
    fn wrong_flow_rejected() {
        let mut l = FlowLedger::new(flow());
        let other = TelemetryEnvelope::new(2, MessageClass::D1, 0, 0, vec![]);
        assert!(matches!(l.record_rx(&other), Err(MeasureError::WrongFlow { .. })));
    }

    #[test]
    fn loss_rate_definitions() {
        let mut l = FlowLedger::new(flow());
        assert!(matches!(l.loss_rate(), Err(MeasureError::EmptyFlow(_))));
        l.set_tx_count(10_000);
        for seq in 0..10_000 {
            l.classify(seq, true);
        }
        assert_eq!(l.loss_rate().unwrap(), 0.0);

        // set-difference oracle: 22 of 10^4 missing
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut missing = HashSet::new();
        while missing.len() < 22 {
            missing.insert(rng.random_range(0..10_000u64));
        }
        let mut l = FlowLedger::new(flow());
        l.set_tx_count(10_000);
        let received: HashSet<u64> = (0..10_000).filter(|s| !missing.contains(s)).collect();
        for &s in &received {
            l.classify(s, true);
        }
        let oracle = (0..10_000u64).filter(|s| !received.contains(s)).count() as f64 / 1e4;
        assert_eq!(l.loss_rate().unwrap(), oracle);
        assert!((l.loss_rate().unwrap() - 0.0022).abs() < 1e-12);
    }

    #[test]
    fn duplicates_do_not_change_loss() {
        let mut l = FlowLedger::new(flow());
        l.set_tx_count(10);
        for s in 0..8 {
            l.classify(s, true);
        }
        for s in [1, 2, 3] {
            assert_eq!(l.classify(s, true), RxClass::Duplicate);
        }
        assert_eq!(l.loss_rate().unwrap(), 0.2);
    }

    #[test]
    fn exact_beyond_the_window() {
        let mut l = FlowLedger::with_window(flow(), 64);
        for s in (0..1000).filter(|s| s % 7 != 0) {
            l.classify(s, true);
        }
        // far past the window
        l.classify(1_000_000, true);
        assert_eq!(l.classify(7, true), RxClass::Reordered);
        assert_eq!(l.classify(7, true), RxClass::Duplicate);
        assert_eq!(l.classify(8, true), RxClass::Duplicate);
        assert_eq!(l.classify(500_000, true), RxClass::Reordered);
        assert_eq!(l.classify(999_999, true), RxClass::Reordered);
        assert_eq!(l.classify(1_000_000, true), RxClass::Duplicate);
    }
}
