//! Retransmission layer for the stream role on the virtual backend.
//!
//! Sans-IO: the caller moves [`Segment`]s and [`Ack`]s across emulated links
//! and arms a timer for every `(seg, attempt)` the sender hands out. The
//! receiver acknowledges cumulatively plus the segment that triggered the
//! ack, and releases frames strictly in order.

use std::collections::BTreeMap;

use super::TransportError;

/// Modelled IP + TCP header bytes carried by every data segment.
pub const SEGMENT_HEADER_LEN: usize = 40;
pub const ACK_LEN: usize = 40;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub seg: u64,
    pub attempt: u32,
    pub frame: Vec<u8>,
}

impl Segment {
    pub fn wire_len(&self) -> usize {
        SEGMENT_HEADER_LEN + self.frame.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ack {
    /// Next in-order segment the receiver expects.
    pub cumulative: u64,
    /// Segment that triggered this ack.
    pub sack: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TimeoutAction {
    /// Already acknowledged or superseded by a later attempt.
    Idle,
    Retransmit(Segment),
    /// Retry budget exhausted; the connection is dead.
    Abort,
}

#[derive(Debug, Clone)]
pub struct ArqSender {
    rto_us: u64,
    max_retries: u32,
    next_seg: u64,
    unacked: BTreeMap<u64, (Vec<u8>, u32)>,
    failed: bool,
    retransmissions: u64,
}

impl ArqSender {
    pub fn new(rto_us: u64, max_retries: u32) -> Self {
        assert!(rto_us > 0, "retransmission timeout must be positive");
        Self {
            rto_us,
            max_retries,
            next_seg: 0,
            unacked: BTreeMap::new(),
            failed: false,
            retransmissions: 0,
        }
    }

    /// Timer length for the given attempt (doubling, capped at 16x).
    pub fn timeout_us(&self, attempt: u32) -> u64 {
        self.rto_us << attempt.min(4)
    }

    pub fn push(&mut self, frame: Vec<u8>) -> Result<Segment, TransportError> {
        if self.failed {
            return Err(TransportError::ConnectionClosed);
        }
        let seg = self.next_seg;
        self.next_seg += 1;
        self.unacked.insert(seg, (frame.clone(), 0));
        Ok(Segment {
            seg,
            attempt: 0,
            frame,
        })
    }

    pub fn on_ack(&mut self, ack: Ack) {
        let keep = self.unacked.split_off(&ack.cumulative);
        self.unacked = keep;
        self.unacked.remove(&ack.sack);
    }

    pub fn on_timeout(&mut self, seg: u64, attempt: u32) -> TimeoutAction {
        if self.failed {
            return TimeoutAction::Idle;
        }
        let Some((frame, current)) = self.unacked.get_mut(&seg) else {
            return TimeoutAction::Idle;
        };
        if *current != attempt {
            return TimeoutAction::Idle;
        }
        if attempt >= self.max_retries {
            self.failed = true;
            self.unacked.clear();
            return TimeoutAction::Abort;
        }
        *current += 1;
        self.retransmissions += 1;
        TimeoutAction::Retransmit(Segment {
            seg,
            attempt: *current,
            frame: frame.clone(),
        })
    }

    pub fn in_flight(&self) -> usize {
        self.unacked.len()
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn retransmissions(&self) -> u64 {
        self.retransmissions
    }
}

#[derive(Debug, Clone, Default)]
pub struct ArqReceiver {
    expected: u64,
    buffered: BTreeMap<u64, Vec<u8>>,
    duplicates: u64,
}

impl ArqReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accepts a segment; returns the ack to send back and the frames now
    /// deliverable in order.
    pub fn on_segment(&mut self, seg: Segment) -> (Ack, Vec<Vec<u8>>) {
        let sack = seg.seg;
        if seg.seg < self.expected || self.buffered.contains_key(&seg.seg) {
            self.duplicates += 1;
        } else {
            self.buffered.insert(seg.seg, seg.frame);
        }
        let mut ready = Vec::new();
        while let Some(frame) = self.buffered.remove(&self.expected) {
            ready.push(frame);
            self.expected += 1;
        }
        (
            Ack {
                cumulative: self.expected,
                sack,
            },
            ready,
        )
    }

    pub fn delivered(&self) -> u64 {
        self.expected
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::collections::VecDeque;

    /// Lossy, reordering channel driven by hand: each step delivers or
    /// drops a random in-flight item; timers fire once the channel is empty.
    #[test]
    fn delivers_everything_in_order_under_loss() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut tx = ArqSender::new(100, 30);
        let mut rx = ArqReceiver::new();
        let mut data: Vec<Segment> = Vec::new();
        let mut acks: Vec<Ack> = Vec::new();
        let mut timers: VecDeque<(u64, u32)> = VecDeque::new();
        for i in 0..500u32 {
            let s = tx.push(i.to_be_bytes().to_vec()).unwrap();
            timers.push_back((s.seg, s.attempt));
            data.push(s);
        }
        let mut out = Vec::new();
        let mut steps = 0;
        while tx.in_flight() > 0 {
            steps += 1;
            assert!(steps < 1_000_000);
            let pick = rng.random_range(0..3);
            if pick == 0 && !data.is_empty() {
                let s = data.swap_remove(rng.random_range(0..data.len()));
                if rng.random_bool(0.8) {
                    let (ack, ready) = rx.on_segment(s);
                    out.extend(ready);
                    acks.push(ack);
                }
            } else if pick == 1 && !acks.is_empty() {
                let a = acks.swap_remove(rng.random_range(0..acks.len()));
                if rng.random_bool(0.8) {
                    tx.on_ack(a);
                }
            } else if data.is_empty() && acks.is_empty() {
                let (seg, attempt) = timers.pop_front().expect("timer armed while in flight");
                match tx.on_timeout(seg, attempt) {
                    TimeoutAction::Retransmit(s) => {
                        timers.push_back((s.seg, s.attempt));
                        data.push(s);
                    }
                    TimeoutAction::Idle => {}
                    TimeoutAction::Abort => panic!("aborted"),
                }
            }
        }
        let expect: Vec<Vec<u8>> = (0..500u32).map(|i| i.to_be_bytes().to_vec()).collect();
        assert_eq!(out, expect);
        assert!(tx.retransmissions() > 0);
    }

    #[test]
    fn aborts_after_retry_budget() {
        let mut tx = ArqSender::new(10, 2);
        let s = tx.push(vec![1]).unwrap();
        let TimeoutAction::Retransmit(s1) = tx.on_timeout(s.seg, 0) else {
            panic!()
        };
        let TimeoutAction::Retransmit(s2) = tx.on_timeout(s.seg, s1.attempt) else {
            panic!()
        };
        assert_eq!(tx.on_timeout(s.seg, s2.attempt), TimeoutAction::Abort);
        assert!(tx.failed());
        assert_eq!(tx.push(vec![2]), Err(TransportError::ConnectionClosed));
    }

    #[test]
    fn stale_timer_ignored() {
        let mut tx = ArqSender::new(10, 5);
        let s = tx.push(vec![1]).unwrap();
        tx.on_ack(Ack {
            cumulative: 1,
            sack: 0,
        });
        assert_eq!(tx.on_timeout(s.seg, 0), TimeoutAction::Idle);
        assert_eq!(tx.timeout_us(0), 10);
        assert_eq!(tx.timeout_us(9), 160);
    }

    #[test]
    fn receiver_buffers_gaps() {
        let mut rx = ArqReceiver::new();
        let seg = |n: u64| Segment {
            seg: n,
            attempt: 0,
            frame: vec![n as u8],
        };
        let (a, r) = rx.on_segment(seg(1));
        assert_eq!((a.cumulative, r.len()), (0, 0));
        let (a, r) = rx.on_segment(seg(0));
        assert_eq!((a.cumulative, r), (2, vec![vec![0], vec![1]]));
        rx.on_segment(seg(1));
        assert_eq!(rx.duplicates(), 1);
    }
}
