use std::collections::VecDeque;

/// Token units per bit; tokens accrue as `rate_bps * elapsed_us`.
const SCALE: i128 = 1_000_000;

/// FIFO token-bucket shaper with a bounded queue, in integer virtual time.
///
/// A frame leaves once the bucket holds `min(size, depth)` bits; larger
/// frames overdraw the bucket so the long-run rate stays exact. The bucket
/// starts full.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate_bps: u64,
    depth_bits: u64,
    queue_frames: usize,
    tokens: i128,
    updated_us: u64,
    last_departure_us: u64,
    in_queue: VecDeque<u64>,
}

/// Outcome of offering a frame to the shaper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shaped {
    Departs(u64),
    QueueFull,
}

impl TokenBucket {
    pub fn new(rate_bps: u64, depth_bytes: u64, queue_frames: usize) -> Self {
        assert!(rate_bps > 0, "shaper rate must be positive");
        assert!(queue_frames > 0, "shaper queue must hold a frame");
        let depth_bits = depth_bytes.max(1) * 8;
        Self {
            rate_bps,
            depth_bits,
            queue_frames,
            tokens: i128::from(depth_bits) * SCALE,
            updated_us: 0,
            last_departure_us: 0,
            in_queue: VecDeque::new(),
        }
    }

    pub fn rate_bps(&self) -> u64 {
        self.rate_bps
    }

    pub fn depth_bytes(&self) -> u64 {
        self.depth_bits / 8
    }

    /// Changes the rate for frames offered from now on.
    pub fn set_rate(&mut self, rate_bps: u64) {
        assert!(rate_bps > 0, "shaper rate must be positive");
        self.rate_bps = rate_bps;
    }

    /// Departure time of the most recently accepted frame.
    pub fn busy_until_us(&self) -> u64 {
        self.last_departure_us
    }

    /// Frames accepted but not yet departed at `at_us`.
    pub fn backlog(&mut self, at_us: u64) -> usize {
        while self.in_queue.front().is_some_and(|&d| d <= at_us) {
            self.in_queue.pop_front();
        }
        self.in_queue.len()
    }

    fn refill(&mut self, to_us: u64) {
        if to_us > self.updated_us {
            let gained = i128::from(self.rate_bps) * i128::from(to_us - self.updated_us);
            let cap = i128::from(self.depth_bits) * SCALE;
            self.tokens = (self.tokens + gained).min(cap);
            self.updated_us = to_us;
        }
    }

    /// Offers a frame at `at_us`. Arrival times must be nondecreasing.
    pub fn offer(&mut self, size_bytes: usize, at_us: u64) -> Shaped {
        if self.backlog(at_us) >= self.queue_frames {
            return Shaped::QueueFull;
        }
        let bits = size_bytes as i128 * 8;
        let start = at_us.max(self.last_departure_us);
        self.refill(start);
        let need = bits.min(i128::from(self.depth_bits)) * SCALE;
        let departure = if self.tokens >= need {
            start
        } else {
            let rate = i128::from(self.rate_bps);
            let wait = (need - self.tokens + rate - 1) / rate;
            let t = start + wait as u64;
            self.refill(t);
            t
        };
        self.tokens -= bits * SCALE;
        self.last_departure_us = departure;
        self.in_queue.push_back(departure);
        Shaped::Departs(departure)
    }
}
