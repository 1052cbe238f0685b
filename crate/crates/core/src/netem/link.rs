use num_traits::Float;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::shaper::{Shaped, TokenBucket};
use super::NetemError;

pub const DEFAULT_QUEUE_FRAMES: usize = 256;
pub const DEFAULT_BUCKET_BYTES: u64 = 1500;

/// Frame loss probability for a link at `sinr_db`:
/// `1 / (1 + exp(k * (sinr - theta)))`.
pub fn loss_probability<F: Float>(sinr_db: F, loss_k: F, loss_theta_db: F) -> F {
    let x = loss_k * (sinr_db - loss_theta_db);
    // exp overflow saturates to +inf, giving p = 0
    let p = F::one() / (F::one() + x.exp());
    p.max(F::zero()).min(F::one())
}

/// Logistic midpoint that yields `target_loss` at `sinr_db`:
/// `theta = sinr - ln(1/p - 1) / k`.
pub fn calibrate_theta<F: Float>(sinr_db: F, loss_k: F, target_loss: F) -> Result<F, NetemError> {
    if !(target_loss > F::zero() && target_loss < F::one()) {
        return Err(NetemError::InvalidProfile(
            "calibration target must lie strictly between 0 and 1".into(),
        ));
    }
    if !(loss_k > F::zero()) {
        return Err(NetemError::InvalidProfile("loss_k must be positive".into()));
    }
    Ok(sinr_db - (F::one() / target_loss - F::one()).ln() / loss_k)
}

/// Impairment model of one CPE to base-station link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    pub sinr_db: f64,
    pub loss_k: f64,
    pub loss_theta_db: f64,
    pub base_delay_ms: f64,
    pub jitter_ms: f64,
    pub rate_bps_up: f64,
    pub rate_bps_down: f64,
    pub reorder_prob: f64,
    pub queue_frames: usize,
    pub bucket_bytes: u64,
}

impl Default for LinkProfile {
    fn default() -> Self {
        Self {
            sinr_db: 20.0,
            loss_k: 1.0,
            loss_theta_db: -20.0,
            base_delay_ms: 10.0,
            jitter_ms: 0.0,
            rate_bps_up: 10e6,
            rate_bps_down: 10e6,
            reorder_prob: 0.0,
            queue_frames: DEFAULT_QUEUE_FRAMES,
            bucket_bytes: DEFAULT_BUCKET_BYTES,
        }
    }
}

impl LinkProfile {
    pub fn loss_probability(&self) -> f64 {
        loss_probability(self.sinr_db, self.loss_k, self.loss_theta_db)
    }

    /// Profile whose loss probability at its own SINR equals `target_loss`.
    pub fn calibrated(mut self, target_loss: f64) -> Result<Self, NetemError> {
        self.loss_theta_db = calibrate_theta(self.sinr_db, self.loss_k, target_loss)?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), NetemError> {
        let bad = |m: &str| Err(NetemError::InvalidProfile(m.to_owned()));
        if !(self.loss_k > 0.0) || !self.loss_k.is_finite() {
            return bad("loss_k must be positive");
        }
        if !self.sinr_db.is_finite() || !self.loss_theta_db.is_finite() {
            return bad("sinr_db and loss_theta_db must be finite");
        }
        if !(self.rate_bps_up >= 1.0 && self.rate_bps_down >= 1.0)
            || !self.rate_bps_up.is_finite()
            || !self.rate_bps_down.is_finite()
        {
            return bad("rates must be at least 1 bit/s");
        }
        if !(self.base_delay_ms >= 0.0 && self.jitter_ms >= 0.0) {
            return bad("delay and jitter must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.reorder_prob) {
            return bad("reorder_prob must lie in [0, 1]");
        }
        if self.jitter_ms > 0.0 && self.jitter_ms >= self.base_delay_ms && self.reorder_prob == 0.0 {
            return bad("jitter must stay below the base delay unless reordering is enabled");
        }
        if self.queue_frames == 0 {
            return bad("queue_frames must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossCause {
    Channel,
    Congestion,
}

impl LossCause {
    pub fn as_str(self) -> &'static str {
        match self {
            LossCause::Channel => "channel",
            LossCause::Congestion => "congestion",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transmission {
    Delivered { at_us: u64 },
    Dropped(LossCause),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkStats {
    pub transmitted: u64,
    pub delivered: u64,
    pub dropped_channel: u64,
    pub dropped_congestion: u64,
    pub bytes_delivered: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
        }
    }
}

/// One direction of an impaired link with its own RNG stream.
///
/// Every frame consumes exactly three uniform draws (loss, jitter,
/// reorder) in that order, whatever its fate, so two links with the same
/// stream see the same draws frame by frame.
#[derive(Debug, Clone)]
pub struct Link {
    loss_p: f64,
    base_delay_us: f64,
    jitter_us: f64,
    reorder_prob: f64,
    shaper: TokenBucket,
    rng: ChaCha8Rng,
    last_delivery_us: u64,
    stats: LinkStats,
}

impl Link {
    pub fn new(profile: &LinkProfile, direction: Direction, rng: ChaCha8Rng) -> Self {
        let rate = match direction {
            Direction::Up => profile.rate_bps_up,
            Direction::Down => profile.rate_bps_down,
        };
        Self {
            loss_p: profile.loss_probability(),
            base_delay_us: profile.base_delay_ms * 1000.0,
            jitter_us: profile.jitter_ms * 1000.0,
            reorder_prob: profile.reorder_prob,
            shaper: TokenBucket::new(rate.round() as u64, profile.bucket_bytes, profile.queue_frames),
            rng,
            last_delivery_us: 0,
            stats: LinkStats::default(),
        }
    }

    pub fn loss_p(&self) -> f64 {
        self.loss_p
    }

    pub fn rate_bps(&self) -> u64 {
        self.shaper.rate_bps()
    }

    pub fn set_rate(&mut self, rate_bps: u64) {
        self.shaper.set_rate(rate_bps);
    }

    pub fn stats(&self) -> LinkStats {
        self.stats
    }

    /// Frames waiting in the shaper at `at_us`.
    pub fn backlog(&mut self, at_us: u64) -> usize {
        self.shaper.backlog(at_us)
    }

    /// When the shaper releases the last frame it accepted.
    pub fn busy_until_us(&self) -> u64 {
        self.shaper.busy_until_us()
    }

    pub fn transmit(&mut self, size_bytes: usize, at_us: u64) -> Transmission {
        let u_loss: f64 = self.rng.random();
        let u_jitter: f64 = self.rng.random();
        let u_reorder: f64 = self.rng.random();
        self.stats.transmitted += 1;
        let departure = match self.shaper.offer(size_bytes, at_us) {
            Shaped::Departs(t) => t,
            Shaped::QueueFull => {
                self.stats.dropped_congestion += 1;
                return Transmission::Dropped(LossCause::Congestion);
            }
        };
        if u_loss < self.loss_p {
            self.stats.dropped_channel += 1;
            return Transmission::Dropped(LossCause::Channel);
        }
        let delay = self.base_delay_us + (2.0 * u_jitter - 1.0) * self.jitter_us;
        let mut at = departure + delay.max(0.0).round() as u64;
        if u_reorder >= self.reorder_prob {
            at = at.max(self.last_delivery_us);
        }
        self.last_delivery_us = self.last_delivery_us.max(at);
        self.stats.delivered += 1;
        self.stats.bytes_delivered += size_bytes as u64;
        Transmission::Delivered { at_us: at }
    }
}
