//! Deterministic virtual network: event clock, token-bucket shaper and
//! SINR-driven impaired links.
//!
//! Links draw from `ChaCha8Rng` streams seeded through [`crate::seed`], one
//! stream per (phase, node, direction), so every trace is a pure function of
//! the campaign seed.

mod clock;
mod link;
mod net;
mod shaper;

pub use clock::VirtualClock;
pub use link::{
    calibrate_theta, loss_probability, Direction, Link, LinkProfile, LinkStats, LossCause,
    Transmission, DEFAULT_BUCKET_BYTES, DEFAULT_QUEUE_FRAMES,
};
pub use net::{write_trace_csv, LinkId, TraceEvent, TraceRecord, VirtualNet};
pub use shaper::{Shaped, TokenBucket};

#[derive(Debug, thiserror::Error)]
pub enum NetemError {
    #[error("event queue is empty")]
    EmptyQueue,
    #[error("invalid link profile: {0}")]
    InvalidProfile(String),
    #[error("trace output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("trace output failed: {0}")]
    Io(#[from] std::io::Error),
}

impl PartialEq for NetemError {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (NetemError::EmptyQueue, NetemError::EmptyQueue) => true,
            (NetemError::InvalidProfile(a), NetemError::InvalidProfile(b)) => a == b,
            _ => false,
        }
    }
}
