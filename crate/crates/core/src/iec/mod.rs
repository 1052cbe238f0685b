//! IEC-61850-style message families: Sampled Values, GOOSE, the telemetry
//! envelope used for MMS-style reporting, and the routable wrapper.
//!
//! All frames use a fixed big-endian layout documented in
//! `docs/wire-format.md`. Every codec is a pure function.

mod envelope;
mod goose;
mod routable;
mod sv;

pub use envelope::{MessageClass, TelemetryEnvelope, ENVELOPE_HEADER_LEN, ENVELOPE_MAGIC};
pub use goose::{
    decode_goose, encode_goose, goose_on_change, goose_retransmission_intervals, GooseEntry,
    GooseMessage, GooseValue, RetransmissionSchedule, GOOSE_HEADER_FIXED_LEN, GOOSE_MAGIC,
};
pub use routable::{
    forward_hop, unwrap_routable, wrap_routable, PayloadKind, RoutableHeader, ROUTABLE_HEADER_LEN,
    ROUTABLE_MAGIC,
};
pub use sv::{
    decode_sv, encode_sv, sv_deadline_check, sv_sample_interval, topic_match, Asdu,
    DeadlineStatus, SmpSynch, SppMode, SvMessage, ASDU_BLOCK_LEN, MAX_ASDUS, MEASUREMENT_LABELS,
    SV_DEADLINE_MS, SV_HEADER_LEN, SV_ID_MAX_LEN, SV_MAGIC,
};

/// Wire format version written by every encoder in this module.
pub const WIRE_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IecError {
    #[error("nominal frequency must be positive")]
    ZeroFrequency,
    #[error("samples per period must be positive")]
    ZeroSpp,
    #[error("{0} samples per period is not a 9-2LE value (80 or 256)")]
    UnsupportedSpp(u32),
    #[error("observed delay must not be negative")]
    NegativeDelay,
    #[error("an SV message carries at most 8 ASDUs, got {0}")]
    TooManyAsdus(usize),
    #[error("an SV message needs at least one ASDU")]
    EmptyAsduList,
    #[error("svID is {0} bytes, limit is 32")]
    SvIdTooLong(usize),
    #[error("invalid identifier {0:?}")]
    InvalidIdentifier(String),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u8),
    #[error("frame truncated")]
    TruncatedFrame,
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("GOOSE entry list is empty")]
    EmptyEntries,
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("unknown value type tag {0}")]
    UnknownTypeTag(u8),
    #[error("hop limit exhausted")]
    HopLimitExhausted,
    #[error("payload of {0} bytes does not fit the frame length field")]
    PayloadTooLarge(usize),
}

impl From<crate::wire::Truncated> for IecError {
    fn from(_: crate::wire::Truncated) -> Self {
        IecError::TruncatedFrame
    }
}
