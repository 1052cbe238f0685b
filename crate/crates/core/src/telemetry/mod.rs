//! Typed records mirroring the CEI database tables, a deterministic record
//! generator, and the per-inverter message plan (D1/D2/D3).
//!
//! Column-to-field mapping and byte layouts live in `docs/schema.md`.

mod generate;
mod plan;
mod records;

pub use generate::{generate_record, DC_WINDOW_MV, NOMINAL_DC_MV};
pub use plan::{
    build_plan, schedule, Emission, FlowPlan, FlowSpec, MessagePlan, PlanBound, PlanConfig,
    PERIOD_RANGE_US, SECOND_US,
};
pub use records::{
    deserialize_record, serialize_record, ArmLogRecord, CeiAciRecord, PqLogRecord, RecordKind,
    TelemetryRecord, PQ_METRIC_COUNT, PQ_METRIC_NAMES, SCHEMA_VERSION,
};

use crate::iec::MessageClass;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TelemetryError {
    #[error("unknown record kind {0:?}")]
    UnknownKind(String),
    #[error("payload truncated")]
    TruncatedPayload,
    #[error("{0} trailing bytes after record")]
    TrailingBytes(usize),
    #[error("schema version {0:?} not supported")]
    SchemaMismatch(String),
    #[error("expected a {expected:?} record, found {found:?}")]
    KindMismatch {
        expected: RecordKind,
        found: RecordKind,
    },
    #[error("invalid field {0}")]
    InvalidField(String),
    #[error("source id {0} is not an inverter (1..=3)")]
    InvalidSource(u16),
    #[error("{class} period of {period_us} us is outside 1 s ..= 65 s")]
    PeriodOutOfRange { class: MessageClass, period_us: u64 },
    #[error("{class} jitter of {jitter_us} us is not below half the period")]
    InvalidJitter { class: MessageClass, jitter_us: u64 },
    #[error("message class {0} planned twice")]
    DuplicateFlow(MessageClass),
}

impl From<crate::wire::Truncated> for TelemetryError {
    fn from(_: crate::wire::Truncated) -> Self {
        TelemetryError::TruncatedPayload
    }
}

/// CRC-32 (IEEE 802.3: poly 0x04C11DB7 reflected, init and final xor 0xFFFFFFFF).
pub fn checksum(payload: &[u8]) -> u32 {
    crc32fast::hash(payload)
}

#[cfg(test)]
mod tests {
    use super::checksum;

    #[test]
    fn crc_check_values() {
        assert_eq!(checksum(b""), 0);
        assert_eq!(checksum(b"123456789"), 0xCBF4_3926);
    }

    #[test]
    fn single_bit_flip_detected() {
        let payload: Vec<u8> = (0..=255).collect();
        let base = checksum(&payload);
        for byte in [0usize, 17, 255] {
            for bit in 0..8 {
                let mut p = payload.clone();
                p[byte] ^= 1 << bit;
                assert_ne!(checksum(&p), base);
            }
        }
    }
}
