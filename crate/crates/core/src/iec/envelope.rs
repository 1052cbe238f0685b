use serde::{Deserialize, Serialize};

use super::{IecError, WIRE_VERSION};
use crate::telemetry::checksum;
use crate::wire::Reader;

pub const ENVELOPE_MAGIC: [u8; 2] = *b"TE";
/// magic(2) version(1) source_id(2) class(1) seq(8) sent_at(8) payload_len(4);
/// the 4-byte integrity trailer follows the payload.
pub const ENVELOPE_HEADER_LEN: usize = 26;

/// The three per-inverter telemetry messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageClass {
    D1,
    D2,
    D3,
}

impl MessageClass {
    pub const ALL: [MessageClass; 3] = [MessageClass::D1, MessageClass::D2, MessageClass::D3];

    pub fn code(self) -> u8 {
        match self {
            MessageClass::D1 => 1,
            MessageClass::D2 => 2,
            MessageClass::D3 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(MessageClass::D1),
            2 => Some(MessageClass::D2),
            3 => Some(MessageClass::D3),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MessageClass::D1 => "D1",
            MessageClass::D2 => "D2",
            MessageClass::D3 => "D3",
        }
    }
}

impl std::fmt::Display for MessageClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MessageClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "D1" => Ok(MessageClass::D1),
            "D2" => Ok(MessageClass::D2),
            "D3" => Ok(MessageClass::D3),
            other => Err(format!("unknown message class {other:?}")),
        }
    }
}

/// MMS-style telemetry report: one serialized record plus flow accounting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelemetryEnvelope {
    pub source_id: u16,
    pub message_class: MessageClass,
    pub seq: u64,
    pub sent_at_us: u64,
    pub payload: Vec<u8>,
    pub integrity: u32,
}

impl TelemetryEnvelope {
    pub fn new(
        source_id: u16,
        message_class: MessageClass,
        seq: u64,
        sent_at_us: u64,
        payload: Vec<u8>,
    ) -> Self {
        let integrity = checksum(&payload);
        Self {
            source_id,
            message_class,
            seq,
            sent_at_us,
            payload,
            integrity,
        }
    }

    /// Recomputes the payload checksum and compares it with the carried one.
    pub fn verify(&self) -> bool {
        checksum(&self.payload) == self.integrity
    }

    pub fn encoded_len(&self) -> usize {
        ENVELOPE_HEADER_LEN + self.payload.len() + 4
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&ENVELOPE_MAGIC);
        out.push(WIRE_VERSION);
        out.extend_from_slice(&self.source_id.to_be_bytes());
        out.push(self.message_class.code());
        out.extend_from_slice(&self.seq.to_be_bytes());
        out.extend_from_slice(&self.sent_at_us.to_be_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out.extend_from_slice(&self.integrity.to_be_bytes());
        out
    }

    /// Parses the frame structure; the integrity field is carried as received
    /// and not checked here.
    pub fn decode(frame: &[u8]) -> Result<Self, IecError> {
        let mut r = Reader::new(frame);
        if r.take(2)? != ENVELOPE_MAGIC {
            return Err(IecError::BadMagic);
        }
        let version = r.u8()?;
        if version != WIRE_VERSION {
            return Err(IecError::UnsupportedVersion(version));
        }
        let source_id = r.u16()?;
        let class_code = r.u8()?;
        let message_class = MessageClass::from_code(class_code).ok_or_else(|| {
            IecError::InvariantViolation(format!("message class code {class_code}"))
        })?;
        let seq = r.u64()?;
        let sent_at_us = r.u64()?;
        let len = r.u32()? as usize;
        let payload = r.take(len)?.to_vec();
        let integrity = r.u32()?;
        if r.remaining() > 0 {
            return Err(IecError::TrailingBytes(r.remaining()));
        }
        Ok(Self {
            source_id,
            message_class,
            seq,
            sent_at_us,
            payload,
            integrity,
        })
    }
}
