use super::{IecError, WIRE_VERSION};
use crate::wire::Reader;

pub const ROUTABLE_MAGIC: [u8; 2] = *b"RG";
/// magic(2) version(1) kind(1) session_id(4) hop_limit(1) payload_len(4)
pub const ROUTABLE_HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PayloadKind {
    Sv,
    Goose,
}

impl PayloadKind {
    pub(crate) fn code(self) -> u8 {
        match self {
            PayloadKind::Sv => 1,
            PayloadKind::Goose => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, IecError> {
        match code {
            1 => Ok(PayloadKind::Sv),
            2 => Ok(PayloadKind::Goose),
            other => Err(IecError::InvariantViolation(format!("payload kind {other}"))),
        }
    }
}

/// Network-layer header that lets SV/GOOSE frames cross routed WAN segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoutableHeader {
    pub session_id: u32,
    pub hop_limit: u8,
    pub payload_kind: PayloadKind,
}

pub fn wrap_routable(header: RoutableHeader, payload: &[u8]) -> Result<Vec<u8>, IecError> {
    if header.hop_limit == 0 {
        return Err(IecError::HopLimitExhausted);
    }
    let len = u32::try_from(payload.len()).map_err(|_| IecError::PayloadTooLarge(payload.len()))?;
    let mut out = Vec::with_capacity(ROUTABLE_HEADER_LEN + payload.len());
    out.extend_from_slice(&ROUTABLE_MAGIC);
    out.push(WIRE_VERSION);
    out.push(header.payload_kind.code());
    out.extend_from_slice(&header.session_id.to_be_bytes());
    out.push(header.hop_limit);
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn unwrap_routable(frame: &[u8]) -> Result<(RoutableHeader, &[u8]), IecError> {
    let mut r = Reader::new(frame);
    if r.take(2)? != ROUTABLE_MAGIC {
        return Err(IecError::BadMagic);
    }
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(IecError::UnsupportedVersion(version));
    }
    let payload_kind = PayloadKind::from_code(r.u8()?)?;
    let session_id = r.u32()?;
    let hop_limit = r.u8()?;
    let len = r.u32()? as usize;
    let payload = r.take(len)?;
    if r.remaining() > 0 {
        return Err(IecError::TrailingBytes(r.remaining()));
    }
    if hop_limit == 0 {
        return Err(IecError::HopLimitExhausted);
    }
    Ok((
        RoutableHeader {
            session_id,
            hop_limit,
            payload_kind,
        },
        payload,
    ))
}

/// One router traversal: decrements the hop limit and signals a drop when
/// it reaches zero.
pub fn forward_hop(frame: &[u8]) -> Result<Vec<u8>, IecError> {
    let (mut header, payload) = unwrap_routable(frame)?;
    header.hop_limit -= 1;
    if header.hop_limit == 0 {
        return Err(IecError::HopLimitExhausted);
    }
    wrap_routable(header, payload)
}
