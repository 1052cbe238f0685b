use std::collections::HashSet;
use std::time::Duration;

use super::{IecError, PayloadKind, WIRE_VERSION};
use crate::wire::{has_control_chars, Reader};

pub const GOOSE_MAGIC: [u8; 2] = *b"GO";
/// magic(2) version(1) kind(1) go_id_len(1) st_num(4) sq_num(4) ttl_ms(4) entry_count(2),
/// not counting the go_id bytes themselves.
pub const GOOSE_HEADER_FIXED_LEN: usize = 19;

const TAG_BOOL: u8 = 1;
const TAG_INT: u8 = 2;
const TAG_FIXED: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GooseValue {
    Bool(bool),
    Int(i32),
    /// `mantissa * 10^-decimals`
    Fixed { mantissa: i32, decimals: u8 },
}

impl GooseValue {
    fn tag(self) -> u8 {
        match self {
            GooseValue::Bool(_) => TAG_BOOL,
            GooseValue::Int(_) => TAG_INT,
            GooseValue::Fixed { .. } => TAG_FIXED,
        }
    }

    fn encoded_len(self) -> usize {
        match self {
            GooseValue::Bool(_) => 1,
            GooseValue::Int(_) => 4,
            GooseValue::Fixed { .. } => 5,
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            GooseValue::Bool(b) => f64::from(u8::from(b)),
            GooseValue::Int(v) => f64::from(v),
            GooseValue::Fixed { mantissa, decimals } => {
                f64::from(mantissa) / 10f64.powi(i32::from(decimals))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GooseEntry {
    pub name: String,
    pub value: GooseValue,
}

impl GooseEntry {
    pub fn new(name: impl Into<String>, value: GooseValue) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GooseMessage {
    go_id: String,
    st_num: u32,
    sq_num: u32,
    ttl_ms: u32,
    entries: Vec<GooseEntry>,
}

fn check_identifier(s: &str) -> Result<(), IecError> {
    if s.is_empty() || s.len() > u8::MAX as usize || has_control_chars(s) {
        return Err(IecError::InvalidIdentifier(s.to_owned()));
    }
    Ok(())
}

fn check_entries(entries: &[GooseEntry]) -> Result<(), IecError> {
    if entries.is_empty() {
        return Err(IecError::EmptyEntries);
    }
    if entries.len() > u16::MAX as usize {
        return Err(IecError::InvariantViolation("too many entries".into()));
    }
    let mut seen = HashSet::with_capacity(entries.len());
    for e in entries {
        check_identifier(&e.name)?;
        if !seen.insert(e.name.as_str()) {
            return Err(IecError::DuplicateAttribute(e.name.clone()));
        }
    }
    Ok(())
}

impl GooseMessage {
    pub fn new(
        go_id: impl Into<String>,
        st_num: u32,
        sq_num: u32,
        ttl_ms: u32,
        entries: Vec<GooseEntry>,
    ) -> Result<Self, IecError> {
        let go_id = go_id.into();
        check_identifier(&go_id)?;
        check_entries(&entries)?;
        Ok(Self {
            go_id,
            st_num,
            sq_num,
            ttl_ms,
            entries,
        })
    }

    pub fn go_id(&self) -> &str {
        &self.go_id
    }

    pub fn st_num(&self) -> u32 {
        self.st_num
    }

    pub fn sq_num(&self) -> u32 {
        self.sq_num
    }

    pub fn ttl_ms(&self) -> u32 {
        self.ttl_ms
    }

    pub fn entries(&self) -> &[GooseEntry] {
        &self.entries
    }

    pub fn encoded_len(&self) -> usize {
        GOOSE_HEADER_FIXED_LEN
            + self.go_id.len()
            + self
                .entries
                .iter()
                .map(|e| 1 + e.name.len() + 1 + e.value.encoded_len())
                .sum::<usize>()
    }
}

/// Publisher state transition for a fresh set of data-set values.
///
/// Changed values start a new state (`st_num + 1`, `sq_num = 0`); an
/// unchanged set is a retransmission (`sq_num + 1`). Both counters wrap.
pub fn goose_on_change(
    prev: &GooseMessage,
    new_entries: Vec<GooseEntry>,
) -> Result<GooseMessage, IecError> {
    check_entries(&new_entries)?;
    let (st_num, sq_num) = if new_entries != prev.entries {
        (prev.st_num.wrapping_add(1), 0)
    } else {
        (prev.st_num, prev.sq_num.wrapping_add(1))
    };
    Ok(GooseMessage {
        go_id: prev.go_id.clone(),
        st_num,
        sq_num,
        ttl_ms: prev.ttl_ms,
        entries: new_entries,
    })
}

/// Burst-then-heartbeat retransmission timing after a state change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetransmissionSchedule {
    t0: Duration,
    multiplier: f64,
    tmax: Duration,
}

impl RetransmissionSchedule {
    pub fn new(t0: Duration, multiplier: f64, tmax: Duration) -> Result<Self, IecError> {
        if t0.is_zero() || t0 > tmax {
            return Err(IecError::InvariantViolation(
                "retransmission needs 0 < t0 <= tmax".into(),
            ));
        }
        if !(multiplier >= 1.0) || !multiplier.is_finite() {
            return Err(IecError::InvariantViolation(
                "retransmission multiplier must be >= 1".into(),
            ));
        }
        Ok(Self {
            t0,
            multiplier,
            tmax,
        })
    }

    pub fn from_millis(t0_ms: u64, multiplier: f64, tmax_ms: u64) -> Result<Self, IecError> {
        Self::new(
            Duration::from_millis(t0_ms),
            multiplier,
            Duration::from_millis(tmax_ms),
        )
    }
}

/// `interval_k = min(t0 * multiplier^k, tmax)` for `k = 0..n`.
pub fn goose_retransmission_intervals(sched: &RetransmissionSchedule, n: usize) -> Vec<Duration> {
    let tmax_ns = sched.tmax.as_nanos() as f64;
    let mut current = sched.t0.as_nanos() as f64;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let clamped = current.min(tmax_ns);
        out.push(Duration::from_nanos(clamped.round() as u64));
        current = clamped * sched.multiplier;
    }
    out
}

pub fn encode_goose(msg: &GooseMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.encoded_len());
    out.extend_from_slice(&GOOSE_MAGIC);
    out.push(WIRE_VERSION);
    out.push(PayloadKind::Goose.code());
    out.push(msg.go_id.len() as u8);
    out.extend_from_slice(msg.go_id.as_bytes());
    out.extend_from_slice(&msg.st_num.to_be_bytes());
    out.extend_from_slice(&msg.sq_num.to_be_bytes());
    out.extend_from_slice(&msg.ttl_ms.to_be_bytes());
    out.extend_from_slice(&(msg.entries.len() as u16).to_be_bytes());
    for e in &msg.entries {
        out.push(e.name.len() as u8);
        out.extend_from_slice(e.name.as_bytes());
        out.push(e.value.tag());
        match e.value {
            GooseValue::Bool(b) => out.push(u8::from(b)),
            GooseValue::Int(v) => out.extend_from_slice(&v.to_be_bytes()),
            GooseValue::Fixed { mantissa, decimals } => {
                out.extend_from_slice(&mantissa.to_be_bytes());
                out.push(decimals);
            }
        }
    }
    out
}

fn read_identifier(r: &mut Reader<'_>, len: usize) -> Result<String, IecError> {
    let raw = r.take(len)?;
    let s = std::str::from_utf8(raw)
        .map_err(|_| IecError::InvariantViolation("identifier is not UTF-8".into()))?;
    check_identifier(s)?;
    Ok(s.to_owned())
}

pub fn decode_goose(frame: &[u8]) -> Result<GooseMessage, IecError> {
    let mut r = Reader::new(frame);
    if r.take(2)? != GOOSE_MAGIC {
        return Err(IecError::BadMagic);
    }
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(IecError::UnsupportedVersion(version));
    }
    if r.u8()? != PayloadKind::Goose.code() {
        return Err(IecError::InvariantViolation("payload kind is not GOOSE".into()));
    }
    let id_len = r.u8()? as usize;
    let go_id = read_identifier(&mut r, id_len)?;
    let st_num = r.u32()?;
    let sq_num = r.u32()?;
    let ttl_ms = r.u32()?;
    let count = r.u16()? as usize;
    // every entry needs at least 4 bytes, so a lying count cannot force a huge allocation
    let mut entries = Vec::with_capacity(count.min(r.remaining() / 4));
    for _ in 0..count {
        let name_len = r.u8()? as usize;
        let name = read_identifier(&mut r, name_len)?;
        let value = match r.u8()? {
            TAG_BOOL => match r.u8()? {
                0 => GooseValue::Bool(false),
                1 => GooseValue::Bool(true),
                b => {
                    return Err(IecError::InvariantViolation(format!("boolean byte {b}")));
                }
            },
            TAG_INT => GooseValue::Int(r.i32()?),
            TAG_FIXED => GooseValue::Fixed {
                mantissa: r.i32()?,
                decimals: r.u8()?,
            },
            other => return Err(IecError::UnknownTypeTag(other)),
        };
        entries.push(GooseEntry { name, value });
    }
    if r.remaining() > 0 {
        return Err(IecError::TrailingBytes(r.remaining()));
    }
    GooseMessage::new(go_id, st_num, sq_num, ttl_ms, entries)
}
