use std::collections::HashSet;

use num_traits::{Float, FromPrimitive, Num};

use super::{IecError, PayloadKind, WIRE_VERSION};
use crate::wire::{has_control_chars, Reader};

pub const SV_MAGIC: [u8; 2] = *b"SV";
/// magic(2) version(1) kind(1) app_id(2) smp_synch(1) conf_rev(4) asdu_count(1)
pub const SV_HEADER_LEN: usize = 12;
/// sv_id(32) smp_cnt(2) measurements(8 x 4) quality(2)
pub const ASDU_BLOCK_LEN: usize = 68;
pub const SV_ID_MAX_LEN: usize = 32;
pub const MAX_ASDUS: usize = 8;
/// Maximum tolerated SV delivery delay; a delay equal to it is already late.
pub const SV_DEADLINE_MS: f64 = 208.3;

/// Order of the eight measurement slots in every ASDU.
pub const MEASUREMENT_LABELS: [&str; 8] = [
    "IA_mA", "IB_mA", "IC_mA", "IN_mA", "VA_mV", "VB_mV", "VC_mV", "VN_mV",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SppMode {
    /// Only the 9-2LE values 80 and 256 are accepted.
    Strict,
    Any,
}

/// Interval between two SV samples in microseconds, `10^6 / (spp * freq_hz)`.
///
/// With `T = Ratio<u64>` the result is exact; float types get the nearest
/// representable value.
pub fn sv_sample_interval<T>(spp: u32, freq_hz: u32, mode: SppMode) -> Result<T, IecError>
where
    T: Num + FromPrimitive,
{
    if spp == 0 {
        return Err(IecError::ZeroSpp);
    }
    if freq_hz == 0 {
        return Err(IecError::ZeroFrequency);
    }
    if mode == SppMode::Strict && spp != 80 && spp != 256 {
        return Err(IecError::UnsupportedSpp(spp));
    }
    let micros_per_second = T::from_u64(1_000_000).expect("representable");
    let samples_per_second = T::from_u64(u64::from(spp) * u64::from(freq_hz)).expect("representable");
    Ok(micros_per_second / samples_per_second)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeadlineStatus {
    WithinDeadline,
    DeadlineViolated,
}

pub fn sv_deadline_check<F: Float>(observed_delay_ms: F) -> Result<DeadlineStatus, IecError> {
    if !(observed_delay_ms >= F::zero()) {
        return Err(IecError::NegativeDelay);
    }
    let deadline = F::from(SV_DEADLINE_MS).expect("deadline fits any float");
    Ok(if observed_delay_ms < deadline {
        DeadlineStatus::WithinDeadline
    } else {
        DeadlineStatus::DeadlineViolated
    })
}

/// Subscriber-side filter: a literal topic or the single wildcard `*`.
pub fn topic_match(subscription: &str, topic: &str) -> bool {
    subscription == "*" || subscription == topic
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmpSynch {
    None,
    Local,
    Global,
}

impl SmpSynch {
    fn code(self) -> u8 {
        match self {
            SmpSynch::None => 0,
            SmpSynch::Local => 1,
            SmpSynch::Global => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, IecError> {
        match code {
            0 => Ok(SmpSynch::None),
            1 => Ok(SmpSynch::Local),
            2 => Ok(SmpSynch::Global),
            other => Err(IecError::InvariantViolation(format!("smpSynch code {other}"))),
        }
    }
}

/// One per-source measurement block.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Asdu {
    sv_id: String,
    smp_cnt: u16,
    measurements: [i32; 8],
    quality: u16,
}

impl Asdu {
    pub fn new(
        sv_id: impl Into<String>,
        smp_cnt: u16,
        measurements: [i32; 8],
        quality: u16,
    ) -> Result<Self, IecError> {
        let sv_id = sv_id.into();
        if sv_id.len() > SV_ID_MAX_LEN {
            return Err(IecError::SvIdTooLong(sv_id.len()));
        }
        if sv_id.is_empty() || has_control_chars(&sv_id) {
            return Err(IecError::InvalidIdentifier(sv_id));
        }
        Ok(Self {
            sv_id,
            smp_cnt,
            measurements,
            quality,
        })
    }

    pub fn sv_id(&self) -> &str {
        &self.sv_id
    }

    pub fn smp_cnt(&self) -> u16 {
        self.smp_cnt
    }

    /// Currents in mA (A, B, C, N) followed by voltages in mV (A, B, C, N).
    pub fn measurements(&self) -> &[i32; 8] {
        &self.measurements
    }

    pub fn quality(&self) -> u16 {
        self.quality
    }

    /// The opaque 2-bit quality code of measurement `index`.
    pub fn quality_code(&self, index: usize) -> u8 {
        assert!(index < 8, "measurement index out of range");
        ((self.quality >> (2 * index)) & 0b11) as u8
    }

    /// Next sample from the same source; the counter wraps at `u16::MAX`.
    pub fn next_sample(&self, measurements: [i32; 8], quality: u16) -> Self {
        Self {
            sv_id: self.sv_id.clone(),
            smp_cnt: self.smp_cnt.wrapping_add(1),
            measurements,
            quality,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SvMessage {
    app_id: u16,
    smp_synch: SmpSynch,
    conf_rev: u32,
    asdus: Vec<Asdu>,
}

impl SvMessage {
    pub fn new(
        app_id: u16,
        smp_synch: SmpSynch,
        conf_rev: u32,
        asdus: Vec<Asdu>,
    ) -> Result<Self, IecError> {
        if asdus.is_empty() {
            return Err(IecError::EmptyAsduList);
        }
        if asdus.len() > MAX_ASDUS {
            return Err(IecError::TooManyAsdus(asdus.len()));
        }
        let mut seen = HashSet::with_capacity(asdus.len());
        for asdu in &asdus {
            if !seen.insert(asdu.sv_id.as_str()) {
                return Err(IecError::InvariantViolation(format!(
                    "duplicate svID {:?}",
                    asdu.sv_id
                )));
            }
        }
        Ok(Self {
            app_id,
            smp_synch,
            conf_rev,
            asdus,
        })
    }

    pub fn app_id(&self) -> u16 {
        self.app_id
    }

    pub fn smp_synch(&self) -> SmpSynch {
        self.smp_synch
    }

    pub fn conf_rev(&self) -> u32 {
        self.conf_rev
    }

    pub fn asdus(&self) -> &[Asdu] {
        &self.asdus
    }

    pub fn encoded_len(&self) -> usize {
        SV_HEADER_LEN + self.asdus.len() * ASDU_BLOCK_LEN
    }
}

pub fn encode_sv(msg: &SvMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(msg.encoded_len());
    out.extend_from_slice(&SV_MAGIC);
    out.push(WIRE_VERSION);
    out.push(PayloadKind::Sv.code());
    out.extend_from_slice(&msg.app_id.to_be_bytes());
    out.push(msg.smp_synch.code());
    out.extend_from_slice(&msg.conf_rev.to_be_bytes());
    out.push(msg.asdus.len() as u8);
    for asdu in &msg.asdus {
        let mut id = [0u8; SV_ID_MAX_LEN];
        id[..asdu.sv_id.len()].copy_from_slice(asdu.sv_id.as_bytes());
        out.extend_from_slice(&id);
        out.extend_from_slice(&asdu.smp_cnt.to_be_bytes());
        for m in asdu.measurements {
            out.extend_from_slice(&m.to_be_bytes());
        }
        out.extend_from_slice(&asdu.quality.to_be_bytes());
    }
    out
}

pub fn decode_sv(frame: &[u8]) -> Result<SvMessage, IecError> {
    let mut r = Reader::new(frame);
    if r.take(2)? != SV_MAGIC {
        return Err(IecError::BadMagic);
    }
    let version = r.u8()?;
    if version != WIRE_VERSION {
        return Err(IecError::UnsupportedVersion(version));
    }
    if r.u8()? != PayloadKind::Sv.code() {
        return Err(IecError::InvariantViolation("payload kind is not SV".into()));
    }
    let app_id = r.u16()?;
    let smp_synch = SmpSynch::from_code(r.u8()?)?;
    let conf_rev = r.u32()?;
    let count = r.u8()? as usize;
    if count == 0 {
        return Err(IecError::EmptyAsduList);
    }
    if count > MAX_ASDUS {
        return Err(IecError::TooManyAsdus(count));
    }
    let mut asdus = Vec::with_capacity(count);
    for _ in 0..count {
        let raw_id = r.take(SV_ID_MAX_LEN)?;
        let id_len = raw_id.iter().position(|&b| b == 0).unwrap_or(SV_ID_MAX_LEN);
        if raw_id[id_len..].iter().any(|&b| b != 0) {
            return Err(IecError::InvariantViolation("non-zero svID padding".into()));
        }
        let sv_id = std::str::from_utf8(&raw_id[..id_len])
            .map_err(|_| IecError::InvariantViolation("svID is not UTF-8".into()))?;
        let smp_cnt = r.u16()?;
        let mut measurements = [0i32; 8];
        for m in &mut measurements {
            *m = r.i32()?;
        }
        let quality = r.u16()?;
        let asdu = Asdu::new(sv_id, smp_cnt, measurements, quality)
            .map_err(|e| IecError::InvariantViolation(e.to_string()))?;
        asdus.push(asdu);
    }
    if r.remaining() > 0 {
        return Err(IecError::TrailingBytes(r.remaining()));
    }
    SvMessage::new(app_id, smp_synch, conf_rev, asdus)
}
