use serde::{Deserialize, Serialize};

use super::TelemetryError;
use crate::wire::Reader;

/// Embedded at the head of every serialized record.
pub const SCHEMA_VERSION: &str = "lvdc-cei/1";

/// Column names of PQ_LOG_CEI after TIMESTAMP and CEI_ID, in table order.
/// Spellings follow the field database verbatim.
pub const PQ_METRIC_NAMES: [&str; 78] = [
    "Active_power_CEI",
    "Apparent_power_CEI",
    "Apparent_power_output_RMS_CEI",
    "Fundamental_Active_power_CEI",
    "Fundamental_Apparent_power_CEI",
    "Fundamental_power_factor_CEI",
    "Fundamental_reactive_power_CEI",
    "Harmonic_Active_power_CEI",
    "Harmonic_Apparemt_power_CEI",
    "Harmonic_distortion_power_CEI",
    "Harmonic_polution_CEI",
    "NonActive_power_CEI",
    "NonFundamental_Apparemt_power_CEI",
    "Power_factor_CEI",
    "I_distortion_power_CEI",
    "V_distortion_power_CEI",
    "Input_power_DC_FFT",
    "Input_power_DC_RMS",
    "I_Fundamental_A",
    "U_Fundamental_A",
    "Active_power_A",
    "Apparemt_power_A",
    "Apparemt_power_output_RMS_A",
    "Fundamental_Active_power_A",
    "Fundamental_Apparemt_power_A",
    "Fundamental_power_factor_A",
    "Fundamental_ective_power_A",
    "Harmonic_Active_power_A",
    "Harmonic_Apparemt_power_A",
    "Harmonic_distortion_power_A",
    "Harmonic_polution_A",
    "NonActive_power_A",
    "NonFundamental_Apparemt_power_A",
    "Power_factor_A",
    "I_distortion_power_A",
    "V_distortion_power_A",
    "THDI_A",
    "THDU_A",
    "I_Fundamental_B",
    "U_Fundamental_B",
    "Active_power_B",
    "Apparemt_power_B",
    "Apparemt_power_output_RMS_B",
    "Fundamental_Active_power_B",
    "Fundamental_Apparemt_power_B",
    "Fundamental_power_factor_B",
    "Fundamental_reActive_power_B",
    "Harmonic_Active_power_B",
    "Harmonic_Apparemt_power_B",
    "Harmonic_distortion_power_B",
    "Harmonic_polution_B",
    "NonActive_power_B",
    "NonFundamental_Apparemt_power_B",
    "Power_factor_B",
    "I_distortion_power_B",
    "V_distortion_power_B",
    "THDI_B",
    "THDU_B",
    "I_Fundamental_C",
    "U_Fundamental_C",
    "Active_power_C",
    "Apparemt_power_C",
    "Apparemt_power_output_RMS_C",
    "Fundamental_Active_power_C",
    "Fundamental_Apparemt_power_C",
    "Fundamental_power_factor_C",
    "Fundamental_reActive_power_C",
    "Harmonic_Active_power_C",
    "Harmonic_Apparemt_power_C",
    "Harmonic_distortion_power_C",
    "Harmonic_polution_C",
    "NonActive_power_C",
    "NonFundamental_Apparemt_power_C",
    "Power_factor_C",
    "I_distortion_power_C",
    "V_distortion_power_C",
    "THDI_C",
    "THDU_C",
];

pub const PQ_METRIC_COUNT: usize = PQ_METRIC_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecordKind {
    ArmLog,
    CeiAci,
    PqLog,
}

impl RecordKind {
    pub const ALL: [RecordKind; 3] = [RecordKind::ArmLog, RecordKind::CeiAci, RecordKind::PqLog];

    pub fn code(self) -> u8 {
        match self {
            RecordKind::ArmLog => 1,
            RecordKind::CeiAci => 2,
            RecordKind::PqLog => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, TelemetryError> {
        match code {
            1 => Ok(RecordKind::ArmLog),
            2 => Ok(RecordKind::CeiAci),
            3 => Ok(RecordKind::PqLog),
            other => Err(TelemetryError::UnknownKind(other.to_string())),
        }
    }

    /// Name of the database table the record mirrors.
    pub fn table_name(self) -> &'static str {
        match self {
            RecordKind::ArmLog => "ARM_LOG_CEI",
            RecordKind::CeiAci => "CEI_ACI",
            RecordKind::PqLog => "PQ_LOG_CEI",
        }
    }

    /// Serialized size including the schema header.
    pub fn payload_len(self) -> usize {
        SCHEMA_HEADER_LEN
            + match self {
                RecordKind::ArmLog => ARM_LOG_BODY_LEN,
                RecordKind::CeiAci => CEI_ACI_BODY_LEN,
                RecordKind::PqLog => PQ_LOG_BODY_LEN,
            }
    }
}

impl std::str::FromStr for RecordKind {
    type Err = TelemetryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ArmLog" | "ARM_LOG_CEI" => Ok(RecordKind::ArmLog),
            "CeiAci" | "CEI_ACI" => Ok(RecordKind::CeiAci),
            "PqLog" | "PQ_LOG_CEI" => Ok(RecordKind::PqLog),
            other => Err(TelemetryError::UnknownKind(other.to_owned())),
        }
    }
}

const SCHEMA_HEADER_LEN: usize = 1 + SCHEMA_VERSION.len() + 1;
// timestamp(8) cei_id(1) u_dc(4) i_dc(4) u_rms(12) i_rms(12) s_rms(12) t_igbt(4) t_ambient(4) status(4) fault(4)
const ARM_LOG_BODY_LEN: usize = 8 + 1 + 4 + 4 + 12 + 12 + 12 + 4 + 4 + 4 + 4;
// timestamp(8) cei_id(1) box_temps(16) relay bitmask(1) connected(1)
const CEI_ACI_BODY_LEN: usize = 8 + 1 + 16 + 1 + 1;
const PQ_LOG_BODY_LEN: usize = 8 + 1 + 4 * PQ_METRIC_COUNT;

/// ARM_LOG_CEI row. Voltages in mV, currents in mA, powers in VA,
/// temperatures in centi-degrees Celsius.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArmLogRecord {
    pub timestamp_us: u64,
    pub cei_id: u8,
    pub u_dc_mv: i32,
    pub i_dc_ma: i32,
    pub u_rms_mv: [i32; 3],
    pub i_rms_ma: [i32; 3],
    pub s_rms_va: [i32; 3],
    pub t_igbt_cc: i32,
    pub t_ambient_cc: i32,
    pub status_flags: u32,
    pub fault_flags: u32,
}

/// CEI_ACI row: ACI box temperatures T_L1, T_L2, T_W1, T_W2 and relays R1-R6.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CeiAciRecord {
    pub timestamp_us: u64,
    pub cei_id: u8,
    pub box_temps_cc: [i32; 4],
    pub relays: [bool; 6],
    pub connected: bool,
}

/// PQ_LOG_CEI row, metrics ordered as [`PQ_METRIC_NAMES`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PqLogRecord {
    pub timestamp_us: u64,
    pub cei_id: u8,
    pub metrics: [i32; PQ_METRIC_COUNT],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TelemetryRecord {
    ArmLog(ArmLogRecord),
    CeiAci(CeiAciRecord),
    PqLog(PqLogRecord),
}

impl TelemetryRecord {
    pub fn kind(&self) -> RecordKind {
        match self {
            TelemetryRecord::ArmLog(_) => RecordKind::ArmLog,
            TelemetryRecord::CeiAci(_) => RecordKind::CeiAci,
            TelemetryRecord::PqLog(_) => RecordKind::PqLog,
        }
    }

    pub fn timestamp_us(&self) -> u64 {
        match self {
            TelemetryRecord::ArmLog(r) => r.timestamp_us,
            TelemetryRecord::CeiAci(r) => r.timestamp_us,
            TelemetryRecord::PqLog(r) => r.timestamp_us,
        }
    }

    pub fn cei_id(&self) -> u8 {
        match self {
            TelemetryRecord::ArmLog(r) => r.cei_id,
            TelemetryRecord::CeiAci(r) => r.cei_id,
            TelemetryRecord::PqLog(r) => r.cei_id,
        }
    }
}

pub(crate) fn check_cei_id(id: u8) -> Result<u8, TelemetryError> {
    if (1..=3).contains(&id) {
        Ok(id)
    } else {
        Err(TelemetryError::InvalidSource(u16::from(id)))
    }
}

pub fn serialize_record(record: &TelemetryRecord) -> Vec<u8> {
    let kind = record.kind();
    let mut out = Vec::with_capacity(kind.payload_len());
    out.push(SCHEMA_VERSION.len() as u8);
    out.extend_from_slice(SCHEMA_VERSION.as_bytes());
    out.push(kind.code());
    out.extend_from_slice(&record.timestamp_us().to_be_bytes());
    out.push(record.cei_id());
    let mut put = |v: i32| out.extend_from_slice(&v.to_be_bytes());
    match record {
        TelemetryRecord::ArmLog(r) => {
            put(r.u_dc_mv);
            put(r.i_dc_ma);
            r.u_rms_mv.iter().chain(&r.i_rms_ma).chain(&r.s_rms_va).for_each(|&v| put(v));
            put(r.t_igbt_cc);
            put(r.t_ambient_cc);
            out.extend_from_slice(&r.status_flags.to_be_bytes());
            out.extend_from_slice(&r.fault_flags.to_be_bytes());
        }
        TelemetryRecord::CeiAci(r) => {
            r.box_temps_cc.iter().for_each(|&v| put(v));
            let mask = r
                .relays
                .iter()
                .enumerate()
                .fold(0u8, |m, (i, &on)| m | (u8::from(on) << i));
            out.push(mask);
            out.push(u8::from(r.connected));
        }
        TelemetryRecord::PqLog(r) => r.metrics.iter().for_each(|&v| put(v)),
    }
    out
}

fn read_i32s<const N: usize>(r: &mut Reader<'_>) -> Result<[i32; N], TelemetryError> {
    let mut out = [0i32; N];
    for v in &mut out {
        *v = r.i32()?;
    }
    Ok(out)
}

pub fn deserialize_record(kind: RecordKind, bytes: &[u8]) -> Result<TelemetryRecord, TelemetryError> {
    let mut r = Reader::new(bytes);
    let vlen = r.u8()? as usize;
    let version = r.take(vlen)?;
    if version != SCHEMA_VERSION.as_bytes() {
        return Err(TelemetryError::SchemaMismatch(
            String::from_utf8_lossy(version).into_owned(),
        ));
    }
    let found = RecordKind::from_code(r.u8()?)?;
    if found != kind {
        return Err(TelemetryError::KindMismatch {
            expected: kind,
            found,
        });
    }
    let timestamp_us = r.u64()?;
    let cei_id = check_cei_id(r.u8()?)?;
    let record = match kind {
        RecordKind::ArmLog => TelemetryRecord::ArmLog(ArmLogRecord {
            timestamp_us,
            cei_id,
            u_dc_mv: r.i32()?,
            i_dc_ma: r.i32()?,
            u_rms_mv: read_i32s(&mut r)?,
            i_rms_ma: read_i32s(&mut r)?,
            s_rms_va: read_i32s(&mut r)?,
            t_igbt_cc: r.i32()?,
            t_ambient_cc: r.i32()?,
            status_flags: r.u32()?,
            fault_flags: r.u32()?,
        }),
        RecordKind::CeiAci => {
            let box_temps_cc = read_i32s(&mut r)?;
            let mask = r.u8()?;
            if mask >> 6 != 0 {
                return Err(TelemetryError::InvalidField("relay bitmask".into()));
            }
            let connected = match r.u8()? {
                0 => false,
                1 => true,
                _ => return Err(TelemetryError::InvalidField("connected".into())),
            };
            TelemetryRecord::CeiAci(CeiAciRecord {
                timestamp_us,
                cei_id,
                box_temps_cc,
                relays: std::array::from_fn(|i| mask & (1 << i) != 0),
                connected,
            })
        }
        RecordKind::PqLog => TelemetryRecord::PqLog(PqLogRecord {
            timestamp_us,
            cei_id,
            metrics: read_i32s(&mut r)?,
        }),
    };
    if r.remaining() > 0 {
        return Err(TelemetryError::TrailingBytes(r.remaining()));
    }
    Ok(record)
}
