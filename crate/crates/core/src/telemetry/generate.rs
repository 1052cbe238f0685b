use rand::Rng;

use super::records::{
    check_cei_id, ArmLogRecord, CeiAciRecord, PqLogRecord, RecordKind, TelemetryRecord,
    PQ_METRIC_COUNT,
};
use super::TelemetryError;
use crate::seed;

/// Nominal pole-to-pole DC voltage of the LVDC network, mV.
pub const NOMINAL_DC_MV: i32 = 750_000;
/// Normal-operation DC voltage window: +10 % / -20 % around nominal.
pub const DC_WINDOW_MV: (i32, i32) = (600_000, 825_000);

const PHASE_NOMINAL_MV: f64 = 230_000.0;

/// Synthesizes one plausible record for `(seed, source_id, at)`.
pub fn generate_record(
    kind: RecordKind,
    source_id: u16,
    at_us: u64,
    rng_seed: u64,
) -> Result<TelemetryRecord, TelemetryError> {
    let cei_id = u8::try_from(source_id)
        .map_err(|_| TelemetryError::InvalidSource(source_id))
        .and_then(check_cei_id)
        .map_err(|_| TelemetryError::InvalidSource(source_id))?;
    let mut rng = seed::stream(&[rng_seed, u64::from(kind.code()), u64::from(source_id), at_us]);
    Ok(match kind {
        RecordKind::ArmLog => TelemetryRecord::ArmLog(arm_log(&mut rng, cei_id, at_us)),
        RecordKind::CeiAci => TelemetryRecord::CeiAci(cei_aci(&mut rng, cei_id, at_us)),
        RecordKind::PqLog => TelemetryRecord::PqLog(pq_log(&mut rng, cei_id, at_us)),
    })
}

fn arm_log(rng: &mut impl Rng, cei_id: u8, at_us: u64) -> ArmLogRecord {
    let u_dc_mv = NOMINAL_DC_MV + rng.random_range(-37_500..=37_500);
    let u_rms_mv: [i32; 3] =
        std::array::from_fn(|_| (PHASE_NOMINAL_MV * rng.random_range(0.97..1.03)) as i32);
    let i_rms_ma: [i32; 3] = std::array::from_fn(|_| rng.random_range(0..23_000));
    let s_rms_va: [i32; 3] = std::array::from_fn(|p| {
        (f64::from(u_rms_mv[p]) / 1000.0 * f64::from(i_rms_ma[p]) / 1000.0).round() as i32
    });
    let p_ac: f64 = s_rms_va.iter().map(|&s| f64::from(s)).sum();
    // DC input covers AC output plus ~3 % conversion loss
    let i_dc_ma = (p_ac * 1.03 / (f64::from(u_dc_mv) / 1000.0) * 1000.0).round() as i32;
    ArmLogRecord {
        timestamp_us: at_us,
        cei_id,
        u_dc_mv,
        i_dc_ma,
        u_rms_mv,
        i_rms_ma,
        s_rms_va,
        t_igbt_cc: rng.random_range(3_000..7_000),
        t_ambient_cc: rng.random_range(1_000..4_000),
        status_flags: rng.random::<u32>() & 0xFF,
        fault_flags: if rng.random_bool(0.01) {
            1 << rng.random_range(0..16)
        } else {
            0
        },
    }
}

fn cei_aci(rng: &mut impl Rng, cei_id: u8, at_us: u64) -> CeiAciRecord {
    CeiAciRecord {
        timestamp_us: at_us,
        cei_id,
        box_temps_cc: std::array::from_fn(|_| rng.random_range(1_500..4_500)),
        relays: std::array::from_fn(|_| rng.random_bool(0.9)),
        connected: rng.random_bool(0.98),
    }
}

/// Scaling: powers in W / VA / var, fundamentals in mA / mV, power factors
/// in thousandths, THD and pollution figures in hundredths of a percent.
fn pq_log(rng: &mut impl Rng, cei_id: u8, at_us: u64) -> PqLogRecord {
    let mut phase_block = |_: usize| -> [i32; 20] {
        let u_fund = PHASE_NOMINAL_MV * rng.random_range(0.97..1.03);
        let i_fund = rng.random_range(0.0..23_000.0);
        let s_fund = u_fund / 1000.0 * i_fund / 1000.0;
        let pf_fund = rng.random_range(0.90..1.0);
        let p_fund = s_fund * pf_fund;
        let q_fund = (s_fund * s_fund - p_fund * p_fund).sqrt();
        let thdi = rng.random_range(0.01..0.08);
        let thdu = rng.random_range(0.005..0.03);
        let s_harm = s_fund * thdi;
        let p_harm = s_harm * rng.random_range(0.0..0.2);
        let s = (s_fund * s_fund + s_harm * s_harm).sqrt();
        let p = p_fund + p_harm;
        let d_i = s_fund * thdi;
        let d_v = s_fund * thdu;
        [
            i_fund,
            u_fund,
            p,
            s,
            s * rng.random_range(0.99..1.01),
            p_fund,
            s_fund,
            pf_fund * 1000.0,
            q_fund,
            p_harm,
            s_harm,
            (s_harm * s_harm - p_harm * p_harm).max(0.0).sqrt(),
            thdi * 10_000.0,
            (s * s - p * p).max(0.0).sqrt(),
            s_harm,
            p / s.max(1e-9) * 1000.0,
            d_i,
            d_v,
            thdi * 10_000.0,
            thdu * 10_000.0,
        ]
        .map(|v| v.round() as i32)
    };
    let phases = [phase_block(0), phase_block(1), phase_block(2)];
    // inverter totals: sums of the per-phase power columns, averages of ratios
    let sum = |idx: usize| phases.iter().map(|p| i64::from(p[idx])).sum::<i64>() as i32;
    let avg = |idx: usize| (phases.iter().map(|p| i64::from(p[idx])).sum::<i64>() / 3) as i32;
    let p_total = sum(2);
    let totals = [
        p_total,
        sum(3),
        sum(4),
        sum(5),
        sum(6),
        avg(7),
        sum(8),
        sum(9),
        sum(10),
        sum(11),
        avg(12),
        sum(13),
        sum(14),
        avg(15),
        sum(16),
        sum(17),
        (f64::from(p_total) * rng.random_range(1.02..1.04)) as i32,
        (f64::from(p_total) * rng.random_range(1.02..1.04)) as i32,
    ];
    let mut metrics = [0i32; PQ_METRIC_COUNT];
    metrics[..18].copy_from_slice(&totals);
    for (i, block) in phases.iter().enumerate() {
        metrics[18 + 20 * i..18 + 20 * (i + 1)].copy_from_slice(block);
    }
    PqLogRecord {
        timestamp_us: at_us,
        cei_id,
        metrics,
    }
}
