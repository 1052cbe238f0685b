use rand::Rng;
use serde::Serialize;

use super::records::{serialize_record, RecordKind};
use super::{generate_record, TelemetryError};
use crate::iec::{MessageClass, TelemetryEnvelope};
use crate::seed;

pub const SECOND_US: u64 = 1_000_000;
/// Period window accepted without the override flag.
pub const PERIOD_RANGE_US: (u64, u64) = (SECOND_US, 65 * SECOND_US);

/// Which record a message class carries and how often.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowSpec {
    pub class: MessageClass,
    pub kind: RecordKind,
    pub period_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanBound {
    /// Emissions at `k * period` for every `k * period < duration`.
    Duration { duration_us: u64 },
    Count(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanConfig {
    pub sources: Vec<u16>,
    pub flows: Vec<FlowSpec>,
    pub jitter_us: u64,
    pub bound: PlanBound,
    /// Accept periods outside the 1 s .. 65 s window.
    pub override_range: bool,
}

impl PlanConfig {
    /// D1 = ARM_LOG_CEI every second, D2 = PQ_LOG_CEI every 16 s,
    /// D3 = CEI_ACI every 65 s.
    pub fn default_flows() -> Vec<FlowSpec> {
        vec![
            FlowSpec {
                class: MessageClass::D1,
                kind: RecordKind::ArmLog,
                period_us: SECOND_US,
            },
            FlowSpec {
                class: MessageClass::D2,
                kind: RecordKind::PqLog,
                period_us: 16 * SECOND_US,
            },
            FlowSpec {
                class: MessageClass::D3,
                kind: RecordKind::CeiAci,
                period_us: 65 * SECOND_US,
            },
        ]
    }
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            sources: vec![1, 2, 3],
            flows: Self::default_flows(),
            jitter_us: 0,
            bound: PlanBound::Duration {
                duration_us: 3600 * SECOND_US,
            },
            override_range: false,
        }
    }
}

/// One (source, message class) flow of the emulated client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FlowPlan {
    pub source_id: u16,
    pub class: MessageClass,
    pub kind: RecordKind,
    pub period_us: u64,
    pub jitter_us: u64,
    pub count: u64,
}

impl FlowPlan {
    /// Seed of this flow's private RNG stream.
    pub fn flow_seed(&self, campaign_seed: u64) -> u64 {
        seed::derive_seed(&[
            campaign_seed,
            u64::from(self.source_id),
            u64::from(self.class.code()),
        ])
    }

    /// Send times of envelopes `0..count`.
    pub fn emission_times(&self, campaign_seed: u64) -> Vec<u64> {
        let mut rng = seed::stream(&[self.flow_seed(campaign_seed)]);
        let jitter = self.jitter_us as i64;
        (0..self.count)
            .map(|k| {
                let nominal = k * self.period_us;
                if jitter == 0 {
                    nominal
                } else {
                    nominal.saturating_add_signed(rng.random_range(-jitter..=jitter))
                }
            })
            .collect()
    }

    /// The `seq`-th envelope of the flow, stamped with `at_us`.
    pub fn envelope(&self, seq: u64, at_us: u64, campaign_seed: u64) -> TelemetryEnvelope {
        let record = generate_record(self.kind, self.source_id, at_us, campaign_seed)
            .expect("plan sources are validated by build_plan");
        TelemetryEnvelope::new(
            self.source_id,
            self.class,
            seq,
            at_us,
            serialize_record(&record),
        )
    }
}

pub type MessagePlan = Vec<FlowPlan>;

pub fn build_plan(config: &PlanConfig) -> Result<MessagePlan, TelemetryError> {
    let mut plan = Vec::with_capacity(config.sources.len() * config.flows.len());
    for (i, spec) in config.flows.iter().enumerate() {
        if config.flows[..i].iter().any(|s| s.class == spec.class) {
            return Err(TelemetryError::DuplicateFlow(spec.class));
        }
        let in_window = (PERIOD_RANGE_US.0..=PERIOD_RANGE_US.1).contains(&spec.period_us);
        if spec.period_us == 0 || (!in_window && !config.override_range) {
            return Err(TelemetryError::PeriodOutOfRange {
                class: spec.class,
                period_us: spec.period_us,
            });
        }
        if config.jitter_us.saturating_mul(2) >= spec.period_us {
            return Err(TelemetryError::InvalidJitter {
                class: spec.class,
                jitter_us: config.jitter_us,
            });
        }
    }
    for &source_id in &config.sources {
        if !(1..=3).contains(&source_id) {
            return Err(TelemetryError::InvalidSource(source_id));
        }
        for spec in &config.flows {
            let count = match config.bound {
                PlanBound::Count(n) => n,
                PlanBound::Duration { duration_us } => duration_us.div_ceil(spec.period_us),
            };
            plan.push(FlowPlan {
                source_id,
                class: spec.class,
                kind: spec.kind,
                period_us: spec.period_us,
                jitter_us: config.jitter_us,
                count,
            });
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Emission {
    pub at_us: u64,
    /// Index into the plan.
    pub flow: usize,
    pub seq: u64,
}

/// All emissions of `plan` merged in send order; ties go to the lower flow
/// index, then the lower sequence number.
pub fn schedule(plan: &[FlowPlan], campaign_seed: u64) -> Vec<Emission> {
    let mut out: Vec<Emission> = plan
        .iter()
        .enumerate()
        .flat_map(|(flow, fp)| {
            fp.emission_times(campaign_seed)
                .into_iter()
                .enumerate()
                .map(move |(seq, at_us)| Emission {
                    at_us,
                    flow,
                    seq: seq as u64,
                })
        })
        .collect();
    out.sort_by_key(|e| (e.at_us, e.flow, e.seq));
    out
}
