//! Campaign orchestration: runs the throughput, echo and application phases
//! over the virtual or the socket backend and assembles the report.

mod config;
mod report;
mod sockets;
mod virt;

use std::collections::BTreeMap;
use std::io;
use std::time::{Duration, Instant};

use serde::Serialize;

pub use config::{
    parse_config, Backend, CampaignConfig, ConfigError, HubConfig, LinkDirection, NodeConfig,
    Phase, PlanBoundSetting, PlanSettings, ProbeConfig, RadioConfig, Scenario, StreamConfig,
    ThroughputConfig, Thresholds,
};
pub use report::{emit_report, ReportFormat, DEFAULT_FORMATS};

use crate::iec::MessageClass;
use crate::measure::{
    loss_table, transport_table, Bucket, FlowId, FlowLedger, LedgerSummary, LossTable, RttSummary,
    ThroughputSummary,
};
use crate::netem::{Direction, LinkStats, TraceRecord};
use crate::radio::{cpe_points, CpePoint};
use crate::seed;
use crate::telemetry::{build_plan, MessagePlan, SECOND_US};
use crate::transport::TransportRole;

/// Idle time between consecutive runs on the virtual clock.
pub const GAP_US: u64 = SECOND_US;
/// Modelled IP + UDP header bytes per datagram.
pub const UDP_OVERHEAD: usize = 28;

#[derive(Debug, thiserror::Error)]
pub enum CampaignError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("report output failed: {0}")]
    Output(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThroughputResult {
    pub node: String,
    pub direction: LinkDirection,
    /// Shaped rate of the link under test.
    pub target_bps: f64,
    pub frame_bytes: usize,
    pub window_us: u64,
    pub complete_windows: usize,
    pub summary: Option<ThroughputSummary>,
    pub error: Option<String>,
    #[serde(skip)]
    pub buckets: Vec<Bucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RttResult {
    pub node: String,
    pub probes: u64,
    pub answered: u64,
    pub loss_fraction: f64,
    pub summary: Option<RttSummary>,
    pub error: Option<String>,
    /// `(probe_seq, rtt_us)` in answer order.
    #[serde(skip)]
    pub samples: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkReport {
    pub name: String,
    pub stats: LinkStats,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdCheck {
    pub name: String,
    pub limit: f64,
    /// Worst value over the measured flows or runs; absent when nothing
    /// was measured.
    pub observed: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub link_names: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignReport {
    pub name: String,
    pub seed: u64,
    pub backend: Backend,
    pub scenario: Scenario,
    pub phases: Vec<Phase>,
    pub config: CampaignConfig,
    pub loss_tables: Vec<LossTable>,
    pub flows: Vec<LedgerSummary>,
    pub throughput: Vec<ThroughputResult>,
    pub rtt: Vec<RttResult>,
    pub coverage: Vec<CpePoint<f64>>,
    pub coverage_error: Option<String>,
    pub links: Vec<LinkReport>,
    pub checks: Vec<ThresholdCheck>,
    /// Arrivals at the hub that failed to decode.
    pub malformed_frames: u64,
    pub notes: Vec<String>,
    pub virtual_runtime_us: Option<u64>,
    #[serde(skip)]
    pub wall_runtime: Duration,
    #[serde(skip)]
    pub trace: Option<Trace>,
}

impl CampaignReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn flow(&self, flow: FlowId) -> Option<&LedgerSummary> {
        self.flows.iter().find(|f| f.flow == flow)
    }
}

/// Ledgers for every configured flow, transports in config order, then
/// flows in plan order.
pub(crate) struct Ledgers {
    pub plan: MessagePlan,
    pub transports: Vec<TransportRole>,
    pub ledgers: Vec<FlowLedger>,
}

impl Ledgers {
    fn new(cfg: &CampaignConfig) -> Result<Self, ConfigError> {
        let plan = build_plan(&cfg.plan_config()?).map_err(|e| ConfigError::InvalidValue {
            key: "plan".into(),
            reason: e.to_string(),
        })?;
        let ledgers = cfg
            .transports
            .iter()
            .flat_map(|&t| {
                plan.iter()
                    .map(move |fp| FlowLedger::new(FlowId::new(fp.source_id, fp.class, t)))
            })
            .collect();
        Ok(Self {
            plan,
            transports: cfg.transports.clone(),
            ledgers,
        })
    }

    pub fn index(&self, transport: usize, flow: usize) -> usize {
        transport * self.plan.len() + flow
    }

    pub fn find(&mut self, transport: usize, source_id: u16, class: MessageClass) -> Option<&mut FlowLedger> {
        let flow = self
            .plan
            .iter()
            .position(|fp| fp.source_id == source_id && fp.class == class)?;
        let i = self.index(transport, flow);
        self.ledgers.get_mut(i)
    }
}

/// What a backend hands back besides the ledgers it filled in.
#[derive(Default)]
pub(crate) struct Measurements {
    pub throughput: Vec<ThroughputResult>,
    pub rtt: Vec<RttResult>,
    pub links: Vec<LinkReport>,
    pub malformed_frames: u64,
    pub notes: Vec<String>,
    pub virtual_runtime_us: Option<u64>,
    pub trace: Option<Trace>,
}

/// Node groups that run together: one per node when isolated, a single
/// group otherwise.
pub(crate) fn batches(cfg: &CampaignConfig, members: impl Fn(&NodeConfig) -> bool) -> Vec<Vec<usize>> {
    let nodes: Vec<usize> = cfg
        .active_nodes()
        .filter(|(_, n)| members(n))
        .map(|(i, _)| i)
        .collect();
    match cfg.scenario {
        Scenario::Isolated => nodes.into_iter().map(|i| vec![i]).collect(),
        Scenario::Simultaneous if nodes.is_empty() => Vec::new(),
        Scenario::Simultaneous => vec![nodes],
    }
}

/// Link rate for `node` in `direction` when `sharing` nodes load the uplink
/// at the same time.
pub(crate) fn link_rate(cfg: &CampaignConfig, node: usize, direction: Direction, sharing: usize) -> f64 {
    let link = &cfg.nodes[node].link;
    match direction {
        Direction::Down => link.rate_bps_down,
        Direction::Up => match cfg.uplink_capacity_bps {
            Some(cap) => link.rate_bps_up.min(cap / sharing.max(1) as f64),
            None => link.rate_bps_up,
        },
    }
}

pub(crate) fn link_seed(campaign_seed: u64, tag: &str, node: usize, direction: Direction) -> [u64; 4] {
    let dir = match direction {
        Direction::Up => 0,
        Direction::Down => 1,
    };
    [campaign_seed, seed::label(tag), node as u64, dir]
}

pub(crate) fn topic(source_id: u16) -> String {
    format!("CEI{source_id:02}")
}

/// Retransmission timeout for the virtual stream: three nominal round
/// trips, at least 100 ms.
pub(crate) fn rto_us(cfg: &CampaignConfig, node: usize) -> u64 {
    if let Some(ms) = cfg.stream.rto_ms {
        return ((ms * 1000.0).round() as u64).max(1);
    }
    let l = &cfg.nodes[node].link;
    let rtt_us = 2.0 * (l.base_delay_ms + l.jitter_ms) * 1000.0;
    ((3.0 * rtt_us).round() as u64).max(100_000)
}

pub(crate) fn direction_of(d: LinkDirection) -> Direction {
    match d {
        LinkDirection::Up => Direction::Up,
        LinkDirection::Down => Direction::Down,
    }
}

/// Runs every configured phase and seals the report. Per-flow failures
/// end up inside the report; only setup problems are errors.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport, CampaignError> {
    cfg.validate()?;
    let started = Instant::now();
    let mut ledgers = Ledgers::new(cfg)?;
    let m = match cfg.backend {
        Backend::Virtual => virt::run(cfg, &mut ledgers),
        Backend::Sockets => sockets::run(cfg, &mut ledgers)?,
    };
    let mut notes = m.notes;

    let ran_app = cfg.phases.contains(&Phase::Application);
    let mut loss_tables = Vec::new();
    if ran_app {
        for &t in &cfg.transports {
            match loss_table(&ledgers.ledgers, t) {
                Ok(table) => loss_tables.push(table),
                Err(e) => notes.push(format!("{} loss table skipped: {e}", t.label())),
            }
        }
        if cfg.transports.len() == TransportRole::ALL.len() {
            match transport_table(&ledgers.ledgers, MessageClass::D1) {
                Ok(table) => loss_tables.push(table),
                Err(e) => notes.push(format!("transport table skipped: {e}")),
            }
        }
    }

    let (coverage, coverage_error) = match cpe_points(&cfg.hub_radio(), &cfg.node_radios(), &cfg.radio.budget) {
        Ok(points) => (points, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };

    let flows: Vec<LedgerSummary> = if ran_app {
        ledgers.ledgers.iter().map(FlowLedger::summary).collect()
    } else {
        Vec::new()
    };
    let checks = threshold_checks(cfg, &flows, &m.throughput, &m.rtt);

    Ok(CampaignReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        backend: cfg.backend,
        scenario: cfg.scenario,
        phases: cfg.phases.clone(),
        config: cfg.clone(),
        loss_tables,
        flows,
        throughput: m.throughput,
        rtt: m.rtt,
        coverage,
        coverage_error,
        links: m.links,
        checks,
        malformed_frames: m.malformed_frames,
        notes,
        virtual_runtime_us: m.virtual_runtime_us,
        wall_runtime: started.elapsed(),
        trace: m.trace,
    })
}

fn worst(values: impl Iterator<Item = Option<f64>>, max: bool) -> (Option<f64>, bool) {
    let mut out: Option<f64> = None;
    let mut any_missing = false;
    for v in values {
        match v {
            Some(v) => {
                out = Some(match out {
                    Some(o) if max => o.max(v),
                    Some(o) => o.min(v),
                    None => v,
                })
            }
            None => any_missing = true,
        }
    }
    (out, any_missing)
}

fn threshold_checks(
    cfg: &CampaignConfig,
    flows: &[LedgerSummary],
    throughput: &[ThroughputResult],
    rtt: &[RttResult],
) -> Vec<ThresholdCheck> {
    let t = &cfg.thresholds;
    let mut checks = Vec::new();
    // pooled over each inverter's flows, like a row of the loss tables
    let loss = |role: TransportRole| {
        let mut per_source: BTreeMap<u16, (u64, u64)> = BTreeMap::new();
        for f in flows.iter().filter(|f| f.flow.transport == role) {
            let e = per_source.entry(f.flow.source_id).or_default();
            e.0 += f.tx_count;
            e.1 += f.tx_count.saturating_sub(f.rx_unique_count);
        }
        worst(
            per_source
                .values()
                .filter(|(tx, _)| *tx > 0)
                .map(|&(tx, lost)| Some(lost as f64 / tx as f64 * 100.0)),
            true,
        )
    };
    let mut push = |name: &str, limit: f64, (observed, missing): (Option<f64>, bool), max: bool| {
        let within = observed.is_none_or(|v| if max { v <= limit } else { v >= limit });
        checks.push(ThresholdCheck {
            name: name.to_owned(),
            limit,
            observed,
            passed: within && !missing,
        });
    };
    if let Some(limit) = t.max_tcp_loss_pct {
        push("max_tcp_loss_pct", limit, loss(TransportRole::Stream), true);
    }
    if let Some(limit) = t.max_udp_loss_pct {
        push("max_udp_loss_pct", limit, loss(TransportRole::Datagram), true);
    }
    if let Some(limit) = t.max_rtt_avg_ms {
        let v = worst(rtt.iter().map(|r| r.summary.map(|s| s.avg_us / 1000.0)), true);
        push("max_rtt_avg_ms", limit, v, true);
    }
    if let Some(limit) = t.min_throughput_fraction {
        let v = worst(
            throughput
                .iter()
                .map(|r| r.summary.as_ref().map(|s| s.avg_bps / r.target_bps)),
            false,
        );
        push("min_throughput_fraction", limit, v, false);
    }
    checks
}
