//! Streaming measurement: per-flow sequence ledgers, throughput series and
//! echo RTT statistics, plus the inverter-by-message loss tables.

mod ledger;
mod rtt;
mod table;
mod throughput;

pub use ledger::{FlowId, FlowLedger, LedgerSummary, RxClass, DEFAULT_WINDOW};
pub use rtt::{nearest_rank, RttStats, RttSummary};
pub use table::{format_pct, loss_table, transport_table, LossRow, LossTable};
pub use throughput::{Bucket, ThroughputSeries, ThroughputSummary};

use crate::iec::MessageClass;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeasureError {
    #[error("envelope from source {source_id} class {class} does not belong to flow {ledger}")]
    WrongFlow {
        ledger: FlowId,
        source_id: u16,
        class: MessageClass,
    },
    #[error("flow {0} transmitted nothing")]
    EmptyFlow(FlowId),
    #[error("no complete throughput window")]
    NoCompleteWindow,
    #[error("all {probes} probes lost")]
    AllProbesLost { probes: u64, loss_fraction: f64 },
    #[error("flow {0} missing from the campaign")]
    MissingFlow(FlowId),
}
