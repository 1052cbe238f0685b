use serde::{Deserialize, Serialize};

use super::{FlowId, FlowLedger, MeasureError};
use crate::iec::MessageClass;
use crate::transport::TransportRole;

/// Loss percentages laid out like the field result tables: one row per
/// inverter, one column per message class or transport.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<LossRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub label: String,
    /// Loss in percent.
    pub cells: Vec<f64>,
}

/// Percentage with four significant digits; zero renders as `0%`.
pub fn format_pct(pct: f64) -> String {
    if pct == 0.0 {
        return "0%".to_owned();
    }
    let magnitude = pct.abs().log10().floor() as i32;
    let decimals = (3 - magnitude).clamp(0, 12) as usize;
    format!("{pct:.decimals$}%")
}

fn find(ledgers: &[FlowLedger], flow: FlowId) -> Result<&FlowLedger, MeasureError> {
    ledgers
        .iter()
        .find(|l| l.flow() == flow)
        .ok_or(MeasureError::MissingFlow(flow))
}

fn row_label(source_id: u16) -> String {
    format!("Inverter {source_id:02}")
}

fn pct(ledger: &FlowLedger) -> Result<f64, MeasureError> {
    Ok(ledger.loss_rate()? * 100.0)
}

/// Inverters 1..=3 by D1..D3 for one transport.
pub fn loss_table(ledgers: &[FlowLedger], transport: TransportRole) -> Result<LossTable, MeasureError> {
    let tag = transport.label();
    let mut rows = Vec::with_capacity(3);
    for source_id in 1..=3u16 {
        let cells = MessageClass::ALL
            .iter()
            .map(|&class| pct(find(ledgers, FlowId::new(source_id, class, transport))?))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(LossRow {
            label: row_label(source_id),
            cells,
        });
    }
    Ok(LossTable {
        title: format!("Message loss per flow ({tag})"),
        columns: MessageClass::ALL.iter().map(|c| format!("{tag} - {c}")).collect(),
        rows,
    })
}

/// Inverters 1..=3 by transport for a single message class.
pub fn transport_table(ledgers: &[FlowLedger], class: MessageClass) -> Result<LossTable, MeasureError> {
    let transports = [TransportRole::Stream, TransportRole::Datagram];
    let mut rows = Vec::with_capacity(3);
    for source_id in 1..=3u16 {
        let cells = transports
            .iter()
            .map(|&t| pct(find(ledgers, FlowId::new(source_id, class, t))?))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(LossRow {
            label: row_label(source_id),
            cells,
        });
    }
    Ok(LossTable {
        title: format!("Error rate by transport ({class})"),
        columns: transports
            .iter()
            .map(|t| format!("{} - Error Rate (%)", t.label()))
            .collect(),
        rows,
    })
}

impl LossTable {
    pub fn render(&self) -> String {
        let mut grid = vec![std::iter::once(String::new())
            .chain(self.columns.iter().cloned())
            .collect::<Vec<_>>()];
        for row in &self.rows {
            grid.push(
                std::iter::once(row.label.clone())
                    .chain(row.cells.iter().map(|&c| format_pct(c)))
                    .collect(),
            );
        }
        let widths: Vec<usize> = (0..grid[0].len())
            .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("{}\n", self.title);
        for (i, r) in grid.iter().enumerate() {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
            if i == 0 {
                let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
                out.push_str(&rule.join("-+-"));
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(transport: TransportRole, lost: &[(u16, MessageClass, u64)]) -> Vec<FlowLedger> {
        let mut out = Vec::new();
        for s in 1..=3 {
            for c in MessageClass::ALL {
                let mut l = FlowLedger::new(FlowId::new(s, c, transport));
                l.set_tx_count(10_000);
                let drop = lost
                    .iter()
                    .find(|(ls, lc, _)| *ls == s && *lc == c)
                    .map_or(0, |x| x.2);
                for seq in drop..10_000 {
                    l.classify(seq, true);
                }
                out.push(l);
            }
        }
        out
    }

    #[test]
    fn zero_loss_cells() {
        let t = loss_table(&full(TransportRole::Stream, &[]), TransportRole::Stream).unwrap();
        assert!(t.rows.iter().all(|r| r.cells.iter().all(|&c| c == 0.0)));
        let text = t.render();
        assert_eq!(text.matches("0%").count(), 9);
        assert!(text.contains("TCP - D1"));
    }

    #[test]
    fn missing_flow_named() {
        let mut ledgers = full(TransportRole::Datagram, &[]);
        ledgers.retain(|l| l.flow() != FlowId::new(2, MessageClass::D3, TransportRole::Datagram));
        match loss_table(&ledgers, TransportRole::Datagram) {
            Err(MeasureError::MissingFlow(f)) => assert_eq!(f.to_string(), "CEI02-D3-udp"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn four_significant_digits() {
        assert_eq!(format_pct(0.0), "0%");
        assert_eq!(format_pct(0.2178), "0.2178%");
        assert_eq!(format_pct(0.21669), "0.2167%");
        assert_eq!(format_pct(0.2777), "0.2777%");
        assert_eq!(format_pct(12.5), "12.50%");
        assert_eq!(format_pct(100.0), "100.0%");
    }

    #[test]
    fn transport_comparison() {
        let mut ledgers = full(TransportRole::Stream, &[]);
        ledgers.extend(full(TransportRole::Datagram, &[(1, MessageClass::D1, 22)]));
        let t = transport_table(&ledgers, MessageClass::D1).unwrap();
        assert_eq!(t.rows[0].cells[0], 0.0);
        assert!((t.rows[0].cells[1] - 0.22).abs() < 1e-12);
    }
}
