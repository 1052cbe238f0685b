//! Report files. Names and column layouts are documented in
//! `docs/reports.md`; changing them is a format break.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{CampaignError, CampaignReport};
use crate::measure::format_pct;
use crate::netem::write_trace_csv;
use crate::radio::write_points_csv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ReportFormat {
    Summary,
    Ledgers,
    Throughput,
    Rtt,
    Json,
    Coverage,
    Trace,
}

pub const DEFAULT_FORMATS: [ReportFormat; 5] = [
    ReportFormat::Summary,
    ReportFormat::Ledgers,
    ReportFormat::Throughput,
    ReportFormat::Rtt,
    ReportFormat::Json,
];

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Summary => "summary.txt",
            ReportFormat::Ledgers => "ledgers.csv",
            ReportFormat::Throughput => "throughput.csv",
            ReportFormat::Rtt => "rtt.csv",
            ReportFormat::Json => "report.json",
            ReportFormat::Coverage => "coverage.csv",
            ReportFormat::Trace => "trace.csv",
        }
    }
}

fn out_err(e: impl std::fmt::Display) -> CampaignError {
    CampaignError::Output(e.to_string())
}

/// Writes the requested files into `dir` (created if needed) and returns
/// their paths. A trace file is only written when the report carries one.
pub fn emit_report(
    report: &CampaignReport,
    dir: &Path,
    formats: &[ReportFormat],
) -> Result<Vec<PathBuf>, CampaignError> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for &format in formats {
        let path = dir.join(format.file_name());
        if format == ReportFormat::Trace && report.trace.is_none() {
            continue;
        }
        let mut out = BufWriter::new(File::create(&path)?);
        match format {
            ReportFormat::Summary => out.write_all(render_summary(report).as_bytes())?,
            ReportFormat::Ledgers => write_ledgers(&mut out, report)?,
            ReportFormat::Throughput => write_throughput(&mut out, report)?,
            ReportFormat::Rtt => write_rtt(&mut out, report)?,
            ReportFormat::Json => {
                serde_json::to_writer_pretty(&mut out, report).map_err(out_err)?;
                out.write_all(b"\n")?;
            }
            ReportFormat::Coverage => write_points_csv(&mut out, &report.coverage).map_err(out_err)?,
            ReportFormat::Trace => {
                let trace = report.trace.as_ref().expect("checked above");
                write_trace_csv(&mut out, &trace.records, &trace.link_names).map_err(out_err)?;
            }
        }
        out.flush()?;
        written.push(path);
    }
    Ok(written)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_ledgers<W: Write>(out: W, report: &CampaignReport) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "flow",
        "source_id",
        "class",
        "transport",
        "tx_count",
        "rx_unique_count",
        "first_deliveries",
        "reorder_count",
        "duplicate_count",
        "integrity_failures",
        "highest_seq_seen",
        "loss_rate",
        "loss_rate_excluding_corrupt",
        "errors",
    ])
    .map_err(out_err)?;
    for f in &report.flows {
        w.write_record([
            f.flow.to_string(),
            f.flow.source_id.to_string(),
            f.flow.class.to_string(),
            f.flow.transport.as_str().to_owned(),
            f.tx_count.to_string(),
            f.rx_unique_count.to_string(),
            f.first_deliveries.to_string(),
            f.reorder_count.to_string(),
            f.duplicate_count.to_string(),
            f.integrity_failures.to_string(),
            opt(f.highest_seq_seen),
            opt(f.loss_rate),
            opt(f.loss_rate_excluding_corrupt),
            f.errors.join("; "),
        ])
        .map_err(out_err)?;
    }
    w.flush()?;
    Ok(())
}

fn write_throughput<W: Write>(out: W, report: &CampaignReport) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "node",
        "direction",
        "window_start_us",
        "window_us",
        "bytes",
        "frames",
        "bps",
        "complete",
    ])
    .map_err(out_err)?;
    for r in &report.throughput {
        let secs = r.window_us as f64 / 1e6;
        for (i, b) in r.buckets.iter().enumerate() {
            w.write_record([
                r.node.clone(),
                r.direction.to_string(),
                b.start_us.to_string(),
                r.window_us.to_string(),
                b.bytes.to_string(),
                b.frames.to_string(),
                format!("{:.1}", 8.0 * b.bytes as f64 / secs),
                (i < r.complete_windows).to_string(),
            ])
            .map_err(out_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_rtt<W: Write>(out: W, report: &CampaignReport) -> Result<(), CampaignError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["node", "probe_seq", "rtt_us"]).map_err(out_err)?;
    for r in &report.rtt {
        for &(seq, rtt) in &r.samples {
            w.write_record([r.node.clone(), seq.to_string(), rtt.to_string()])
                .map_err(out_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn ms(us: f64) -> String {
    format!("{:.3}", us / 1000.0)
}

fn rate(bps: f64) -> String {
    if bps >= 1e6 {
        format!("{:.3} Mbps", bps / 1e6)
    } else {
        format!("{:.3} Kbps", bps / 1e3)
    }
}

/// Human-readable summary: loss tables, then per-node throughput, RTT and
/// coverage, then threshold checks.
pub fn render_summary(r: &CampaignReport) -> String {
    let mut s = String::new();
    let phases: Vec<&str> = r.phases.iter().map(|p| p.as_str()).collect();
    let _ = writeln!(s, "campaign {}", r.name);
    let _ = writeln!(
        s,
        "seed {}, backend {}, scenario {}, phases {}",
        r.seed,
        r.backend,
        r.scenario,
        phases.join(",")
    );
    if let Some(v) = r.virtual_runtime_us {
        let _ = writeln!(s, "virtual time {:.3} s", v as f64 / 1e6);
    }

    for t in &r.loss_tables {
        s.push('\n');
        s.push_str(&t.render());
    }

    if !r.flows.is_empty() {
        let mut rows = vec![["flow", "tx", "rx", "reordered", "duplicates", "corrupt", "loss"]
            .map(String::from)
            .to_vec()];
        for f in &r.flows {
            rows.push(vec![
                f.flow.to_string(),
                f.tx_count.to_string(),
                f.rx_unique_count.to_string(),
                f.reorder_count.to_string(),
                f.duplicate_count.to_string(),
                f.integrity_failures.to_string(),
                f.loss_rate.map_or("—".to_owned(), |l| format_pct(l * 100.0)),
            ]);
        }
        s.push_str("\nFlows\n");
        s.push_str(&table(&rows));
    }

    if !r.throughput.is_empty() {
        let mut rows = vec![["node", "direction", "target", "avg", "min", "max", "windows"]
            .map(String::from)
            .to_vec()];
        for t in &r.throughput {
            let (avg, min, max) = match &t.summary {
                Some(x) => (rate(x.avg_bps), rate(x.min_bps), rate(x.max_bps)),
                None => ("—".into(), "—".into(), "—".into()),
            };
            rows.push(vec![
                t.node.clone(),
                t.direction.to_string(),
                rate(t.target_bps),
                avg,
                min,
                max,
                t.complete_windows.to_string(),
            ]);
        }
        s.push_str("\nThroughput\n");
        s.push_str(&table(&rows));
    }

    if !r.rtt.is_empty() {
        let mut rows = vec![[
            "node", "probes", "answered", "loss", "min ms", "avg ms", "p50 ms", "p95 ms", "max ms",
        ]
        .map(String::from)
        .to_vec()];
        for t in &r.rtt {
            let mut row = vec![
                t.node.clone(),
                t.probes.to_string(),
                t.answered.to_string(),
                format_pct(t.loss_fraction * 100.0),
            ];
            match &t.summary {
                Some(x) => row.extend([
                    ms(x.min_us as f64),
                    ms(x.avg_us),
                    ms(x.p50_us as f64),
                    ms(x.p95_us as f64),
                    ms(x.max_us as f64),
                ]),
                None => row.extend(std::iter::repeat_n("—".to_owned(), 5)),
            }
            rows.push(row);
        }
        s.push_str("\nRound trip\n");
        s.push_str(&table(&rows));
    }

    s.push_str("\nCoverage\n");
    match &r.coverage_error {
        Some(e) => {
            let _ = writeln!(s, "unavailable: {e}");
        }
        None => {
            let mut rows = vec![["node", "distance m", "prx dBm", "sinr dB", "class"]
                .map(String::from)
                .to_vec()];
            for p in &r.coverage {
                rows.push(vec![
                    p.name.clone(),
                    format!("{:.1}", p.distance_m),
                    format!("{:.2}", p.prx_dbm),
                    format!("{:.2}", p.sinr_db),
                    p.class.as_str().to_owned(),
                ]);
            }
            s.push_str(&table(&rows));
        }
    }

    if !r.checks.is_empty() {
        let mut rows = vec![["check", "limit", "observed", "result"].map(String::from).to_vec()];
        for c in &r.checks {
            rows.push(vec![
                c.name.clone(),
                c.limit.to_string(),
                c.observed.map_or("—".to_owned(), |v| format!("{v:.6}")),
                if c.passed { "PASS" } else { "FAIL" }.to_owned(),
            ]);
        }
        s.push_str("\nChecks\n");
        s.push_str(&table(&rows));
    }

    if r.malformed_frames > 0 || !r.notes.is_empty() {
        s.push_str("\nNotes\n");
        if r.malformed_frames > 0 {
            let _ = writeln!(s, "{} malformed arrivals at the hub", r.malformed_frames);
        }
        for n in &r.notes {
            let _ = writeln!(s, "{n}");
        }
    }
    s
}
