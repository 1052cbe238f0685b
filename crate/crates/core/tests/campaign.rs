mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;

use gridbench_core::campaign::{
    emit_report, parse_config, run_campaign, Backend, CampaignReport, ReportFormat, Scenario,
    DEFAULT_FORMATS,
};
use gridbench_core::iec::MessageClass;
use gridbench_core::transport::TransportRole;

use common::*;

fn small_app(seed: u64, scenario: &str, transports: &[&str]) -> String {
    let mut text = header(seed, scenario, &["application"], transports);
    text += &node("Inverter01", Some(1), 100.0, "target_loss = 0.03\njitter_ms = 1.0");
    text += &node("Inverter02", Some(2), 200.0, "target_loss = 0.01");
    text += "\n[plan]\ncount = 120\noverride_range = true\njitter_ms = 2\n\
             d1_period_s = 0.01\nd2_period_s = 0.011\nd3_period_s = 0.013\n";
    text
}

fn run(text: &str) -> CampaignReport {
    run_campaign(&parse_config(text).unwrap()).unwrap()
}

#[test]
fn paper_config_shape() {
    let cfg = parse_config(PAPER_CONFIG).unwrap();
    assert_eq!(cfg.nodes.len(), 5);
    assert_eq!(cfg.hub.name, "PC0");
    let sources: BTreeSet<u16> = cfg.nodes.iter().filter_map(|n| n.source_id).collect();
    assert_eq!(sources, BTreeSet::from([1, 2, 3]));
    assert_eq!(cfg.backend, Backend::Virtual);
    assert_eq!(cfg.scenario, Scenario::Simultaneous);
    assert_eq!(cfg.transports, TransportRole::ALL.to_vec());
    // three inverters times three message classes
    assert_eq!(cfg.plan_config().unwrap().sources.len() * cfg.plan_config().unwrap().flows.len(), 9);
    assert!(fs::metadata(paper_config_path()).is_ok());
}

#[test]
fn paper_campaign_meets_its_thresholds() {
    let report = run(PAPER_CONFIG);
    assert_eq!(report.flows.len(), 18);
    for f in report.flows.iter().filter(|f| f.flow.transport == TransportRole::Stream) {
        assert_eq!(f.loss_rate, Some(0.0), "{}", f.flow);
    }
    for f in report.flows.iter().filter(|f| f.flow.class == MessageClass::D1) {
        assert_eq!(f.tx_count, 21_600);
    }
    for c in &report.checks {
        assert!(c.passed, "{c:?}");
    }
    assert_eq!(report.coverage.len(), 5);
    assert!(report.coverage_error.is_none());
}

#[test]
fn flows_match_config_one_to_one() {
    let report = run(&small_app(3, "simultaneous", &["tcp", "udp"]));
    let got: Vec<_> = report
        .flows
        .iter()
        .map(|f| (f.flow.source_id, f.flow.class, f.flow.transport))
        .collect();
    let unique: BTreeSet<_> = got.iter().map(|(s, c, t)| (*s, c.code(), t.as_str())).collect();
    assert_eq!(unique.len(), got.len(), "duplicate flow rows");
    let mut want = BTreeSet::new();
    for t in TransportRole::ALL {
        for s in [1u16, 2] {
            for c in [MessageClass::D1, MessageClass::D2, MessageClass::D3] {
                want.insert((s, c.code(), t.as_str()));
            }
        }
    }
    assert_eq!(unique, want);
    for f in &report.flows {
        assert_eq!(f.tx_count, 120);
    }
}

#[test]
fn ledger_csv_reload_recomputes_loss() {
    let report = run(&small_app(4, "simultaneous", &["tcp", "udp"]));
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path(), &DEFAULT_FORMATS).unwrap();
    assert_eq!(files.len(), DEFAULT_FORMATS.len());

    let mut rdr = csv::Reader::from_path(dir.path().join(ReportFormat::Ledgers.file_name())).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let (tx, rx, loss, flow) = (col("tx_count"), col("rx_unique_count"), col("loss_rate"), col("flow"));
    let mut rows = 0;
    let mut lossy = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let tx: u64 = rec[tx].parse().unwrap();
        let rx: u64 = rec[rx].parse().unwrap();
        let loss: f64 = rec[loss].parse().unwrap();
        assert_eq!(loss, (tx - rx) as f64 / tx as f64, "{}", &rec[flow]);
        lossy += usize::from(loss > 0.0);
        rows += 1;
    }
    assert_eq!(rows, report.flows.len());
    assert!(lossy > 0, "udp at 1-3% loss should lose something");
}

#[test]
fn report_json_carries_flows_and_config() {
    let report = run(&small_app(5, "isolated", &["udp"]));
    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path(), &[ReportFormat::Json]).unwrap();
    let text = fs::read_to_string(dir.path().join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["seed"], 5);
    assert_eq!(v["flows"].as_array().unwrap().len(), 6);
    assert_eq!(v["config"]["nodes"].as_array().unwrap().len(), 2);
    assert!(v.get("wall_runtime").is_none());
}

#[test]
fn all_probes_lost_renders_dash() {
    let mut text = header(6, "isolated", &["echo"], &["udp"]);
    text += &node("Inverter01", Some(1), 100.0, "sinr_db = 0.0\nloss_theta_db = 100.0");
    text += "\n[probe]\ncount = 20\n";
    let report = run(&text);
    let r = &report.rtt[0];
    assert_eq!((r.probes, r.answered), (20, 0));
    assert!(r.summary.is_none());
    assert!(r.error.is_some());

    let dir = tempfile::tempdir().unwrap();
    emit_report(&report, dir.path(), &[ReportFormat::Summary, ReportFormat::Rtt]).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.txt")).unwrap();
    let line = summary.lines().find(|l| l.starts_with("Inverter01")).unwrap();
    assert!(line.contains("100.0%"), "{line}");
    assert_eq!(line.matches('—').count(), 5, "{line}");
    let rtt = fs::read_to_string(dir.path().join("rtt.csv")).unwrap();
    assert_eq!(rtt, "node,probe_seq,rtt_us\n");
}

#[test]
fn isolated_runs_do_not_overlap() {
    let mut text = header(7, "isolated", &["throughput", "echo", "application"], &["tcp", "udp"]);
    text = text.replace("[campaign]\n", "[campaign]\ntrace = true\n");
    for (i, x) in [100.0, 200.0, 300.0].into_iter().enumerate() {
        text += &node(&format!("Inverter0{}", i + 1), Some(i as u16 + 1), x, "jitter_ms = 3.0");
    }
    text += "\n[plan]\ncount = 30\noverride_range = true\n\
             d1_period_s = 0.05\nd2_period_s = 0.06\nd3_period_s = 0.07\n\
             \n[probe]\ncount = 20\n\n[throughput]\nduration_s = 1.0\n";
    let report = run(&text);
    let trace = report.trace.as_ref().expect("trace requested");
    assert!(!trace.records.is_empty());

    // (phase tag, node) -> [first, last] trace time
    let mut spans: BTreeMap<(String, String), (u64, u64)> = BTreeMap::new();
    for r in &trace.records {
        let name = &trace.link_names[r.link.0];
        let mut parts = name.split('/');
        let (tag, node) = (parts.next().unwrap().to_owned(), parts.next().unwrap().to_owned());
        let e = spans.entry((tag, node)).or_insert((r.time_us, r.time_us));
        e.0 = e.0.min(r.time_us);
        e.1 = e.1.max(r.time_us);
    }
    let all: Vec<_> = spans.iter().collect();
    assert_eq!(all.len(), 4 * 3, "{:?}", spans.keys().collect::<Vec<_>>());
    for (i, (ka, a)) in all.iter().enumerate() {
        for (kb, b) in &all[i + 1..] {
            assert!(a.1 < b.0 || b.1 < a.0, "{ka:?} {a:?} overlaps {kb:?} {b:?}");
        }
    }
}

#[test]
fn simultaneous_runs_overlap() {
    let mut text = small_app(8, "simultaneous", &["udp"]);
    text = text.replace("[campaign]\n", "[campaign]\ntrace = true\n");
    let report = run(&text);
    let trace = report.trace.as_ref().unwrap();
    let first_tx = |node: &str| {
        trace
            .records
            .iter()
            .find(|r| trace.link_names[r.link.0].contains(node))
            .map(|r| r.time_us)
            .unwrap()
    };
    assert_eq!(first_tx("Inverter01"), first_tx("Inverter02"));
}

#[test]
fn seed_changes_udp_losses() {
    let a = run(&small_app(9, "simultaneous", &["udp"]));
    let b = run(&small_app(9, "simultaneous", &["udp"]));
    let c = run(&small_app(10, "simultaneous", &["udp"]));
    assert_eq!(a.flows, b.flows);
    assert_ne!(a.flows, c.flows);
}

#[test]
fn sockets_backend_matches_virtual_udp_ledgers() {
    let text = small_app(11, "simultaneous", &["tcp", "udp"]);
    let virt = run(&text);
    let mut cfg = parse_config(&text).unwrap();
    cfg.backend = Backend::Sockets;
    let real = run_campaign(&cfg).unwrap();
    assert_eq!(real.backend, Backend::Sockets);
    assert_eq!(virt.flows.len(), real.flows.len());
    for (v, r) in virt.flows.iter().zip(&real.flows) {
        assert_eq!(v.flow, r.flow);
        assert_eq!(v.tx_count, r.tx_count, "{}", v.flow);
        assert_eq!(v.rx_unique_count, r.rx_unique_count, "{}", v.flow);
        assert_eq!(v.loss_rate, r.loss_rate, "{}", v.flow);
        assert!(r.errors.is_empty(), "{}: {:?}", r.flow, r.errors);
    }
}
