//! Campaign over real loopback (or LAN) sockets in wall-clock time.
//!
//! The kernel does not impair loopback traffic, so the datagram phase
//! applies each node's emulated uplink in user space: every datagram is
//! passed through a [`Link`] seeded exactly like the virtual run, and only
//! frames the link delivers are sent. Stream flows run over plain TCP.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, UdpSocket};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::{
    batches, direction_of, link_rate, link_seed, topic, CampaignConfig, CampaignError, Ledgers,
    LinkDirection, LinkReport, Measurements, Phase, RttResult, ThroughputResult, UDP_OVERHEAD,
};
use crate::iec::TelemetryEnvelope;
use crate::measure::{RttStats, ThroughputSeries};
use crate::netem::{Direction, Link, Transmission};
use crate::seed;
use crate::telemetry::{schedule, Emission};
use crate::transport::{
    echo_probe, echo_serve, encode_datagram, publish, FramedStream, Subscriber, Subscription,
    TransportError, TransportRole,
};

/// Datagrams a sender may have outstanding before it waits for the hub.
const MAX_OUTSTANDING: u64 = 256;
const DRAIN_TIMEOUT: Duration = Duration::from_secs(1);

fn unavailable(what: &str, e: impl std::fmt::Display) -> CampaignError {
    CampaignError::BackendUnavailable(format!("{what}: {e}"))
}

fn micros_since(epoch: Instant) -> u64 {
    epoch.elapsed().as_micros() as u64
}

fn sleep_until(epoch: Instant, at_us: u64) {
    let due = epoch + Duration::from_micros(at_us);
    if let Some(wait) = due.checked_duration_since(Instant::now()) {
        thread::sleep(wait);
    }
}

pub(crate) fn run(cfg: &CampaignConfig, ledgers: &mut Ledgers) -> Result<Measurements, CampaignError> {
    let mut out = Measurements::default();
    for phase in Phase::ALL {
        if !cfg.phases.contains(&phase) {
            continue;
        }
        match phase {
            Phase::Throughput => {
                for batch in batches(cfg, |_| true) {
                    for &d in &cfg.throughput.directions {
                        throughput(cfg, &batch, d, &mut out)?;
                    }
                }
            }
            Phase::Echo => {
                for batch in batches(cfg, |_| true) {
                    echo(cfg, &batch, &mut out)?;
                }
            }
            Phase::Application => {
                for t in 0..ledgers.transports.len() {
                    for batch in batches(cfg, |n| n.source_id.is_some()) {
                        match ledgers.transports[t] {
                            TransportRole::Datagram => datagrams(cfg, ledgers, t, &batch, &mut out)?,
                            TransportRole::Stream => stream(cfg, ledgers, t, &batch, &mut out)?,
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn bind_tcp(cfg: &CampaignConfig) -> Result<TcpListener, CampaignError> {
    TcpListener::bind((cfg.hub.host.as_str(), 0)).map_err(|e| unavailable("tcp bind", e))
}

fn bind_udp(cfg: &CampaignConfig) -> Result<UdpSocket, CampaignError> {
    UdpSocket::bind((cfg.hub.host.as_str(), 0)).map_err(|e| unavailable("udp bind", e))
}

/// One TCP connection per node, paced at the link rate by the sender;
/// the receiver buckets payload bytes.
fn throughput(
    cfg: &CampaignConfig,
    batch: &[usize],
    dir: LinkDirection,
    out: &mut Measurements,
) -> Result<(), CampaignError> {
    let tp = &cfg.throughput;
    let duration = Duration::from_secs_f64(tp.duration_s);
    let window = ((tp.window_ms * 1000.0).round() as u64).max(1);
    let write = tp.stream_write_bytes.max(1);
    let listeners: Vec<TcpListener> = batch.iter().map(|_| bind_tcp(cfg)).collect::<Result<_, _>>()?;
    let rates: Vec<f64> = batch
        .iter()
        .map(|&n| link_rate(cfg, n, direction_of(dir), batch.len()))
        .collect();
    let epoch = Instant::now();
    let results: Vec<Result<ThroughputSeries, TransportError>> = thread::scope(|s| {
        let handles: Vec<_> = listeners
            .iter()
            .zip(&rates)
            .map(|(listener, &rate)| {
                let addr = listener.local_addr();
                let sender = s.spawn(move || -> Result<(), TransportError> {
                    let mut conn = TcpStream::connect(addr?)?;
                    conn.set_nodelay(true)?;
                    let chunk = vec![0x5au8; write];
                    let mut sent = 0u64;
                    while epoch.elapsed() < duration {
                        conn.write_all(&chunk)?;
                        sent += chunk.len() as u64;
                        let due_us = (sent as f64 * 8.0 / rate * 1e6) as u64;
                        sleep_until(epoch, due_us);
                    }
                    conn.shutdown(Shutdown::Write)?;
                    Ok(())
                });
                let receiver = s.spawn(move || -> Result<ThroughputSeries, TransportError> {
                    let (mut conn, _) = listener.accept()?;
                    let mut series = ThroughputSeries::new(0, window);
                    let mut buf = vec![0u8; 64 * 1024];
                    loop {
                        let n = conn.read(&mut buf)?;
                        if n == 0 {
                            break;
                        }
                        series.record(micros_since(epoch), n as u64);
                    }
                    series.close(duration.as_micros() as u64);
                    Ok(series)
                });
                (sender, receiver)
            })
            .collect();
        handles
            .into_iter()
            .map(|(tx, rx)| {
                let sent = tx.join().expect("throughput sender panicked");
                let got = rx.join().expect("throughput receiver panicked");
                sent.and(got)
            })
            .collect()
    });
    for ((&node, rate), r) in batch.iter().zip(rates).zip(results) {
        let (summary, error, complete, buckets) = match r {
            Ok(series) => {
                let s = series.summary();
                (
                    s.as_ref().ok().cloned(),
                    s.err().map(|e| e.to_string()),
                    series.complete_windows(),
                    series.buckets().to_vec(),
                )
            }
            Err(e) => (None, Some(e.to_string()), 0, Vec::new()),
        };
        out.throughput.push(ThroughputResult {
            node: cfg.nodes[node].name.clone(),
            direction: dir,
            target_bps: rate,
            frame_bytes: write,
            window_us: window,
            complete_windows: complete,
            summary,
            error,
            buckets,
        });
    }
    Ok(())
}

fn echo(cfg: &CampaignConfig, batch: &[usize], out: &mut Measurements) -> Result<(), CampaignError> {
    let p = &cfg.probe;
    let interval = Duration::from_secs_f64(p.interval_ms / 1000.0);
    let timeout = Duration::from_secs_f64(p.timeout_ms / 1000.0);
    let servers: Vec<UdpSocket> = batch.iter().map(|_| bind_udp(cfg)).collect::<Result<_, _>>()?;
    let clients: Vec<UdpSocket> = batch.iter().map(|_| bind_udp(cfg)).collect::<Result<_, _>>()?;
    let stop = AtomicBool::new(false);
    let results: Vec<Result<RttStats, TransportError>> = thread::scope(|s| {
        let serving: Vec<_> = servers.iter().map(|sock| s.spawn(|| echo_serve(sock, &stop))).collect();
        let probing: Vec<_> = clients
            .iter()
            .zip(&servers)
            .map(|(sock, server)| {
                s.spawn(move || {
                    let target = server.local_addr()?;
                    echo_probe(sock, target, p.count, interval, p.pad_bytes, timeout)
                })
            })
            .collect();
        let results = probing
            .into_iter()
            .map(|h| h.join().expect("probe thread panicked"))
            .collect();
        stop.store(true, Ordering::Relaxed);
        for h in serving {
            let _ = h.join().expect("echo server panicked");
        }
        results
    });
    for (&node, r) in batch.iter().zip(results) {
        let name = cfg.nodes[node].name.clone();
        out.rtt.push(match r {
            Ok(stats) => {
                let summary = stats.summary();
                RttResult {
                    node: name,
                    probes: stats.probes(),
                    answered: stats.samples().len() as u64,
                    loss_fraction: stats.loss_fraction(),
                    error: summary.as_ref().err().map(ToString::to_string),
                    summary: summary.ok(),
                    samples: stats.samples().to_vec(),
                }
            }
            Err(e) => RttResult {
                node: name,
                probes: 0,
                answered: 0,
                loss_fraction: 0.0,
                summary: None,
                error: Some(e.to_string()),
                samples: Vec::new(),
            },
        });
    }
    Ok(())
}

/// Emissions of `source` in send order.
fn node_emissions(ledgers: &Ledgers, all: &[Emission], source: u16) -> Vec<Emission> {
    all.iter()
        .copied()
        .filter(|e| ledgers.plan[e.flow].source_id == source)
        .collect()
}

fn deliver(ledgers: &mut Ledgers, t_idx: usize, bytes: &[u8], malformed: &mut u64) {
    match TelemetryEnvelope::decode(bytes) {
        Ok(env) => match ledgers.find(t_idx, env.source_id, env.message_class) {
            Some(l) => {
                let _ = l.record_rx(&env);
            }
            None => *malformed += 1,
        },
        Err(_) => *malformed += 1,
    }
}

fn add_tx(ledgers: &mut Ledgers, t_idx: usize, counts: &[u64]) {
    for (flow, &n) in counts.iter().enumerate() {
        let l = &mut ledgers.ledgers[t_idx * counts.len() + flow];
        let total = l.tx_count() + n;
        l.set_tx_count(total);
    }
}

fn datagrams(
    cfg: &CampaignConfig,
    ledgers: &mut Ledgers,
    t_idx: usize,
    batch: &[usize],
    out: &mut Measurements,
) -> Result<(), CampaignError> {
    let hub = bind_udp(cfg)?;
    let hub_addr = hub.local_addr()?;
    let all = schedule(&ledgers.plan, cfg.seed);
    let plan = ledgers.plan.clone();
    let sent = AtomicU64::new(0);
    let received = AtomicU64::new(0);
    let done = AtomicU64::new(0);
    let epoch = Instant::now();
    let tag = format!("app-{}", TransportRole::Datagram.as_str());
    let mut sub = Subscriber::new(Subscription::new("*", 4096).expect("wildcard subscription"));

    let node_results: Vec<Result<(Vec<u64>, Link), TransportError>> = thread::scope(|s| {
        let handles: Vec<_> = batch
            .iter()
            .map(|&node| {
                let source = cfg.nodes[node].source_id.expect("batch holds telemetry nodes");
                let ems = node_emissions(ledgers, &all, source);
                let (plan, sent, received, done, tag) = (&plan, &sent, &received, &done, &tag);
                s.spawn(move || -> Result<(Vec<u64>, Link), TransportError> {
                    let result = (|| {
                        let sock = UdpSocket::bind((cfg.hub.host.as_str(), 0))?;
                        let mut link = Link::new(
                            &cfg.nodes[node].link,
                            Direction::Up,
                            seed::stream(&link_seed(cfg.seed, tag, node, Direction::Up)),
                        );
                        let rate = link_rate(cfg, node, Direction::Up, batch.len());
                        link.set_rate(rate.round().max(1.0) as u64);
                        let mut counts = vec![0u64; plan.len()];
                        for e in ems {
                            let fp = &plan[e.flow];
                            let env = fp.envelope(e.seq, e.at_us, cfg.seed).encode();
                            let bytes = encode_datagram(&topic(source), &env)?;
                            counts[e.flow] += 1;
                            sleep_until(epoch, e.at_us);
                            if let Transmission::Dropped(_) = link.transmit(UDP_OVERHEAD + bytes.len(), e.at_us) {
                                continue;
                            }
                            let wait_from = Instant::now();
                            while sent.load(Ordering::Acquire) - received.load(Ordering::Acquire) > MAX_OUTSTANDING
                                && wait_from.elapsed() < DRAIN_TIMEOUT
                            {
                                thread::sleep(Duration::from_micros(200));
                            }
                            sent.fetch_add(1, Ordering::AcqRel);
                            publish(&sock, hub_addr, &topic(source), &env)?;
                        }
                        Ok((counts, link))
                    })();
                    done.fetch_add(1, Ordering::AcqRel);
                    result
                })
            })
            .collect();

        // hub: drain until every node finished and the socket stays quiet
        let mut quiet_since: Option<Instant> = None;
        let mut malformed = 0;
        loop {
            let n = sub.pump(&hub, Duration::from_millis(20)).unwrap_or(0);
            while let Some((_, payload)) = sub.pop() {
                received.fetch_add(1, Ordering::AcqRel);
                deliver(ledgers, t_idx, &payload, &mut malformed);
            }
            let finished = done.load(Ordering::Acquire) as usize == batch.len();
            let caught_up = received.load(Ordering::Acquire) >= sent.load(Ordering::Acquire);
            if finished && (caught_up || quiet_since.is_some_and(|q| q.elapsed() > DRAIN_TIMEOUT)) {
                break;
            }
            quiet_since = if n == 0 { quiet_since.or(Some(Instant::now())) } else { None };
        }
        out.malformed_frames += malformed + sub.malformed();
        handles
            .into_iter()
            .map(|h| h.join().expect("datagram sender panicked"))
            .collect()
    });

    for (&node, r) in batch.iter().zip(node_results) {
        match r {
            Ok((counts, link)) => {
                add_tx(ledgers, t_idx, &counts);
                out.links.push(LinkReport {
                    name: format!("{tag}/{}/up", cfg.nodes[node].name),
                    stats: link.stats(),
                });
            }
            Err(e) => out
                .notes
                .push(format!("{}: datagram sender failed: {e}", cfg.nodes[node].name)),
        }
    }
    Ok(())
}

enum Arrival {
    Frame(Vec<u8>),
    Failed(String),
}

fn stream(
    cfg: &CampaignConfig,
    ledgers: &mut Ledgers,
    t_idx: usize,
    batch: &[usize],
    out: &mut Measurements,
) -> Result<(), CampaignError> {
    let listener = bind_tcp(cfg)?;
    let addr: SocketAddr = listener.local_addr()?;
    let all = schedule(&ledgers.plan, cfg.seed);
    let plan = ledgers.plan.clone();
    let epoch = Instant::now();
    let (tx, rx) = mpsc::channel::<Arrival>();

    let counts: Vec<(u16, Result<Vec<u64>, TransportError>)> = thread::scope(|s| {
        let senders: Vec<_> = batch
            .iter()
            .map(|&node| {
                let source = cfg.nodes[node].source_id.expect("batch holds telemetry nodes");
                let ems = node_emissions(ledgers, &all, source);
                let plan = &plan;
                let h = s.spawn(move || -> Result<Vec<u64>, TransportError> {
                    let conn = TcpStream::connect(addr)?;
                    conn.set_nodelay(true)?;
                    let mut framed = FramedStream::new(conn);
                    let mut counts = vec![0u64; plan.len()];
                    for e in ems {
                        let fp = &plan[e.flow];
                        let env = fp.envelope(e.seq, e.at_us, cfg.seed).encode();
                        counts[e.flow] += 1;
                        sleep_until(epoch, e.at_us);
                        framed.send(fp.class.code(), &env)?;
                    }
                    framed.flush()?;
                    framed.into_inner().shutdown(Shutdown::Write)?;
                    Ok(counts)
                });
                (source, h)
            })
            .collect();
        for _ in 0..batch.len() {
            let Ok((conn, _)) = listener.accept() else { break };
            let tx = tx.clone();
            s.spawn(move || {
                let mut framed = FramedStream::new(conn);
                loop {
                    match framed.recv() {
                        Ok(f) => {
                            if tx.send(Arrival::Frame(f.body)).is_err() {
                                break;
                            }
                        }
                        Err(TransportError::ConnectionClosed) => break,
                        Err(e) => {
                            let _ = tx.send(Arrival::Failed(e.to_string()));
                            break;
                        }
                    }
                }
            });
        }
        drop(tx);
        let mut malformed = 0;
        for arrival in rx.iter() {
            match arrival {
                Arrival::Frame(body) => deliver(ledgers, t_idx, &body, &mut malformed),
                Arrival::Failed(e) => out.notes.push(format!("stream receive failed: {e}")),
            }
        }
        out.malformed_frames += malformed;
        senders
            .into_iter()
            .map(|(source, h)| (source, h.join().expect("stream sender panicked")))
            .collect()
    });

    for (source, r) in counts {
        match r {
            Ok(c) => add_tx(ledgers, t_idx, &c),
            Err(e) => {
                // the sender stopped early: charge the whole plan to the
                // flows and keep the error with them
                let msg = format!("stream sender failed: {e}");
                let planned: Vec<u64> = plan
                    .iter()
                    .map(|fp| if fp.source_id == source { fp.count } else { 0 })
                    .collect();
                add_tx(ledgers, t_idx, &planned);
                for (fi, fp) in plan.iter().enumerate() {
                    if fp.source_id == source {
                        let i = ledgers.index(t_idx, fi);
                        ledgers.ledgers[i].record_error(msg.clone());
                    }
                }
            }
        }
    }
    Ok(())
}
