//! Single-threaded campaign on the virtual clock. All phases share one
//! [`VirtualNet`]; every run starts [`GAP_US`] after the previous one went
//! idle, so runs never overlap in virtual time.

use std::collections::BTreeMap;

use super::{
    batches, direction_of, link_rate, link_seed, rto_us, topic, CampaignConfig, Ledgers,
    LinkReport, Measurements, Phase, RttResult, ThroughputResult, Trace, GAP_US, UDP_OVERHEAD,
};
use crate::iec::TelemetryEnvelope;
use crate::measure::{RttStats, ThroughputSeries};
use crate::netem::{Direction, LinkId, VirtualNet};
use crate::seed;
use crate::telemetry::{schedule, Emission};
use crate::transport::{
    decode_frame, decode_probe, encode_datagram, encode_frame, encode_probe, Ack, ArqReceiver,
    ArqSender, EchoProbe, Segment, Subscriber, Subscription, TimeoutAction, TransportRole, ACK_LEN,
};

/// Frames a saturating sender keeps queued in the shaper.
const SATURATION_BACKLOG: usize = 8;

enum Ev {
    TpWake { slot: usize },
    TpArrive { slot: usize, bytes: usize },
    ProbeSend { slot: usize },
    ProbeAtNode { slot: usize, bytes: Vec<u8> },
    ProbeAtHub { slot: usize, bytes: Vec<u8> },
    ProbeTimeout { slot: usize, seq: u64 },
    Emit { i: usize },
    Datagram { bytes: Vec<u8> },
    SegAtHub { slot: usize, seg: Segment },
    AckAtNode { slot: usize, ack: Ack },
    Timer { slot: usize, seg: u64, attempt: u32 },
}

struct Campaign<'a> {
    cfg: &'a CampaignConfig,
    net: VirtualNet<Ev>,
    out: Measurements,
}

pub(crate) fn run(cfg: &CampaignConfig, ledgers: &mut Ledgers) -> Measurements {
    let net = if cfg.trace {
        VirtualNet::new().with_trace()
    } else {
        VirtualNet::new()
    };
    let mut c = Campaign {
        cfg,
        net,
        out: Measurements::default(),
    };
    let mut start = 0;
    for phase in Phase::ALL {
        if !cfg.phases.contains(&phase) {
            continue;
        }
        match phase {
            Phase::Throughput => {
                for batch in batches(cfg, |_| true) {
                    for &d in &cfg.throughput.directions {
                        start = c.throughput(&batch, direction_of(d), start) + GAP_US;
                    }
                }
            }
            Phase::Echo => {
                for batch in batches(cfg, |_| true) {
                    start = c.echo(&batch, start) + GAP_US;
                }
            }
            Phase::Application => {
                for t in 0..ledgers.transports.len() {
                    for batch in batches(cfg, |n| n.source_id.is_some()) {
                        start = c.application(ledgers, t, &batch, start) + GAP_US;
                    }
                }
            }
        }
    }
    let names = c.net.link_names();
    c.out.links = names
        .iter()
        .enumerate()
        .map(|(i, name)| LinkReport {
            name: name.clone(),
            stats: c.net.stats(LinkId(i)),
        })
        .collect();
    c.out.virtual_runtime_us = Some(c.net.now_us());
    if cfg.trace {
        c.out.trace = Some(Trace {
            records: c.net.take_trace(),
            link_names: names,
        });
    }
    c.out
}

impl Campaign<'_> {
    fn add_link(&mut self, tag: &str, node: usize, direction: Direction, sharing: usize) -> LinkId {
        let n = &self.cfg.nodes[node];
        let rng = seed::stream(&link_seed(self.cfg.seed, tag, node, direction));
        let id = self.net.add_link(
            format!("{tag}/{}/{}", n.name, direction.as_str()),
            &n.link,
            direction,
            rng,
        );
        let rate = link_rate(self.cfg, node, direction, sharing);
        self.net.link_mut(id).set_rate(rate.round().max(1.0) as u64);
        id
    }

    /// Saturates each node's link for the configured duration. Returns the
    /// time the network went idle.
    fn throughput(&mut self, batch: &[usize], direction: Direction, start: u64) -> u64 {
        let tp = &self.cfg.throughput;
        let duration = (tp.duration_s * 1e6).round() as u64;
        let window = ((tp.window_ms * 1000.0).round() as u64).max(1);
        let end = start + duration;
        let links: Vec<LinkId> = batch
            .iter()
            .map(|&n| self.add_link("throughput", n, direction, batch.len()))
            .collect();
        let mut series: Vec<ThroughputSeries> = batch.iter().map(|_| ThroughputSeries::new(start, window)).collect();
        for slot in 0..batch.len() {
            self.net.schedule(start, Ev::TpWake { slot });
        }
        let frame = tp.frame_bytes;
        while let Some((t, ev)) = self.net.next_event() {
            match ev {
                Ev::TpWake { slot } => {
                    if t >= end {
                        continue;
                    }
                    let link = links[slot];
                    while self.net.link_mut(link).backlog(t) < SATURATION_BACKLOG {
                        self.net.send(link, frame, t, Ev::TpArrive { slot, bytes: frame });
                    }
                    let wake = self.net.link(link).busy_until_us().max(t + 1);
                    self.net.schedule(wake, Ev::TpWake { slot });
                }
                Ev::TpArrive { slot, bytes } => series[slot].record(t, bytes as u64),
                _ => unreachable!("throughput phase event"),
            }
        }
        for (slot, s) in series.iter_mut().enumerate() {
            s.close(end);
            let summary = s.summary();
            self.out.throughput.push(ThroughputResult {
                node: self.cfg.nodes[batch[slot]].name.clone(),
                direction: match direction {
                    Direction::Up => super::LinkDirection::Up,
                    Direction::Down => super::LinkDirection::Down,
                },
                target_bps: self.net.link(links[slot]).rate_bps() as f64,
                frame_bytes: frame,
                window_us: window,
                complete_windows: s.complete_windows(),
                error: summary.as_ref().err().map(ToString::to_string),
                summary: summary.ok(),
                buckets: s.buckets().to_vec(),
            });
        }
        self.net.now_us()
    }

    /// Hub-to-node echo probes, answered by each node over its uplink.
    fn echo(&mut self, batch: &[usize], start: u64) -> u64 {
        let probe = &self.cfg.probe;
        let interval = ((probe.interval_ms * 1000.0).round() as u64).max(1);
        let timeout = ((probe.timeout_ms * 1000.0).round() as u64).max(1);
        let down: Vec<LinkId> = batch
            .iter()
            .map(|&n| self.add_link("echo", n, Direction::Down, batch.len()))
            .collect();
        let up: Vec<LinkId> = batch
            .iter()
            .map(|&n| self.add_link("echo", n, Direction::Up, batch.len()))
            .collect();
        let mut next_seq = vec![0u64; batch.len()];
        let mut pending: Vec<BTreeMap<u64, u64>> = vec![BTreeMap::new(); batch.len()];
        let mut stats: Vec<RttStats> = vec![RttStats::new(); batch.len()];
        if probe.count > 0 {
            for slot in 0..batch.len() {
                self.net.schedule(start, Ev::ProbeSend { slot });
            }
        }
        while let Some((t, ev)) = self.net.next_event() {
            match ev {
                Ev::ProbeSend { slot } => {
                    let seq = next_seq[slot];
                    next_seq[slot] += 1;
                    let bytes = encode_probe(&EchoProbe::new(seq, t, probe.pad_bytes))
                        .expect("probe padding validated with the config");
                    pending[slot].insert(seq, t);
                    let size = UDP_OVERHEAD + bytes.len();
                    self.net.send(down[slot], size, t, Ev::ProbeAtNode { slot, bytes });
                    self.net.schedule(t + timeout, Ev::ProbeTimeout { slot, seq });
                    if next_seq[slot] < probe.count {
                        self.net.schedule(t + interval, Ev::ProbeSend { slot });
                    }
                }
                Ev::ProbeAtNode { slot, bytes } => {
                    let size = UDP_OVERHEAD + bytes.len();
                    self.net.send(up[slot], size, t, Ev::ProbeAtHub { slot, bytes });
                }
                Ev::ProbeAtHub { slot, bytes } => match decode_probe(&bytes) {
                    Ok(p) => {
                        if pending[slot].remove(&p.probe_seq).is_some() {
                            stats[slot].record_answer(p.probe_seq, t - p.sent_at_us);
                        }
                    }
                    Err(_) => self.out.malformed_frames += 1,
                },
                Ev::ProbeTimeout { slot, seq } => {
                    if pending[slot].remove(&seq).is_some() {
                        stats[slot].record_timeout();
                    }
                }
                _ => unreachable!("echo phase event"),
            }
        }
        for (slot, s) in stats.into_iter().enumerate() {
            let summary = s.summary();
            self.out.rtt.push(RttResult {
                node: self.cfg.nodes[batch[slot]].name.clone(),
                probes: s.probes(),
                answered: s.samples().len() as u64,
                loss_fraction: s.loss_fraction(),
                error: summary.as_ref().err().map(ToString::to_string),
                summary: summary.ok(),
                samples: s.samples().to_vec(),
            });
        }
        self.net.now_us()
    }

    /// Telemetry flows of the batch's inverters over one transport.
    fn application(&mut self, ledgers: &mut Ledgers, t_idx: usize, batch: &[usize], start: u64) -> u64 {
        let cfg = self.cfg;
        let role = ledgers.transports[t_idx];
        let tag = format!("app-{}", role.as_str());
        let slot_of_source: BTreeMap<u16, usize> = batch
            .iter()
            .enumerate()
            .filter_map(|(slot, &n)| cfg.nodes[n].source_id.map(|s| (s, slot)))
            .collect();
        let up: Vec<LinkId> = batch
            .iter()
            .map(|&n| self.add_link(&tag, n, Direction::Up, batch.len()))
            .collect();
        let down: Vec<LinkId> = match role {
            TransportRole::Stream => batch
                .iter()
                .map(|&n| self.add_link(&tag, n, Direction::Down, batch.len()))
                .collect(),
            TransportRole::Datagram => Vec::new(),
        };
        let plan = &ledgers.plan.clone();
        let emissions: Vec<Emission> = schedule(plan, cfg.seed)
            .into_iter()
            .filter(|e| slot_of_source.contains_key(&plan[e.flow].source_id))
            .collect();
        let mut senders: Vec<ArqSender> = batch
            .iter()
            .map(|&n| ArqSender::new(rto_us(cfg, n), cfg.stream.max_retries))
            .collect();
        let mut receivers: Vec<ArqReceiver> = batch.iter().map(|_| ArqReceiver::new()).collect();
        let mut hub = Subscriber::new(Subscription::new("*", 1024).expect("wildcard subscription"));
        if let Some(first) = emissions.first() {
            self.net.schedule(start + first.at_us, Ev::Emit { i: 0 });
        }

        while let Some((t, ev)) = self.net.next_event() {
            match ev {
                Ev::Emit { i } => {
                    let e = emissions[i];
                    if let Some(next) = emissions.get(i + 1) {
                        self.net.schedule(start + next.at_us, Ev::Emit { i: i + 1 });
                    }
                    let fp = &plan[e.flow];
                    let slot = slot_of_source[&fp.source_id];
                    let li = ledgers.index(t_idx, e.flow);
                    ledgers.ledgers[li].record_tx();
                    let env = fp.envelope(e.seq, e.at_us, cfg.seed).encode();
                    match role {
                        TransportRole::Datagram => {
                            let bytes = encode_datagram(&topic(fp.source_id), &env)
                                .expect("envelopes fit in a datagram");
                            let size = UDP_OVERHEAD + bytes.len();
                            self.net.send(up[slot], size, t, Ev::Datagram { bytes });
                        }
                        TransportRole::Stream => {
                            if senders[slot].failed() {
                                continue;
                            }
                            let frame = encode_frame(fp.class.code(), &env).expect("envelopes fit in a frame");
                            let seg = senders[slot].push(frame).expect("sender is live");
                            self.send_segment(up[slot], slot, &senders[slot], seg, t);
                        }
                    }
                }
                Ev::Datagram { bytes } => {
                    hub.offer(&bytes);
                    while let Some((_, payload)) = hub.pop() {
                        self.deliver(ledgers, t_idx, &payload);
                    }
                }
                Ev::SegAtHub { slot, seg } => {
                    let (ack, ready) = receivers[slot].on_segment(seg);
                    self.net.send(down[slot], ACK_LEN, t, Ev::AckAtNode { slot, ack });
                    for frame in ready {
                        match decode_frame(&frame) {
                            Ok(Some((f, used))) if used == frame.len() => self.deliver(ledgers, t_idx, &f.body),
                            _ => self.out.malformed_frames += 1,
                        }
                    }
                }
                Ev::AckAtNode { slot, ack } => senders[slot].on_ack(ack),
                Ev::Timer { slot, seg, attempt } => match senders[slot].on_timeout(seg, attempt) {
                    TimeoutAction::Idle => {}
                    TimeoutAction::Retransmit(s) => self.send_segment(up[slot], slot, &senders[slot], s, t),
                    TimeoutAction::Abort => {
                        let source = cfg.nodes[batch[slot]].source_id;
                        let msg = format!(
                            "stream aborted at t={t} us: segment {seg} unacknowledged after {attempt} retransmissions"
                        );
                        for (fi, fp) in plan.iter().enumerate() {
                            if Some(fp.source_id) == source {
                                let li = ledgers.index(t_idx, fi);
                                ledgers.ledgers[li].record_error(msg.clone());
                            }
                        }
                    }
                },
                _ => unreachable!("application phase event"),
            }
        }
        self.out.malformed_frames += hub.malformed();
        self.net.now_us()
    }

    fn send_segment(&mut self, link: LinkId, slot: usize, sender: &ArqSender, seg: Segment, t: u64) {
        let (n, attempt) = (seg.seg, seg.attempt);
        let size = seg.wire_len();
        self.net.send(link, size, t, Ev::SegAtHub { slot, seg });
        self.net.schedule(t + sender.timeout_us(attempt), Ev::Timer { slot, seg: n, attempt });
    }

    fn deliver(&mut self, ledgers: &mut Ledgers, t_idx: usize, bytes: &[u8]) {
        let Ok(env) = TelemetryEnvelope::decode(bytes) else {
            self.out.malformed_frames += 1;
            return;
        };
        match ledgers.find(t_idx, env.source_id, env.message_class) {
            Some(ledger) => {
                // flow matched by construction
                let _ = ledger.record_rx(&env);
            }
            None => self.out.malformed_frames += 1,
        }
    }
}
