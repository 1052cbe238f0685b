#![allow(dead_code)]

use std::io::Cursor;
use std::panic::{self, AssertUnwindSafe};

use gridbench_core::iec::{
    decode_goose, decode_sv, encode_goose, encode_sv, unwrap_routable, wrap_routable, Asdu,
    GooseEntry, GooseMessage, GooseValue, MessageClass, PayloadKind, RoutableHeader, SmpSynch,
    SvMessage, TelemetryEnvelope,
};
use gridbench_core::telemetry::{
    deserialize_record, serialize_record, ArmLogRecord, CeiAciRecord, PqLogRecord, RecordKind,
    TelemetryRecord, PQ_METRIC_COUNT,
};
use gridbench_core::transport::{
    decode_datagram, decode_frame, decode_probe, encode_datagram, encode_frame, encode_probe,
    EchoProbe, FramedStream,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---- strategies ----

pub fn class() -> impl Strategy<Value = MessageClass> {
    prop_oneof![Just(MessageClass::D1), Just(MessageClass::D2), Just(MessageClass::D3)]
}

/// Up to 8 printable characters, so at most 32 UTF-8 bytes.
fn sv_id() -> impl Strategy<Value = String> {
    "\\PC{1,8}"
}

fn ident() -> impl Strategy<Value = String> {
    "\\PC{1,40}"
}

pub fn asdu_fields() -> impl Strategy<Value = (u16, [i32; 8], u16)> {
    (any::<u16>(), any::<[i32; 8]>(), any::<u16>())
}

pub fn sv_message() -> impl Strategy<Value = SvMessage> {
    let synch = prop_oneof![Just(SmpSynch::None), Just(SmpSynch::Local), Just(SmpSynch::Global)];
    (
        any::<u16>(),
        synch,
        any::<u32>(),
        prop::collection::btree_map(sv_id(), asdu_fields(), 1..=8),
    )
        .prop_map(|(app_id, synch, conf_rev, asdus)| {
            let asdus = asdus
                .into_iter()
                .map(|(id, (cnt, m, q))| Asdu::new(id, cnt, m, q).unwrap())
                .collect();
            SvMessage::new(app_id, synch, conf_rev, asdus).unwrap()
        })
}

pub fn goose_value() -> impl Strategy<Value = GooseValue> {
    prop_oneof![
        any::<bool>().prop_map(GooseValue::Bool),
        any::<i32>().prop_map(GooseValue::Int),
        (any::<i32>(), any::<u8>()).prop_map(|(mantissa, decimals)| GooseValue::Fixed { mantissa, decimals }),
    ]
}

pub fn goose_message() -> impl Strategy<Value = GooseMessage> {
    (
        ident(),
        any::<u32>(),
        any::<u32>(),
        any::<u32>(),
        prop::collection::btree_map(ident(), goose_value(), 1..12),
    )
        .prop_map(|(go_id, st, sq, ttl, entries)| {
            let entries = entries.into_iter().map(|(n, v)| GooseEntry::new(n, v)).collect();
            GooseMessage::new(go_id, st, sq, ttl, entries).unwrap()
        })
}

pub fn routable() -> impl Strategy<Value = (RoutableHeader, Vec<u8>)> {
    let kind = prop_oneof![Just(PayloadKind::Sv), Just(PayloadKind::Goose)];
    (any::<u32>(), 1..=u8::MAX, kind, prop::collection::vec(any::<u8>(), 0..600)).prop_map(
        |(session_id, hop_limit, payload_kind, payload)| {
            let header = RoutableHeader {
                session_id,
                hop_limit,
                payload_kind,
            };
            (header, payload)
        },
    )
}

pub fn envelope() -> impl Strategy<Value = TelemetryEnvelope> {
    (
        any::<u16>(),
        class(),
        any::<u64>(),
        any::<u64>(),
        prop::collection::vec(any::<u8>(), 0..700),
    )
        .prop_map(|(src, class, seq, at, payload)| TelemetryEnvelope::new(src, class, seq, at, payload))
}

pub fn record() -> impl Strategy<Value = TelemetryRecord> {
    let arm = (
        any::<u64>(),
        1u8..=3,
        any::<[i32; 4]>(),
        any::<[i32; 9]>(),
        any::<[i32; 2]>(),
        any::<[u32; 2]>(),
    )
        .prop_map(|(ts, id, dc, ac, t, flags)| {
            TelemetryRecord::ArmLog(ArmLogRecord {
                timestamp_us: ts,
                cei_id: id,
                u_dc_mv: dc[0],
                i_dc_ma: dc[1],
                u_rms_mv: [ac[0], ac[1], ac[2]],
                i_rms_ma: [ac[3], ac[4], ac[5]],
                s_rms_va: [ac[6], ac[7], ac[8]],
                t_igbt_cc: t[0],
                t_ambient_cc: t[1],
                status_flags: flags[0],
                fault_flags: flags[1],
            })
        });
    let aci = (any::<u64>(), 1u8..=3, any::<[i32; 4]>(), any::<[bool; 6]>(), any::<bool>()).prop_map(
        |(ts, id, temps, relays, connected)| {
            TelemetryRecord::CeiAci(CeiAciRecord {
                timestamp_us: ts,
                cei_id: id,
                box_temps_cc: temps,
                relays,
                connected,
            })
        },
    );
    let pq = (any::<u64>(), 1u8..=3, prop::collection::vec(any::<i32>(), PQ_METRIC_COUNT)).prop_map(
        |(ts, id, m)| {
            TelemetryRecord::PqLog(PqLogRecord {
                timestamp_us: ts,
                cei_id: id,
                metrics: m.try_into().unwrap(),
            })
        },
    );
    prop_oneof![arm, aci, pq]
}

pub fn datagram() -> impl Strategy<Value = (String, Vec<u8>)> {
    (
        "[A-Za-z0-9/_.-]{1,64}",
        prop::collection::vec(any::<u8>(), 0..2048),
    )
}

pub fn probe() -> impl Strategy<Value = EchoProbe> {
    (any::<u64>(), any::<u64>(), prop::collection::vec(any::<u8>(), 0..1500)).prop_map(
        |(probe_seq, sent_at_us, pad)| EchoProbe {
            probe_seq,
            sent_at_us,
            pad,
        },
    )
}

pub fn frame() -> impl Strategy<Value = (u8, Vec<u8>)> {
    (any::<u8>(), prop::collection::vec(any::<u8>(), 0..4096))
}

// ---- roundtrip checks shared by the property tests and the acceptance run ----

pub fn sv_roundtrips(m: &SvMessage) -> bool {
    let bytes = encode_sv(m);
    bytes.len() == m.encoded_len() && decode_sv(&bytes).as_ref() == Ok(m)
}

pub fn goose_roundtrips(m: &GooseMessage) -> bool {
    let bytes = encode_goose(m);
    bytes.len() == m.encoded_len() && decode_goose(&bytes).as_ref() == Ok(m)
}

pub fn routable_roundtrips(h: RoutableHeader, payload: &[u8]) -> bool {
    let frame = wrap_routable(h, payload).unwrap();
    unwrap_routable(&frame) == Ok((h, payload))
}

pub fn envelope_roundtrips(e: &TelemetryEnvelope) -> bool {
    let bytes = e.encode();
    bytes.len() == e.encoded_len()
        && TelemetryEnvelope::decode(&bytes).is_ok_and(|d| d == *e && d.verify())
}

pub fn record_roundtrips(r: &TelemetryRecord) -> bool {
    let bytes = serialize_record(r);
    bytes.len() == r.kind().payload_len() && deserialize_record(r.kind(), &bytes).as_ref() == Ok(r)
}

pub fn datagram_roundtrips(topic: &str, payload: &[u8]) -> bool {
    let bytes = encode_datagram(topic, payload).unwrap();
    matches!(decode_datagram(&bytes), Ok((t, p)) if t == topic && p == payload)
}

pub fn probe_roundtrips(p: &EchoProbe) -> bool {
    let bytes = encode_probe(p).unwrap();
    bytes.len() == p.encoded_len() && decode_probe(&bytes).as_ref() == Ok(p)
}

pub fn frame_roundtrips(kind: u8, body: &[u8]) -> bool {
    let bytes = encode_frame(kind, body).unwrap();
    match decode_frame(&bytes) {
        Ok(Some((f, used))) => used == bytes.len() && f.kind == kind && f.body == body,
        _ => false,
    }
}

// ---- fuzzing ----

/// A decoder under fuzz: a name, valid encodings to mutate, and the call.
pub struct FuzzTarget {
    pub name: &'static str,
    pub corpus: Vec<Vec<u8>>,
    pub decode: fn(&[u8]),
}

fn sample<T: std::fmt::Debug>(strategy: impl Strategy<Value = T>, n: usize, seed: u64) -> Vec<T> {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let mut seed_bytes = [0u8; 32];
    seed_bytes[..8].copy_from_slice(&seed.to_le_bytes());
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &seed_bytes);
    let mut runner = TestRunner::new_with_rng(Config::default(), rng);
    (0..n)
        .map(|_| strategy.new_tree(&mut runner).unwrap().current())
        .collect()
}

pub fn fuzz_targets(seed: u64) -> Vec<FuzzTarget> {
    let n = 32;
    let records = |kind: RecordKind| -> Vec<Vec<u8>> {
        sample(record(), 3 * n, seed)
            .into_iter()
            .filter(|r| r.kind() == kind)
            .map(|r| serialize_record(&r))
            .collect()
    };
    vec![
        FuzzTarget {
            name: "sv",
            corpus: sample(sv_message(), n, seed).iter().map(encode_sv).collect(),
            decode: |b| drop(decode_sv(b)),
        },
        FuzzTarget {
            name: "goose",
            corpus: sample(goose_message(), n, seed).iter().map(encode_goose).collect(),
            decode: |b| drop(decode_goose(b)),
        },
        FuzzTarget {
            name: "routable",
            corpus: sample(routable(), n, seed)
                .iter()
                .map(|(h, p)| wrap_routable(*h, p).unwrap())
                .collect(),
            decode: |b| drop(unwrap_routable(b)),
        },
        FuzzTarget {
            name: "envelope",
            corpus: sample(envelope(), n, seed).iter().map(TelemetryEnvelope::encode).collect(),
            decode: |b| {
                if let Ok(e) = TelemetryEnvelope::decode(b) {
                    e.verify();
                }
            },
        },
        FuzzTarget {
            name: "record/arm_log",
            corpus: records(RecordKind::ArmLog),
            decode: |b| drop(deserialize_record(RecordKind::ArmLog, b)),
        },
        FuzzTarget {
            name: "record/cei_aci",
            corpus: records(RecordKind::CeiAci),
            decode: |b| drop(deserialize_record(RecordKind::CeiAci, b)),
        },
        FuzzTarget {
            name: "record/pq_log",
            corpus: records(RecordKind::PqLog),
            decode: |b| drop(deserialize_record(RecordKind::PqLog, b)),
        },
        FuzzTarget {
            name: "datagram",
            corpus: sample(datagram(), n, seed)
                .iter()
                .map(|(t, p)| encode_datagram(t, p).unwrap())
                .collect(),
            decode: |b| drop(decode_datagram(b)),
        },
        FuzzTarget {
            name: "probe",
            corpus: sample(probe(), n, seed).iter().map(|p| encode_probe(p).unwrap()).collect(),
            decode: |b| drop(decode_probe(b)),
        },
        FuzzTarget {
            name: "frame",
            corpus: sample(frame(), n, seed)
                .iter()
                .map(|(k, b)| encode_frame(*k, b).unwrap())
                .collect(),
            decode: |b| drop(decode_frame(b)),
        },
        FuzzTarget {
            name: "framed_stream",
            corpus: sample(frame(), n, seed)
                .iter()
                .map(|(k, b)| encode_frame(*k, b).unwrap())
                .collect(),
            decode: |b| {
                let mut s = FramedStream::new(Cursor::new(b.to_vec()));
                while s.recv().is_ok() {}
            },
        },
    ]
}

/// Random bytes, or a valid encoding with a few byte-level mutations.
pub fn fuzz_input(rng: &mut ChaCha8Rng, corpus: &[Vec<u8>], buf: &mut Vec<u8>) {
    buf.clear();
    if corpus.is_empty() || rng.random_bool(0.25) {
        let len = rng.random_range(0..=300);
        buf.resize(len, 0);
        rng.fill(&mut buf[..]);
        return;
    }
    buf.extend_from_slice(&corpus[rng.random_range(0..corpus.len())]);
    for _ in 0..rng.random_range(1..=4) {
        let len = buf.len();
        match rng.random_range(0..6) {
            0 if len > 0 => {
                let i = rng.random_range(0..len);
                buf[i] ^= 1 << rng.random_range(0..8);
            }
            1 if len > 0 => {
                let i = rng.random_range(0..len);
                buf[i] = rng.random();
            }
            2 => buf.truncate(rng.random_range(0..=len)),
            3 => {
                let at = rng.random_range(0..=len);
                let extra: Vec<u8> = (0..rng.random_range(1..16)).map(|_| rng.random()).collect();
                buf.splice(at..at, extra);
            }
            4 if len >= 4 => {
                // length fields are the likeliest crash sites
                let i = rng.random_range(0..len - 3);
                let v = [0u32, 1, 0x7FFF_FFFF, u32::MAX][rng.random_range(0..4)];
                buf[i..i + 4].copy_from_slice(&v.to_be_bytes());
            }
            _ => {
                let i = rng.random_range(0..=len);
                buf.truncate(i);
            }
        }
    }
}

/// Feeds `n` inputs to the target and returns the inputs that panicked
/// (at most a handful are kept).
pub fn fuzz(target: &FuzzTarget, n: u64, seed: u64) -> (u64, Vec<Vec<u8>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::new();
    let mut panics = 0;
    let mut kept = Vec::new();
    for _ in 0..n {
        fuzz_input(&mut rng, &target.corpus, &mut buf);
        let input = &buf;
        if panic::catch_unwind(AssertUnwindSafe(|| (target.decode)(input))).is_err() {
            panics += 1;
            if kept.len() < 4 {
                kept.push(buf.clone());
            }
        }
    }
    (panics, kept)
}

// ---- campaign configs ----

pub const PAPER_CONFIG: &str = include_str!("../../../../campaigns/paper.toml");

pub fn paper_config_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../campaigns/paper.toml")
}

/// `[campaign]` and `[hub]` header for hand-built test configs.
pub fn header(seed: u64, scenario: &str, phases: &[&str], transports: &[&str]) -> String {
    let list = |v: &[&str]| v.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(", ");
    format!(
        "[campaign]\nname = \"test\"\nseed = {seed}\nscenario = \"{scenario}\"\n\
         phases = [{}]\ntransports = [{}]\n\n[hub]\nname = \"PC0\"\n",
        list(phases),
        list(transports)
    )
}

/// One `[[node]]` table; `link` is the body of its `[node.link]` table.
pub fn node(name: &str, source_id: Option<u16>, x_m: f64, link: &str) -> String {
    let src = source_id.map(|s| format!("source_id = {s}\n")).unwrap_or_default();
    format!("\n[[node]]\nname = \"{name}\"\n{src}x_m = {x_m}\n\n[node.link]\n{link}\n")
}
