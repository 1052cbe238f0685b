use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use super::TransportError;
use crate::iec::WIRE_VERSION;
use crate::measure::RttStats;
use crate::wire::Reader;

pub const ECHO_MAGIC: [u8; 2] = *b"EP";
/// Magic, version, probe_seq, sent_at and pad length.
pub const ECHO_HEADER_LEN: usize = 21;

/// Round-trip probe. The echo side returns it byte for byte.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EchoProbe {
    pub probe_seq: u64,
    pub sent_at_us: u64,
    pub pad: Vec<u8>,
}

impl EchoProbe {
    pub fn new(probe_seq: u64, sent_at_us: u64, pad_len: usize) -> Self {
        Self {
            probe_seq,
            sent_at_us,
            pad: vec![0u8; pad_len],
        }
    }

    pub fn encoded_len(&self) -> usize {
        ECHO_HEADER_LEN + self.pad.len()
    }
}

pub fn encode_probe(p: &EchoProbe) -> Result<Vec<u8>, TransportError> {
    let pad_len = u16::try_from(p.pad.len())
        .map_err(|_| TransportError::PayloadTooLargeForDatagram(p.pad.len()))?;
    let mut out = Vec::with_capacity(p.encoded_len());
    out.extend_from_slice(&ECHO_MAGIC);
    out.push(WIRE_VERSION);
    out.extend_from_slice(&p.probe_seq.to_be_bytes());
    out.extend_from_slice(&p.sent_at_us.to_be_bytes());
    out.extend_from_slice(&pad_len.to_be_bytes());
    out.extend_from_slice(&p.pad);
    Ok(out)
}

pub fn decode_probe(buf: &[u8]) -> Result<EchoProbe, TransportError> {
    let short = |_| TransportError::MalformedFrame("truncated probe");
    let mut r = Reader::new(buf);
    if r.take(2).map_err(short)? != ECHO_MAGIC {
        return Err(TransportError::MalformedFrame("bad probe magic"));
    }
    if r.u8().map_err(short)? != WIRE_VERSION {
        return Err(TransportError::MalformedFrame("unsupported probe version"));
    }
    let probe_seq = r.u64().map_err(short)?;
    let sent_at_us = r.u64().map_err(short)?;
    let n = usize::from(r.u16().map_err(short)?);
    let pad = r.take(n).map_err(short)?.to_vec();
    if r.remaining() != 0 {
        return Err(TransportError::MalformedFrame("trailing bytes after probe"));
    }
    Ok(EchoProbe {
        probe_seq,
        sent_at_us,
        pad,
    })
}

/// Answers probes on `socket` until `stop` is set. Returns how many were
/// echoed; anything that is not a probe is ignored.
pub fn echo_serve(socket: &UdpSocket, stop: &AtomicBool) -> Result<u64, TransportError> {
    socket.set_read_timeout(Some(Duration::from_millis(20)))?;
    let mut buf = vec![0u8; 65_536];
    let mut served = 0;
    while !stop.load(Ordering::Relaxed) {
        match socket.recv_from(&mut buf) {
            Ok((n, from)) => {
                if decode_probe(&buf[..n]).is_ok() {
                    socket.send_to(&buf[..n], from)?;
                    served += 1;
                }
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(served)
}

/// Sends `count` probes `interval` apart and waits up to `timeout` for
/// each answer. Unanswered probes are recorded as timeouts.
pub fn echo_probe(
    socket: &UdpSocket,
    target: SocketAddr,
    count: u64,
    interval: Duration,
    pad_len: usize,
    timeout: Duration,
) -> Result<RttStats, TransportError> {
    let epoch = Instant::now();
    let mut stats = RttStats::new();
    let mut buf = vec![0u8; 65_536];
    for seq in 0..count {
        let due = epoch + interval * seq as u32;
        if let Some(wait) = due.checked_duration_since(Instant::now()) {
            std::thread::sleep(wait);
        }
        let sent_at_us = epoch.elapsed().as_micros() as u64;
        let probe = encode_probe(&EchoProbe::new(seq, sent_at_us, pad_len))?;
        socket.send_to(&probe, target)?;
        let deadline = Instant::now() + timeout;
        let answered = loop {
            let Some(left) = deadline.checked_duration_since(Instant::now()) else {
                break false;
            };
            socket.set_read_timeout(Some(left.max(Duration::from_micros(1))))?;
            match socket.recv(&mut buf) {
                Ok(n) => match decode_probe(&buf[..n]) {
                    Ok(echo) if echo.probe_seq == seq => {
                        let now = epoch.elapsed().as_micros() as u64;
                        stats.record_answer(seq, now.saturating_sub(echo.sent_at_us));
                        break true;
                    }
                    _ => continue,
                },
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => {
                    break false
                }
                Err(e) => return Err(e.into()),
            }
        };
        if !answered {
            stats.record_timeout();
        }
    }
    Ok(stats)
}
