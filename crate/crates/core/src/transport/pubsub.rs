use std::collections::VecDeque;
use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::time::Duration;

use super::TransportError;
use crate::iec::{topic_match, WIRE_VERSION};
use crate::wire::{has_control_chars, Reader};

pub const DATAGRAM_MAGIC: [u8; 2] = *b"PS";
/// Magic, version and topic length; the topic follows.
pub const DATAGRAM_HEADER_LEN: usize = 4;
pub const MAX_DATAGRAM_PAYLOAD: usize = 60 * 1024;

fn check_topic(topic: &str) -> Result<(), TransportError> {
    if topic.is_empty() || topic.len() > 255 || topic == "*" || has_control_chars(topic) {
        return Err(TransportError::InvalidTopic(topic.to_owned()));
    }
    Ok(())
}

/// `PS | version | topic_len | topic | payload`.
pub fn encode_datagram(topic: &str, payload: &[u8]) -> Result<Vec<u8>, TransportError> {
    check_topic(topic)?;
    if payload.len() > MAX_DATAGRAM_PAYLOAD {
        return Err(TransportError::PayloadTooLargeForDatagram(payload.len()));
    }
    let mut out = Vec::with_capacity(DATAGRAM_HEADER_LEN + topic.len() + payload.len());
    out.extend_from_slice(&DATAGRAM_MAGIC);
    out.push(WIRE_VERSION);
    out.push(topic.len() as u8);
    out.extend_from_slice(topic.as_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn decode_datagram(buf: &[u8]) -> Result<(&str, &[u8]), TransportError> {
    let short = |_| TransportError::MalformedFrame("truncated datagram");
    let mut r = Reader::new(buf);
    if r.take(2).map_err(short)? != DATAGRAM_MAGIC {
        return Err(TransportError::MalformedFrame("bad datagram magic"));
    }
    if r.u8().map_err(short)? != WIRE_VERSION {
        return Err(TransportError::MalformedFrame("unsupported datagram version"));
    }
    let n = usize::from(r.u8().map_err(short)?);
    let topic = std::str::from_utf8(r.take(n).map_err(short)?)
        .map_err(|_| TransportError::MalformedFrame("topic is not UTF-8"))?;
    check_topic(topic)?;
    let payload = r.take(r.remaining()).map_err(short)?;
    if payload.len() > MAX_DATAGRAM_PAYLOAD {
        return Err(TransportError::PayloadTooLargeForDatagram(payload.len()));
    }
    Ok((topic, payload))
}

/// Sends one datagram; returns the bytes written.
pub fn publish(
    socket: &UdpSocket,
    dest: SocketAddr,
    topic: &str,
    payload: &[u8],
) -> Result<usize, TransportError> {
    let frame = encode_datagram(topic, payload)?;
    Ok(socket.send_to(&frame, dest)?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pattern: String,
    bound: usize,
}

impl Subscription {
    /// `pattern` is a topic or `*` for everything.
    pub fn new(pattern: impl Into<String>, bound: usize) -> Result<Self, TransportError> {
        let pattern = pattern.into();
        if pattern != "*" {
            check_topic(&pattern)?;
        }
        if bound == 0 {
            return Err(TransportError::InvalidSubscription);
        }
        Ok(Self { pattern, bound })
    }

    pub fn pattern(&self) -> &str {
        &self.pattern
    }

    pub fn bound(&self) -> usize {
        self.bound
    }
}

/// Local end of a subscription: filters arriving datagrams by topic and
/// queues them, dropping the oldest entry when the queue is full.
#[derive(Debug, Clone)]
pub struct Subscriber {
    sub: Subscription,
    queue: VecDeque<(String, Vec<u8>)>,
    accepted: u64,
    filtered: u64,
    malformed: u64,
    dropped_local: u64,
}

impl Subscriber {
    pub fn new(sub: Subscription) -> Self {
        Self {
            sub,
            queue: VecDeque::new(),
            accepted: 0,
            filtered: 0,
            malformed: 0,
            dropped_local: 0,
        }
    }

    pub fn subscription(&self) -> &Subscription {
        &self.sub
    }

    /// Handles one raw datagram. Returns whether it was queued.
    pub fn offer(&mut self, datagram: &[u8]) -> bool {
        match decode_datagram(datagram) {
            Ok((topic, payload)) => self.offer_topic(topic, payload),
            Err(_) => {
                self.malformed += 1;
                false
            }
        }
    }

    pub fn offer_topic(&mut self, topic: &str, payload: &[u8]) -> bool {
        if !topic_match(&self.sub.pattern, topic) {
            self.filtered += 1;
            return false;
        }
        if self.queue.len() == self.sub.bound {
            self.queue.pop_front();
            self.dropped_local += 1;
        }
        self.queue.push_back((topic.to_owned(), payload.to_vec()));
        self.accepted += 1;
        true
    }

    pub fn pop(&mut self) -> Option<(String, Vec<u8>)> {
        self.queue.pop_front()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn filtered(&self) -> u64 {
        self.filtered
    }

    pub fn malformed(&self) -> u64 {
        self.malformed
    }

    pub fn dropped_local(&self) -> u64 {
        self.dropped_local
    }

    /// Waits up to `wait` for a datagram on `socket`, then drains whatever
    /// else is already buffered. Returns the number of datagrams read.
    pub fn pump(&mut self, socket: &UdpSocket, wait: Duration) -> Result<usize, TransportError> {
        let mut buf = vec![0u8; 65_536];
        socket.set_read_timeout(Some(wait.max(Duration::from_micros(1))))?;
        let mut read = 0;
        loop {
            match socket.recv(&mut buf) {
                Ok(n) => {
                    self.offer(&buf[..n]);
                    read += 1;
                    if read == 1 {
                        socket.set_nonblocking(true)?;
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => break,
                Err(e) => {
                    socket.set_nonblocking(false)?;
                    return Err(e.into());
                }
            }
        }
        socket.set_nonblocking(false)?;
        Ok(read)
    }
}
