//! The two transport roles: a framed reliable stream (TCP role) and a
//! fire-and-forget topic datagram (UDP role), plus the UDP echo service used
//! for round-trip measurements.
//!
//! Codecs are pure. The socket helpers run over `std::net`; the virtual
//! backend drives [`ArqSender`]/[`ArqReceiver`] over emulated links instead.

mod arq;
mod echo;
mod pubsub;
mod stream;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use arq::{Ack, ArqReceiver, ArqSender, Segment, TimeoutAction, ACK_LEN, SEGMENT_HEADER_LEN};
pub use echo::{
    decode_probe, echo_probe, echo_serve, encode_probe, EchoProbe, ECHO_HEADER_LEN, ECHO_MAGIC,
};
pub use pubsub::{
    decode_datagram, encode_datagram, publish, Subscriber, Subscription, DATAGRAM_HEADER_LEN,
    DATAGRAM_MAGIC, MAX_DATAGRAM_PAYLOAD,
};
pub use stream::{decode_frame, encode_frame, FramedStream, StreamFrame, MAX_FRAME_LEN};

/// Which transport a flow rides on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportRole {
    /// Reliable ordered stream.
    #[serde(rename = "tcp")]
    Stream,
    /// Unreliable datagrams.
    #[serde(rename = "udp")]
    Datagram,
}

impl TransportRole {
    pub const ALL: [TransportRole; 2] = [TransportRole::Stream, TransportRole::Datagram];

    pub fn as_str(self) -> &'static str {
        match self {
            TransportRole::Stream => "tcp",
            TransportRole::Datagram => "udp",
        }
    }

    /// Upper-case name used in table headers.
    pub fn label(self) -> &'static str {
        match self {
            TransportRole::Stream => "TCP",
            TransportRole::Datagram => "UDP",
        }
    }
}

impl fmt::Display for TransportRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TransportRole {
    type Err = TransportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tcp" => Ok(TransportRole::Stream),
            "udp" => Ok(TransportRole::Datagram),
            other => Err(TransportError::UnknownTransport(other.to_owned())),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("connection closed")]
    ConnectionClosed,
    #[error("frame of {0} bytes exceeds the 1 MiB limit")]
    FrameTooLarge(usize),
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
    #[error("datagram payload of {0} bytes exceeds 60 KiB")]
    PayloadTooLargeForDatagram(usize),
    #[error("invalid topic {0:?}")]
    InvalidTopic(String),
    #[error("subscription queue bound must be at least 1")]
    InvalidSubscription,
    #[error("unknown transport {0:?}")]
    UnknownTransport(String),
    #[error("socket error: {0}")]
    Socket(#[from] std::io::Error),
}

impl PartialEq for TransportError {
    fn eq(&self, other: &Self) -> bool {
        use TransportError::*;
        match (self, other) {
            (ConnectionClosed, ConnectionClosed) | (InvalidSubscription, InvalidSubscription) => true,
            (FrameTooLarge(a), FrameTooLarge(b)) => a == b,
            (MalformedFrame(a), MalformedFrame(b)) => a == b,
            (PayloadTooLargeForDatagram(a), PayloadTooLargeForDatagram(b)) => a == b,
            (InvalidTopic(a), InvalidTopic(b)) | (UnknownTransport(a), UnknownTransport(b)) => a == b,
            (Socket(a), Socket(b)) => a.kind() == b.kind(),
            _ => false,
        }
    }
}
