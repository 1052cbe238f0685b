use std::io::{ErrorKind, Read, Write};

use super::TransportError;

/// Largest value of the length prefix (kind byte plus body).
pub const MAX_FRAME_LEN: usize = 1 << 20;

/// One message on the reliable stream: `len: u32 BE | kind: u8 | body`,
/// where `len` counts the kind byte and the body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamFrame {
    pub kind: u8,
    pub body: Vec<u8>,
}

pub fn encode_frame(kind: u8, body: &[u8]) -> Result<Vec<u8>, TransportError> {
    let len = body.len() + 1;
    if len > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(len));
    }
    let mut out = Vec::with_capacity(4 + len);
    out.extend_from_slice(&(len as u32).to_be_bytes());
    out.push(kind);
    out.extend_from_slice(body);
    Ok(out)
}

/// Decodes the first frame of `buf`. Returns `Ok(None)` when more bytes
/// are needed, otherwise the frame and the bytes it consumed.
pub fn decode_frame(buf: &[u8]) -> Result<Option<(StreamFrame, usize)>, TransportError> {
    let Some(prefix) = buf.get(..4) else {
        return Ok(None);
    };
    let len = u32::from_be_bytes(prefix.try_into().expect("4 bytes")) as usize;
    check_len(len)?;
    let Some(rest) = buf.get(4..4 + len) else {
        return Ok(None);
    };
    let frame = StreamFrame {
        kind: rest[0],
        body: rest[1..].to_vec(),
    };
    Ok(Some((frame, 4 + len)))
}

fn check_len(len: usize) -> Result<(), TransportError> {
    if len == 0 {
        return Err(TransportError::MalformedFrame("zero length prefix"));
    }
    if len > MAX_FRAME_LEN {
        return Err(TransportError::FrameTooLarge(len));
    }
    Ok(())
}

/// Length-prefixed framing over any byte stream. A framing violation is
/// fatal: the stream is marked dead and every later call fails.
pub struct FramedStream<S> {
    inner: S,
    dead: bool,
}

impl<S: Read + Write> FramedStream<S> {
    pub fn new(inner: S) -> Self {
        Self { inner, dead: false }
    }

    pub fn get_ref(&self) -> &S {
        &self.inner
    }

    pub fn into_inner(self) -> S {
        self.inner
    }

    pub fn send(&mut self, kind: u8, body: &[u8]) -> Result<(), TransportError> {
        if self.dead {
            return Err(TransportError::ConnectionClosed);
        }
        let frame = encode_frame(kind, body)?;
        self.inner.write_all(&frame).map_err(|e| self.fail(e))?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), TransportError> {
        self.inner.flush().map_err(|e| self.fail(e))
    }

    /// Next frame. A clean EOF between frames is `ConnectionClosed`.
    pub fn recv(&mut self) -> Result<StreamFrame, TransportError> {
        if self.dead {
            return Err(TransportError::ConnectionClosed);
        }
        let mut prefix = [0u8; 4];
        self.inner.read_exact(&mut prefix).map_err(|e| self.fail(e))?;
        let len = u32::from_be_bytes(prefix) as usize;
        if let Err(e) = check_len(len) {
            self.dead = true;
            return Err(e);
        }
        let mut rest = vec![0u8; len];
        self.inner.read_exact(&mut rest).map_err(|e| {
            let err = self.fail(e);
            if err == TransportError::ConnectionClosed {
                TransportError::MalformedFrame("stream ended inside a frame")
            } else {
                err
            }
        })?;
        let body = rest.split_off(1);
        Ok(StreamFrame { kind: rest[0], body })
    }

    fn fail(&mut self, e: std::io::Error) -> TransportError {
        self.dead = true;
        match e.kind() {
            ErrorKind::UnexpectedEof
            | ErrorKind::ConnectionReset
            | ErrorKind::ConnectionAborted
            | ErrorKind::BrokenPipe => TransportError::ConnectionClosed,
            _ => TransportError::Socket(e),
        }
    }
}
