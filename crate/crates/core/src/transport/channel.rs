//! Frame carriers: in-memory channel, byte streams (files, TCP).

use super::frame::{FrameHeader, HEADER_LEN};
use super::TransportError;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream};
use std::sync::mpsc;
use std::time::Duration;

pub trait FrameSink {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError>;

    /// Re-establish the carrier after a failed send.
    fn reconnect(&mut self) -> Result<(), TransportError> {
        Ok(())
    }
}

impl FrameSink for Vec<Vec<u8>> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.push(frame.to_vec());
        Ok(())
    }
}

/// In-memory datagram channel. The sink can be told to fail its next sends.
pub fn memory_channel() -> (MemorySink, MemorySource) {
    let (tx, rx) = mpsc::channel();
    (MemorySink { tx, fail_next: 0 }, MemorySource { rx })
}

pub struct MemorySink {
    tx: mpsc::Sender<Vec<u8>>,
    fail_next: usize,
}

impl MemorySink {
    pub fn fail_next(&mut self, n: usize) {
        self.fail_next = n;
    }
}

impl FrameSink for MemorySink {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        if self.fail_next > 0 {
            self.fail_next -= 1;
            return Err(TransportError::Io(io::Error::new(io::ErrorKind::BrokenPipe, "injected link failure")));
        }
        self.tx
            .send(frame.to_vec())
            .map_err(|_| TransportError::Io(io::Error::new(io::ErrorKind::BrokenPipe, "receiver dropped")))
    }
}

pub struct MemorySource {
    rx: mpsc::Receiver<Vec<u8>>,
}

impl MemorySource {
    pub fn recv(&self) -> Option<Vec<u8>> {
        self.rx.recv().ok()
    }

    pub fn try_recv(&self) -> Option<Vec<u8>> {
        self.rx.try_recv().ok()
    }

    pub fn drain(&self) -> Vec<Vec<u8>> {
        self.rx.try_iter().collect()
    }
}

/// Writes frames back to back onto any byte stream.
pub struct StreamSink<W: Write> {
    inner: W,
}

impl<W: Write> StreamSink<W> {
    pub fn new(inner: W) -> Self {
        StreamSink { inner }
    }

    pub fn into_inner(self) -> W {
        self.inner
    }
}

impl<W: Write> FrameSink for StreamSink<W> {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        self.inner.write_all(frame)?;
        self.inner.flush()?;
        Ok(())
    }
}

/// TCP carrier that reconnects on demand.
pub struct TcpFrameSink {
    addr: SocketAddr,
    stream: Option<TcpStream>,
}

impl TcpFrameSink {
    pub fn connect(addr: SocketAddr) -> Result<Self, TransportError> {
        let mut s = TcpFrameSink { addr, stream: None };
        s.reconnect()?;
        Ok(s)
    }
}

impl FrameSink for TcpFrameSink {
    fn send_frame(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        let stream = self
            .stream
            .as_mut()
            .ok_or_else(|| TransportError::Io(io::Error::new(io::ErrorKind::NotConnected, "not connected")))?;
        if let Err(e) = stream.write_all(frame) {
            self.stream = None;
            return Err(e.into());
        }
        Ok(())
    }

    fn reconnect(&mut self) -> Result<(), TransportError> {
        let s = TcpStream::connect_timeout(&self.addr, Duration::from_secs(2))?;
        s.set_nodelay(true)?;
        self.stream = Some(s);
        Ok(())
    }
}

/// Read one frame from a byte stream. `Ok(None)` on clean end of stream.
/// The header is validated before the body is read so that a corrupt
/// length field cannot trigger an oversized read.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>, TransportError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        match r.read(&mut header[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(TransportError::Truncated { len: got, expected: HEADER_LEN }),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let h = FrameHeader::parse(&header)?;
    let mut frame = vec![0u8; h.frame_len()];
    frame[..HEADER_LEN].copy_from_slice(&header);
    r.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(Some(frame))
}
