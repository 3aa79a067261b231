//! Reliable message transports: an in-process duplex pipe and TCP.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::Duration;

use super::wire::{Header, Message, HEADER_LEN};
use super::ProtocolError;

pub trait Transport {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError>;
    fn recv(&mut self) -> Result<Message, ProtocolError>;
}

impl<T: Transport + ?Sized> Transport for &mut T {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        (**self).recv()
    }
}

/// One end of an in-process pipe. Messages cross as encoded bytes.
#[derive(Debug)]
pub struct MemoryTransport {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Option<Duration>,
}

/// Two connected ends.
pub fn duplex() -> (MemoryTransport, MemoryTransport) {
    let (a_tx, b_rx) = channel();
    let (b_tx, a_rx) = channel();
    (
        MemoryTransport {
            tx: a_tx,
            rx: a_rx,
            timeout: None,
        },
        MemoryTransport {
            tx: b_tx,
            rx: b_rx,
            timeout: None,
        },
    )
}

impl MemoryTransport {
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    /// Sends raw bytes, bypassing encoding.
    pub fn send_raw(&mut self, bytes: Vec<u8>) -> Result<(), ProtocolError> {
        self.tx.send(bytes).map_err(|_| ProtocolError::Closed)
    }
}

impl Transport for MemoryTransport {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        self.send_raw(msg.encode())
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        let bytes = match self.timeout {
            Some(t) => self.rx.recv_timeout(t).map_err(|_| ProtocolError::Closed)?,
            None => self.rx.recv().map_err(|_| ProtocolError::Closed)?,
        };
        Ok(Message::decode(&bytes)?)
    }
}

/// Framed messages over a TCP stream.
#[derive(Debug)]
pub struct TcpTransport {
    stream: TcpStream,
}

impl TcpTransport {
    pub fn new(stream: TcpStream) -> Self {
        Self { stream }
    }

    pub fn connect(addr: &str) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(Self { stream })
    }
}

impl Transport for TcpTransport {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        self.stream.write_all(&msg.encode())?;
        self.stream.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        let mut header = [0u8; HEADER_LEN];
        match self.stream.read_exact(&mut header) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Err(ProtocolError::Closed),
            Err(e) => return Err(e.into()),
        }
        let h = Header::parse(&header)?;
        let mut payload = vec![0u8; h.payload_len as usize];
        self.stream.read_exact(&mut payload)?;
        Ok(Message::decode_payload(h.msg_type, &payload)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

/// Wraps a transport and logs every message crossing it.
#[derive(Debug)]
pub struct Recorder<T> {
    inner: T,
    log: Vec<(Direction, Message)>,
}

impl<T: Transport> Recorder<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, log: Vec::new() }
    }

    pub fn log(&self) -> &[(Direction, Message)] {
        &self.log
    }

    pub fn take_log(&mut self) -> Vec<(Direction, Message)> {
        std::mem::take(&mut self.log)
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for Recorder<T> {
    fn send(&mut self, msg: &Message) -> Result<(), ProtocolError> {
        self.inner.send(msg)?;
        self.log.push((Direction::Sent, msg.clone()));
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, ProtocolError> {
        let msg = self.inner.recv()?;
        self.log.push((Direction::Received, msg.clone()));
        Ok(msg)
    }
}
