//! Ordered, reliable message channels between the two parties.

use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use super::codec::{self, decode_header, decode_payload, ProtocolMessage, HEADER_LEN};
use super::meter::ByteMeter;
use crate::error::{Error, Result};

/// Default receive timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

/// One endpoint of a session. Send and receive block; receive gives up
/// after the configured timeout.
pub trait Channel: Send {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()>;
    fn recv(&mut self) -> Result<ProtocolMessage>;
    fn meter(&self) -> &ByteMeter;
}

impl<C: Channel + ?Sized> Channel for Box<C> {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<ProtocolMessage> {
        (**self).recv()
    }

    fn meter(&self) -> &ByteMeter {
        (**self).meter()
    }
}

/// In-process endpoint. Messages cross as encoded frames so that byte
/// accounting and codec behaviour match the TCP channel exactly.
pub struct InProcessChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    timeout: Duration,
    meter: ByteMeter,
}

/// A connected pair of in-process endpoints.
pub fn in_process_pair(timeout: Duration) -> (InProcessChannel, InProcessChannel) {
    let (tx_a, rx_b) = mpsc::channel();
    let (tx_b, rx_a) = mpsc::channel();
    (
        InProcessChannel { tx: tx_a, rx: rx_a, timeout, meter: ByteMeter::new() },
        InProcessChannel { tx: tx_b, rx: rx_b, timeout, meter: ByteMeter::new() },
    )
}

impl Channel for InProcessChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        let bytes = codec::serialize(msg)?;
        let len = bytes.len();
        self.tx.send(bytes).map_err(|_| Error::ChannelClosed)?;
        self.meter.record(msg.msg_type(), msg.iteration, len);
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage> {
        let bytes = self.rx.recv_timeout(self.timeout).map_err(|e| match e {
            RecvTimeoutError::Timeout => Error::Timeout,
            RecvTimeoutError::Disconnected => Error::ChannelClosed,
        })?;
        let msg = codec::deserialize(&bytes)?;
        self.meter.record(msg.msg_type(), msg.iteration, bytes.len());
        Ok(msg)
    }

    fn meter(&self) -> &ByteMeter {
        &self.meter
    }
}

/// TCP endpoint, one session per connection. Frames are delimited by the
/// header's payload length.
pub struct TcpChannel {
    stream: TcpStream,
    meter: ByteMeter,
}

fn map_read_error(e: io::Error) -> Error {
    match e.kind() {
        io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => Error::Timeout,
        io::ErrorKind::UnexpectedEof
        | io::ErrorKind::ConnectionReset
        | io::ErrorKind::ConnectionAborted
        | io::ErrorKind::BrokenPipe => Error::ChannelClosed,
        _ => Error::Io(e),
    }
}

impl TcpChannel {
    pub fn new(stream: TcpStream, timeout: Duration) -> Result<Self> {
        stream.set_read_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        Ok(Self { stream, meter: ByteMeter::new() })
    }

    /// Accepts one connection.
    pub fn accept(listener: &TcpListener, timeout: Duration) -> Result<Self> {
        let (stream, _) = listener.accept()?;
        Self::new(stream, timeout)
    }

    /// Connects, retrying until `timeout` elapses so the peer may start later.
    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<Self> {
        let deadline = Instant::now() + timeout;
        let addrs: Vec<_> = addr.to_socket_addrs()?.collect();
        loop {
            let mut last = None;
            for a in &addrs {
                match TcpStream::connect(a) {
                    Ok(stream) => return Self::new(stream, timeout),
                    Err(e) => last = Some(e),
                }
            }
            if Instant::now() >= deadline {
                return Err(match last {
                    Some(e) => Error::Io(e),
                    None => Error::InvalidParameter("address resolved to nothing".into()),
                });
            }
            thread::sleep(Duration::from_millis(50));
        }
    }

    /// Closes both directions. The peer's next receive reports a closed channel.
    pub fn shutdown(&self) {
        let _ = self.stream.shutdown(Shutdown::Both);
    }
}

impl Channel for TcpChannel {
    fn send(&mut self, msg: &ProtocolMessage) -> Result<()> {
        let bytes = codec::serialize(msg)?;
        self.stream.write_all(&bytes).map_err(map_read_error)?;
        self.meter.record(msg.msg_type(), msg.iteration, bytes.len());
        Ok(())
    }

    fn recv(&mut self) -> Result<ProtocolMessage> {
        let mut header = [0u8; HEADER_LEN];
        self.stream.read_exact(&mut header).map_err(map_read_error)?;
        let parsed = decode_header(&header)?;
        let mut payload = vec![0u8; parsed.payload_len as usize];
        self.stream.read_exact(&mut payload).map_err(map_read_error)?;
        let msg = decode_payload(&parsed, &payload)?;
        self.meter.record(msg.msg_type(), msg.iteration, HEADER_LEN + payload.len());
        Ok(msg)
    }

    fn meter(&self) -> &ByteMeter {
        &self.meter
    }
}

/// Connects to `addr` with the default retry window.
pub fn connect_tcp<A: ToSocketAddrs>(addr: A, timeout: Duration) -> Result<TcpChannel> {
    TcpChannel::connect(addr, timeout)
}
