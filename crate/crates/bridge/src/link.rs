//! Bidirectional text-frame links between the bridge and the server, either
//! in memory or over TCP with a 4-byte big-endian length prefix.

use std::time::Duration;

use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio::sync::mpsc;

use crate::wan::{wan_channel, WanLinkConfig};
use crate::BridgeError;

/// Frames larger than this are treated as a protocol violation.
pub const MAX_FRAME: usize = 1 << 20;

/// One side of a link.
#[derive(Debug)]
pub struct LinkEnd {
    pub tx: mpsc::UnboundedSender<String>,
    pub rx: mpsc::UnboundedReceiver<String>,
}

/// Directly connected pair: `(bridge side, server side)`.
pub fn link_pair() -> (LinkEnd, LinkEnd) {
    let (up_tx, up_rx) = mpsc::unbounded_channel();
    let (down_tx, down_rx) = mpsc::unbounded_channel();
    (
        LinkEnd { tx: up_tx, rx: down_rx },
        LinkEnd { tx: down_tx, rx: up_rx },
    )
}

/// Pair with an emulator in each direction: `(bridge side, server side)`.
/// The downlink uses `seed + 1` so the two directions draw independently.
pub fn wan_link_pair(cfg: WanLinkConfig) -> Result<(LinkEnd, LinkEnd), BridgeError> {
    let (up_tx, up_rx) = wan_channel(cfg)?;
    let (down_tx, down_rx) = wan_channel(cfg.with_seed(cfg.seed.wrapping_add(1)))?;
    Ok((
        LinkEnd { tx: up_tx, rx: down_rx },
        LinkEnd { tx: down_tx, rx: up_rx },
    ))
}

pub async fn write_frame<W: AsyncWrite + Unpin>(w: &mut W, body: &str) -> std::io::Result<()> {
    let len = u32::try_from(body.len())
        .ok()
        .filter(|&n| n as usize <= MAX_FRAME)
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "frame too large"))?;
    w.write_all(&len.to_be_bytes()).await?;
    w.write_all(body.as_bytes()).await?;
    w.flush().await
}

/// `Ok(None)` on a clean end of stream at a frame boundary.
pub async fn read_frame<R: AsyncRead + Unpin>(r: &mut R) -> std::io::Result<Option<String>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len).await {
        Ok(_) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body).await?;
    String::from_utf8(body)
        .map(Some)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

/// Run a TCP stream as a link end. The returned end closes when the socket
/// does; `wan` is applied in both directions on this side.
pub fn tcp_link(stream: TcpStream, wan: Option<WanLinkConfig>) -> Result<LinkEnd, BridgeError> {
    let _ = stream.set_nodelay(true);
    let (mut reader, mut writer) = stream.into_split();
    let (in_tx, in_rx, out_tx, mut out_rx) = match wan {
        Some(cfg) if !cfg.is_identity() => {
            let (in_tx, in_rx) = wan_channel::<String>(cfg.with_seed(cfg.seed.wrapping_add(1)))?;
            let (out_tx, out_rx) = wan_channel::<String>(cfg)?;
            (in_tx, in_rx, out_tx, out_rx)
        }
        _ => {
            let (in_tx, in_rx) = mpsc::unbounded_channel::<String>();
            let (out_tx, out_rx) = mpsc::unbounded_channel::<String>();
            (in_tx, in_rx, out_tx, out_rx)
        }
    };
    tokio::spawn(async move {
        loop {
            match read_frame(&mut reader).await {
                Ok(Some(frame)) => {
                    if in_tx.send(frame).is_err() {
                        break;
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    tracing::warn!(error = %e, "link read failed");
                    break;
                }
            }
        }
    });
    tokio::spawn(async move {
        while let Some(frame) = out_rx.recv().await {
            if let Err(e) = write_frame(&mut writer, &frame).await {
                tracing::warn!(error = %e, "link write failed");
                break;
            }
        }
    });
    Ok(LinkEnd { tx: out_tx, rx: in_rx })
}

/// Reconnect delays: 0.5 s doubling to an 8 s cap.
#[derive(Debug, Clone)]
pub struct Backoff {
    next: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Self {
            next: Self::INITIAL,
        }
    }
}

impl Backoff {
    pub const INITIAL: Duration = Duration::from_millis(500);
    pub const CAP: Duration = Duration::from_secs(8);

    pub fn next_delay(&mut self) -> Duration {
        let d = self.next;
        self.next = (self.next * 2).min(Self::CAP);
        d
    }

    pub fn reset(&mut self) {
        self.next = Self::INITIAL;
    }
}
