//! Minimal async MQTT 3.1.1 client (QoS 0) used by the services and the
//! latency bench.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU16, Ordering};
use std::sync::Arc;
use std::time::Duration;

use bytes::{Buf, Bytes, BytesMut};
use parking_lot::Mutex;
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tracing::debug;

use super::packet::{decode_packet, encode_packet, Connect, Packet, Publish, QoS};
use super::ClientError;

const ACK_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub client_id: String,
    pub keep_alive: u16,
}

impl ClientOptions {
    pub fn new(client_id: impl Into<String>) -> Self {
        Self { client_id: client_id.into(), keep_alive: 30 }
    }
}

/// Stream of messages delivered to this client. Yields `None` once the
/// connection is gone.
#[derive(Debug)]
pub struct Incoming {
    rx: mpsc::UnboundedReceiver<Publish>,
}

impl Incoming {
    pub async fn recv(&mut self) -> Option<Publish> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<Publish> {
        self.rx.try_recv().ok()
    }
}

type Pending = Arc<Mutex<HashMap<u16, oneshot::Sender<Packet>>>>;

pub struct MqttClient {
    writer: tokio::sync::Mutex<OwnedWriteHalf>,
    pending: Pending,
    next_id: AtomicU16,
    reader: JoinHandle<()>,
    pinger: Mutex<Option<JoinHandle<()>>>,
}

impl std::fmt::Debug for MqttClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MqttClient").finish_non_exhaustive()
    }
}

impl MqttClient {
    /// Connects and completes the CONNECT/CONNACK exchange.
    pub async fn connect(
        addr: &str,
        opts: ClientOptions,
    ) -> Result<(Arc<MqttClient>, Incoming), ClientError> {
        let stream = TcpStream::connect(addr).await?;
        stream.set_nodelay(true)?;
        let (mut rd, mut wr) = stream.into_split();

        let mut connect = Connect::new(opts.client_id.clone());
        connect.keep_alive = opts.keep_alive;
        wr.write_all(&encode_packet(&Packet::Connect(connect))).await?;

        let mut buf = BytesMut::with_capacity(8192);
        let connack = tokio::time::timeout(ACK_TIMEOUT, async {
            loop {
                if let Some((p, used)) = decode_packet(&buf)? {
                    buf.advance(used);
                    return Ok::<_, ClientError>(p);
                }
                if rd.read_buf(&mut buf).await? == 0 {
                    return Err(ClientError::Closed);
                }
            }
        })
        .await
        .map_err(|_| ClientError::Timeout("CONNACK"))??;
        match connack {
            Packet::Connack { return_code: 0, .. } => {}
            Packet::Connack { return_code, .. } => return Err(ClientError::Refused(return_code)),
            other => {
                return Err(ClientError::Unexpected(other.name()));
            }
        }

        let (tx, rx) = mpsc::unbounded_channel();
        let pending: Pending = Arc::default();
        let reader = tokio::spawn(read_loop(rd, buf, tx, pending.clone()));
        let client = Arc::new(MqttClient {
            writer: tokio::sync::Mutex::new(wr),
            pending,
            next_id: AtomicU16::new(1),
            reader,
            pinger: Mutex::new(None),
        });
        if opts.keep_alive > 0 {
            let weak = Arc::downgrade(&client);
            let period = Duration::from_secs(opts.keep_alive as u64) / 2;
            let pinger = tokio::spawn(async move {
                loop {
                    tokio::time::sleep(period).await;
                    let Some(c) = weak.upgrade() else { break };
                    if c.send(&Packet::Pingreq).await.is_err() {
                        break;
                    }
                }
            });
            *client.pinger.lock() = Some(pinger);
        }
        Ok((client, Incoming { rx }))
    }

    fn packet_id(&self) -> u16 {
        loop {
            let id = self.next_id.fetch_add(1, Ordering::Relaxed);
            if id != 0 {
                return id;
            }
        }
    }

    async fn send(&self, packet: &Packet) -> Result<(), ClientError> {
        let bytes = encode_packet(packet);
        self.writer.lock().await.write_all(&bytes).await?;
        Ok(())
    }

    async fn request(&self, id: u16, packet: Packet, what: &'static str) -> Result<Packet, ClientError> {
        let (tx, rx) = oneshot::channel();
        self.pending.lock().insert(id, tx);
        self.send(&packet).await?;
        match tokio::time::timeout(ACK_TIMEOUT, rx).await {
            Ok(Ok(p)) => Ok(p),
            Ok(Err(_)) => Err(ClientError::Closed),
            Err(_) => {
                self.pending.lock().remove(&id);
                Err(ClientError::Timeout(what))
            }
        }
    }

    /// Subscribes and waits for the SUBACK. Returns the granted codes.
    pub async fn subscribe(&self, filters: &[&str]) -> Result<Vec<u8>, ClientError> {
        let id = self.packet_id();
        let packet = Packet::Subscribe {
            packet_id: id,
            filters: filters.iter().map(|f| (f.to_string(), QoS::AtMostOnce)).collect(),
        };
        match self.request(id, packet, "SUBACK").await? {
            Packet::Suback { return_codes, .. } => {
                if let Some(i) = return_codes.iter().position(|&c| c == 0x80) {
                    return Err(ClientError::SubscribeRejected(filters[i].to_string()));
                }
                Ok(return_codes)
            }
            other => Err(ClientError::Unexpected(other.name())),
        }
    }

    pub async fn unsubscribe(&self, filters: &[&str]) -> Result<(), ClientError> {
        let id = self.packet_id();
        let packet = Packet::Unsubscribe {
            packet_id: id,
            filters: filters.iter().map(|f| f.to_string()).collect(),
        };
        self.request(id, packet, "UNSUBACK").await.map(|_| ())
    }

    /// Fire-and-forget publish at QoS 0.
    pub async fn publish(&self, topic: &str, payload: impl Into<Bytes>) -> Result<(), ClientError> {
        self.send(&Packet::Publish(Publish::new(topic, payload))).await
    }

    pub async fn disconnect(&self) -> Result<(), ClientError> {
        self.send(&Packet::Disconnect).await?;
        let _ = self.writer.lock().await.shutdown().await;
        Ok(())
    }

    /// Whether the receive side is still running.
    pub fn is_connected(&self) -> bool {
        !self.reader.is_finished()
    }
}

impl Drop for MqttClient {
    fn drop(&mut self) {
        self.reader.abort();
        if let Some(p) = self.pinger.lock().take() {
            p.abort();
        }
    }
}

async fn read_loop(
    mut rd: tokio::net::tcp::OwnedReadHalf,
    mut buf: BytesMut,
    tx: mpsc::UnboundedSender<Publish>,
    pending: Pending,
) {
    loop {
        loop {
            match decode_packet(&buf) {
                Ok(Some((packet, used))) => {
                    buf.advance(used);
                    match packet {
                        Packet::Publish(p) => {
                            let _ = tx.send(p);
                        }
                        Packet::Suback { packet_id, .. } | Packet::Unsuback { packet_id } => {
                            if let Some(w) = pending.lock().remove(&packet_id) {
                                let _ = w.send(packet);
                            }
                        }
                        Packet::Pingresp | Packet::Puback { .. } => {}
                        other => debug!(packet = other.name(), "ignoring packet"),
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    debug!(error = %e, "protocol error from broker");
                    return;
                }
            }
        }
        match rd.read_buf(&mut buf).await {
            Ok(0) | Err(_) => return,
            Ok(_) => {}
        }
    }
}

/// `<base>-<pid>-<n>`, unique within this process and unlikely to collide
/// with other processes on the same broker.
pub fn unique_client_id(base: &str) -> String {
    static NEXT: std::sync::atomic::AtomicU64 = std::sync::atomic::AtomicU64::new(0);
    format!("{base}-{}-{}", std::process::id(), NEXT.fetch_add(1, Ordering::Relaxed))
}

/// Connects with exponential backoff (100 ms doubling to 5 s) until
/// `attempts` is exhausted. `attempts == 0` retries forever.
pub async fn connect_with_backoff(
    addr: &str,
    opts: ClientOptions,
    attempts: u32,
) -> Result<(Arc<MqttClient>, Incoming), ClientError> {
    let mut delay = Duration::from_millis(100);
    let mut tried = 0;
    loop {
        match MqttClient::connect(addr, opts.clone()).await {
            Ok(c) => return Ok(c),
            Err(e) => {
                tried += 1;
                if attempts != 0 && tried >= attempts {
                    return Err(e);
                }
                debug!(addr, error = %e, retry_in = ?delay, "connect failed");
                tokio::time::sleep(delay).await;
                delay = (delay * 2).min(Duration::from_secs(5));
            }
        }
    }
}
