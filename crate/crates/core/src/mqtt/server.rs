//! TCP and WebSocket front ends for [`Router`].

use std::collections::{HashMap, VecDeque};
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use bytes::{Buf, BytesMut};
use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use parking_lot::{Mutex, RwLock};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{watch, Notify};
use tokio::task::JoinSet;
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::HeaderValue;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::WebSocketStream;
use tracing::{debug, info, warn};

use super::packet::{decode_packet_limited, encode_packet_into, Packet};
use super::router::{Action, ConnId, Router};
use super::BrokerError;

pub const DEFAULT_TCP_PORT: u16 = 1883;
pub const DEFAULT_WS_PORT: u16 = 8083;
pub const DEFAULT_MAX_PAYLOAD: usize = 64 * 1024;
pub const DEFAULT_QUEUE_CAPACITY: usize = 1024;
const WS_SUBPROTOCOL: &str = "mqtt";
/// How long a publisher is held back waiting for a full subscriber queue
/// before that subscriber is treated as lagging and starts losing messages.
const SLOW_SUBSCRIBER_GRACE: Duration = Duration::from_millis(500);
/// Multiple of the queue capacity at which messages drop even when the
/// subscriber is not lagging.
const HARD_LIMIT: usize = 4;

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub bind_tcp: Option<String>,
    pub bind_ws: Option<String>,
    pub max_payload: usize,
    /// Per-session outbound queue bound; the oldest message is dropped when full.
    pub queue_capacity: usize,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            bind_tcp: Some(format!("0.0.0.0:{DEFAULT_TCP_PORT}")),
            bind_ws: Some(format!("0.0.0.0:{DEFAULT_WS_PORT}")),
            max_payload: DEFAULT_MAX_PAYLOAD,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

impl BrokerConfig {
    /// TCP only, on an ephemeral loopback port.
    pub fn loopback() -> Self {
        Self { bind_tcp: Some("127.0.0.1:0".into()), bind_ws: None, ..Self::default() }
    }
}

struct OutboxState {
    queue: VecDeque<Packet>,
    closed: bool,
}

/// Bounded outbound queue for one session.
///
/// A publisher whose message fills the queue stops reading until there is
/// room again (up to a grace period), so a subscriber that keeps up never
/// loses messages to a burst. Concurrent publishers may overshoot the
/// capacity by a few entries. A subscriber that does not drain within the
/// grace period is marked lagging; until it next drains, pushes beyond the
/// capacity drop its oldest messages instead of waiting.
struct Outbox {
    state: Mutex<OutboxState>,
    ready: Notify,
    space: Notify,
    capacity: usize,
    lagging: AtomicBool,
    dropped: AtomicU64,
    closed_tx: watch::Sender<bool>,
}

impl Outbox {
    fn new(capacity: usize) -> Self {
        Self {
            state: Mutex::new(OutboxState { queue: VecDeque::new(), closed: false }),
            ready: Notify::new(),
            space: Notify::new(),
            capacity: capacity.max(1),
            lagging: AtomicBool::new(false),
            dropped: AtomicU64::new(0),
            closed_tx: watch::channel(false).0,
        }
    }

    fn push(&self, packet: Packet) {
        {
            let mut s = self.state.lock();
            if s.closed {
                return;
            }
            let limit = if self.lagging.load(Ordering::Relaxed) { self.capacity } else { HARD_LIMIT * self.capacity };
            if s.queue.len() >= limit {
                s.queue.pop_front();
                self.dropped.fetch_add(1, Ordering::Relaxed);
            }
            s.queue.push_back(packet);
        }
        self.ready.notify_one();
    }

    fn close(&self) {
        self.state.lock().closed = true;
        self.ready.notify_one();
        self.space.notify_waiters();
        self.closed_tx.send_replace(true);
    }

    fn is_full(&self) -> bool {
        let s = self.state.lock();
        !s.closed && s.queue.len() >= self.capacity
    }

    /// Waits until the queue has room, it closes, or the grace period ends.
    async fn wait_for_space(&self) {
        if self.lagging.load(Ordering::Relaxed) {
            return;
        }
        let wait = async {
            loop {
                let notified = self.space.notified();
                tokio::pin!(notified);
                notified.as_mut().enable();
                if !self.is_full() {
                    return;
                }
                notified.await;
            }
        };
        if tokio::time::timeout(SLOW_SUBSCRIBER_GRACE, wait).await.is_err() {
            self.lagging.store(true, Ordering::Relaxed);
        }
    }

    /// Everything queued so far, or `None` once closed and drained.
    async fn next_batch(&self) -> Option<Vec<Packet>> {
        loop {
            {
                let mut s = self.state.lock();
                if !s.queue.is_empty() {
                    let batch = s.queue.drain(..).collect();
                    drop(s);
                    self.lagging.store(false, Ordering::Relaxed);
                    self.space.notify_waiters();
                    return Some(batch);
                }
                if s.closed {
                    return None;
                }
            }
            self.ready.notified().await;
        }
    }
}

struct Shared {
    router: Arc<Router>,
    outboxes: RwLock<HashMap<ConnId, Arc<Outbox>>>,
    next_conn: AtomicU64,
    config: BrokerConfig,
    dropped_total: AtomicU64,
}

impl Shared {
    /// Queues the router's actions. Returns the queues left full, which the
    /// caller should wait on before reading more from its peer.
    fn dispatch(&self, actions: Vec<Action>) -> Vec<Arc<Outbox>> {
        let outboxes = self.outboxes.read();
        let mut full = Vec::new();
        for action in actions {
            match action {
                Action::Send(to, packet) => {
                    if let Some(o) = outboxes.get(&to) {
                        o.push(packet);
                        if o.is_full() {
                            full.push(o.clone());
                        }
                    }
                }
                Action::Close(to) => {
                    if let Some(o) = outboxes.get(&to) {
                        o.close();
                    }
                }
            }
        }
        full
    }
}

enum Reader {
    Tcp(OwnedReadHalf),
    Ws(SplitStream<WebSocketStream<TcpStream>>),
}

impl Reader {
    /// Appends received bytes to `buf`. Returns 0 at end of stream.
    async fn read(&mut self, buf: &mut BytesMut) -> io::Result<usize> {
        match self {
            Reader::Tcp(r) => r.read_buf(buf).await,
            Reader::Ws(r) => loop {
                match r.next().await {
                    None => return Ok(0),
                    Some(Err(e)) => return Err(io::Error::new(io::ErrorKind::Other, e)),
                    Some(Ok(WsMessage::Binary(data))) => {
                        buf.extend_from_slice(&data);
                        if !data.is_empty() {
                            return Ok(data.len());
                        }
                    }
                    Some(Ok(WsMessage::Close(_))) => return Ok(0),
                    Some(Ok(WsMessage::Text(_))) => {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            "MQTT over WebSocket requires binary frames",
                        ))
                    }
                    Some(Ok(_)) => {}
                }
            },
        }
    }
}

enum Writer {
    Tcp(OwnedWriteHalf),
    Ws(SplitSink<WebSocketStream<TcpStream>, WsMessage>),
}

impl Writer {
    async fn write(&mut self, bytes: &[u8]) -> io::Result<()> {
        match self {
            Writer::Tcp(w) => w.write_all(bytes).await,
            Writer::Ws(w) => w
                .send(WsMessage::Binary(bytes.to_vec()))
                .await
                .map_err(|e| io::Error::new(io::ErrorKind::Other, e)),
        }
    }

    async fn shutdown(&mut self) {
        let _ = match self {
            Writer::Tcp(w) => w.shutdown().await,
            Writer::Ws(w) => w.close().await.map_err(|e| io::Error::new(io::ErrorKind::Other, e)),
        };
    }
}

async fn writer_loop(outbox: Arc<Outbox>, mut writer: Writer) {
    let mut buf = BytesMut::with_capacity(4096);
    while let Some(batch) = outbox.next_batch().await {
        buf.clear();
        for p in &batch {
            encode_packet_into(p, &mut buf);
        }
        if let Err(e) = writer.write(&buf).await {
            debug!(error = %e, "write failed");
            outbox.close();
            break;
        }
    }
    writer.shutdown().await;
}

async fn run_connection(
    shared: Arc<Shared>,
    mut reader: Reader,
    writer: Writer,
    mut shutdown: watch::Receiver<bool>,
) {
    let conn = shared.next_conn.fetch_add(1, Ordering::Relaxed);
    let outbox = Arc::new(Outbox::new(shared.config.queue_capacity));
    shared.outboxes.write().insert(conn, outbox.clone());
    shared.router.open(conn);
    let write_task = tokio::spawn(writer_loop(outbox.clone(), writer));

    let max_payload = shared.config.max_payload;
    // topic (≤ 65535 + 2) and packet id on top of the payload
    let max_remaining = max_payload + 65_541;
    let mut closed = outbox.closed_tx.subscribe();
    let mut buf = BytesMut::with_capacity(4096);
    let mut keep_alive: Option<Duration> = None;

    'conn: loop {
        loop {
            match decode_packet_limited(&buf, max_remaining) {
                Ok(Some((packet, used))) => {
                    buf.advance(used);
                    if let Packet::Publish(p) = &packet {
                        if p.payload.len() > max_payload {
                            warn!(conn, size = p.payload.len(), "payload over limit");
                            break 'conn;
                        }
                    }
                    if let Packet::Connect(c) = &packet {
                        if c.keep_alive > 0 {
                            keep_alive = Some(Duration::from_millis(c.keep_alive as u64 * 1500));
                        }
                    }
                    let actions = shared.router.on_packet(conn, packet);
                    for o in shared.dispatch(actions) {
                        if !Arc::ptr_eq(&o, &outbox) {
                            o.wait_for_space().await;
                        }
                    }
                }
                Ok(None) => break,
                Err(e) => {
                    debug!(conn, error = %e, "protocol error, closing");
                    break 'conn;
                }
            }
        }
        let read = reader.read(&mut buf);
        let read = async {
            match keep_alive {
                Some(limit) => tokio::time::timeout(limit, read)
                    .await
                    .unwrap_or_else(|_| Err(io::ErrorKind::TimedOut.into())),
                None => read.await,
            }
        };
        tokio::select! {
            r = read => match r {
                Ok(0) => break,
                Ok(_) => {}
                Err(e) => {
                    debug!(conn, error = %e, "read ended");
                    break;
                }
            },
            _ = closed.wait_for(|c| *c) => break,
            _ = shutdown.wait_for(|s| *s) => break,
        }
    }

    shared.router.close(conn);
    outbox.close();
    let _ = write_task.await;
    let dropped = outbox.dropped.load(Ordering::Relaxed);
    if dropped > 0 {
        warn!(conn, dropped, "slow subscriber lost messages");
        shared.dropped_total.fetch_add(dropped, Ordering::Relaxed);
    }
    shared.outboxes.write().remove(&conn);
}

fn ws_handshake(req: &Request, mut resp: Response) -> Result<Response, ErrorResponse> {
    let offered = req
        .headers()
        .get("Sec-WebSocket-Protocol")
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    if offered.split(',').any(|p| p.trim() == WS_SUBPROTOCOL) {
        resp.headers_mut()
            .insert("Sec-WebSocket-Protocol", HeaderValue::from_static(WS_SUBPROTOCOL));
    }
    Ok(resp)
}

#[derive(Clone, Copy)]
enum Transport {
    Tcp,
    Ws,
}

async fn accept_loop(
    listener: TcpListener,
    transport: Transport,
    shared: Arc<Shared>,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut conns = JoinSet::new();
    let conn_shutdown = shutdown.clone();
    loop {
        tokio::select! {
            accepted = listener.accept() => {
                let (stream, peer) = match accepted {
                    Ok(x) => x,
                    Err(e) => {
                        warn!(error = %e, "accept failed");
                        continue;
                    }
                };
                let _ = stream.set_nodelay(true);
                debug!(%peer, "connection accepted");
                let shared = shared.clone();
                let shutdown = conn_shutdown.clone();
                conns.spawn(async move {
                    match transport {
                        Transport::Tcp => {
                            let (r, w) = stream.into_split();
                            run_connection(shared, Reader::Tcp(r), Writer::Tcp(w), shutdown).await;
                        }
                        Transport::Ws => {
                            match tokio_tungstenite::accept_hdr_async(stream, ws_handshake).await {
                                Ok(ws) => {
                                    let (w, r) = ws.split();
                                    run_connection(shared, Reader::Ws(r), Writer::Ws(w), shutdown).await;
                                }
                                Err(e) => debug!(%peer, error = %e, "websocket handshake failed"),
                            }
                        }
                    }
                });
            }
            Some(_) = conns.join_next(), if !conns.is_empty() => {}
            _ = shutdown.wait_for(|s| *s) => break,
        }
    }
    drop(listener);
    while conns.join_next().await.is_some() {}
}

/// A running broker. Dropping the handle does not stop it; call
/// [`BrokerHandle::shutdown`].
pub struct BrokerHandle {
    shared: Arc<Shared>,
    shutdown: watch::Sender<bool>,
    tasks: Vec<tokio::task::JoinHandle<()>>,
    tcp_addr: Option<SocketAddr>,
    ws_addr: Option<SocketAddr>,
}

impl BrokerHandle {
    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.tcp_addr
    }

    pub fn ws_addr(&self) -> Option<SocketAddr> {
        self.ws_addr
    }

    pub fn router(&self) -> &Arc<Router> {
        &self.shared.router
    }

    pub fn connection_count(&self) -> usize {
        self.shared.outboxes.read().len()
    }

    /// Messages discarded by full subscriber queues on closed connections.
    pub fn dropped_messages(&self) -> u64 {
        self.shared.dropped_total.load(Ordering::Relaxed)
    }

    /// Stops accepting, flushes every session queue, closes all connections
    /// and waits for them to finish.
    pub async fn shutdown(self) {
        self.shutdown.send_replace(true);
        for o in self.shared.outboxes.read().values() {
            o.close();
        }
        for t in self.tasks {
            let _ = t.await;
        }
        info!("broker stopped");
    }
}

async fn bind(addr: &str) -> Result<TcpListener, BrokerError> {
    TcpListener::bind(addr)
        .await
        .map_err(|source| BrokerError::Bind { addr: addr.to_string(), source })
}

/// Binds the configured listeners and starts serving.
pub async fn serve(config: BrokerConfig) -> Result<BrokerHandle, BrokerError> {
    if config.bind_tcp.is_none() && config.bind_ws.is_none() {
        return Err(BrokerError::NoListeners);
    }
    let tcp = match &config.bind_tcp {
        Some(a) => Some(bind(a).await?),
        None => None,
    };
    let ws = match &config.bind_ws {
        Some(a) => Some(bind(a).await?),
        None => None,
    };
    let shared = Arc::new(Shared {
        router: Arc::new(Router::new()),
        outboxes: RwLock::new(HashMap::new()),
        next_conn: AtomicU64::new(1),
        config,
        dropped_total: AtomicU64::new(0),
    });
    let (shutdown, rx) = watch::channel(false);
    let mut tasks = Vec::new();
    let tcp_addr = tcp.as_ref().and_then(|l| l.local_addr().ok());
    let ws_addr = ws.as_ref().and_then(|l| l.local_addr().ok());
    if let Some(l) = tcp {
        info!(addr = ?tcp_addr, "MQTT/TCP listening");
        tasks.push(tokio::spawn(accept_loop(l, Transport::Tcp, shared.clone(), rx.clone())));
    }
    if let Some(l) = ws {
        info!(addr = ?ws_addr, "MQTT/WebSocket listening");
        tasks.push(tokio::spawn(accept_loop(l, Transport::Ws, shared.clone(), rx.clone())));
    }
    Ok(BrokerHandle { shared, shutdown, tasks, tcp_addr, ws_addr })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn lagging_outbox_drops_oldest() {
        let o = Outbox::new(3);
        for i in 0..3u16 {
            o.push(Packet::Unsuback { packet_id: i });
        }
        assert!(o.is_full());
        o.wait_for_space().await;
        assert!(o.lagging.load(Ordering::Relaxed));
        for i in 3..5u16 {
            o.push(Packet::Unsuback { packet_id: i });
        }
        let batch = o.next_batch().await.unwrap();
        assert_eq!(
            batch,
            vec![
                Packet::Unsuback { packet_id: 2 },
                Packet::Unsuback { packet_id: 3 },
                Packet::Unsuback { packet_id: 4 }
            ]
        );
        assert_eq!(o.dropped.load(Ordering::Relaxed), 2);
        assert!(!o.lagging.load(Ordering::Relaxed));
        o.push(Packet::Pingresp);
        o.close();
        // queued packets still flush after close
        assert_eq!(o.next_batch().await.unwrap(), vec![Packet::Pingresp]);
        assert!(o.next_batch().await.is_none());
    }

    #[tokio::test]
    async fn full_outbox_holds_publisher_until_drained() {
        let o = Arc::new(Outbox::new(2));
        o.push(Packet::Pingresp);
        o.push(Packet::Pingresp);
        // a few concurrent pushes past capacity are kept
        o.push(Packet::Pingresp);
        assert_eq!(o.dropped.load(Ordering::Relaxed), 0);
        let waiter = tokio::spawn({
            let o = o.clone();
            async move { o.wait_for_space().await }
        });
        tokio::task::yield_now().await;
        assert!(!waiter.is_finished());
        assert_eq!(o.next_batch().await.unwrap().len(), 3);
        waiter.await.unwrap();
        assert!(!o.lagging.load(Ordering::Relaxed));
    }

    #[tokio::test]
    async fn bind_failure_is_reported() {
        let taken = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = taken.local_addr().unwrap().to_string();
        let cfg = BrokerConfig { bind_tcp: Some(addr), bind_ws: None, ..BrokerConfig::default() };
        assert!(matches!(serve(cfg).await, Err(BrokerError::Bind { .. })));
    }
}
