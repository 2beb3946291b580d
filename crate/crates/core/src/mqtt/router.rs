//! Transport-independent broker logic: sessions, subscriptions and routing.
//!
//! The router never touches sockets. Each inbound packet yields a list of
//! [`Action`]s that the transport layer carries out, which keeps the routing
//! rules testable without I/O.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use tracing::{debug, warn};

use super::packet::{connack, Connect, Packet, Publish, QoS, PROTOCOL_LEVEL, SUBACK_FAILURE};
use super::topic::valid_filter;
use super::trie::SubscriptionTrie;

/// Identifies one transport connection.
pub type ConnId = u64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Send(ConnId, Packet),
    /// Close the connection after flushing what is queued for it.
    Close(ConnId),
}

/// Per-connection broker state.
#[derive(Debug, Clone, Default)]
pub struct Session {
    pub client_id: Option<String>,
    pub subscriptions: BTreeSet<String>,
    pub connected: bool,
}

/// Called for every PUBLISH the router accepts, before fan-out.
pub type PublishObserver = Arc<dyn Fn(&Publish) + Send + Sync>;

#[derive(Default)]
pub struct Router {
    sessions: RwLock<HashMap<ConnId, Session>>,
    by_client_id: Mutex<HashMap<String, ConnId>>,
    trie: RwLock<SubscriptionTrie<ConnId>>,
    observer: RwLock<Option<PublishObserver>>,
    next_auto_id: AtomicU64,
    published: AtomicU64,
    delivered: AtomicU64,
}

impl std::fmt::Debug for Router {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Router")
            .field("sessions", &self.sessions.read().len())
            .field("filters", &self.trie.read().len())
            .finish()
    }
}

impl Router {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_publish_observer(&self, observer: Option<PublishObserver>) {
        *self.observer.write() = observer;
    }

    /// Registers a fresh transport connection awaiting CONNECT.
    pub fn open(&self, conn: ConnId) {
        self.sessions.write().insert(conn, Session::default());
    }

    /// Forgets a connection and all of its subscriptions.
    pub fn close(&self, conn: ConnId) {
        let Some(session) = self.sessions.write().remove(&conn) else {
            return;
        };
        if let Some(id) = &session.client_id {
            let mut ids = self.by_client_id.lock();
            if ids.get(id) == Some(&conn) {
                ids.remove(id);
            }
        }
        let mut trie = self.trie.write();
        for filter in &session.subscriptions {
            trie.remove(filter, &conn);
        }
    }

    pub fn session(&self, conn: ConnId) -> Option<Session> {
        self.sessions.read().get(&conn).cloned()
    }

    pub fn connection_count(&self) -> usize {
        self.sessions.read().len()
    }

    pub fn subscription_count(&self) -> usize {
        self.trie.read().len()
    }

    /// (accepted publishes, delivered copies).
    pub fn counters(&self) -> (u64, u64) {
        (self.published.load(Ordering::Relaxed), self.delivered.load(Ordering::Relaxed))
    }

    /// Sessions that would receive a publish on `topic`.
    pub fn route(&self, topic: &str) -> BTreeSet<ConnId> {
        self.trie.read().matches(topic)
    }

    pub fn on_packet(&self, conn: ConnId, packet: Packet) -> Vec<Action> {
        let connected = match self.sessions.read().get(&conn) {
            Some(s) => s.connected,
            None => return vec![Action::Close(conn)],
        };
        match (connected, packet) {
            (false, Packet::Connect(c)) => self.on_connect(conn, c),
            (false, other) => {
                debug!(conn, packet = other.name(), "packet before CONNECT");
                vec![Action::Close(conn)]
            }
            (true, Packet::Connect(_)) => {
                warn!(conn, "second CONNECT on one connection");
                vec![Action::Close(conn)]
            }
            (true, Packet::Publish(p)) => self.on_publish(conn, p),
            (true, Packet::Subscribe { packet_id, filters }) => {
                self.on_subscribe(conn, packet_id, filters)
            }
            (true, Packet::Unsubscribe { packet_id, filters }) => {
                let mut sessions = self.sessions.write();
                let mut trie = self.trie.write();
                if let Some(s) = sessions.get_mut(&conn) {
                    for f in &filters {
                        if s.subscriptions.remove(f) {
                            trie.remove(f, &conn);
                        }
                    }
                }
                vec![Action::Send(conn, Packet::Unsuback { packet_id })]
            }
            (true, Packet::Pingreq) => vec![Action::Send(conn, Packet::Pingresp)],
            (true, Packet::Disconnect) => vec![Action::Close(conn)],
            // PUBACK from a client would only answer a QoS 1 delivery, which
            // this broker never sends.
            (true, Packet::Puback { .. }) => Vec::new(),
            (true, other) => {
                debug!(conn, packet = other.name(), "client sent a server-only packet");
                vec![Action::Close(conn)]
            }
        }
    }

    fn on_connect(&self, conn: ConnId, c: Connect) -> Vec<Action> {
        let refuse = |code| {
            vec![
                Action::Send(conn, Packet::Connack { session_present: false, return_code: code }),
                Action::Close(conn),
            ]
        };
        if c.protocol_level != PROTOCOL_LEVEL {
            return refuse(connack::UNACCEPTABLE_PROTOCOL);
        }
        let client_id = if c.client_id.is_empty() {
            if !c.clean_session {
                return refuse(connack::IDENTIFIER_REJECTED);
            }
            format!("auto-{}", self.next_auto_id.fetch_add(1, Ordering::Relaxed))
        } else {
            c.client_id
        };

        let mut actions = Vec::new();
        let previous = self.by_client_id.lock().insert(client_id.clone(), conn);
        if let Some(old) = previous.filter(|&old| old != conn) {
            debug!(client_id, old, new = conn, "client id taken over");
            // close() only unmaps the id while it still points at `old`
            self.close(old);
            actions.push(Action::Close(old));
        }
        if let Some(s) = self.sessions.write().get_mut(&conn) {
            s.client_id = Some(client_id);
            s.connected = true;
        }
        actions.push(Action::Send(
            conn,
            Packet::Connack { session_present: false, return_code: connack::ACCEPTED },
        ));
        actions
    }

    fn on_subscribe(&self, conn: ConnId, packet_id: u16, filters: Vec<(String, QoS)>) -> Vec<Action> {
        let mut return_codes = Vec::with_capacity(filters.len());
        let mut sessions = self.sessions.write();
        let mut trie = self.trie.write();
        let Some(session) = sessions.get_mut(&conn) else {
            return vec![Action::Close(conn)];
        };
        for (filter, _requested) in filters {
            if valid_filter(&filter) {
                trie.insert(&filter, conn);
                session.subscriptions.insert(filter);
                // every grant is QoS 0
                return_codes.push(QoS::AtMostOnce as u8);
            } else {
                return_codes.push(SUBACK_FAILURE);
            }
        }
        vec![Action::Send(conn, Packet::Suback { packet_id, return_codes })]
    }

    fn on_publish(&self, conn: ConnId, p: Publish) -> Vec<Action> {
        if p.qos == QoS::ExactlyOnce {
            warn!(conn, "QoS 2 publish is not supported");
            return vec![Action::Close(conn)];
        }
        if let Some(obs) = self.observer.read().as_ref() {
            obs(&p);
        }
        self.published.fetch_add(1, Ordering::Relaxed);
        let mut actions = Vec::new();
        if let (QoS::AtLeastOnce, Some(packet_id)) = (p.qos, p.packet_id) {
            actions.push(Action::Send(conn, Packet::Puback { packet_id }));
        }
        let targets = self.trie.read().matches(&p.topic);
        if targets.is_empty() {
            return actions;
        }
        let out = Publish::new(p.topic, p.payload);
        self.delivered.fetch_add(targets.len() as u64, Ordering::Relaxed);
        actions.extend(targets.into_iter().map(|t| Action::Send(t, Packet::Publish(out.clone()))));
        actions
    }
}
