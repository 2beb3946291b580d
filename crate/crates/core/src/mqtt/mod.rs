//! MQTT 3.1.1 subset: wire codec, wildcard routing, a QoS 0 broker over TCP
//! and WebSocket, and a small client.
//!
//! Supported: CONNECT, PUBLISH (QoS 0; QoS 1 accepted and acknowledged,
//! delivered at QoS 0), SUBSCRIBE/UNSUBSCRIBE (always granted QoS 0),
//! PINGREQ, DISCONNECT. Not supported: QoS 2, retained messages,
//! persistent sessions, will delivery.

pub mod client;
pub mod packet;
pub mod router;
pub mod server;
pub mod topic;
pub mod trie;

use thiserror::Error;

pub use client::{connect_with_backoff, unique_client_id, ClientOptions, Incoming, MqttClient};
pub use packet::{decode_packet, encode_packet, Connect, Packet, Publish, QoS};
pub use router::{Action, ConnId, Router, Session};
pub use server::{serve, BrokerConfig, BrokerHandle};
pub use topic::{topic_matches, valid_filter, valid_topic_name};
pub use trie::SubscriptionTrie;

/// The peer violated the protocol; the connection must be closed.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("malformed packet: {0}")]
    Malformed(String),
    #[error("packet of {size} bytes exceeds limit of {max}")]
    TooLarge { size: usize, max: usize },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
}

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no listener configured")]
    NoListeners,
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("connection refused by broker (return code {0})")]
    Refused(u8),
    #[error("timed out waiting for {0}")]
    Timeout(&'static str),
    #[error("connection closed")]
    Closed,
    #[error("unexpected {0} from broker")]
    Unexpected(&'static str),
    #[error("subscription to {0:?} rejected")]
    SubscribeRejected(String),
}
