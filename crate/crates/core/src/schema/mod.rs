//! Shared vocabulary: geometry, topic naming, JSON payloads and the
//! virtual-space scene registry.

mod message;
mod scene;
mod topic;
mod vec3;

use thiserror::Error;

pub use message::{
    decode_message, encode_message, BenchMessage, CommandKind, ErrorReport, ExtractStatus,
    LocationEvent, LocationMessage, Message, MessageKind, Payload, SoundCommand, SoundStatus,
    ZoneSelect, PITCH_RANGE, VOLUME_RANGE,
};
pub use scene::{ObjectKind, Scene, SceneObject};
pub use topic::{make_topic, prefixed, sound_id_from_topic, TopicKind, TopicName};
pub use vec3::Vec3;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid topic: {0}")]
    InvalidTopic(String),
    #[error("invalid scene object: {0}")]
    InvalidObject(String),
    #[error("no scene object with id {0:?}")]
    NotFound(String),
}

/// Payload decode failure. `field` is empty when the error is not tied to a
/// single field (e.g. malformed JSON).
#[derive(Debug, Clone, Error, PartialEq)]
#[error("{reason}")]
pub struct DecodeError {
    pub field: String,
    pub reason: String,
}

impl DecodeError {
    pub fn new(field: &str, reason: impl Into<String>) -> Self {
        Self { field: field.to_string(), reason: reason.into() }
    }
}

/// Wall-clock microseconds since the Unix epoch.
pub fn now_us() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_micros() as u64)
        .unwrap_or(0)
}
