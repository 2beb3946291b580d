//! A software-defined media station.
//!
//! Room infrastructure (localization sensors, loudspeakers, microphones) is
//! exposed to applications as MQTT topics. Services in this crate:
//!
//! * [`mqtt`]: the pub/sub transport, a QoS 0 MQTT 3.1.1 broker and client.
//! * [`localization`]: simulated UWB ranging and a Gauss–Newton tag solver.
//! * [`render`]: object-based 3D audio with vector-base amplitude panning.
//! * [`extract`]: delay-and-sum beamforming with a Wiener post-filter.
//! * [`bench`]: publish/echo round-trip latency measurement and a delay proxy.
//! * [`station`]: configuration loading and service composition.
//!
//! Shared types live in [`schema`].

pub mod bench;
pub mod cli;
pub mod extract;
pub mod localization;
pub mod mqtt;
pub mod render;
pub mod schema;
pub mod station;

pub use schema::Vec3;

// Code blocks in the guide under book/ compile and run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/topics.md")]
    mod topics {}
    #[doc = include_str!("../../../book/src/broker.md")]
    mod broker {}
    #[doc = include_str!("../../../book/src/localization.md")]
    mod localization {}
    #[doc = include_str!("../../../book/src/panning.md")]
    mod panning {}
    #[doc = include_str!("../../../book/src/extraction.md")]
    mod extraction {}
    #[doc = include_str!("../../../book/src/latency.md")]
    mod latency {}
    #[doc = include_str!("../../../book/src/station.md")]
    mod station {}
}
