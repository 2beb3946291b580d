//! Object-based 3D audio: vector-base amplitude panning over a speaker
//! layout, a block renderer, and the control-topic service.

mod clip;
mod engine;
mod layout;
mod service;

use thiserror::Error;

pub use clip::Clip;
pub use engine::{
    render_session_to_wav, RenderBlock, RenderEngine, SessionSound, SoundSource, TimedCommand, WavFormat,
    DEFAULT_BLOCK_SIZE, DEFAULT_SAMPLE_RATE,
};
pub use service::{run_render_service, RenderService, RenderServiceConfig};
pub use layout::{
    compute_gains, distance_attenuation, intensity_direction, triangulate_layout, PanningMesh, Speaker,
    SpeakerLayout,
};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("speaker layout: {0}")]
    Layout(String),
    #[error("expected {expected} gains, got {got}")]
    GainCount { expected: usize, got: usize },
    #[error("all gains are zero; direction undefined")]
    UndefinedDirection,
    #[error("unknown sound {0:?}")]
    UnknownSound(String),
    #[error("invalid command: {0}")]
    InvalidCommand(String),
    #[error("audio file {path}: {reason}")]
    Audio { path: String, reason: String },
    #[error("wav output: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("broker: {0}")]
    Broker(String),
}
