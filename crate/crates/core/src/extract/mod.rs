//! Zone-selective audio extraction: a simulated microphone array,
//! delay-and-sum beamforming, a Wiener post-filter driven by a second beam,
//! and the control-topic service.

mod array;
mod beam;
mod capture;
mod pipeline;
mod postfilter;
mod service;

use thiserror::Error;

pub use array::{
    default_zones, steering_delays, validate_zones, Directivity, MicArrayConfig, Microphone, Zone, SPEED_OF_SOUND,
};
pub use beam::{beam_response, delay_and_sum, matched_weights, uniform_weights};
pub use capture::{simulate_capture, speech_like, SourceSignal};
pub use pipeline::{
    evaluate_zone_sir, simulate_zone_scene, zone_talkers, ExtractionResult, Extractor, SirReport, ZonePlan,
    SCENE_NOISE_DBFS,
};
pub use postfilter::{wiener_gains, wiener_postfilter, PostFilterConfig, SpectralGains, Stft};
pub use service::{
    output_path, read_multichannel_wav, run_extraction_service, write_mono_wav, write_multichannel_wav,
    ExtractionService, ExtractionServiceConfig,
};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("config: {0}")]
    Config(String),
    #[error("{what}: expected {expected}, got {got}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("unknown zone {0:?}")]
    UnknownZone(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("broker: {0}")]
    Broker(String),
}
