use std::path::Path;
use std::sync::Arc;

use super::RenderError;

/// Mono PCM in [-1, 1] at a known rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub samples: Arc<[f32]>,
    pub sample_rate: u32,
}

impl Clip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self { samples: samples.into(), sample_rate }
    }

    /// A sine at `freq_hz`, `amplitude` peak.
    pub fn tone(freq_hz: f64, duration_s: f64, amplitude: f32, sample_rate: u32) -> Self {
        let n = (duration_s * sample_rate as f64).round() as usize;
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate as f64;
        Self::new((0..n).map(|i| amplitude * (w * i as f64).sin() as f32).collect(), sample_rate)
    }

    /// Reads a WAV file, averaging channels down to mono.
    pub fn from_wav(path: &Path) -> Result<Self, RenderError> {
        let audio_err = |reason: String| RenderError::Audio { path: path.display().to_string(), reason };
        let mut reader = hound::WavReader::open(path).map_err(|e| audio_err(e.to_string()))?;
        let spec = reader.spec();
        let channels = spec.channels.max(1) as usize;
        let interleaved: Vec<f32> = match spec.sample_format {
            hound::SampleFormat::Float => {
                reader.samples::<f32>().collect::<Result<_, _>>().map_err(|e| audio_err(e.to_string()))?
            }
            hound::SampleFormat::Int => {
                let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
                reader
                    .samples::<i32>()
                    .map(|s| s.map(|v| v as f32 * scale))
                    .collect::<Result<_, _>>()
                    .map_err(|e| audio_err(e.to_string()))?
            }
        };
        let mono = interleaved.chunks(channels).map(|f| f.iter().sum::<f32>() / channels as f32).collect();
        Ok(Self::new(mono, spec.sample_rate))
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// This clip at `rate`, by linear interpolation.
    pub fn resampled(&self, rate: u32) -> Self {
        if rate == self.sample_rate || self.samples.is_empty() {
            return Self { samples: self.samples.clone(), sample_rate: rate };
        }
        let ratio = self.sample_rate as f64 / rate as f64;
        let n = ((self.samples.len() as f64) / ratio).floor() as usize;
        Self::new((0..n).map(|i| sample_at(&self.samples, i as f64 * ratio)).collect(), rate)
    }
}

/// Linear interpolation at fractional index `pos`; zero past either end.
pub(crate) fn sample_at(samples: &[f32], pos: f64) -> f32 {
    if pos < 0.0 {
        return 0.0;
    }
    let i = pos.floor() as usize;
    let frac = (pos - i as f64) as f32;
    match (samples.get(i), samples.get(i + 1)) {
        (Some(&a), Some(&b)) => a + (b - a) * frac,
        (Some(&a), None) => a * (1.0 - frac),
        _ => 0.0,
    }
}
