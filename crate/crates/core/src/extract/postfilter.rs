use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::ExtractError;

#[derive(Debug, Clone, PartialEq)]
pub struct PostFilterConfig {
    pub frame: usize,
    pub hop: usize,
    /// Lower clamp on the per-bin gain.
    pub floor: f64,
    /// Multiplier on the noise PSD before subtraction.
    pub over_subtraction: f64,
    /// First-order recursive smoothing of both PSDs across frames, in [0, 1).
    pub time_smoothing: f64,
    /// Width in bins of a centered moving average over both PSDs.
    pub freq_smoothing: usize,
}

impl Default for PostFilterConfig {
    /// The bare filter: raw periodograms, no over-subtraction.
    fn default() -> Self {
        Self { frame: 1024, hop: 512, floor: 0.05, over_subtraction: 1.0, time_smoothing: 0.0, freq_smoothing: 1 }
    }
}

impl PostFilterConfig {
    /// Settings used by zone extraction, where the reference is a second beam
    /// rather than a clean noise recording.
    pub fn zone_extraction() -> Self {
        Self { over_subtraction: 4.0, time_smoothing: 0.5, freq_smoothing: 3, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ExtractError> {
        if !self.frame.is_power_of_two() || self.frame < 4 {
            return Err(ExtractError::Config(format!("frame {} is not a power of two", self.frame)));
        }
        if self.hop == 0 || self.hop > self.frame {
            return Err(ExtractError::Config(format!("hop {} must be in 1..={}", self.hop, self.frame)));
        }
        if !(0.0..=1.0).contains(&self.floor) {
            return Err(ExtractError::Config(format!("floor {} outside [0, 1]", self.floor)));
        }
        if !(self.over_subtraction >= 0.0) || !(0.0..1.0).contains(&self.time_smoothing) || self.freq_smoothing == 0 {
            return Err(ExtractError::Config("bad smoothing or over-subtraction".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.frame / 2 + 1
    }

    /// Center frequency of each bin in Hz.
    pub fn bin_freqs(&self, sample_rate: u32) -> Vec<f64> {
        (0..self.bins()).map(|k| k as f64 * sample_rate as f64 / self.frame as f64).collect()
    }
}

/// Periodic Hann analysis, overlap-add synthesis normalized by the summed
/// window so an all-ones gain reproduces the input.
pub struct Stft {
    frame: usize,
    hop: usize,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(frame: usize, hop: usize) -> Self {
        let window = (0..frame).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / frame as f64).cos()).collect();
        let mut planner = FftPlanner::new();
        Self { frame, hop, window, fwd: planner.plan_fft_forward(frame), inv: planner.plan_fft_inverse(frame) }
    }

    /// Frames start `frame - hop` samples before the signal so every input
    /// sample lies under a full set of overlapping windows.
    fn frame_count(&self, len: usize) -> usize {
        (len + self.frame - self.hop).div_ceil(self.hop)
    }

    fn offset(&self) -> usize {
        self.frame - self.hop
    }

    /// One row of `frame/2 + 1` bins per frame.
    pub fn analyze(&self, x: &[f32]) -> Vec<Vec<Complex64>> {
        let bins = self.frame / 2 + 1;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.frame];
        (0..self.frame_count(x.len()))
            .map(|f| {
                let start = (f * self.hop) as isize - self.offset() as isize;
                for (i, b) in buf.iter_mut().enumerate() {
                    let idx = start + i as isize;
                    let v = if idx >= 0 { x.get(idx as usize).copied().unwrap_or(0.0) as f64 } else { 0.0 };
                    *b = Complex64::new(v * self.window[i], 0.0);
                }
                self.fwd.process(&mut buf);
                buf[..bins].to_vec()
            })
            .collect()
    }

    pub fn synthesize(&self, spectra: &[Vec<Complex64>], len: usize) -> Vec<f32> {
        let mut out = vec![0f64; len];
        let mut norm = vec![0f64; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); self.frame];
        for (f, spec) in spectra.iter().enumerate() {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = if k <= self.frame / 2 { spec[k] } else { spec[self.frame - k].conj() };
            }
            self.inv.process(&mut buf);
            let start = (f * self.hop) as isize - self.offset() as isize;
            for (i, b) in buf.iter().enumerate() {
                let idx = start + i as isize;
                if idx >= 0 && (idx as usize) < len {
                    out[idx as usize] += b.re / self.frame as f64;
                    norm[idx as usize] += self.window[i];
                }
            }
        }
        out.iter().zip(&norm).map(|(&v, &w)| if w > 1e-9 { (v / w) as f32 } else { 0.0 }).collect()
    }
}

/// Per-frame, per-bin Wiener gains, reusable on any signal of the same length.
#[derive(Debug, Clone)]
pub struct SpectralGains {
    pub frame: usize,
    pub hop: usize,
    /// `gains[frame][bin]`, each in `[floor, 1]`.
    pub gains: Vec<Vec<f64>>,
    /// Smoothed PSDs the gains were computed from.
    pub signal_psd: Vec<Vec<f64>>,
    pub noise_psd: Vec<Vec<f64>>,
}

impl SpectralGains {
    /// Filters `x` with these gains. `x` must have the length the gains
    /// were computed for.
    pub fn apply(&self, x: &[f32]) -> Vec<f32> {
        let stft = Stft::new(self.frame, self.hop);
        let mut spec = stft.analyze(x);
        for (row, g) in spec.iter_mut().zip(&self.gains) {
            for (v, &h) in row.iter_mut().zip(g) {
                *v *= h;
            }
        }
        stft.synthesize(&spec, x.len())
    }
}

/// Computes gains H = max(0, Φyy − βΦnn)/Φyy clamped to `[floor, 1]`.
///
/// `equalization`, when given, scales the reference PSD per bin before
/// subtraction.
pub fn wiener_gains(
    beam: &[f32],
    noise_reference: &[f32],
    equalization: Option<&[f64]>,
    config: &PostFilterConfig,
) -> Result<SpectralGains, ExtractError> {
    config.validate()?;
    if beam.len() != noise_reference.len() {
        return Err(ExtractError::LengthMismatch {
            what: "noise reference",
            expected: beam.len(),
            got: noise_reference.len(),
        });
    }
    if let Some(eq) = equalization {
        if eq.len() != config.bins() {
            return Err(ExtractError::LengthMismatch { what: "equalization", expected: config.bins(), got: eq.len() });
        }
    }
    let stft = Stft::new(config.frame, config.hop);
    let psd = |x: &[f32]| -> Vec<Vec<f64>> {
        stft.analyze(x).iter().map(|row| row.iter().map(|c| c.norm_sqr()).collect()).collect()
    };
    let mut syy = psd(beam);
    let mut snn = psd(noise_reference);
    if let Some(eq) = equalization {
        for row in snn.iter_mut() {
            for (v, &e) in row.iter_mut().zip(eq) {
                *v *= e;
            }
        }
    }
    smooth(&mut syy, config);
    smooth(&mut snn, config);

    let gains = syy
        .iter()
        .zip(&snn)
        .map(|(y, n)| {
            y.iter()
                .zip(n)
                .map(|(&py, &pn)| {
                    let h = if py > 0.0 { (py - config.over_subtraction * pn).max(0.0) / py } else { 1.0 };
                    h.clamp(config.floor, 1.0)
                })
                .collect()
        })
        .collect();
    Ok(SpectralGains { frame: config.frame, hop: config.hop, gains, signal_psd: syy, noise_psd: snn })
}

fn smooth(psd: &mut [Vec<f64>], config: &PostFilterConfig) {
    let w = config.freq_smoothing;
    if w > 1 {
        let half = w / 2;
        for row in psd.iter_mut() {
            let src = row.clone();
            for (k, v) in row.iter_mut().enumerate() {
                let lo = k.saturating_sub(half);
                let hi = (k + half + 1).min(src.len());
                *v = src[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
            }
        }
    }
    let a = config.time_smoothing;
    if a > 0.0 {
        for f in 1..psd.len() {
            let (prev, cur) = psd.split_at_mut(f);
            for (c, &p) in cur[0].iter_mut().zip(&prev[f - 1]) {
                *c = a * p + (1.0 - a) * *c;
            }
        }
    }
}

/// Single-channel Wiener post-filter with the bare settings and the given
/// frame and hop.
pub fn wiener_postfilter(
    beam: &[f32],
    noise_reference: &[f32],
    frame: usize,
    hop: usize,
) -> Result<Vec<f32>, ExtractError> {
    let config = PostFilterConfig { frame, hop, ..PostFilterConfig::default() };
    Ok(wiener_gains(beam, noise_reference, None, &config)?.apply(beam))
}
