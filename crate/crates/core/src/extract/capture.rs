use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::array::MicArrayConfig;
use crate::schema::Vec3;

/// A point source and its dry signal at the array sample rate.
#[derive(Debug, Clone)]
pub struct SourceSignal {
    pub position: Vec3,
    pub samples: Vec<f32>,
}

/// Renders what each mic hears: every source delayed by its propagation
/// time (linear interpolation), scaled by 1/max(d, 0.1) and the mic pattern,
/// plus independent white Gaussian noise at `noise_dbfs` RMS.
///
/// The output length is the longest source. Pass `f64::NEG_INFINITY` for a
/// noiseless capture.
pub fn simulate_capture(
    sources: &[SourceSignal],
    array: &MicArrayConfig,
    noise_dbfs: f64,
    seed: u64,
) -> Vec<Vec<f32>> {
    let len = sources.iter().map(|s| s.samples.len()).max().unwrap_or(0);
    let fs = array.sample_rate as f64;
    let sigma = 10f64.powf(noise_dbfs / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    array
        .mics
        .iter()
        .map(|mic| {
            let mut out = vec![0f64; len];
            for src in sources {
                let d = src.position.distance(mic.position);
                let gain = mic.gain(src.position);
                if gain == 0.0 {
                    continue;
                }
                delay_linear_into(&src.samples, d / array.speed_of_sound * fs, gain, &mut out);
            }
            if sigma > 0.0 {
                for v in out.iter_mut() {
                    *v += sigma * normal.sample(&mut rng);
                }
            }
            out.into_iter().map(|v| v as f32).collect()
        })
        .collect()
}

/// out[n] += gain * x(n - delay), linearly interpolated, zero outside x.
fn delay_linear_into(x: &[f32], delay: f64, gain: f64, out: &mut [f64]) {
    let whole = delay.floor();
    let frac = delay - whole;
    let whole = whole as usize;
    for (n, o) in out.iter_mut().enumerate().skip(whole) {
        let i = n - whole;
        // x(i - frac) between x[i-1] and x[i]
        let a = x.get(i).copied().unwrap_or(0.0) as f64;
        let b = if i == 0 { 0.0 } else { x.get(i - 1).copied().unwrap_or(0.0) as f64 };
        *o += gain * (a * (1.0 - frac) + b * frac);
    }
}

/// Synthetic voiced speech: syllable-length bursts of a glottal-like harmonic
/// series with per-syllable pitch and two moving formants, separated by
/// pauses. Normalized to 0.1 RMS. Different seeds give different talkers.
pub fn speech_like(seed: u64, duration_s: f64, sample_rate: u32) -> Vec<f32> {
    let fs = sample_rate as f64;
    let n = (duration_s * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base_f0 = rng.gen_range(100.0..220.0);
    let nyquist_guard = fs / 2.0 - 1000.0;

    let mut out = vec![0f64; n];
    let mut pos = (rng.gen_range(0.0..0.2) * fs) as usize;
    let mut phase = 0.0f64;
    while pos < n {
        let len = (rng.gen_range(0.1..0.3) * fs) as usize;
        let gap = (rng.gen_range(0.05..0.25) * fs) as usize;
        let f0 = base_f0 * rng.gen_range(0.85..1.2);
        let vib_rate = rng.gen_range(3.0..6.0);
        let f1 = rng.gen_range(300.0..900.0);
        let f2 = rng.gen_range(900.0..2500.0);
        let end = (pos + len).min(n);
        for i in pos..end {
            let t = i as f64 / fs;
            let k_in = (i - pos) as f64;
            let env = (std::f64::consts::PI * k_in / len as f64).sin().max(0.0).sqrt();
            let f = f0 * (1.0 + 0.05 * (2.0 * std::f64::consts::PI * vib_rate * t).sin());
            phase += 2.0 * std::f64::consts::PI * f / fs;
            let mut v = 0.0;
            for k in 1..40 {
                let fk = k as f64 * f;
                if fk > nyquist_guard {
                    break;
                }
                let formant =
                    1.0 / (1.0 + ((fk - f1) / 150.0).powi(2)) + 0.5 / (1.0 + ((fk - f2) / 250.0).powi(2)) + 0.05;
                v += formant / k as f64 * (k as f64 * phase).sin();
            }
            out[i] = env * v;
        }
        pos = end + gap;
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    let scale = if rms > 0.0 { 0.1 / rms } else { 0.0 };
    out.into_iter().map(|v| (v * scale) as f32).collect()
}
