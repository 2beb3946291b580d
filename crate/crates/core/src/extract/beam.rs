use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::array::MicArrayConfig;
use super::ExtractError;
use crate::schema::Vec3;

/// Uniform weights for `m` channels.
pub fn uniform_weights(m: usize) -> Vec<f64> {
    vec![1.0 / m as f64; m]
}

/// Weights proportional to each mic's gain toward `target`, summing to 1.
/// Falls back to uniform when no mic hears the target.
pub fn matched_weights(target: Vec3, array: &MicArrayConfig) -> Vec<f64> {
    let g: Vec<f64> = array.mics.iter().map(|m| m.gain(target)).collect();
    let sum: f64 = g.iter().sum();
    if sum > 0.0 {
        g.into_iter().map(|v| v / sum).collect()
    } else {
        uniform_weights(array.len())
    }
}

/// Delays each channel by `delays[i]` seconds and forms the weighted sum.
///
/// Fractional delays are applied as a linear phase on a zero-padded FFT, so
/// they are exact for band-limited input and leave white noise power
/// unchanged. The output has the capture length.
pub fn delay_and_sum(
    capture: &[Vec<f32>],
    delays: &[f64],
    weights: Option<&[f64]>,
    sample_rate: u32,
) -> Result<Vec<f32>, ExtractError> {
    let m = capture.len();
    if m == 0 {
        return Err(ExtractError::Config("empty capture".into()));
    }
    if delays.len() != m {
        return Err(ExtractError::LengthMismatch { what: "delays", expected: m, got: delays.len() });
    }
    let uniform;
    let weights = match weights {
        Some(w) => w,
        None => {
            uniform = uniform_weights(m);
            &uniform
        }
    };
    if weights.len() != m {
        return Err(ExtractError::LengthMismatch { what: "weights", expected: m, got: weights.len() });
    }
    let len = capture[0].len();
    if let Some(bad) = capture.iter().find(|c| c.len() != len) {
        return Err(ExtractError::LengthMismatch { what: "channel samples", expected: len, got: bad.len() });
    }
    if let Some(d) = delays.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(ExtractError::Config(format!("delay {d} is not a finite non-negative time")));
    }
    if len == 0 {
        return Ok(Vec::new());
    }

    let fs = sample_rate as f64;
    let max_shift = delays.iter().fold(0f64, |a, &d| a.max(d * fs)).ceil() as usize;
    let n = (len + max_shift + 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for ((ch, &d), &w) in capture.iter().zip(delays).zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (b, &v) in buf.iter_mut().zip(ch.iter().chain(std::iter::repeat(&0.0))) {
            *b = Complex64::new(v as f64, 0.0);
        }
        fwd.process(&mut buf);
        let shift = d * fs;
        for (k, (a, &x)) in acc.iter_mut().zip(buf.iter()).enumerate() {
            *a += x * w * phase_shift(k, n, shift);
        }
    }
    inv.process(&mut acc);
    Ok(acc[..len].iter().map(|c| (c.re / n as f64) as f32).collect())
}

/// e^{-jωτ} for bin `k` of an `n`-point FFT, with the Nyquist bin kept real.
fn phase_shift(k: usize, n: usize, shift: f64) -> Complex64 {
    if 2 * k == n {
        return Complex64::new((PI * shift).cos(), 0.0);
    }
    let signed = if 2 * k < n { k as f64 } else { k as f64 - n as f64 };
    Complex64::from_polar(1.0, -2.0 * PI * signed * shift / n as f64)
}

/// Complex response at each frequency in `freqs` (Hz) of a beam with the
/// given delays and weights to a point source at `source`.
pub fn beam_response(
    array: &MicArrayConfig,
    delays: &[f64],
    weights: &[f64],
    source: Vec3,
    freqs: &[f64],
) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); freqs.len()];
    for ((mic, &d), &w) in array.mics.iter().zip(delays).zip(weights) {
        let g = w * mic.gain(source);
        if g == 0.0 {
            continue;
        }
        let t = source.distance(mic.position) / array.speed_of_sound + d;
        for (o, &f) in out.iter_mut().zip(freqs) {
            *o += Complex64::from_polar(g, -2.0 * PI * f * t);
        }
    }
    out
}
