use super::array::{steering_delays, validate_zones, MicArrayConfig, Zone};
use super::beam::{beam_response, delay_and_sum, matched_weights};
use super::capture::{simulate_capture, speech_like, SourceSignal};
use super::postfilter::{wiener_gains, PostFilterConfig, SpectralGains};
use super::ExtractError;
use crate::schema::Vec3;

#[derive(Debug, Clone)]
pub struct ExtractionResult {
    pub zone_id: String,
    pub samples: Vec<f32>,
    pub snr_in_db: f64,
    pub snr_out_db: f64,
}

/// Fixed beams and reference equalization for one target zone.
#[derive(Debug, Clone)]
pub struct ZonePlan {
    pub zone_id: String,
    pub target: Vec3,
    /// Centroid of the other zones, where the reference beam points.
    pub reference: Vec3,
    pub weights: Vec<f64>,
    pub target_delays: Vec<f64>,
    pub reference_delays: Vec<f64>,
    /// Per-bin ratio of the target beam's to the reference beam's power
    /// response, summed over the other zone centers.
    pub equalization: Vec<f64>,
    sample_rate: u32,
}

impl ZonePlan {
    pub fn beam(&self, capture: &[Vec<f32>]) -> Result<Vec<f32>, ExtractError> {
        delay_and_sum(capture, &self.target_delays, Some(&self.weights), self.sample_rate)
    }

    pub fn reference_beam(&self, capture: &[Vec<f32>]) -> Result<Vec<f32>, ExtractError> {
        delay_and_sum(capture, &self.reference_delays, Some(&self.weights), self.sample_rate)
    }
}

#[derive(Debug, Clone)]
pub struct Extractor {
    pub array: MicArrayConfig,
    pub zones: Vec<Zone>,
    pub postfilter: PostFilterConfig,
}

impl Extractor {
    pub fn new(array: MicArrayConfig, zones: Vec<Zone>) -> Result<Self, ExtractError> {
        array.validate()?;
        validate_zones(&zones)?;
        let postfilter = PostFilterConfig::zone_extraction();
        postfilter.validate()?;
        Ok(Self { array, zones, postfilter })
    }

    pub fn zone(&self, zone_id: &str) -> Result<&Zone, ExtractError> {
        self.zones.iter().find(|z| z.id == zone_id).ok_or_else(|| ExtractError::UnknownZone(zone_id.to_string()))
    }

    pub fn plan(&self, zone_id: &str) -> Result<ZonePlan, ExtractError> {
        let zone = self.zone(zone_id)?;
        let others: Vec<Vec3> = self.zones.iter().filter(|z| z.id != zone_id).map(|z| z.center).collect();
        let target = zone.center;
        let weights = matched_weights(target, &self.array);
        let target_delays = steering_delays(target, &self.array);

        // With a single zone there is nothing to point away at; aim the
        // reference straight up from the target and skip equalization.
        let reference = if others.is_empty() {
            target + Vec3::new(0.0, 0.0, 1.0)
        } else {
            others.iter().copied().sum::<Vec3>() / others.len() as f64
        };
        let reference_delays = steering_delays(reference, &self.array);
        let freqs = self.postfilter.bin_freqs(self.array.sample_rate);
        let equalization = if others.is_empty() {
            vec![1.0; freqs.len()]
        } else {
            let mut num = vec![0.0; freqs.len()];
            let mut den = vec![0.0; freqs.len()];
            for &o in &others {
                let b = beam_response(&self.array, &target_delays, &weights, o, &freqs);
                let r = beam_response(&self.array, &reference_delays, &weights, o, &freqs);
                for k in 0..freqs.len() {
                    num[k] += b[k].norm_sqr();
                    den[k] += r[k].norm_sqr();
                }
            }
            num.iter().zip(&den).map(|(&n, &d)| if d > 1e-12 { n / d } else { 1.0 }).collect()
        };
        Ok(ZonePlan {
            zone_id: zone_id.to_string(),
            target,
            reference,
            weights,
            target_delays,
            reference_delays,
            equalization,
            sample_rate: self.array.sample_rate,
        })
    }

    /// Beamforms toward the zone, post-filters against the reference beam
    /// and returns the enhanced signal with the gains used.
    pub fn run_detailed(
        &self,
        capture: &[Vec<f32>],
        zone_id: &str,
    ) -> Result<(ExtractionResult, ZonePlan, SpectralGains), ExtractError> {
        if capture.len() != self.array.len() {
            return Err(ExtractError::LengthMismatch {
                what: "capture channels",
                expected: self.array.len(),
                got: capture.len(),
            });
        }
        let plan = self.plan(zone_id)?;
        let beam = plan.beam(capture)?;
        let reference = plan.reference_beam(capture)?;
        let gains = wiener_gains(&beam, &reference, Some(&plan.equalization), &self.postfilter)?;
        let samples = gains.apply(&beam);
        let (snr_in_db, snr_out_db) = snr_estimates(&gains);
        let result = ExtractionResult { zone_id: zone_id.to_string(), samples, snr_in_db, snr_out_db };
        Ok((result, plan, gains))
    }

    pub fn run(&self, capture: &[Vec<f32>], zone_id: &str) -> Result<ExtractionResult, ExtractError> {
        self.run_detailed(capture, zone_id).map(|(r, _, _)| r)
    }
}

/// SNR before and after the post-filter, from the smoothed PSDs. The target
/// power in each bin is taken as max(0, Φyy − Φnn).
fn snr_estimates(g: &SpectralGains) -> (f64, f64) {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0.0, 0.0, 0.0);
    for ((y, n), h) in g.signal_psd.iter().zip(&g.noise_psd).zip(&g.gains) {
        for ((&py, &pn), &hk) in y.iter().zip(n).zip(h) {
            let s = (py - pn).max(0.0);
            let pn = pn.min(py);
            s_in += s;
            n_in += pn;
            s_out += hk * hk * s;
            n_out += hk * hk * pn;
        }
    }
    let db = |s: f64, n: f64| (10.0 * ((s + 1e-20) / (n + 1e-20)).log10()).clamp(-120.0, 120.0);
    (db(s_in, n_in), db(s_out, n_out))
}

/// One synthetic talker at the center of each zone. Talker `i` uses seed
/// `seed + i`.
pub fn zone_talkers(zones: &[Zone], duration_s: f64, sample_rate: u32, seed: u64) -> Vec<SourceSignal> {
    zones
        .iter()
        .enumerate()
        .map(|(i, z)| SourceSignal { position: z.center, samples: speech_like(seed + i as u64, duration_s, sample_rate) })
        .collect()
}

/// Level of the per-mic noise floor in the default scene.
pub const SCENE_NOISE_DBFS: f64 = -60.0;

/// The capture of [`zone_talkers`] with the default noise floor.
pub fn simulate_zone_scene(array: &MicArrayConfig, zones: &[Zone], duration_s: f64, seed: u64) -> Vec<Vec<f32>> {
    let talkers = zone_talkers(zones, duration_s, array.sample_rate, seed);
    simulate_capture(&talkers, array, SCENE_NOISE_DBFS, seed)
}

/// Signal-to-interference improvement of zone extraction against the best
/// single mic, in dB, measured by filtering the target and interference
/// parts of the scene separately with the gains computed from their mix.
#[derive(Debug, Clone, Copy)]
pub struct SirReport {
    pub best_mic_sir_db: f64,
    pub beam_sir_db: f64,
    pub output_sir_db: f64,
}

impl SirReport {
    pub fn beam_improvement_db(&self) -> f64 {
        self.beam_sir_db - self.best_mic_sir_db
    }

    pub fn total_improvement_db(&self) -> f64 {
        self.output_sir_db - self.best_mic_sir_db
    }
}

/// Evaluates extraction of `zone_id` with one talker per zone. Leading and
/// trailing 0.1 s are ignored.
pub fn evaluate_zone_sir(
    extractor: &Extractor,
    talkers: &[SourceSignal],
    zone_index: usize,
    seed: u64,
) -> Result<SirReport, ExtractError> {
    let array = &extractor.array;
    let zone_id = &extractor.zones[zone_index].id;
    let quiet = f64::NEG_INFINITY;
    let target = simulate_capture(&talkers[zone_index..=zone_index], array, quiet, seed);
    let rest: Vec<SourceSignal> =
        talkers.iter().enumerate().filter(|&(i, _)| i != zone_index).map(|(_, t)| t.clone()).collect();
    let interference = simulate_capture(&rest, array, quiet, seed);
    let mix = simulate_capture(talkers, array, SCENE_NOISE_DBFS, seed);

    let trim = (array.sample_rate / 10) as usize;
    let power = |x: &[f32]| -> f64 {
        let end = x.len().saturating_sub(trim);
        x[trim.min(end)..end].iter().map(|&v| (v as f64).powi(2)).sum()
    };
    let db = |a: f64, b: f64| 10.0 * (a / b).log10();

    let best_mic_sir_db = target
        .iter()
        .zip(&interference)
        .map(|(t, i)| db(power(t), power(i)))
        .fold(f64::NEG_INFINITY, f64::max);

    let (_, plan, gains) = extractor.run_detailed(&mix, zone_id)?;
    let t_beam = plan.beam(&target)?;
    let i_beam = plan.beam(&interference)?;
    let beam_sir_db = db(power(&t_beam), power(&i_beam));
    let output_sir_db = db(power(&gains.apply(&t_beam)), power(&gains.apply(&i_beam)));
    Ok(SirReport { best_mic_sir_db, beam_sir_db, output_sir_db })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::array::default_zones;

    fn extractor() -> Extractor {
        Extractor::new(MicArrayConfig::default_array(), default_zones()).unwrap()
    }

    #[test]
    fn unknown_zone_and_channel_count() {
        let e = extractor();
        assert!(matches!(e.plan("nowhere"), Err(ExtractError::UnknownZone(_))));
        assert!(e.run(&[vec![0.0; 100]], "zone1").is_err());
    }

    #[test]
    fn plan_points_reference_at_other_zones() {
        let e = extractor();
        let p = e.plan("zone1").unwrap();
        let zs = default_zones();
        let c = (zs[1].center + zs[2].center + zs[3].center) / 3.0;
        assert!(p.reference.distance(c) < 1e-12);
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(p.equalization.len(), 513);
        assert!(p.equalization.iter().all(|g| g.is_finite() && *g > 0.0));
    }

    #[test]
    fn output_length_and_finite_snr() {
        let e = extractor();
        let cap = simulate_zone_scene(&e.array, &e.zones, 0.5, 3);
        let r = e.run(&cap, "zone2").unwrap();
        assert_eq!(r.samples.len(), cap[0].len());
        assert!(r.snr_in_db.is_finite() && r.snr_out_db.is_finite());
        assert!(r.snr_out_db >= r.snr_in_db);
    }

    #[test]
    fn selected_talker_beats_best_mic() {
        let e = extractor();
        let talkers = zone_talkers(&e.zones, 2.0, e.array.sample_rate, 40);
        let r = evaluate_zone_sir(&e, &talkers, 0, 40).unwrap();
        assert!(r.total_improvement_db() > 6.0, "{r:?}");
        assert!(r.beam_improvement_db() > 0.0, "{r:?}");
    }
}
