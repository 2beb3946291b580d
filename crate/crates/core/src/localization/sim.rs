use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::schema::Vec3;

/// Ranging noise that puts the 3D RMSE of the default four-sensor room in
/// the 15–30 cm band. Fixed by the calibration sweep in this module's tests.
pub const DEFAULT_RANGE_SIGMA: f64 = 0.14;

/// Observations outside this interval are rejected by the solver.
pub const MAX_RANGE: f64 = 1000.0;

/// One ranging sensor. Clocks are assumed perfectly synchronized, so a
/// time of arrival converts straight into a range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub id: String,
    pub position: Vec3,
    #[serde(default = "default_sigma")]
    pub range_noise_sigma: f64,
}

fn default_sigma() -> f64 {
    DEFAULT_RANGE_SIGMA
}

impl SensorConfig {
    pub fn new(id: impl Into<String>, position: Vec3, range_noise_sigma: f64) -> Self {
        Self { id: id.into(), position, range_noise_sigma }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagObservation {
    pub tag_id: String,
    pub sensor_id: String,
    /// Time of arrival times propagation speed, in meters.
    pub range: f64,
    pub timestamp_us: u64,
}

/// Four sensors at the ceiling corners of a 4×4 m room, 2.8 m up.
pub fn default_sensors() -> Vec<SensorConfig> {
    [(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)]
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            SensorConfig::new(format!("sensor{}", i + 1), Vec3::new(x, y, 2.8), DEFAULT_RANGE_SIGMA)
        })
        .collect()
}

/// Noisy ranges from `true_pos` to every sensor.
///
/// `range_i = |true_pos - s_i| + N(0, σ_i)`, clamped to stay positive.
/// The same seed always yields the same list.
pub fn simulate_observations(
    tag_id: &str,
    true_pos: Vec3,
    sensors: &[SensorConfig],
    seed: u64,
) -> Vec<TagObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sensors
        .iter()
        .map(|s| {
            let exact = true_pos.distance(s.position);
            let noise = match Normal::new(0.0, s.range_noise_sigma) {
                Ok(n) if s.range_noise_sigma > 0.0 => n.sample(&mut rng),
                _ => 0.0,
            };
            TagObservation {
                tag_id: tag_id.to_string(),
                sensor_id: s.id.clone(),
                range: (exact + noise).clamp(1e-6, MAX_RANGE - 1e-6),
                timestamp_us: 0,
            }
        })
        .collect()
}
