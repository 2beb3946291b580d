use serde::{Deserialize, Serialize};

use super::ExtractError;
use crate::schema::Vec3;

pub const SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Directivity {
    Omni,
    Cardioid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Microphone {
    pub id: String,
    pub position: Vec3,
    /// Unit vector along the pickup axis. Ignored for omni capsules.
    pub orientation: Vec3,
    pub directivity: Directivity,
}

impl Microphone {
    /// Pattern gain for sound arriving from `source`: 1 for omni, (1+cosθ)/2
    /// for cardioid.
    pub fn pattern(&self, source: Vec3) -> f64 {
        match self.directivity {
            Directivity::Omni => 1.0,
            Directivity::Cardioid => match (source - self.position).normalized() {
                Some(dir) => (1.0 + dir.dot(self.orientation)) / 2.0,
                None => 1.0,
            },
        }
    }

    /// Combined distance and pattern gain for a point source.
    pub fn gain(&self, source: Vec3) -> f64 {
        self.pattern(source) / source.distance(self.position).max(0.1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicArrayConfig {
    pub mics: Vec<Microphone>,
    pub sample_rate: u32,
    #[serde(default = "default_speed")]
    pub speed_of_sound: f64,
}

fn default_speed() -> f64 {
    SPEED_OF_SOUND
}

impl MicArrayConfig {
    /// Sixteen cardioids at eight points around the 4×4 m room at 2.5 m:
    /// the corners and edge midpoints. Each point has one capsule aimed at
    /// the middle of the room at seated head height and one aimed away.
    pub fn default_array() -> Self {
        let points = [(0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (4.0, 2.0), (4.0, 4.0), (2.0, 4.0), (0.0, 4.0), (0.0, 2.0)];
        let aim = Vec3::new(2.0, 2.0, 1.2);
        let mut mics = Vec::with_capacity(16);
        for (i, &(x, y)) in points.iter().enumerate() {
            let position = Vec3::new(x, y, 2.5);
            let inward = (aim - position).normalized().unwrap_or(Vec3::UP);
            for (suffix, orientation) in [("in", inward), ("out", -inward)] {
                mics.push(Microphone {
                    id: format!("mic{}{}", i + 1, suffix),
                    position,
                    orientation,
                    directivity: Directivity::Cardioid,
                });
            }
        }
        Self { mics, sample_rate: 48_000, speed_of_sound: SPEED_OF_SOUND }
    }

    pub fn len(&self) -> usize {
        self.mics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mics.is_empty()
    }

    pub fn validate(&self) -> Result<(), ExtractError> {
        if self.mics.len() < 2 {
            return Err(ExtractError::Config(format!("need at least 2 mics, got {}", self.mics.len())));
        }
        if self.sample_rate == 0 {
            return Err(ExtractError::Config("sample_rate must be positive".into()));
        }
        if !(self.speed_of_sound.is_finite() && self.speed_of_sound > 0.0) {
            return Err(ExtractError::Config("speed_of_sound must be positive".into()));
        }
        for m in &self.mics {
            if !m.position.is_finite() {
                return Err(ExtractError::Config(format!("mic {}: position not finite", m.id)));
            }
            if m.directivity == Directivity::Cardioid && (m.orientation.norm() - 1.0).abs() > 1e-6 {
                return Err(ExtractError::Config(format!("mic {}: orientation is not a unit vector", m.id)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: String,
    pub center: Vec3,
    pub radius: f64,
}

/// Four zones around the middle of the default room at seated head height.
pub fn default_zones() -> Vec<Zone> {
    [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .enumerate()
        .map(|(i, &(sx, sy))| Zone {
            id: format!("zone{}", i + 1),
            center: Vec3::new(2.0 + 0.9 * sx, 2.0 + 0.9 * sy, 1.2),
            radius: 0.6,
        })
        .collect()
}

pub fn validate_zones(zones: &[Zone]) -> Result<(), ExtractError> {
    if zones.is_empty() {
        return Err(ExtractError::Config("no zones configured".into()));
    }
    for (i, z) in zones.iter().enumerate() {
        if z.id.is_empty() {
            return Err(ExtractError::Config(format!("zone {i} has an empty id")));
        }
        if zones[..i].iter().any(|o| o.id == z.id) {
            return Err(ExtractError::Config(format!("duplicate zone id {:?}", z.id)));
        }
        if !z.center.is_finite() || !(z.radius > 0.0) {
            return Err(ExtractError::Config(format!("zone {}: bad center or radius", z.id)));
        }
    }
    Ok(())
}

/// Per-mic delays in seconds that line up a wavefront from `target`, aligned
/// to the mic that hears it last.
pub fn steering_delays(target: Vec3, array: &MicArrayConfig) -> Vec<f64> {
    let d: Vec<f64> = array.mics.iter().map(|m| target.distance(m.position)).collect();
    let far = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    d.iter().map(|&di| (far - di) / array.speed_of_sound).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn omni(id: &str, p: Vec3) -> Microphone {
        Microphone { id: id.into(), position: p, orientation: Vec3::UP, directivity: Directivity::Omni }
    }

    #[test]
    fn default_array_shape() {
        let a = MicArrayConfig::default_array();
        a.validate().unwrap();
        assert_eq!(a.len(), 16);
        assert!(a.mics.iter().all(|m| m.position.z == 2.5));
        for pair in a.mics.chunks(2) {
            assert_eq!(pair[0].position, pair[1].position);
            assert!((pair[0].orientation + pair[1].orientation).norm() < 1e-12);
        }
        assert_eq!(default_zones().len(), 4);
        validate_zones(&default_zones()).unwrap();
    }

    #[test]
    fn cardioid_null_behind() {
        let m = Microphone {
            id: "m".into(),
            position: Vec3::ZERO,
            orientation: Vec3::new(1.0, 0.0, 0.0),
            directivity: Directivity::Cardioid,
        };
        assert!(m.pattern(Vec3::new(-2.0, 0.0, 0.0)).abs() < 1e-15);
        assert!((m.pattern(Vec3::new(2.0, 0.0, 0.0)) - 1.0).abs() < 1e-15);
        assert!((m.pattern(Vec3::new(0.0, 3.0, 0.0)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn steering_definition() {
        let mut a = MicArrayConfig {
            mics: vec![omni("a", Vec3::new(1.0, 0.0, 0.0)), omni("b", Vec3::new(2.0, 0.0, 0.0))],
            sample_rate: 48_000,
            speed_of_sound: SPEED_OF_SOUND,
        };
        let d = steering_delays(Vec3::ZERO, &a);
        assert!((d[0] - 1.0 / 343.0).abs() < 1e-15);
        assert_eq!(d[1], 0.0);

        a.mics = (0..6)
            .map(|k| {
                let t = k as f64;
                omni("m", Vec3::new(t.cos(), t.sin(), 0.0))
            })
            .collect();
        assert!(steering_delays(Vec3::ZERO, &a).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn rejects_bad_config() {
        let mut a = MicArrayConfig::default_array();
        a.mics.truncate(1);
        assert!(a.validate().is_err());
        let mut z = default_zones();
        z[1].id = z[0].id.clone();
        assert!(validate_zones(&z).is_err());
        assert!(validate_zones(&[]).is_err());
    }
}
