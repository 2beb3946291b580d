use serde::{Deserialize, Serialize};

use crate::schema::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    /// Seconds since the service started.
    pub t: f64,
    #[serde(flatten)]
    pub position: Vec3,
}

/// Scripted tag motion: linear interpolation between waypoints, holding the
/// first and last positions outside their time range.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
    /// Times (seconds) at which the tag's button is pushed.
    #[serde(default)]
    pub button_pushes: Vec<f64>,
    /// Restart from the first waypoint after the last one.
    #[serde(default, rename = "loop")]
    pub looping: bool,
}

impl Trajectory {
    pub fn stationary(position: Vec3) -> Self {
        Self { waypoints: vec![Waypoint { t: 0.0, position }], ..Self::default() }
    }

    pub fn duration(&self) -> f64 {
        match (self.waypoints.first(), self.waypoints.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    /// Position at time `t`. `None` without waypoints.
    pub fn position_at(&self, t: f64) -> Option<Vec3> {
        let first = self.waypoints.first()?;
        let last = self.waypoints.last()?;
        let mut t = t;
        let span = last.t - first.t;
        if self.looping && span > 0.0 && t > last.t {
            t = first.t + (t - first.t).rem_euclid(span);
        }
        if t <= first.t {
            return Some(first.position);
        }
        if t >= last.t {
            return Some(last.position);
        }
        let i = self.waypoints.partition_point(|w| w.t <= t);
        let (a, b) = (&self.waypoints[i - 1], &self.waypoints[i]);
        let dt = b.t - a.t;
        if dt <= 0.0 {
            return Some(b.position);
        }
        Some(a.position.lerp(b.position, (t - a.t) / dt))
    }

    /// Waypoint times must not decrease and positions must be finite.
    pub fn validate(&self) -> Result<(), String> {
        if self.waypoints.is_empty() {
            return Err("trajectory needs at least one waypoint".into());
        }
        for w in self.waypoints.windows(2) {
            if w[1].t < w[0].t {
                return Err(format!("waypoint times go backwards at t={}", w[1].t));
            }
        }
        if let Some(w) = self.waypoints.iter().find(|w| !w.position.is_finite() || !w.t.is_finite()) {
            return Err(format!("non-finite waypoint at t={}", w.t));
        }
        if self.button_pushes.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err("button push times must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> Trajectory {
        Trajectory {
            waypoints: vec![
                Waypoint { t: 0.0, position: Vec3::new(0.0, 0.0, 1.0) },
                Waypoint { t: 2.0, position: Vec3::new(2.0, 0.0, 1.0) },
                Waypoint { t: 4.0, position: Vec3::new(2.0, 2.0, 1.0) },
            ],
            ..Trajectory::default()
        }
    }

    #[test]
    fn interpolates_and_holds() {
        let p = path();
        assert_eq!(p.position_at(-1.0), Some(Vec3::new(0.0, 0.0, 1.0)));
        assert_eq!(p.position_at(1.0), Some(Vec3::new(1.0, 0.0, 1.0)));
        assert_eq!(p.position_at(3.0), Some(Vec3::new(2.0, 1.0, 1.0)));
        assert_eq!(p.position_at(9.0), Some(Vec3::new(2.0, 2.0, 1.0)));
    }

    #[test]
    fn looping_wraps() {
        let p = Trajectory { looping: true, ..path() };
        assert_eq!(p.position_at(5.0), Some(Vec3::new(1.0, 0.0, 1.0)));
    }

    #[test]
    fn json_shape() {
        let t: Trajectory = serde_json::from_str(
            r#"{"waypoints":[{"t":0,"x":1,"y":2,"z":1}],"button_pushes":[1.0],"loop":true}"#,
        )
        .unwrap();
        assert_eq!(t.waypoints[0].position, Vec3::new(1.0, 2.0, 1.0));
        assert!(t.looping);
        assert!(t.validate().is_ok());
        assert!(Trajectory::default().validate().is_err());
    }
}
