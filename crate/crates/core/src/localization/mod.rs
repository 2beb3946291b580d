//! Tag localization: simulated ranging sensors, a least-squares position
//! solver, and a service publishing fixes per tag.

mod service;
mod sim;
mod solver;
mod trajectory;

use thiserror::Error;

pub use service::{
    check_sensor_geometry, run_localization_service, LocalizationConfig, LocalizationService,
    TagConfig, MAX_CONDITION,
};
pub use sim::{default_sensors, simulate_observations, SensorConfig, TagObservation, DEFAULT_RANGE_SIGMA, MAX_RANGE};
pub use solver::{default_initial_guess, geometry_condition, solve_position, PositionFix, SolverOptions};
pub use trajectory::{Trajectory, Waypoint};

#[derive(Debug, Error)]
pub enum LocalizationError {
    #[error("need observations from at least 3 distinct sensors, got {distinct_sensors}")]
    InsufficientObservations { distinct_sensors: usize },
    #[error("observation from unknown sensor {0:?}")]
    UnknownSensor(String),
    #[error("range {range} m from sensor {sensor_id:?} is outside (0, 1000)")]
    InvalidRange { sensor_id: String, range: f64 },
    #[error("sensor geometry: {0}")]
    Geometry(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Broker(#[from] crate::mqtt::ClientError),
}
