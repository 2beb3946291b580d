use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use super::sim::{simulate_observations, SensorConfig};
use super::solver::{default_initial_guess, geometry_condition, solve_position, SolverOptions};
use super::trajectory::Trajectory;
use super::LocalizationError;
use crate::mqtt::{unique_client_id, ClientOptions, MqttClient};
use crate::schema::{make_topic, now_us, LocationEvent, LocationMessage, Payload, TopicKind, Vec3};

/// Sensor layouts whose normal matrix is worse than this are refused.
pub const MAX_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagConfig {
    pub id: String,
    #[serde(flatten)]
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct LocalizationConfig {
    pub sensors: Vec<SensorConfig>,
    pub tags: Vec<TagConfig>,
    pub publish_rate_hz: f64,
    pub broker_addr: String,
    pub prefix: String,
    pub seed: u64,
}

/// Rejects layouts the solver cannot work with.
pub fn check_sensor_geometry(sensors: &[SensorConfig]) -> Result<f64, LocalizationError> {
    if sensors.len() < 3 {
        return Err(LocalizationError::Geometry(format!(
            "{} sensors configured, at least 3 are needed",
            sensors.len()
        )));
    }
    let guess = default_initial_guess(sensors);
    let cond = geometry_condition(sensors, guess);
    if !(cond < MAX_CONDITION) {
        return Err(LocalizationError::Geometry(format!(
            "sensor layout is degenerate (condition number {cond:.3e})"
        )));
    }
    Ok(cond)
}

enum TagCommand {
    Push(String),
    Place(String, Vec3),
}

/// Handle to a running localization service.
pub struct LocalizationService {
    commands: mpsc::UnboundedSender<TagCommand>,
    shutdown: watch::Sender<bool>,
    task: JoinHandle<()>,
}

impl LocalizationService {
    /// Publishes a button event for `tag_id` on the next tick.
    pub fn push_button(&self, tag_id: &str) {
        let _ = self.commands.send(TagCommand::Push(tag_id.to_string()));
    }

    /// Holds `tag_id` at `position` from now on, replacing its script.
    pub fn place_tag(&self, tag_id: &str, position: Vec3) {
        let _ = self.commands.send(TagCommand::Place(tag_id.to_string(), position));
    }

    pub async fn shutdown(self) {
        self.shutdown.send_replace(true);
        let _ = self.task.await;
    }
}

struct TagState {
    id: String,
    topic: String,
    trajectory: Trajectory,
    next_push: usize,
    pending_pushes: usize,
    last_ts: u64,
}

/// Starts publishing one fix per tag per period on `<prefix>/location/<tag>`.
///
/// The first connection attempt must succeed. Later disconnects are retried
/// with exponential backoff; fixes that fall due meanwhile are dropped.
pub async fn run_localization_service(
    config: LocalizationConfig,
) -> Result<LocalizationService, LocalizationError> {
    check_sensor_geometry(&config.sensors)?;
    if !(config.publish_rate_hz > 0.0 && config.publish_rate_hz.is_finite()) {
        return Err(LocalizationError::Config(format!(
            "publish rate must be positive, got {}",
            config.publish_rate_hz
        )));
    }
    let mut tags = Vec::with_capacity(config.tags.len());
    for t in &config.tags {
        t.trajectory.validate().map_err(|e| LocalizationError::Config(format!("tag {}: {e}", t.id)))?;
        let topic = make_topic(&config.prefix, TopicKind::Location, &t.id)
            .map_err(|e| LocalizationError::Config(e.to_string()))?;
        let mut trajectory = t.trajectory.clone();
        trajectory.button_pushes.sort_by(f64::total_cmp);
        tags.push(TagState {
            id: t.id.clone(),
            topic: topic.as_str().to_string(),
            trajectory,
            next_push: 0,
            pending_pushes: 0,
            last_ts: 0,
        });
    }

    let client_id = unique_client_id("sdm-localization");
    let (client, _incoming) =
        MqttClient::connect(&config.broker_addr, ClientOptions::new(client_id.clone())).await?;
    info!(broker = %config.broker_addr, tags = tags.len(), "localization service connected");

    let (cmd_tx, cmd_rx) = mpsc::unbounded_channel();
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let task = tokio::spawn(service_loop(config, tags, client, client_id, cmd_rx, shutdown_rx));
    Ok(LocalizationService { commands: cmd_tx, shutdown: shutdown_tx, task })
}

async fn service_loop(
    config: LocalizationConfig,
    mut tags: Vec<TagState>,
    client: Arc<MqttClient>,
    client_id: String,
    mut commands: mpsc::UnboundedReceiver<TagCommand>,
    mut shutdown: watch::Receiver<bool>,
) {
    let period = Duration::from_secs_f64(1.0 / config.publish_rate_hz);
    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    let start = Instant::now();
    let guess = default_initial_guess(&config.sensors);
    let opts = SolverOptions::default();
    let index: HashMap<String, usize> = tags.iter().enumerate().map(|(i, t)| (t.id.clone(), i)).collect();

    let mut client = Some(client);
    let mut retry_at = Instant::now();
    let mut backoff = Duration::from_millis(100);
    let mut tick_no: u64 = 0;

    loop {
        tokio::select! {
            _ = shutdown.changed() => break,
            Some(cmd) = commands.recv() => match cmd {
                TagCommand::Push(id) => match index.get(&id) {
                    Some(&i) => tags[i].pending_pushes += 1,
                    None => warn!(tag = %id, "button push for unknown tag"),
                },
                TagCommand::Place(id, pos) => match index.get(&id) {
                    Some(&i) => tags[i].trajectory.waypoints = Trajectory::stationary(pos).waypoints,
                    None => warn!(tag = %id, "placement for unknown tag"),
                },
            },
            _ = ticker.tick() => {
                tick_no += 1;
                let t = start.elapsed().as_secs_f64();
                if client.as_ref().is_some_and(|c| !c.is_connected()) {
                    warn!("broker connection lost");
                    client = None;
                }
                if client.is_none() {
                    if Instant::now() < retry_at {
                        continue;
                    }
                    match MqttClient::connect(&config.broker_addr, ClientOptions::new(client_id.clone())).await {
                        Ok((c, _)) => {
                            info!("reconnected to broker");
                            client = Some(c);
                            backoff = Duration::from_millis(100);
                        }
                        Err(e) => {
                            debug!(error = %e, retry_in = ?backoff, "reconnect failed");
                            retry_at = Instant::now() + backoff;
                            backoff = (backoff * 2).min(Duration::from_secs(5));
                            continue;
                        }
                    }
                }
                let c = client.as_ref().expect("connected above");
                let mut failed = false;
                for (k, tag) in tags.iter_mut().enumerate() {
                    let Some(truth) = tag.trajectory.position_at(t) else { continue };
                    let seed = config.seed ^ tick_no.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (k as u64) << 48;
                    let obs = simulate_observations(&tag.id, truth, &config.sensors, seed);
                    let fix = match solve_position(&obs, &config.sensors, guess, &opts) {
                        Ok(f) => f,
                        Err(e) => {
                            warn!(tag = %tag.id, error = %e, "no fix");
                            continue;
                        }
                    };
                    while tag.next_push < tag.trajectory.button_pushes.len()
                        && tag.trajectory.button_pushes[tag.next_push] <= t
                    {
                        tag.next_push += 1;
                        tag.pending_pushes += 1;
                    }
                    let mut events = vec![None];
                    events.extend(std::iter::repeat(Some(LocationEvent::ButtonPush)).take(tag.pending_pushes));
                    tag.pending_pushes = 0;
                    for event in events {
                        tag.last_ts = now_us().max(tag.last_ts);
                        let msg = LocationMessage {
                            tag_id: tag.id.clone(),
                            position: fix.position,
                            timestamp_us: tag.last_ts,
                            event,
                        };
                        if c.publish(&tag.topic, msg.encode()).await.is_err() {
                            failed = true;
                            break;
                        }
                    }
                    if failed {
                        break;
                    }
                }
                if failed {
                    warn!("publish failed, reconnecting");
                    client = None;
                }
            }
        }
    }
    if let Some(c) = client {
        let _ = c.disconnect().await;
    }
    info!("localization service stopped");
}

#[cfg(test)]
mod tests {
    use super::super::sim::default_sensors;
    use super::*;

    #[test]
    fn default_layout_passes_geometry_check() {
        let cond = check_sensor_geometry(&default_sensors()).unwrap();
        assert!(cond < MAX_CONDITION);
    }

    #[test]
    fn collinear_layout_is_refused() {
        let sensors: Vec<_> = (0..4)
            .map(|i| SensorConfig::new(format!("s{i}"), Vec3::new(i as f64, 0.0, 2.0), 0.1))
            .collect();
        assert!(matches!(check_sensor_geometry(&sensors), Err(LocalizationError::Geometry(_))));
        assert!(check_sensor_geometry(&default_sensors()[..2]).is_err());
    }
}
