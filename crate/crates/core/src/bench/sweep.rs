use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use tokio::time::sleep_until;
use tracing::{debug, info, warn};

use super::BenchError;
use crate::mqtt::{unique_client_id, ClientOptions, MqttClient};
use crate::schema::{BenchMessage, Payload};

pub const LOSS_TIMEOUT: Duration = Duration::from_secs(2);
/// Loss fraction above which a sweep is flagged.
pub const LOSS_FLAG_FRACTION: f64 = 0.10;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub broker_addr: String,
    pub topic: String,
    pub sizes: Vec<usize>,
    /// Spacing between consecutive publishes. 0 publishes back to back.
    pub interval_ms: u64,
    pub repetitions: usize,
    /// Messages sent and discarded before measuring.
    pub warmup: usize,
}

impl BenchConfig {
    pub fn new(broker_addr: impl Into<String>) -> Self {
        Self {
            broker_addr: broker_addr.into(),
            topic: "sdm/bench/rtt".into(),
            sizes: default_sizes(),
            interval_ms: 17,
            repetitions: 100,
            warmup: 10,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.sizes.is_empty() {
            return Err(BenchError::Config("no message sizes".into()));
        }
        if let Some(s) = self.sizes.iter().find(|&&s| s < 20) {
            return Err(BenchError::Config(format!("size {s} is below the 20 byte minimum")));
        }
        if self.repetitions == 0 {
            return Err(BenchError::Config("repetitions must be at least 1".into()));
        }
        if self.topic.is_empty() || self.topic.contains(['+', '#']) {
            return Err(BenchError::Config(format!("bad topic {:?}", self.topic)));
        }
        Ok(())
    }
}

/// 20, 120, ..., 1420 bytes.
pub fn default_sizes() -> Vec<usize> {
    (20..=1420).step_by(100).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RttSample {
    pub seq: u64,
    pub size_bytes: usize,
    pub interval_ms: u64,
    pub rtt_us: u64,
    /// Send time on the sweep's monotonic clock, in microseconds.
    pub send_us: u64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub samples: Vec<RttSample>,
    /// (seq, size) of messages not echoed within the loss timeout.
    pub lost: Vec<(u64, usize)>,
    pub sent: usize,
}

impl SweepResult {
    pub fn loss_fraction(&self) -> f64 {
        if self.sent == 0 {
            0.0
        } else {
            self.lost.len() as f64 / self.sent as f64
        }
    }

    pub fn flagged(&self) -> bool {
        self.loss_fraction() > LOSS_FLAG_FRACTION
    }
}

/// Runs one sweep, timing against a fresh monotonic epoch.
pub async fn run_sweep(config: &BenchConfig) -> Result<SweepResult, BenchError> {
    run_sweep_at(config, Instant::now()).await
}

/// Runs one sweep with timestamps measured from `epoch`.
///
/// The client subscribes to its own topic, then for each repetition
/// publishes one message per size in ascending order, spaced by the
/// interval. The send time travels in the payload; the RTT is the receive
/// time minus that value on the same clock.
pub async fn run_sweep_at(config: &BenchConfig, epoch: Instant) -> Result<SweepResult, BenchError> {
    config.validate()?;
    let (client, mut incoming) =
        MqttClient::connect(&config.broker_addr, ClientOptions::new(unique_client_id("sdm-bench"))).await?;
    client.subscribe(&[config.topic.as_str()]).await?;

    let now_us = move || epoch.elapsed().as_micros() as u64;
    let warmup = config.warmup as u64;
    // seq -> size for measured messages still in flight
    let pending: Arc<Mutex<HashMap<u64, usize>>> = Arc::new(Mutex::new(HashMap::new()));
    let interval_ms = config.interval_ms;

    let samples: Arc<Mutex<Vec<RttSample>>> = Arc::default();
    let receiver = {
        let pending = pending.clone();
        let samples = samples.clone();
        tokio::spawn(async move {
            while let Some(p) = incoming.recv().await {
                let t = now_us();
                let Ok(msg) = BenchMessage::decode(&p.payload) else { continue };
                if msg.seq < warmup {
                    continue;
                }
                let Some(size) = pending.lock().remove(&msg.seq) else { continue };
                let rtt = t.saturating_sub(msg.t_send_us).max(1);
                if rtt > LOSS_TIMEOUT.as_micros() as u64 {
                    continue;
                }
                samples.lock().push(RttSample {
                    seq: msg.seq,
                    size_bytes: size,
                    interval_ms,
                    rtt_us: rtt,
                    send_us: msg.t_send_us,
                });
            }
        })
    };

    let interval = Duration::from_millis(config.interval_ms);
    let mut next = tokio::time::Instant::now();
    let mut seq = 0u64;
    let mut sent = Vec::new();
    let smallest = config.sizes.iter().copied().min().unwrap_or(20);
    let plan = std::iter::repeat(smallest)
        .take(config.warmup)
        .chain((0..config.repetitions).flat_map(|_| config.sizes.iter().copied()));
    for size in plan {
        if !interval.is_zero() {
            sleep_until(next).await;
            next += interval;
        }
        let measured = seq >= warmup;
        if measured {
            pending.lock().insert(seq, size);
            sent.push((seq, size));
        }
        let payload = BenchMessage { seq, t_send_us: now_us() }.encode_padded(size);
        client.publish(&config.topic, payload).await?;
        seq += 1;
    }

    // wait for stragglers, at most the loss timeout past the last send
    let deadline = Instant::now() + LOSS_TIMEOUT;
    while Instant::now() < deadline && !pending.lock().is_empty() {
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
    receiver.abort();
    let _ = client.disconnect().await;
    let mut samples = std::mem::take(&mut *samples.lock());
    samples.sort_by_key(|s| s.seq);
    let got: std::collections::HashSet<u64> = samples.iter().map(|s| s.seq).collect();
    let lost: Vec<(u64, usize)> = sent.iter().copied().filter(|(s, _)| !got.contains(s)).collect();

    let result = SweepResult { samples, lost, sent: sent.len() };
    if result.flagged() {
        warn!(loss = result.loss_fraction(), "sweep lost more than 10% of messages");
    } else {
        debug!(samples = result.samples.len(), lost = result.lost.len(), "sweep done");
    }
    info!(interval_ms = config.interval_ms, sent = result.sent, lost = result.lost.len(), "sweep complete");
    Ok(result)
}
