use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use super::array::{MicArrayConfig, Zone};
use super::pipeline::{ExtractionResult, Extractor};
use super::ExtractError;
use crate::mqtt::{unique_client_id, ClientOptions, Incoming, MqttClient, Publish};
use crate::schema::{prefixed, ErrorReport, ExtractStatus, Payload, ZoneSelect};

#[derive(Debug, Clone)]
pub struct ExtractionServiceConfig {
    pub array: MicArrayConfig,
    pub zones: Vec<Zone>,
    pub broker_addr: String,
    pub prefix: String,
    /// The multichannel recording that selections are applied to, one
    /// vector per mic in array order.
    pub capture: Arc<Vec<Vec<f32>>>,
    /// Enhanced output is written here as `extract-<zone>.wav`.
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Default)]
struct State {
    selected: Option<String>,
    last: Option<ExtractionResult>,
}

pub struct ExtractionService {
    state: Arc<Mutex<State>>,
    shutdown: watch::Sender<bool>,
    task: JoinHandle<()>,
}

impl ExtractionService {
    pub fn selected_zone(&self) -> Option<String> {
        self.state.lock().selected.clone()
    }

    pub fn last_result(&self) -> Option<ExtractionResult> {
        self.state.lock().last.clone()
    }

    pub async fn shutdown(mut self) {
        self.shutdown.send_replace(true);
        let _ = (&mut self.task).await;
    }
}

impl Drop for ExtractionService {
    fn drop(&mut self) {
        self.task.abort();
    }
}

/// Path of the enhanced output for `zone_id` under `dir`.
pub fn output_path(dir: &Path, zone_id: &str) -> PathBuf {
    dir.join(format!("extract-{zone_id}.wav"))
}

/// Starts the extraction service on `<prefix>/extract/control`.
///
/// Selections are processed one at a time in arrival order. Each produces an
/// [`ExtractStatus`] or an [`ErrorReport`] on `<prefix>/extract/status`.
pub async fn run_extraction_service(config: ExtractionServiceConfig) -> Result<ExtractionService, ExtractError> {
    let extractor = Arc::new(Extractor::new(config.array.clone(), config.zones.clone())?);
    if config.capture.len() != config.array.len() {
        return Err(ExtractError::LengthMismatch {
            what: "capture channels",
            expected: config.array.len(),
            got: config.capture.len(),
        });
    }
    if let Some(dir) = &config.output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let client_id = unique_client_id("sdm-extract");
    let conn = connect(&config, &client_id).await?;
    info!(broker = %config.broker_addr, zones = config.zones.len(), "extraction service ready");

    let state = Arc::new(Mutex::new(State::default()));
    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let task = tokio::spawn(service_loop(config, client_id, extractor, state.clone(), conn, shutdown_rx));
    Ok(ExtractionService { state, shutdown: shutdown_tx, task })
}

async fn connect(config: &ExtractionServiceConfig, client_id: &str) -> Result<(Arc<MqttClient>, Incoming), ExtractError> {
    let broker = |e: crate::mqtt::ClientError| ExtractError::Broker(e.to_string());
    let (client, incoming) =
        MqttClient::connect(&config.broker_addr, ClientOptions::new(client_id)).await.map_err(broker)?;
    client.subscribe(&[&prefixed(&config.prefix, "extract/control")]).await.map_err(broker)?;
    Ok((client, incoming))
}

async fn service_loop(
    config: ExtractionServiceConfig,
    client_id: String,
    extractor: Arc<Extractor>,
    state: Arc<Mutex<State>>,
    conn: (Arc<MqttClient>, Incoming),
    mut shutdown: watch::Receiver<bool>,
) {
    let status_topic = prefixed(&config.prefix, "extract/status");
    let mut conn = Some(conn);
    let mut backoff = Duration::from_millis(100);
    'outer: loop {
        let (client, mut incoming) = match conn.take() {
            Some(c) => c,
            None => {
                tokio::select! {
                    _ = shutdown.changed() => break 'outer,
                    _ = tokio::time::sleep(backoff) => {}
                }
                match connect(&config, &client_id).await {
                    Ok(c) => {
                        backoff = Duration::from_millis(100);
                        c
                    }
                    Err(e) => {
                        debug!(error = %e, "reconnect failed");
                        backoff = (backoff * 2).min(Duration::from_secs(5));
                        continue;
                    }
                }
            }
        };
        loop {
            tokio::select! {
                _ = shutdown.changed() => {
                    let _ = client.disconnect().await;
                    break 'outer;
                }
                msg = incoming.recv() => match msg {
                    Some(p) => {
                        let reply = handle_selection(&config, &extractor, &state, &p).await;
                        if client.publish(&status_topic, reply).await.is_err() {
                            break;
                        }
                    }
                    None => {
                        warn!("broker connection lost");
                        break;
                    }
                },
            }
        }
    }
    info!("extraction service stopped");
}

async fn handle_selection(
    config: &ExtractionServiceConfig,
    extractor: &Arc<Extractor>,
    state: &Mutex<State>,
    p: &Publish,
) -> Vec<u8> {
    let select = match ZoneSelect::decode(&p.payload) {
        Ok(s) => s,
        Err(e) => {
            let error = if e.field.is_empty() { e.reason } else { format!("{}: {}", e.field, e.reason) };
            return ErrorReport { id: String::new(), error }.encode();
        }
    };
    let zone_id = select.zone_id;
    if extractor.zone(&zone_id).is_err() {
        return ErrorReport { id: zone_id.clone(), error: format!("unknown zone {zone_id:?}") }.encode();
    }
    let job = {
        let extractor = extractor.clone();
        let capture = config.capture.clone();
        let out = config.output_dir.as_ref().map(|d| output_path(d, &zone_id));
        let zone_id = zone_id.clone();
        tokio::task::spawn_blocking(move || -> Result<ExtractionResult, ExtractError> {
            let r = extractor.run(&capture, &zone_id)?;
            if let Some(path) = out {
                write_mono_wav(&path, &r.samples, extractor.array.sample_rate)?;
            }
            Ok(r)
        })
    };
    match job.await {
        Ok(Ok(result)) => {
            info!(zone = %zone_id, snr_in = result.snr_in_db, snr_out = result.snr_out_db, "zone extracted");
            let status =
                ExtractStatus { zone_id: zone_id.clone(), snr_in_db: result.snr_in_db, snr_out_db: result.snr_out_db };
            let mut s = state.lock();
            s.selected = Some(zone_id);
            s.last = Some(result);
            status.encode()
        }
        Ok(Err(e)) => ErrorReport { id: zone_id, error: e.to_string() }.encode(),
        Err(e) => ErrorReport { id: zone_id, error: format!("extraction task failed: {e}") }.encode(),
    }
}

/// Writes 32-bit float mono PCM.
pub fn write_mono_wav(path: &Path, samples: &[f32], sample_rate: u32) -> Result<(), ExtractError> {
    write_multichannel_wav(path, std::slice::from_ref(&samples.to_vec()), sample_rate)
}

/// Writes equal-length channels as interleaved 32-bit float PCM.
pub fn write_multichannel_wav(path: &Path, channels: &[Vec<f32>], sample_rate: u32) -> Result<(), ExtractError> {
    let spec = hound::WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let len = channels.first().map_or(0, |c| c.len());
    let mut w = hound::WavWriter::create(path, spec)?;
    for i in 0..len {
        for c in channels {
            w.write_sample(c.get(i).copied().unwrap_or(0.0))?;
        }
    }
    w.finalize()?;
    Ok(())
}

/// Reads a multichannel WAV into one vector per channel, plus the rate.
pub fn read_multichannel_wav(path: &Path) -> Result<(Vec<Vec<f32>>, u32), ExtractError> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let n = spec.channels.max(1) as usize;
    let interleaved: Vec<f32> = match spec.sample_format {
        hound::SampleFormat::Float => r.samples::<f32>().collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f32;
            r.samples::<i32>().map(|s| s.map(|v| v as f32 * scale)).collect::<Result<_, _>>()?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n); n];
    for frame in interleaved.chunks_exact(n) {
        for (c, &v) in channels.iter_mut().zip(frame) {
            c.push(v);
        }
    }
    Ok((channels, spec.sample_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multichannel_wav_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cap.wav");
        let chans = vec![vec![0.1f32, 0.2, 0.3], vec![-0.5, 0.0, 0.25]];
        write_multichannel_wav(&path, &chans, 16_000).unwrap();
        let (back, rate) = read_multichannel_wav(&path).unwrap();
        assert_eq!(rate, 16_000);
        assert_eq!(back, chans);
        assert_eq!(output_path(dir.path(), "zone2"), dir.path().join("extract-zone2.wav"));
    }
}
