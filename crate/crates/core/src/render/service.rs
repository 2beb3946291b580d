use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

use super::engine::{write_frames, RenderEngine, SessionSound, WavFormat};
use super::layout::SpeakerLayout;
use super::RenderError;
use crate::mqtt::{unique_client_id, ClientOptions, Incoming, MqttClient, Publish};
use crate::schema::{
    make_topic, now_us, prefixed, sound_id_from_topic, ErrorReport, Payload, SoundCommand, TopicKind,
};

#[derive(Debug, Clone)]
pub struct RenderServiceConfig {
    pub layout: SpeakerLayout,
    pub sounds: Vec<SessionSound>,
    pub broker_addr: String,
    pub prefix: String,
    pub sample_rate: u32,
    pub block_size: usize,
    /// Where the live speaker feed is recorded. `None` discards it.
    pub output_wav: Option<PathBuf>,
    pub output_format: WavFormat,
}

pub struct RenderService {
    engine: Arc<Mutex<RenderEngine>>,
    shutdown: watch::Sender<bool>,
    control: JoinHandle<()>,
    stop_render: Arc<AtomicBool>,
    render: Option<std::thread::JoinHandle<Result<(), RenderError>>>,
}

impl RenderService {
    /// Shared engine state, for inspection.
    pub fn engine(&self) -> Arc<Mutex<RenderEngine>> {
        self.engine.clone()
    }

    /// Stops control handling first, then the render thread, and finalizes
    /// the output file.
    pub async fn shutdown(mut self) -> Result<(), RenderError> {
        self.shutdown.send_replace(true);
        let _ = (&mut self.control).await;
        self.stop_render.store(true, Ordering::Relaxed);
        match self.render.take().map(|h| tokio::task::spawn_blocking(move || h.join())) {
            Some(j) => match j.await {
                Ok(Ok(result)) => result,
                _ => Err(RenderError::Io(std::io::Error::other("render thread panicked"))),
            },
            None => Ok(()),
        }
    }
}

impl Drop for RenderService {
    fn drop(&mut self) {
        self.stop_render.store(true, Ordering::Relaxed);
        self.control.abort();
    }
}

fn status_topic(prefix: &str, id: &str) -> Option<String> {
    make_topic(prefix, TopicKind::SoundStatus, id).ok().map(|t| t.as_str().to_string())
}

/// Starts the rendering service.
///
/// Subscribes to `<prefix>/sound/+/control` and waits for the grant before
/// publishing the initial status of every registered sound, so no command
/// sent after the first status can be missed. Each command yields either a
/// status or an error report on `<prefix>/sound/<id>/status`.
pub async fn run_render_service(config: RenderServiceConfig) -> Result<RenderService, RenderError> {
    let mut engine = RenderEngine::new(config.layout.clone(), config.sample_rate)?;
    for s in &config.sounds {
        engine.add_sound(&s.id, &s.clip, s.looping, s.position)?;
    }
    let engine = Arc::new(Mutex::new(engine));
    let filter = prefixed(&config.prefix, "sound/+/control");

    let client_id = unique_client_id("sdm-render");
    let (client, incoming) = connect_and_announce(&config, &client_id, &filter, &engine).await?;
    info!(broker = %config.broker_addr, sounds = config.sounds.len(), "render service ready");

    let writer = match &config.output_wav {
        Some(path) => {
            let spec = hound::WavSpec {
                channels: config.layout.len() as u16,
                sample_rate: config.sample_rate,
                bits_per_sample: if config.output_format == WavFormat::Pcm16 { 16 } else { 32 },
                sample_format: if config.output_format == WavFormat::Pcm16 {
                    hound::SampleFormat::Int
                } else {
                    hound::SampleFormat::Float
                },
            };
            Some(hound::WavWriter::create(path, spec)?)
        }
        None => None,
    };

    let (finished_tx, finished_rx) = mpsc::unbounded_channel();
    let stop_render = Arc::new(AtomicBool::new(false));
    let render = {
        let engine = engine.clone();
        let stop = stop_render.clone();
        let block = config.block_size;
        let format = config.output_format;
        let rate = config.sample_rate;
        std::thread::Builder::new()
            .name("sdm-render".into())
            .spawn(move || render_loop(engine, block, rate, writer, format, stop, finished_tx))?
    };

    let (shutdown_tx, shutdown_rx) = watch::channel(false);
    let control = tokio::spawn(control_loop(
        config,
        client_id,
        filter,
        engine.clone(),
        client,
        incoming,
        finished_rx,
        shutdown_rx,
    ));
    Ok(RenderService { engine, shutdown: shutdown_tx, control, stop_render, render: Some(render) })
}

async fn connect_and_announce(
    config: &RenderServiceConfig,
    client_id: &str,
    filter: &str,
    engine: &Mutex<RenderEngine>,
) -> Result<(Arc<MqttClient>, Incoming), RenderError> {
    let broker = |e: crate::mqtt::ClientError| RenderError::Broker(e.to_string());
    let (client, incoming) =
        MqttClient::connect(&config.broker_addr, ClientOptions::new(client_id)).await.map_err(broker)?;
    client.subscribe(&[filter]).await.map_err(broker)?;
    let statuses: Vec<_> = {
        let e = engine.lock();
        let ts = now_us();
        e.sound_ids().filter_map(|id| e.status(id, ts).ok()).collect()
    };
    for st in statuses {
        if let Some(topic) = status_topic(&config.prefix, &st.sound_id) {
            client.publish(&topic, st.encode()).await.map_err(broker)?;
        }
    }
    Ok((client, incoming))
}

#[allow(clippy::too_many_arguments)]
async fn control_loop(
    config: RenderServiceConfig,
    client_id: String,
    filter: String,
    engine: Arc<Mutex<RenderEngine>>,
    client: Arc<MqttClient>,
    incoming: Incoming,
    mut finished: mpsc::UnboundedReceiver<String>,
    mut shutdown: watch::Receiver<bool>,
) {
    let mut conn = Some((client, incoming));
    let mut backoff = Duration::from_millis(100);
    'outer: loop {
        let (client, mut incoming) = match conn.take() {
            Some(c) => c,
            None => {
                tokio::select! {
                    _ = shutdown.changed() => break 'outer,
                    _ = tokio::time::sleep(backoff) => {}
                }
                match connect_and_announce(&config, &client_id, &filter, &engine).await {
                    Ok(c) => {
                        info!("render service reconnected");
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
                        if let Some((topic, payload)) = handle_control(&config.prefix, &engine, &p) {
                            if client.publish(&topic, payload).await.is_err() {
                                break;
                            }
                        }
                    }
                    None => {
                        warn!("broker connection lost");
                        break;
                    }
                },
                Some(id) = finished.recv() => {
                    let status = engine.lock().status(&id, now_us());
                    if let (Ok(st), Some(topic)) = (status, status_topic(&config.prefix, &id)) {
                        if client.publish(&topic, st.encode()).await.is_err() {
                            break;
                        }
                    }
                }
            }
        }
    }
    info!("render control stopped");
}

/// Decodes and applies one control message. Returns the reply to publish.
fn handle_control(prefix: &str, engine: &Mutex<RenderEngine>, p: &Publish) -> Option<(String, Vec<u8>)> {
    let id = sound_id_from_topic(prefix, &p.topic)?;
    if !p.topic.ends_with("/control") {
        return None;
    }
    let topic = status_topic(prefix, id)?;
    let reply = match SoundCommand::decode(&p.payload) {
        Err(e) => {
            debug!(sound = id, error = %e, "bad control payload");
            let error = if e.field.is_empty() { e.reason } else { format!("{}: {}", e.field, e.reason) };
            ErrorReport { id: id.to_string(), error }.encode()
        }
        Ok(cmd) => match engine.lock().apply_command(id, &cmd, now_us()) {
            Ok(status) => status.encode(),
            Err(e) => ErrorReport { id: id.to_string(), error: e.to_string() }.encode(),
        },
    };
    Some((topic, reply))
}

fn render_loop(
    engine: Arc<Mutex<RenderEngine>>,
    block_size: usize,
    sample_rate: u32,
    mut writer: Option<hound::WavWriter<std::io::BufWriter<std::fs::File>>>,
    format: WavFormat,
    stop: Arc<AtomicBool>,
    finished: mpsc::UnboundedSender<String>,
) -> Result<(), RenderError> {
    let period = Duration::from_secs_f64(block_size as f64 / sample_rate as f64);
    let mut deadline = Instant::now();
    while !stop.load(Ordering::Relaxed) {
        let (block, done) = {
            let mut e = engine.lock();
            let b = e.render_block(block_size);
            (b, e.take_finished())
        };
        for id in done {
            let _ = finished.send(id);
        }
        if let Some(w) = writer.as_mut() {
            write_frames(w, &block, block.frames(), format)?;
        }
        deadline += period;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else if now - deadline > period * 8 {
            // fell far behind; do not try to catch up in a burst
            deadline = now;
        }
    }
    if let Some(w) = writer {
        w.finalize()?;
    }
    Ok(())
}
