//! Station composition: config loading and validation, and a runner that
//! brings the broker and services up in order and takes them down in
//! reverse.

mod config;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use parking_lot::Mutex;
use thiserror::Error;
use tracing::{error, info};

pub use config::{
    load_config, parse_config, BrokerSettings, ConfigErrors, ConfigIssue, ExtractionSettings, LocalizationSettings,
    RenderSettings, Room, ServiceToggles, SoundEntry, StationConfig, ToneSpec, BUNDLED_CONFIG,
};

use crate::extract::{
    read_multichannel_wav, run_extraction_service, simulate_zone_scene, ExtractionService, ExtractionServiceConfig,
};
use crate::localization::{run_localization_service, LocalizationConfig, LocalizationService};
use crate::mqtt::{serve, BrokerConfig, BrokerHandle};
use crate::render::{run_render_service, RenderService, RenderServiceConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ServiceKind {
    Broker,
    Localization,
    Render,
    Extraction,
}

impl ServiceKind {
    pub const SERVICES: [ServiceKind; 3] = [ServiceKind::Localization, ServiceKind::Render, ServiceKind::Extraction];

    pub fn name(self) -> &'static str {
        match self {
            ServiceKind::Broker => "broker",
            ServiceKind::Localization => "localization",
            ServiceKind::Render => "render",
            ServiceKind::Extraction => "extraction",
        }
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ServiceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "localization" => Ok(ServiceKind::Localization),
            "render" => Ok(ServiceKind::Render),
            "extraction" => Ok(ServiceKind::Extraction),
            other => Err(format!("unknown service {other:?} (expected localization, render or extraction)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Health {
    Starting,
    Running,
    Stopped,
    Failed(String),
}

#[derive(Debug, Error)]
pub enum StationError {
    #[error("{0}")]
    Config(#[from] ConfigErrors),
    #[error("{service} failed to start: {cause}")]
    Start { service: ServiceKind, cause: String },
}

/// Where to find the broker: the config's own setting unless overridden.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Services to start. `None` means those enabled in the config.
    pub services: Option<Vec<ServiceKind>>,
    /// Address of an external broker. Suppresses the embedded one.
    pub external_broker: Option<String>,
}

/// Parses `external://host:port`, or a bare `host:port`.
pub fn parse_broker_url(s: &str) -> Result<String, String> {
    let addr = s.strip_prefix("external://").unwrap_or(s);
    if addr.rsplit_once(':').is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok()) {
        Ok(addr.to_string())
    } else {
        Err(format!("expected external://host:port, got {s:?}"))
    }
}

/// A running station.
pub struct Station {
    broker_addr: String,
    broker: Option<BrokerHandle>,
    localization: Option<LocalizationService>,
    render: Option<RenderService>,
    extraction: Option<ExtractionService>,
    health: Arc<Mutex<BTreeMap<ServiceKind, Health>>>,
}

impl Station {
    /// Starts the broker (unless external), then each selected service.
    /// Each service subscribes before it publishes anything. If one fails,
    /// whatever was started is stopped again and the cause is returned.
    pub async fn start(config: StationConfig, options: RunOptions) -> Result<Station, StationError> {
        config.validate()?;
        let selected: Vec<ServiceKind> = options.services.clone().unwrap_or_else(|| {
            let t = config.services;
            ServiceKind::SERVICES
                .into_iter()
                .filter(|k| match k {
                    ServiceKind::Localization => t.localization,
                    ServiceKind::Render => t.render,
                    ServiceKind::Extraction => t.extraction,
                    ServiceKind::Broker => false,
                })
                .collect()
        });

        let health: Arc<Mutex<BTreeMap<ServiceKind, Health>>> = Arc::default();
        let mut station = Station {
            broker_addr: String::new(),
            broker: None,
            localization: None,
            render: None,
            extraction: None,
            health: health.clone(),
        };
        let fail = |service: ServiceKind, cause: String| {
            error!(%service, %cause, "start failed");
            health.lock().insert(service, Health::Failed(cause.clone()));
            StationError::Start { service, cause }
        };

        let embedded = options.external_broker.is_none() && config.broker.embedded;
        if embedded {
            health.lock().insert(ServiceKind::Broker, Health::Starting);
            let bc = BrokerConfig {
                bind_tcp: Some(config.broker.addr.clone()),
                bind_ws: config.broker.ws_addr.clone(),
                ..BrokerConfig::default()
            };
            match serve(bc).await {
                Ok(b) => {
                    station.broker_addr = b.tcp_addr().map(|a| a.to_string()).unwrap_or_default();
                    station.broker = Some(b);
                    health.lock().insert(ServiceKind::Broker, Health::Running);
                }
                Err(e) => return Err(fail(ServiceKind::Broker, e.to_string())),
            }
        } else {
            station.broker_addr = options.external_broker.clone().unwrap_or_else(|| config.broker.addr.clone());
        }
        info!(broker = %station.broker_addr, embedded, "broker ready");

        for kind in ServiceKind::SERVICES {
            if !selected.contains(&kind) {
                continue;
            }
            health.lock().insert(kind, Health::Starting);
            let started = match kind {
                ServiceKind::Localization => station.start_localization(&config).await,
                ServiceKind::Render => station.start_render(&config).await,
                ServiceKind::Extraction => station.start_extraction(&config).await,
                ServiceKind::Broker => Ok(()),
            };
            match started {
                Ok(()) => {
                    health.lock().insert(kind, Health::Running);
                    info!(service = %kind, "started");
                }
                Err(cause) => {
                    let err = fail(kind, cause);
                    station.shutdown().await;
                    return Err(err);
                }
            }
        }
        Ok(station)
    }

    async fn start_localization(&mut self, c: &StationConfig) -> Result<(), String> {
        let lc = LocalizationConfig {
            sensors: c.sensors.clone(),
            tags: c.tags.clone(),
            publish_rate_hz: c.localization.publish_rate_hz,
            broker_addr: self.broker_addr.clone(),
            prefix: c.prefix.clone(),
            seed: c.localization.seed,
        };
        self.localization = Some(run_localization_service(lc).await.map_err(|e| e.to_string())?);
        Ok(())
    }

    async fn start_render(&mut self, c: &StationConfig) -> Result<(), String> {
        let sounds = c.session_sounds().map_err(|e| e.to_string())?;
        let rc = RenderServiceConfig {
            layout: c.speakers.clone(),
            sounds,
            broker_addr: self.broker_addr.clone(),
            prefix: c.prefix.clone(),
            sample_rate: c.render.sample_rate,
            block_size: c.render.block_size,
            output_wav: c.render.output_wav.as_ref().map(|p| c.resolve(p)),
            output_format: c.render.output_format,
        };
        self.render = Some(run_render_service(rc).await.map_err(|e| e.to_string())?);
        Ok(())
    }

    async fn start_extraction(&mut self, c: &StationConfig) -> Result<(), String> {
        let capture = match &c.extraction.capture_wav {
            Some(p) => {
                let (channels, rate) = read_multichannel_wav(&c.resolve(p)).map_err(|e| e.to_string())?;
                if rate != c.mic_array.sample_rate {
                    return Err(format!("capture is {rate} Hz, the array is {} Hz", c.mic_array.sample_rate));
                }
                channels
            }
            None => {
                let (array, zones) = (c.mic_array.clone(), c.zones.clone());
                let (secs, seed) = (c.extraction.scene_seconds, c.extraction.seed);
                tokio::task::spawn_blocking(move || simulate_zone_scene(&array, &zones, secs, seed))
                    .await
                    .map_err(|e| e.to_string())?
            }
        };
        let ec = ExtractionServiceConfig {
            array: c.mic_array.clone(),
            zones: c.zones.clone(),
            broker_addr: self.broker_addr.clone(),
            prefix: c.prefix.clone(),
            capture: Arc::new(capture),
            output_dir: c.extraction.output_dir.as_ref().map(|p| c.resolve(p)),
        };
        self.extraction = Some(run_extraction_service(ec).await.map_err(|e| e.to_string())?);
        Ok(())
    }

    /// Address clients should connect to.
    pub fn broker_addr(&self) -> &str {
        &self.broker_addr
    }

    /// The embedded broker, if this station runs one.
    pub fn broker(&self) -> Option<&BrokerHandle> {
        self.broker.as_ref()
    }

    pub fn health(&self) -> BTreeMap<ServiceKind, Health> {
        self.health.lock().clone()
    }

    pub fn localization(&self) -> Option<&LocalizationService> {
        self.localization.as_ref()
    }

    pub fn render(&self) -> Option<&RenderService> {
        self.render.as_ref()
    }

    pub fn extraction(&self) -> Option<&ExtractionService> {
        self.extraction.as_ref()
    }

    /// Stops services in reverse start order, then the broker.
    pub async fn shutdown(mut self) {
        if let Some(s) = self.extraction.take() {
            s.shutdown().await;
            self.mark(ServiceKind::Extraction);
        }
        if let Some(s) = self.render.take() {
            if let Err(e) = s.shutdown().await {
                error!(error = %e, "render output could not be finalized");
            }
            self.mark(ServiceKind::Render);
        }
        if let Some(s) = self.localization.take() {
            s.shutdown().await;
            self.mark(ServiceKind::Localization);
        }
        if let Some(b) = self.broker.take() {
            b.shutdown().await;
            self.mark(ServiceKind::Broker);
        }
        info!("station stopped");
    }

    fn mark(&self, kind: ServiceKind) {
        self.health.lock().insert(kind, Health::Stopped);
    }
}
