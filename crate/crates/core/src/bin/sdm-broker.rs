use anyhow::Context;
use clap::Parser;
use tracing::info;

use sdm::cli::{init_logging, shutdown_signal};
use sdm::mqtt::{serve, BrokerConfig};

/// MQTT 3.1.1 broker (QoS 0) over TCP and WebSocket.
#[derive(Parser, Debug)]
#[command(name = "sdm-broker", version)]
struct Args {
    /// TCP listen address. Pass "off" to disable.
    #[arg(long, default_value = "0.0.0.0:1883")]
    tcp_bind: String,
    /// WebSocket listen address (subprotocol "mqtt"). Pass "off" to disable.
    #[arg(long, default_value = "0.0.0.0:8083")]
    ws_bind: String,
    /// Largest accepted PUBLISH payload in bytes.
    #[arg(long, default_value_t = 64 * 1024)]
    max_payload: usize,
    #[arg(long, default_value = "info")]
    log_level: String,
}

fn listener(addr: String) -> Option<String> {
    (addr != "off" && !addr.is_empty()).then_some(addr)
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    init_logging(&args.log_level);
    let config = BrokerConfig {
        bind_tcp: listener(args.tcp_bind),
        bind_ws: listener(args.ws_bind),
        max_payload: args.max_payload,
        ..BrokerConfig::default()
    };
    let broker = serve(config).await.context("starting broker")?;
    info!(tcp = ?broker.tcp_addr(), ws = ?broker.ws_addr(), "broker running");
    shutdown_signal().await;
    info!("shutting down");
    broker.shutdown().await;
    Ok(())
}
