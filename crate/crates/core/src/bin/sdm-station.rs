use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use tracing::info;

use sdm::cli::{init_logging, shutdown_signal, split_list};
use sdm::render::{render_session_to_wav, TimedCommand};
use sdm::station::{load_config, parse_broker_url, RunOptions, ServiceKind, Station, StationConfig};

/// Runs the studio station: broker, localization, rendering and extraction.
#[derive(Parser, Debug)]
#[command(name = "sdm-station", version)]
struct Args {
    #[arg(long, default_value = "info", global = true)]
    log_level: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Start the station and run until interrupted.
    Run {
        /// Station config (JSON). Without it the bundled default is used.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Comma-separated subset of localization,render,extraction.
        #[arg(long)]
        services: Option<String>,
        /// Use an external broker, external://host:port, instead of the embedded one.
        #[arg(long)]
        broker: Option<String>,
    },
    /// Render a timed command log offline to a multichannel WAV file.
    Render {
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSON array of {"t", "sound_id", "cmd", ...} entries, sorted by t.
        #[arg(long)]
        commands: PathBuf,
        #[arg(long)]
        duration_s: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a config and print every problem found.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

fn config_or_default(path: Option<&PathBuf>) -> anyhow::Result<StationConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(StationConfig::bundled()),
    }
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    init_logging(&args.log_level);
    match args.command {
        Command::Run { config, services, broker } => {
            let config = config_or_default(config.as_ref())?;
            let services = services
                .map(|s| split_list::<ServiceKind>(&s))
                .transpose()
                .map_err(anyhow::Error::msg)
                .context("--services")?;
            let external_broker =
                broker.map(|b| parse_broker_url(&b)).transpose().map_err(anyhow::Error::msg).context("--broker")?;
            let station = Station::start(config, RunOptions { services, external_broker }).await?;
            info!(broker = station.broker_addr(), "station running; Ctrl-C to stop");
            shutdown_signal().await;
            station.shutdown().await;
        }
        Command::Render { config, commands, duration_s, out } => {
            let config = config_or_default(config.as_ref())?;
            config.validate()?;
            let text = std::fs::read_to_string(&commands).with_context(|| format!("reading {}", commands.display()))?;
            let mut log: Vec<TimedCommand> = serde_json::from_str(&text).context("parsing command log")?;
            log.sort_by(|a, b| a.t.total_cmp(&b.t));
            let sounds = config.session_sounds()?;
            render_session_to_wav(&log, &sounds, &config.speakers, duration_s, config.render.output_format, &out)?;
            info!(path = %out.display(), "rendered");
        }
        Command::Check { config } => {
            let config = load_config(&config)?;
            config.validate()?;
            println!("ok");
        }
    }
    Ok(())
}
