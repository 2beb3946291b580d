use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Parser;
use tracing::{info, warn};

use sdm::bench::{default_sizes, delay_proxy, export_results, run_sweep, summarize, BenchConfig};
use sdm::cli::{init_logging, split_list};

/// Publish/echo round-trip latency sweep through an MQTT broker.
#[derive(Parser, Debug)]
#[command(name = "sdm-bench", version)]
struct Args {
    /// Broker address, host:port.
    #[arg(long, default_value = "127.0.0.1:1883")]
    broker: String,
    /// Comma-separated message sizes in bytes. Default 20,120,...,1420.
    #[arg(long)]
    sizes: Option<String>,
    /// Comma-separated publish intervals in ms; one sweep per value. 0 is back to back.
    #[arg(long, default_value = "17")]
    interval_ms: String,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    #[arg(long, default_value = "sdm/bench/rtt")]
    topic: String,
    /// Route through a local proxy adding this one-way delay (ms) in each direction.
    #[arg(long)]
    proxy_delay_ms: Option<f64>,
    /// Jitter (ms, standard deviation of |N(0, j)|) added by the proxy.
    #[arg(long, default_value_t = 0.0)]
    proxy_jitter_ms: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for samples.csv and stats.csv.
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    #[arg(long, default_value = "info")]
    log_level: String,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    init_logging(&args.log_level);
    let sizes = match &args.sizes {
        Some(s) => split_list::<usize>(s).map_err(anyhow::Error::msg).context("--sizes")?,
        None => default_sizes(),
    };
    let intervals = split_list::<u64>(&args.interval_ms).map_err(anyhow::Error::msg).context("--interval-ms")?;
    if intervals.is_empty() {
        bail!("--interval-ms needs at least one value");
    }

    let proxy = match args.proxy_delay_ms {
        Some(d) => {
            let p = delay_proxy("127.0.0.1:0", &args.broker, d, args.proxy_jitter_ms, args.seed)
                .context("starting delay proxy")?;
            info!(addr = %p.local_addr(), delay_ms = d, jitter_ms = args.proxy_jitter_ms, "delay proxy up");
            Some(p)
        }
        None => None,
    };
    let target = proxy.as_ref().map(|p| p.local_addr().to_string()).unwrap_or_else(|| args.broker.clone());

    let mut samples = Vec::new();
    let mut flagged = false;
    for interval_ms in intervals {
        let config = BenchConfig {
            broker_addr: target.clone(),
            topic: args.topic.clone(),
            sizes: sizes.clone(),
            interval_ms,
            repetitions: args.reps,
            warmup: args.warmup,
        };
        let result = run_sweep(&config).await.with_context(|| format!("sweep at {interval_ms} ms"))?;
        if result.flagged() {
            warn!(interval_ms, loss = result.loss_fraction(), "loss above 10%; result flagged");
            flagged = true;
        }
        samples.extend(result.samples);
    }
    let stats = summarize(&samples);
    let (sp, tp) = export_results(&stats, &samples, &args.out_dir).context("writing CSV")?;
    for s in &stats {
        println!(
            "size {:>5} B  interval {:>3} ms  n {:>4}  min {:>8.3}  q1 {:>8.3}  median {:>8.3}  q3 {:>8.3}  max {:>8.3} ms  >100ms {}  >500ms {}",
            s.size_bytes,
            s.interval_ms,
            s.count,
            s.min_us / 1000.0,
            s.q1_us / 1000.0,
            s.median_us / 1000.0,
            s.q3_us / 1000.0,
            s.max_us / 1000.0,
            s.over_100ms,
            s.over_500ms
        );
    }
    info!(samples = %sp.display(), stats = %tp.display(), "results written");
    if let Some(p) = proxy {
        p.shutdown();
    }
    if flagged {
        std::process::exit(2);
    }
    Ok(())
}
