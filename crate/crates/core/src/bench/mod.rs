//! Round-trip latency measurement through a broker: a self-echo sweep over
//! message sizes, boxplot statistics, CSV export and a delay-injecting TCP
//! proxy that stands in for a distant broker.

mod proxy;
mod stats;
mod sweep;

use thiserror::Error;

pub use proxy::{delay_proxy, DelayProxy};
pub use stats::{
    export_results, group_stats, import_samples, import_stats, quantile, summarize, RttStats, OUTLIER_THRESHOLDS_MS,
    SAMPLES_FILE, STATS_FILE,
};
pub use sweep::{
    default_sizes, run_sweep, run_sweep_at, BenchConfig, RttSample, SweepResult, LOSS_FLAG_FRACTION, LOSS_TIMEOUT,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("broker: {0}")]
    Broker(#[from] crate::mqtt::ClientError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
