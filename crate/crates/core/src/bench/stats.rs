use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::RttSample;

/// Outlier thresholds in milliseconds.
pub const OUTLIER_THRESHOLDS_MS: [u64; 4] = [30, 50, 100, 500];

/// Boxplot statistics for one (size, interval) group. Times in microseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttStats {
    pub size_bytes: usize,
    pub interval_ms: u64,
    pub count: usize,
    pub min_us: f64,
    pub q1_us: f64,
    pub median_us: f64,
    pub q3_us: f64,
    pub max_us: f64,
    pub over_30ms: usize,
    pub over_50ms: usize,
    pub over_100ms: usize,
    pub over_500ms: usize,
}

/// Quantile of sorted data by linear interpolation between closest ranks:
/// position h = (n − 1)·p, value x[⌊h⌋] + (h − ⌊h⌋)(x[⌊h⌋+1] − x[⌊h⌋]).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Stats for one group of RTTs in microseconds. `None` when empty.
pub fn group_stats(size_bytes: usize, interval_ms: u64, rtts_us: &[u64]) -> Option<RttStats> {
    if rtts_us.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = rtts_us.iter().map(|&r| r as f64).collect();
    v.sort_by(f64::total_cmp);
    let over = |ms: u64| rtts_us.iter().filter(|&&r| r > ms * 1000).count();
    Some(RttStats {
        size_bytes,
        interval_ms,
        count: v.len(),
        min_us: v[0],
        q1_us: quantile(&v, 0.25),
        median_us: quantile(&v, 0.5),
        q3_us: quantile(&v, 0.75),
        max_us: v[v.len() - 1],
        over_30ms: over(30),
        over_50ms: over(50),
        over_100ms: over(100),
        over_500ms: over(500),
    })
}

/// Groups samples by (size, interval), in ascending order of both.
pub fn summarize(samples: &[RttSample]) -> Vec<RttStats> {
    if samples.is_empty() {
        warn!("no samples to summarize");
        return Vec::new();
    }
    let mut groups: BTreeMap<(usize, u64), Vec<u64>> = BTreeMap::new();
    for s in samples {
        groups.entry((s.size_bytes, s.interval_ms)).or_default().push(s.rtt_us);
    }
    groups.into_iter().filter_map(|((size, interval), rtts)| group_stats(size, interval, &rtts)).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    seq: u64,
    size: usize,
    interval: u64,
    rtt_us: u64,
}

pub const SAMPLES_FILE: &str = "samples.csv";
pub const STATS_FILE: &str = "stats.csv";

const STATS_HEADER: [&str; 12] = [
    "size_bytes",
    "interval_ms",
    "count",
    "min_us",
    "q1_us",
    "median_us",
    "q3_us",
    "max_us",
    "over_30ms",
    "over_50ms",
    "over_100ms",
    "over_500ms",
];

/// Writes `samples.csv` (seq,size,interval,rtt_us) and `stats.csv` into
/// `dir`. Returns both paths.
pub fn export_results(stats: &[RttStats], samples: &[RttSample], dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let samples_path = dir.join(SAMPLES_FILE);
    let stats_path = dir.join(STATS_FILE);

    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&samples_path)?;
    w.write_record(["seq", "size", "interval", "rtt_us"])?;
    for s in samples {
        w.serialize(SampleRow { seq: s.seq, size: s.size_bytes, interval: s.interval_ms, rtt_us: s.rtt_us })?;
    }
    w.flush()?;

    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(&stats_path)?;
    w.write_record(STATS_HEADER)?;
    for s in stats {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok((samples_path, stats_path))
}

pub fn import_stats(path: &Path) -> std::io::Result<Vec<RttStats>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(std::io::Error::from)).collect()
}

/// Reads `samples.csv`. The send timestamp is not exported and reads as 0.
pub fn import_samples(path: &Path) -> std::io::Result<Vec<RttSample>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<SampleRow>()
        .map(|row| {
            row.map(|s| RttSample { seq: s.seq, size_bytes: s.size, interval_ms: s.interval, rtt_us: s.rtt_us, send_us: 0 })
                .map_err(std::io::Error::from)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sample(seq: u64, size: usize, rtt_us: u64) -> RttSample {
        RttSample { seq, size_bytes: size, interval_ms: 17, rtt_us, send_us: seq * 17_000 }
    }

    #[test]
    fn five_point_quartiles() {
        let s = group_stats(60, 17, &[3000, 1000, 5000, 2000, 4000]).unwrap();
        assert_eq!((s.min_us, s.q1_us, s.median_us, s.q3_us, s.max_us), (1000.0, 2000.0, 3000.0, 4000.0, 5000.0));
        assert!(group_stats(60, 17, &[]).is_none());
        assert!(summarize(&[]).is_empty());
    }

    #[test]
    fn outlier_counters() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut rtts: Vec<u64> = (0..1461).map(|_| rng.gen_range(200..30_000)).collect();
        rtts.extend((0..35).map(|_| rng.gen_range(100_001..500_000)));
        rtts.extend([600_000, 1_200_000]);
        rtts.extend([100_000, 40_000]);
        assert_eq!(rtts.len(), 1500);
        let s = group_stats(20, 17, &rtts).unwrap();
        assert_eq!(s.over_100ms, 37);
        assert_eq!(s.over_500ms, 2);
        assert_eq!(s.over_50ms, 38);
        assert_eq!(s.over_30ms, 39);
    }

    proptest! {
        #[test]
        fn quartiles_match_sort_oracle(rtts in prop::collection::vec(1u64..1_000_000, 1..300), p in 0.0f64..1.0) {
            let mut sorted = rtts.clone();
            sorted.sort_unstable();
            // oracle: weighted average of the two bracketing order statistics
            let pos = p * (sorted.len() - 1) as f64;
            let (i, j) = (pos.floor() as usize, pos.ceil() as usize);
            let w = pos - i as f64;
            let want = sorted[i] as f64 * (1.0 - w) + sorted[j] as f64 * w;
            let v: Vec<f64> = sorted.iter().map(|&x| x as f64).collect();
            prop_assert!((quantile(&v, p) - want).abs() <= 1e-6 * want.max(1.0));

            let s = group_stats(20, 0, &rtts).unwrap();
            prop_assert!(s.min_us <= s.q1_us && s.q1_us <= s.median_us);
            prop_assert!(s.median_us <= s.q3_us && s.q3_us <= s.max_us);
            prop_assert_eq!(s.count, rtts.len());
        }
    }

    #[test]
    fn groups_are_ordered() {
        let samples = vec![sample(0, 120, 500), sample(1, 20, 400), sample(2, 120, 700), sample(3, 20, 300)];
        let stats = summarize(&samples);
        assert_eq!(stats.iter().map(|s| s.size_bytes).collect::<Vec<_>>(), vec![20, 120]);
        assert_eq!(stats[1].median_us, 600.0);
    }

    #[test]
    fn csv_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let samples: Vec<RttSample> = (0..50).map(|i| sample(i, 20 + 100 * (i as usize % 3), 300 + i * 37)).collect();
        let stats = summarize(&samples);
        let (sp, tp) = export_results(&stats, &samples, dir.path()).unwrap();
        let first = (std::fs::read(&sp).unwrap(), std::fs::read(&tp).unwrap());
        export_results(&stats, &samples, dir.path()).unwrap();
        assert_eq!(first, (std::fs::read(&sp).unwrap(), std::fs::read(&tp).unwrap()));

        assert_eq!(import_stats(&tp).unwrap(), stats);
        let back = import_samples(&sp).unwrap();
        assert_eq!(back.len(), samples.len());
        assert!(back.iter().zip(&samples).all(|(a, b)| a.seq == b.seq && a.rtt_us == b.rtt_us));

        let empty = tempfile::tempdir().unwrap();
        let (sp, tp) = export_results(&[], &[], empty.path()).unwrap();
        assert_eq!(std::fs::read_to_string(sp).unwrap(), "seq,size,interval,rtt_us\n");
        assert_eq!(std::fs::read_to_string(tp).unwrap().lines().count(), 1);
    }
}
