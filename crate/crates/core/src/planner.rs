//! Campaign arithmetic: throughput, duration and storage footprint.
//!
//! Byte figures use decimal units (1 GB = 10^9 bytes).

use crate::error::{Error, Result};
use crate::idgen::MAX_BATCH;

pub const SECONDS_PER_DAY: u64 = 86_400;
pub const GB: f64 = 1e9;
pub const MB: f64 = 1e6;

/// Tweets per bulk in the storage model ("a bulk of 5 million").
pub const BULK_TWEETS: u64 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePolicy {
    pub batch_size: u64,
    pub min_interval_secs: f64,
    pub workers: u64,
}

impl Default for RatePolicy {
    fn default() -> Self {
        RatePolicy { batch_size: MAX_BATCH as u64, min_interval_secs: 5.0, workers: 1 }
    }
}

impl RatePolicy {
    pub fn new(batch_size: u64, min_interval_secs: f64, workers: u64) -> Result<RatePolicy> {
        if !(1..=MAX_BATCH as u64).contains(&batch_size) {
            return Err(Error::invalid(format!("batch size {batch_size} outside 1..={MAX_BATCH}")));
        }
        if !(min_interval_secs > 0.0) || !min_interval_secs.is_finite() {
            return Err(Error::invalid(format!("interval must be positive, got {min_interval_secs}")));
        }
        if workers == 0 {
            return Err(Error::invalid("workers must be at least 1"));
        }
        Ok(RatePolicy { batch_size, min_interval_secs, workers })
    }
}

/// `workers · batch_size · ⌊86400 / interval⌋`.
pub fn throughput_per_day(policy: &RatePolicy) -> u64 {
    let requests = (SECONDS_PER_DAY as f64 / policy.min_interval_secs).floor() as u64;
    policy.workers * policy.batch_size * requests
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Duration {
    pub days: f64,
    pub whole_days: u64,
}

pub fn collection_days(num_ids: u64, policy: &RatePolicy) -> Duration {
    let days = num_ids as f64 / throughput_per_day(policy) as f64;
    Duration { days, whole_days: days.floor() as u64 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageModel {
    pub compressed_bytes_per_bulk: f64,
    pub decompressed_bytes_per_bulk: f64,
}

impl Default for StorageModel {
    fn default() -> Self {
        StorageModel { compressed_bytes_per_bulk: 300.0 * MB, decompressed_bytes_per_bulk: 2.5 * GB }
    }
}

impl StorageModel {
    pub fn new(compressed: f64, decompressed: f64) -> Result<StorageModel> {
        if !(compressed > 0.0 && compressed <= decompressed && decompressed.is_finite()) {
            return Err(Error::invalid(format!(
                "storage model needs 0 < compressed ({compressed}) <= decompressed ({decompressed})"
            )));
        }
        Ok(StorageModel { compressed_bytes_per_bulk: compressed, decompressed_bytes_per_bulk: decompressed })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorageEstimate {
    pub compressed_bytes: f64,
    pub decompressed_bytes: f64,
}

pub fn storage_estimate(num_tweets: u64, model: &StorageModel) -> StorageEstimate {
    let bulks = num_tweets as f64 / BULK_TWEETS as f64;
    StorageEstimate {
        compressed_bytes: bulks * model.compressed_bytes_per_bulk,
        decompressed_bytes: bulks * model.decompressed_bytes_per_bulk,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput_per_day(&RatePolicy::default()), 1_728_000);
        let fleet = RatePolicy { workers: 30, ..RatePolicy::default() };
        assert_eq!(throughput_per_day(&fleet), 51_840_000);
        assert_eq!(throughput_per_day(&RatePolicy::new(1, 86_400.0, 1).unwrap()), 1);
    }

    #[test]
    fn duration_examples() {
        let d = collection_days(3_061_013_977, &RatePolicy::default());
        assert_eq!(d.whole_days, 1_771);
        let d = collection_days(1_483_823_453, &RatePolicy::default());
        assert!((d.days - 858.694_128).abs() < 1e-5, "{}", d.days);
        let d = collection_days(1_483_823_453, &RatePolicy { workers: 30, ..RatePolicy::default() });
        assert!((d.days - 28.623_137_6).abs() < 1e-5, "{}", d.days);
    }

    #[test]
    fn storage_examples() {
        let e = storage_estimate(1_483_823_453, &StorageModel::default());
        assert!((e.compressed_bytes / GB - 89.029_407).abs() < 1e-5);
        assert!((e.decompressed_bytes / GB - 741.911_727).abs() < 1e-5);
        let e = storage_estimate(BULK_TWEETS, &StorageModel::default());
        assert_eq!(e.compressed_bytes, 300e6);
        assert_eq!(e.decompressed_bytes, 2.5e9);
        let e = storage_estimate(0, &StorageModel::default());
        assert_eq!((e.compressed_bytes, e.decompressed_bytes), (0.0, 0.0));
    }

    #[test]
    fn invalid_policies() {
        assert!(RatePolicy::new(0, 5.0, 1).is_err());
        assert!(RatePolicy::new(101, 5.0, 1).is_err());
        assert!(RatePolicy::new(100, 0.0, 1).is_err());
        assert!(RatePolicy::new(100, 5.0, 0).is_err());
        assert!(StorageModel::new(2.0, 1.0).is_err());
    }

    #[test]
    fn linearity() {
        for w in 1..=40 {
            let p = RatePolicy { workers: w, ..RatePolicy::default() };
            assert_eq!(throughput_per_day(&p), w * 1_728_000);
        }
        let m = StorageModel::default();
        let a = storage_estimate(1_234_567, &m).compressed_bytes;
        let b = storage_estimate(2_469_134, &m).compressed_bytes;
        assert!((2.0 * a - b).abs() < 1e-6);
    }
}
