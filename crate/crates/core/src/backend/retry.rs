use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Exponential backoff with full jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_ms: u64,
    pub factor: f64,
    pub cap_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_ms: 1_000,
            factor: 2.0,
            cap_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// Upper bound on the wait after failed attempt `attempt` (0-based),
    /// before jitter.
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let raw = self.base_ms as f64 * self.factor.powi(attempt as i32);
        Duration::from_millis(raw.min(self.cap_ms as f64) as u64)
    }

    /// Full jitter: uniform in `[0, ceiling(attempt)]`.
    pub fn delay<R: Rng>(&self, attempt: u32, rng: &mut R) -> Duration {
        let ceiling = self.ceiling(attempt).as_millis() as u64;
        Duration::from_millis(rng.gen_range(0..=ceiling))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: u32,
    pub status: Option<u16>,
    pub message: String,
    pub waited_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn default_schedule() {
        let p = RetryPolicy::default();
        let secs: Vec<u64> = (0..8).map(|k| p.ceiling(k).as_secs()).collect();
        assert_eq!(secs, vec![1, 2, 4, 8, 16, 32, 60, 60]);
    }

    proptest! {
        #[test]
        fn ceilings_never_shrink(base in 1u64..5_000, factor in 1.0f64..4.0, cap in 1u64..100_000, k in 0u32..30) {
            let p = RetryPolicy { max_attempts: 5, base_ms: base, factor, cap_ms: cap };
            prop_assert!(p.ceiling(k + 1) >= p.ceiling(k));
            prop_assert!(p.ceiling(k) <= Duration::from_millis(cap));
        }

        #[test]
        fn jitter_stays_under_ceiling(seed in any::<u64>(), k in 0u32..10) {
            let p = RetryPolicy::default();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            prop_assert!(p.delay(k, &mut rng) <= p.ceiling(k));
        }
    }
}
