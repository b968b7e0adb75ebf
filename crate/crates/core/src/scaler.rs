//! Quantile-based reward scaling over a reservoir sample of raw rewards.

use rand::{Rng as _, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalerConfig {
    pub capacity: usize,
    /// Lower percentile in [0, 100).
    pub q_lo_pct: f64,
    /// Upper percentile in (q_lo_pct, 100].
    pub q_hi_pct: f64,
}

impl Default for ScalerConfig {
    fn default() -> Self {
        Self {
            capacity: 1000,
            q_lo_pct: 20.0,
            q_hi_pct: 80.0,
        }
    }
}

impl ScalerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::Config("scaler capacity must be >= 1".into()));
        }
        if !(0.0 <= self.q_lo_pct && self.q_lo_pct < self.q_hi_pct && self.q_hi_pct <= 100.0) {
            return Err(Error::Config(format!(
                "need 0 <= q_lo < q_hi <= 100, got {} and {}",
                self.q_lo_pct, self.q_hi_pct
            )));
        }
        Ok(())
    }
}

/// Maps raw rewards of unknown scale into [-1, 1].
///
/// `reservoir` holds a uniform sample (Algorithm R) of everything passed to
/// [`RewardScaler::observe`]; `sorted` mirrors it in ascending order for
/// quantile lookups.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardScaler {
    config: ScalerConfig,
    reservoir: Vec<f64>,
    sorted: Vec<f64>,
    seen_count: u64,
    rng: Rng,
}

/// Nearest-rank percentile of an ascending slice: element at 1-based rank
/// `ceil(p/100 * n)`, clamped to `[1, n]`.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

impl RewardScaler {
    pub fn new(config: ScalerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            reservoir: Vec::with_capacity(config.capacity),
            sorted: Vec::with_capacity(config.capacity),
            config,
            seen_count: 0,
            rng: Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &ScalerConfig {
        &self.config
    }

    pub fn seen_count(&self) -> u64 {
        self.seen_count
    }

    pub fn reservoir(&self) -> &[f64] {
        &self.reservoir
    }

    pub fn observe(&mut self, raw: f64) -> Result<()> {
        if !raw.is_finite() {
            return Err(Error::NonFinite(format!("raw reward {raw}")));
        }
        self.seen_count += 1;
        if self.reservoir.len() < self.config.capacity {
            self.reservoir.push(raw);
            self.insert_sorted(raw);
        } else {
            let slot = self.rng.gen_range(0..self.seen_count);
            if (slot as usize) < self.config.capacity {
                let old = std::mem::replace(&mut self.reservoir[slot as usize], raw);
                self.remove_sorted(old);
                self.insert_sorted(raw);
            }
        }
        Ok(())
    }

    fn insert_sorted(&mut self, x: f64) {
        let at = self.sorted.partition_point(|&v| v < x);
        self.sorted.insert(at, x);
    }

    fn remove_sorted(&mut self, x: f64) {
        let at = self.sorted.partition_point(|&v| v < x);
        debug_assert_eq!(self.sorted[at], x);
        self.sorted.remove(at);
    }

    /// Current `(q_lo, q_hi)`, or `None` before two rewards have been seen.
    pub fn quantiles(&self) -> Option<(f64, f64)> {
        if self.sorted.len() < 2 {
            return None;
        }
        Some((
            nearest_rank(&self.sorted, self.config.q_lo_pct),
            nearest_rank(&self.sorted, self.config.q_hi_pct),
        ))
    }

    /// Scale `raw` against the current reservoir without inserting it.
    pub fn scale(&self, raw: f64) -> f64 {
        let Some((lo, hi)) = self.quantiles() else {
            return 0.0;
        };
        scale_between(raw, lo, hi)
    }
}

/// Clip to `[lo, hi]` and map affinely onto `[-1, 1]`. A collapsed interval
/// maps its own value to 0 and everything else to ±1.
pub fn scale_between(raw: f64, lo: f64, hi: f64) -> f64 {
    if raw < lo {
        -1.0
    } else if raw > hi {
        1.0
    } else if hi == lo {
        0.0
    } else {
        (2.0 * (raw - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    }
}
