use alloc::format;
#[allow(unused_imports)]
use num_traits::Float as _;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Resampling settings. `None` fields are derived from the data grid and
/// the forcing basis by [`TestConfig::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    /// Bootstrap replicates.
    pub b1: usize,
    /// Block permutations per replicate.
    pub b2: usize,
    /// Samples per permutation block.
    pub block_len: Option<usize>,
    /// Lag in time units for the case-3 predictor.
    pub delta: Option<f64>,
    /// Samples dropped at each end before computing statistics.
    pub trim: Option<usize>,
    pub alpha: f64,
    pub master_seed: u64,
    /// Largest tolerated fraction of failed bootstrap replicates.
    pub max_failed_fraction: f64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            b1: 100,
            b2: 199,
            block_len: None,
            delta: None,
            trim: None,
            alpha: 0.05,
            master_seed: 0,
            max_failed_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTestConfig {
    pub b1: usize,
    pub b2: usize,
    pub block_len: usize,
    pub delta: f64,
    /// `delta` in samples.
    pub lag: usize,
    pub trim: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub max_failed_fraction: f64,
    pub sample_spacing: f64,
    pub forcing_support: f64,
}

/// Common spacing of an equally spaced grid.
pub fn grid_spacing(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::invalid("need at least two observation times"));
    }
    let n = times.len();
    let h = (times[n - 1] - times[0]) / (n - 1) as f64;
    let uneven = times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - h).abs() > 1e-6 * h);
    if uneven {
        return Err(Error::invalid(
            "block permutation and lagged predictors need equally spaced observation times",
        ));
    }
    Ok(h)
}

impl TestConfig {
    /// Fills in block length, lag and trimming for observation `times` and
    /// a forcing basis whose functions span `forcing_support` time units.
    pub fn resolve(&self, times: &[f64], forcing_support: f64) -> Result<ResolvedTestConfig> {
        if self.b1 == 0 || self.b2 == 0 {
            return Err(Error::invalid("b1 and b2 must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.max_failed_fraction) {
            return Err(Error::invalid("max_failed_fraction must lie in [0, 1)"));
        }
        let h = grid_spacing(times)?;
        let n = times.len();
        let block_len = match self.block_len {
            Some(b) => {
                if !(b as f64 * h > forcing_support) {
                    return Err(Error::invalid(format!(
                        "block length {b} spans {:.4} time units, not more than the forcing basis support {forcing_support:.4}",
                        b as f64 * h
                    )));
                }
                b
            }
            None => (forcing_support / h).floor() as usize + 1,
        };
        let delta = self.delta.unwrap_or(2.0 * block_len as f64 * h);
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::invalid("lag delta must be positive"));
        }
        let lag = ((delta / h).round() as usize).max(1);
        let trim = self.trim.unwrap_or(block_len / 2);
        let k = n.saturating_sub(2 * trim);
        if k < 2 * block_len {
            return Err(Error::invalid(format!(
                "{n} observations leave {k} points after trimming, fewer than two blocks of {block_len}"
            )));
        }
        if k < lag + 3 {
            return Err(Error::invalid(format!(
                "lag of {lag} samples leaves fewer than 3 case-3 points"
            )));
        }
        Ok(ResolvedTestConfig {
            b1: self.b1,
            b2: self.b2,
            block_len,
            delta,
            lag,
            trim,
            alpha: self.alpha,
            master_seed: self.master_seed,
            max_failed_fraction: self.max_failed_fraction,
            sample_spacing: h,
            forcing_support,
        })
    }
}

impl ResolvedTestConfig {
    /// Number of trimmed points entering the case-2 statistic.
    pub fn case2_points(&self, n: usize) -> usize {
        n - 2 * self.trim
    }

    /// Number of points with a lagged value inside the trimmed range.
    pub fn case3_points(&self, n: usize) -> usize {
        self.case2_points(n) - self.lag
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynsys::uniform_grid;

    #[test]
    fn standard_grid_defaults() {
        let t = uniform_grid(0.0, 55.0, 440).unwrap();
        let c = TestConfig::default().resolve(&t, 4.0).unwrap();
        // 55/439 ≈ 0.1253 per sample; 32 samples is the first to exceed 4
        assert_eq!(c.block_len, 32);
        assert!(32.0 * c.sample_spacing > 4.0 && 31.0 * c.sample_spacing <= 4.0);
        assert_eq!(c.lag, 64);
        assert!((c.delta - 64.0 * 55.0 / 439.0).abs() < 1e-12);
        assert_eq!(c.trim, 16);
        assert_eq!(c.case2_points(440), 408);
        assert_eq!(c.case3_points(440), 344);
    }

    #[test]
    fn short_blocks_are_rejected() {
        let t = uniform_grid(0.0, 55.0, 440).unwrap();
        let cfg = TestConfig {
            block_len: Some(31),
            ..Default::default()
        };
        assert!(cfg.resolve(&t, 4.0).is_err());
    }

    #[test]
    fn uneven_grids_are_rejected() {
        assert!(TestConfig::default()
            .resolve(&[0.0, 1.0, 3.0, 4.0], 0.1)
            .is_err());
    }

    #[test]
    fn too_few_points_are_rejected() {
        let t = uniform_grid(0.0, 10.0, 20).unwrap();
        assert!(TestConfig::default().resolve(&t, 4.0).is_err());
    }
}
