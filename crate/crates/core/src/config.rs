use std::sync::Arc;

use crate::error::{Error, Result};
use crate::inference::{DriftRule, InfoDrift};
use crate::kernels::{BandwidthPolicy, MedianSquared};

/// Settings for one particle-flow run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub num_particles: usize,
    /// Number of Euler steps T.
    pub horizon: usize,
    /// Euler step size ε.
    pub step_size: f64,
    pub seed: u64,
    pub bandwidth: Arc<dyn BandwidthPolicy>,
    pub drift: Arc<dyn DriftRule>,
    /// Record every `snapshot_stride` steps (plus the first and last);
    /// 0 disables recording.
    pub snapshot_stride: usize,
    /// Compute the Stein discrepancy at recorded steps.
    pub record_ksd: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            num_particles: 200,
            horizon: 2000,
            step_size: 0.05,
            seed: 0,
            bandwidth: Arc::new(MedianSquared),
            drift: Arc::new(InfoDrift),
            snapshot_stride: 10,
            record_ksd: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_particles == 0 {
            return Err(Error::config("number of particles must be at least 1"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config(format!("step size must be > 0, got {}", self.step_size)));
        }
        Ok(())
    }

    pub fn with_bandwidth(mut self, policy: impl BandwidthPolicy + 'static) -> Self {
        self.bandwidth = Arc::new(policy);
        self
    }

    pub fn with_drift(mut self, rule: impl DriftRule + 'static) -> Self {
        self.drift = Arc::new(rule);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Fixed;

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let bad = RunConfig {
            step_size: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RunConfig {
            num_particles: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let fixed = RunConfig::default().with_bandwidth(Fixed(0.5));
        assert!(fixed.bandwidth.is_fixed());
    }
}
