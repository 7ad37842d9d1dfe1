pub mod approx2d;
pub mod em;
pub mod flow1d;
pub mod gof;
pub mod predict;

use std::sync::Arc;

use infoflow::inference::drift_rule;
use infoflow::kernels::{parse_bandwidth, BandwidthPolicy, MedianSquared};
use infoflow::{Result, RunConfig};

use crate::{Cli, Command};

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Flow1d(a) => flow1d::run(cli, a),
        Command::Approx2d(a) => approx2d::run(cli, a),
        Command::Gof(a) => gof::run(cli, a),
        Command::EmTrain(a) => em::run(cli, a),
        Command::Predict(a) => predict::run(cli, a),
    }
}

/// The global bandwidth flag, or `fallback` when absent.
pub fn bandwidth_or(cli: &Cli, fallback: Arc<dyn BandwidthPolicy>) -> Result<Arc<dyn BandwidthPolicy>> {
    match &cli.bandwidth {
        Some(flag) => Ok(Arc::from(parse_bandwidth(flag)?)),
        None => Ok(fallback),
    }
}

pub fn flow_config(cli: &Cli, particles: usize, steps: usize, step_size: f64) -> Result<RunConfig> {
    let cfg = RunConfig {
        num_particles: particles,
        horizon: steps,
        step_size,
        seed: cli.seed,
        bandwidth: bandwidth_or(cli, Arc::new(MedianSquared))?,
        drift: drift_rule(&cli.drift)?,
        ..RunConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}
