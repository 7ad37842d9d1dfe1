use std::sync::Arc;

use infoflow::baselines::approximator_registry;
use infoflow::discrepancy::{gof_test, ksd};
use infoflow::kernels::Fixed;
use infoflow::targets::presets;
use infoflow::{Error, Result, Rng};
use serde_json::{json, Value};

use super::{bandwidth_or, flow_config};
use crate::output::{emit_json, out_dir, write_cloud};
use crate::Cli;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Target preset: mog, mor or tm.
    #[arg(long, default_value = "mog")]
    pub target: String,
    /// Approximation method: info, gauss or gmm.
    #[arg(long, default_value = "info")]
    pub method: String,
    #[arg(long, default_value_t = 500)]
    pub particles: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap replicates for the goodness-of-fit test.
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
}

pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    let (target, h) = presets::two_d(&args.target).ok_or_else(|| Error::UnknownName {
        kind: "2D preset",
        name: args.target.clone(),
        available: presets::TWO_D.join(", "),
    })?;
    let method = approximator_registry().build(&args.method, &Value::Null)?;
    let mut cfg = flow_config(cli, args.particles, args.steps, args.step_size)?;
    cfg.bandwidth = bandwidth_or(cli, Arc::new(Fixed(h)))?;
    cfg.snapshot_stride = 0;

    let mut rng = Rng::new(cli.seed);
    let cloud = method.approximate(target.as_ref(), &cfg, &mut rng)?;
    let kernel = cfg.bandwidth.kernel(&cloud)?;
    let stat = ksd(&cloud, target.as_ref(), kernel)?;
    let gof = gof_test(&cloud, target.as_ref(), kernel, args.alpha, args.bootstrap, &mut rng)?;

    let dir = out_dir(&cli.out)?;
    write_cloud(&dir.join("cloud.csv"), &cloud)?;
    emit_json(
        &dir.join("summary.json"),
        &json!({
            "method": method.name(),
            "target": args.target,
            "ksd": stat,
            "gof_decision": gof.decision,
        }),
    )
}
