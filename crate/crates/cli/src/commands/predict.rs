use std::fmt::Write as _;
use std::io::Write;
use std::path::PathBuf;

use infoflow::metrics::regression_metrics;
use infoflow::plvm::{predict, stable_config, Dataset, ObservationMask, PlvmModel};
use infoflow::{Error, Result};
use rayon::prelude::*;

use super::flow_config;
use crate::output::{emit_json, out_dir, write_with};
use crate::Cli;

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Zero-based columns to predict, e.g. `3,4`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub target_cols: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    pub particles: usize,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// Upper bound on the flow step size; lowered automatically for stiff models.
    #[arg(long, default_value_t = 0.01)]
    pub step_size: f64,
}

// same stability margin as the training E-step
const STEP_CAP: f64 = 0.25;

pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    let model = PlvmModel::from_json(&std::fs::read_to_string(&args.model)?)?;
    let data = Dataset::read_csv_path(&args.data)?;
    if data.dim() != model.d_obs() {
        return Err(Error::Input(format!(
            "data has {} columns, model expects {}",
            data.dim(),
            model.d_obs()
        )));
    }
    let mask = ObservationMask::hiding(data.dim(), &args.target_cols)?;
    let mut inner = flow_config(cli, args.particles, args.steps, args.step_size)?;
    inner.snapshot_stride = 0;
    inner.record_ksd = false;
    let inner = stable_config(&inner, &model, Some(STEP_CAP));

    let preds: Vec<Vec<f64>> = (0..data.len())
        .into_par_iter()
        .map(|n| predict(&model, data.row(n), &mask, &inner))
        .collect::<Result<_>>()?;

    let hidden = mask.hidden();
    let mut truth = Vec::with_capacity(preds.len() * hidden.len());
    let mut flat = Vec::with_capacity(truth.capacity());
    for (n, p) in preds.iter().enumerate() {
        for (k, &d) in hidden.iter().enumerate() {
            truth.push(data.row(n)[d]);
            flat.push(p[k]);
        }
    }
    let report = regression_metrics(&truth, &flat)?;

    let dir = out_dir(&cli.out)?;
    write_with(&dir.join("predictions.csv"), |w| {
        let mut header = String::from("row");
        for &d in &hidden {
            write!(header, ",{}", data.columns()[d]).unwrap();
        }
        writeln!(w, "{header}")?;
        for (n, p) in preds.iter().enumerate() {
            let mut line = n.to_string();
            for v in p {
                write!(line, ",{v}").unwrap();
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    })?;
    emit_json(&dir.join("metrics.json"), &serde_json::to_value(report)?)
}
