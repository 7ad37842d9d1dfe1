use std::path::PathBuf;
use std::sync::Arc;

use infoflow::discrepancy::gof_test;
use infoflow::kernels::MedianSquared;
use infoflow::plvm::Dataset;
use infoflow::targets::{presets, Density, TargetSpec};
use infoflow::{Error, ParticleSet, Result, Rng};

use super::bandwidth_or;
use crate::output::{emit_json, out_dir};
use crate::Cli;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// CSV of sample points. Columns named dim_* are used when present,
    /// otherwise every column.
    #[arg(long)]
    pub samples: PathBuf,
    /// Target preset name (gauss-3, student, gmm-sym, mog, mor, tm).
    #[arg(long, conflicts_with = "target_spec")]
    pub target: Option<String>,
    /// Target given as a JSON `{variant, parameters}` document.
    #[arg(long)]
    pub target_spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub bootstrap: usize,
}

fn load_target(args: &Args) -> Result<Box<dyn Density>> {
    match (&args.target, &args.target_spec) {
        (Some(name), None) => presets::by_name(name).ok_or_else(|| Error::UnknownName {
            kind: "preset",
            name: name.clone(),
            available: presets::ONE_D.iter().chain(&presets::TWO_D).copied().collect::<Vec<_>>().join(", "),
        }),
        (None, Some(path)) => TargetSpec::from_json(&std::fs::read_to_string(path)?)?.build(),
        _ => Err(Error::Config("give exactly one of --target or --target-spec".into())),
    }
}

fn load_points(path: &std::path::Path) -> Result<ParticleSet> {
    let data = Dataset::read_csv_path(path)?;
    let dims: Vec<usize> = match data.columns().iter().any(|c| c.starts_with("dim_")) {
        true => (0..data.dim()).filter(|&j| data.columns()[j].starts_with("dim_")).collect(),
        false => (0..data.dim()).collect(),
    };
    let flat = (0..data.len())
        .flat_map(|n| dims.iter().map(move |&j| (n, j)))
        .map(|(n, j)| data.row(n)[j])
        .collect();
    ParticleSet::from_flat(flat, dims.len(), 0)
}

pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    let target = load_target(args)?;
    let points = load_points(&args.samples)?;
    if points.dim() != target.dim() {
        return Err(Error::Input(format!(
            "samples have dimension {}, target has {}",
            points.dim(),
            target.dim()
        )));
    }
    let kernel = bandwidth_or(cli, Arc::new(MedianSquared))?.kernel(&points)?;
    let mut rng = Rng::new(cli.seed);
    let result = gof_test(&points, target.as_ref(), kernel, args.alpha, args.bootstrap, &mut rng)?;
    let dir = out_dir(&cli.out)?;
    emit_json(&dir.join("gof.json"), &serde_json::to_value(result)?)
}
