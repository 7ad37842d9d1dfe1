use std::io::Write;

use infoflow::inference::run_info;
use infoflow::metrics::{kde_gaussian, linspace};
use infoflow::particles::{init_particles, Initializer};
use infoflow::record::Scalar;
use infoflow::targets::presets;
use infoflow::{Error, Result, Rng};

use super::flow_config;
use crate::output::{out_dir, write_with};
use crate::Cli;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Target preset: gauss-3, student or gmm-sym.
    #[arg(long, default_value = "gauss-3")]
    pub target: String,
    #[arg(long, default_value_t = 200)]
    pub particles: usize,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0.05)]
    pub step_size: f64,
    /// Record every this many steps.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    #[arg(long, default_value_t = -8.0, allow_hyphen_values = true)]
    pub grid_min: f64,
    #[arg(long, default_value_t = 8.0, allow_hyphen_values = true)]
    pub grid_max: f64,
    #[arg(long, default_value_t = 321)]
    pub grid_points: usize,
}

pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    let target = presets::one_d(&args.target).ok_or_else(|| Error::UnknownName {
        kind: "1D preset",
        name: args.target.clone(),
        available: presets::ONE_D.join(", "),
    })?;
    if args.stride == 0 {
        return Err(Error::Config("--stride must be at least 1".into()));
    }
    if !(args.grid_max > args.grid_min) || args.grid_points < 2 {
        return Err(Error::Config("KDE grid needs grid-max > grid-min and at least 2 points".into()));
    }
    let mut cfg = flow_config(cli, args.particles, args.steps, args.step_size)?;
    cfg.snapshot_stride = args.stride;
    let mut rng = Rng::new(cli.seed);
    let init = init_particles(Initializer::StandardNormal, cfg.num_particles, 1, &mut rng)?;
    let run = run_info(&cfg, target.as_ref(), &init)?;

    let dir = out_dir(&cli.out)?;
    write_with(&dir.join("trajectory.csv"), |w| run.record.write_snapshots_csv(w))?;
    write_with(&dir.join("ksd.csv"), |w| {
        writeln!(w, "t,ksd")?;
        for (t, v) in run.record.series(Scalar::Ksd) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    })?;
    let grid = linspace(args.grid_min, args.grid_max, args.grid_points);
    // one `grid,density` file per recorded step
    let kde_dir = out_dir(&dir.join("kde"))?;
    for (t, snap) in run.record.rows() {
        let Some(ps) = &snap.particles else { continue };
        if ps.len() < 2 {
            continue;
        }
        let kde = kde_gaussian(ps.as_flat(), &grid)?;
        write_with(&kde_dir.join(format!("t{t:06}.csv")), |w| {
            writeln!(w, "grid,density")?;
            for (g, d) in grid.iter().zip(&kde.density) {
                writeln!(w, "{g},{d}")?;
            }
            Ok(())
        })?;
    }
    let series = run.record.series(Scalar::Ksd);
    if let (Some(first), Some(last)) = (series.first(), series.last()) {
        eprintln!(
            "{}: ksd {:.4e} at t={} -> {:.4e} at t={}",
            args.target, first.1, first.0, last.1, last.0
        );
    }
    Ok(())
}
