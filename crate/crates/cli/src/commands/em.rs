use std::io::Write;
use std::path::PathBuf;

use infoflow::plvm::{generate, run_info_em, Dataset, EmConfig, MStep, PlvmModel, SyntheticSpec};
use infoflow::{Error, Result, Rng};

use super::flow_config;
use crate::output::{out_dir, write_text, write_with};
use crate::Cli;

// keeps the model-initialization stream apart from the per-datapoint streams
const INIT_STREAM: u64 = 1 << 63;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Training data CSV with a header row.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate training data from a random linear or mlp decoder instead.
    #[arg(long, value_parser = ["linear", "mlp"])]
    pub synthetic: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 5)]
    pub d_obs: usize,
    /// Observation noise of the synthetic generator.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,

    /// Decoder to train: linear or mlp.
    #[arg(long, default_value = "linear", value_parser = ["linear", "mlp"])]
    pub decoder: String,
    #[arg(long, default_value_t = 2)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,

    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// M-step learning rate.
    #[arg(long, default_value_t = 1e-2)]
    pub rate: f64,
    #[arg(long, default_value_t = 50)]
    pub m_step_iters: usize,
    /// auto, gradient or closed-form.
    #[arg(long, default_value = "auto", value_parser = ["auto", "gradient", "closed-form"])]
    pub m_step: String,
    /// Restart every E-step from the prior instead of the previous cloud.
    #[arg(long)]
    pub cold_start: bool,
    #[arg(long, default_value_t = 1e-2)]
    pub min_sigma: f64,

    #[arg(long, default_value_t = 32)]
    pub particles: usize,
    #[arg(long, default_value_t = 300)]
    pub steps: usize,
    /// Upper bound on the E-step size; lowered automatically for stiff models.
    #[arg(long, default_value_t = 0.01)]
    pub step_size: f64,
}

pub fn run(cli: &Cli, args: &Args) -> Result<()> {
    let dir = out_dir(&cli.out)?;
    let data = match (&args.data, &args.synthetic) {
        (Some(path), None) => Dataset::read_csv_path(path)?,
        (None, Some(kind)) => {
            let spec = SyntheticSpec {
                decoder: kind.clone(),
                n: args.n,
                d_obs: args.d_obs,
                d_lv: args.latent_dim,
                hidden: args.hidden,
                noise: args.noise,
                seed: cli.seed,
            };
            let (data, generator) = generate(&spec)?;
            write_text(&dir.join("generator.json"), &format!("{}\n", serde_json::to_string_pretty(&generator)?))?;
            write_with(&dir.join("data.csv"), |w| data.write_csv(w))?;
            data
        }
        _ => return Err(Error::Config("give exactly one of --data or --synthetic".into())),
    };
    if args.latent_dim == 0 {
        return Err(Error::Config("--latent-dim must be at least 1".into()));
    }

    let mut init_rng = Rng::derive(cli.seed, INIT_STREAM);
    let offset = data.column_means();
    let m0 = match args.decoder.as_str() {
        "linear" => PlvmModel::init_linear(data.dim(), args.latent_dim, &offset, &mut init_rng)?,
        _ => PlvmModel::init_mlp(data.dim(), args.latent_dim, args.hidden, &offset, &mut init_rng)?,
    };
    let mut inner = flow_config(cli, args.particles, args.steps, args.step_size)?;
    inner.snapshot_stride = 0;
    inner.record_ksd = false;
    let cfg = EmConfig {
        epochs: args.epochs,
        m_step_rate: args.rate,
        m_step_iters: args.m_step_iters,
        m_step: match args.m_step.as_str() {
            "gradient" => MStep::Gradient,
            "closed-form" => MStep::ClosedForm,
            _ => MStep::Auto,
        },
        inner,
        warm_start: !args.cold_start,
        min_sigma: args.min_sigma,
        ..EmConfig::default()
    };
    let run = run_info_em(&m0, &data, &cfg)?;

    write_text(&dir.join("model.json"), &format!("{}\n", run.model.to_json()?))?;
    let monitor = run.monitor();
    write_with(&dir.join("monitor.csv"), |w| {
        writeln!(w, "epoch,expected_loglik")?;
        for (e, v) in monitor.iter().enumerate() {
            writeln!(w, "{},{v}", e + 1)?;
        }
        Ok(())
    })?;
    if let (Some(first), Some(last)) = (monitor.first(), monitor.last()) {
        eprintln!("expected log-likelihood {first:.6} -> {last:.6} over {} epochs", monitor.len());
    }
    Ok(())
}
