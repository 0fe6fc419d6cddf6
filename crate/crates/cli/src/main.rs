//! `depth-contours`: batch evaluation, losses and synthetic data from the
//! command line.
//!
//! Exit status: 0 on success, 1 when some entries failed (or a gradient check
//! exceeded its tolerance), 2 on configuration errors.

mod commands;
mod config;
mod pairing;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use depth_contours::imageio::DepthFormat;
use depth_contours::losses::LossTerm;
use depth_contours::metrics::{ClipRange, Crop};

use commands::{CliError, CliResult, Context, Status};
use config::{CannyFlags, FileConfig};

#[derive(Parser)]
#[command(name = "depth-contours", version, about = "Depth and occluding-contour evaluation toolkit")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// TOML file with [eval], [losses], [canny] and [sweep] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Leave the timestamp out of JSON reports.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Dataset {
    /// Prediction directory, or a dataset root with a depth/ subdirectory.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth directory, or a dataset root with depth/ and contours/.
    #[arg(long)]
    gt: PathBuf,
    /// PBM contour annotations; without them reference edges come from the
    /// ground-truth depth.
    #[arg(long)]
    contours: Option<PathBuf>,
}

#[derive(Args)]
struct Thresholds {
    /// Named threshold pair: coarse, medium, fine or narrow. Repeatable.
    #[arg(long = "preset")]
    presets: Vec<String>,
    #[arg(long)]
    sigma_low: Option<f64>,
    #[arg(long)]
    sigma_high: Option<f64>,
    /// Gaussian smoothing before edge detection.
    #[arg(long)]
    gauss_sigma: Option<f64>,
}

impl Thresholds {
    fn flags(&self) -> CannyFlags {
        CannyFlags {
            presets: self.presets.clone(),
            sigma_low: self.sigma_low,
            sigma_high: self.sigma_high,
            gauss_sigma: self.gauss_sigma,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pfm,
    Pgm,
}

#[derive(Subcommand)]
enum Command {
    /// Standard and boundary metrics for every image pair plus an aggregate row.
    Eval {
        #[command(flatten)]
        data: Dataset,
        /// none, eigen or x0,y0,x1,y1.
        #[arg(long)]
        crop: Option<Crop>,
        /// Prediction clip range as min,max in meters.
        #[arg(long)]
        clip: Option<ClipRange>,
        #[command(flatten)]
        thresholds: Thresholds,
        #[arg(long)]
        theta: Option<f64>,
        /// Method name in the CSV row.
        #[arg(long, default_value = "method")]
        method: String,
    },
    /// Boundary accuracy and completeness against PBM edge annotations.
    Dbe {
        #[arg(long)]
        pred: PathBuf,
        /// PBM annotations, or a dataset root with a contours/ subdirectory.
        #[arg(long)]
        gt_edges: PathBuf,
        #[command(flatten)]
        thresholds: Thresholds,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Random Canny thresholds against aggregate boundary accuracy and rmse_log.
    Sweep {
        #[command(flatten)]
        data: Dataset,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Per-term values of the training objective for one image.
    Losses {
        #[arg(long)]
        pred_depth: PathBuf,
        /// PBM labels or Pf probabilities.
        #[arg(long)]
        pred_contours: PathBuf,
        #[arg(long)]
        pred_normals: PathBuf,
        #[arg(long)]
        gt_depth: PathBuf,
        #[arg(long)]
        gt_contours: PathBuf,
        #[arg(long)]
        gt_normals: PathBuf,
    },
    /// Analytic gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        /// Restrict to these terms. Repeatable.
        #[arg(long = "term")]
        terms: Vec<LossTerm>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 8)]
        size: usize,
        #[arg(long, default_value_t = 1e-6)]
        step: f64,
    },
    /// Render synthetic scenes into a dataset directory.
    Synth {
        /// TOML or JSON file with a [[scenes]] list.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Number of additional random scenes.
        #[arg(long, default_value_t = 0)]
        random: usize,
        #[arg(long, default_value_t = 320)]
        width: usize,
        #[arg(long, default_value_t = 240)]
        height: usize,
        /// Move every primitive of the predictions this many columns right.
        #[arg(long)]
        shift: Option<usize>,
        #[arg(long, value_enum, default_value = "pfm")]
        format: Format,
    },
}

fn timestamp() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn dispatch(cli: Cli) -> CliResult<Status> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Run(e.to_string()))?;
    }
    let file = FileConfig::load(cli.config.as_deref()).map_err(CliError::Config)?;
    let ctx = Context {
        out: cli.out,
        seed: cli.seed,
        timestamp: (!cli.no_timestamp).then(timestamp),
        file,
    };
    let f = &ctx.file;
    match cli.command {
        Command::Eval {
            data,
            crop,
            clip,
            thresholds,
            theta,
            method,
        } => {
            let canny = f.canny(&thresholds.flags()).map_err(CliError::Config)?;
            let cfg = f.eval(crop, clip, theta, canny).map_err(CliError::Config)?;
            commands::eval(
                &ctx,
                &commands::EvalArgs {
                    pred: data.pred,
                    gt: data.gt,
                    contours: data.contours,
                    method,
                    cfg,
                },
            )
        }
        Command::Dbe {
            pred,
            gt_edges,
            thresholds,
            theta,
        } => {
            let canny = f.canny(&thresholds.flags()).map_err(CliError::Config)?;
            let cfg = f.eval(None, None, theta, canny).map_err(CliError::Config)?;
            commands::dbe(
                &ctx,
                &commands::DbeArgs {
                    pred,
                    gt_edges,
                    canny: cfg.canny,
                    theta: cfg.theta,
                },
            )
        }
        Command::Sweep { data, samples } => {
            let canny = f.canny(&CannyFlags::default()).map_err(CliError::Config)?;
            let cfg = f.eval(None, None, None, canny).map_err(CliError::Config)?;
            commands::sweep(
                &ctx,
                &commands::SweepArgs {
                    pred: data.pred,
                    gt: data.gt,
                    contours: data.contours,
                    samples: samples.or(f.sweep.samples).unwrap_or(100),
                    seed: ctx.seed.or(f.sweep.seed).unwrap_or(0),
                    cfg,
                },
            )
        }
        Command::Losses {
            pred_depth,
            pred_contours,
            pred_normals,
            gt_depth,
            gt_contours,
            gt_normals,
        } => {
            let cfg = f.losses().map_err(CliError::Config)?;
            commands::losses(
                &ctx,
                &commands::LossArgs {
                    pred_depth,
                    pred_contours,
                    pred_normals,
                    gt_depth,
                    gt_contours,
                    gt_normals,
                    cfg,
                },
            )
        }
        Command::Gradcheck {
            tol,
            terms,
            seeds,
            size,
            step,
        } => commands::gradcheck_cmd(
            &ctx,
            &commands::GradArgs {
                terms: if terms.is_empty() { LossTerm::ALL.to_vec() } else { terms },
                seeds,
                size,
                step,
                tol,
            },
        ),
        Command::Synth {
            spec,
            random,
            width,
            height,
            shift,
            format,
        } => commands::synth(
            &ctx,
            &commands::SynthArgs {
                spec,
                random,
                width,
                height,
                shift,
                format: match format {
                    Format::Pfm => DepthFormat::Pfm,
                    Format::Pgm => DepthFormat::Pgm,
                },
            },
        ),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(Status::Clean) => ExitCode::SUCCESS,
        Ok(Status::Failures) => ExitCode::from(1),
        Err(CliError::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Config(m)) => {
            eprintln!("configuration error: {m}");
            ExitCode::from(2)
        }
    }
}
