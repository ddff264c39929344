//! Command-line front end: synthetic data generation, tuning, evaluation,
//! the strategy comparison, the graph-size sweep, and self-checks.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use patchgraph::check::self_check;
use patchgraph::data::{
    load_dataset, make_synthetic, two_phase_schedule, write_dataset, RunConfig,
};
use patchgraph::data::{seeded_rng, streams, sub_seed};
use patchgraph::error::Error;
use patchgraph::eval::{
    compare_strategies, evaluate, sweep_graph_size, write_compare_svg, write_experiment_csv,
    write_history_csv, write_history_svg, write_sweep_svg,
};
use patchgraph::train::{
    channel_stats, tune, tune_with_embedder, Embedder, Strategy, DEFAULT_HIDDEN_DIM,
};

#[derive(Parser)]
#[command(
    name = "patchgraph",
    version,
    about = "Patch-triplet tuning over class-wise connected graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic PPM/PGM dataset
    Synth {
        /// Number of images
        #[arg(long)]
        images: usize,
        /// Number of classes (background included)
        #[arg(long)]
        classes: u32,
        /// Square image side in pixels
        #[arg(long, default_value_t = 64)]
        size: usize,
        /// Output directory
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Train an embedder and write a checkpoint
    Tune {
        /// Dataset directory (image_k.ppm / label_k.pgm pairs)
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Triplet strategy: graph or random
        #[arg(long, default_value = "graph")]
        strategy: String,
        /// Embedder variant: identity, linear, or two-layer
        #[arg(long, default_value = "two-layer")]
        variant: String,
        /// Hidden width for the two-layer variant
        #[arg(long, default_value_t = DEFAULT_HIDDEN_DIM)]
        hidden_dim: usize,
        /// Checkpoint output path
        #[arg(long, default_value = "embedder.ckpt")]
        out: PathBuf,
        /// Per-step history CSV (loss curve SVG lands next to it)
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint on held-out patches
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Paired graph-vs-random comparison over several seeds
    Compare {
        #[arg(long)]
        data: PathBuf,
        /// Base seed; runs use seed, seed+1, ...
        #[arg(long)]
        seed: u64,
        /// Number of seeds
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// CSV output path (compare.svg lands next to it)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Graph-size study at fixed patches per image
    Sweep {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Comma-separated node-count targets
        #[arg(long, default_value = "100,200,400")]
        nodes: String,
        /// CSV output path (sweep.svg lands next to it)
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run gradient and graph-invariant self-tests
    Check,
}

/// Tuning knobs, mirroring the run configuration.
#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 16)]
    images_per_batch: usize,
    #[arg(long, default_value_t = 10)]
    patches_per_image: usize,
    #[arg(long, default_value_t = 32)]
    patch_resize: usize,
    #[arg(long, default_value_t = 2.1)]
    margin: f64,
    #[arg(long, default_value_t = 32)]
    embed_dim: usize,
    #[arg(long, default_value_t = 400)]
    iters: usize,
    #[arg(long, default_value_t = 0.5)]
    overlap_iou_max: f64,
    #[arg(long, default_value_t = 0.2)]
    scale_min: f64,
    #[arg(long, default_value_t = 0.6)]
    scale_max: f64,
    /// Override as `iter:rate,iter:rate`; default drops 0.01 to 0.001 at 3/4
    #[arg(long)]
    lr_schedule: Option<String>,
}

impl ConfigArgs {
    fn to_run_config(&self, seed: u64) -> Result<RunConfig, Error> {
        let schedule = match &self.lr_schedule {
            Some(raw) => parse_schedule(raw)?,
            None => two_phase_schedule(self.iters),
        };
        let cfg = RunConfig {
            seed,
            images_per_batch: self.images_per_batch,
            patches_per_image: self.patches_per_image,
            patch_resize: self.patch_resize,
            margin_alpha: self.margin,
            embed_dim: self.embed_dim,
            learning_rate_schedule: schedule,
            iterations: self.iters,
            overlap_iou_max: self.overlap_iou_max,
            patch_scale_range: (self.scale_min, self.scale_max),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_schedule(raw: &str) -> Result<Vec<(usize, f64)>, Error> {
    let mut schedule = Vec::new();
    for part in raw.split(',') {
        let (it, rate) = part
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad schedule entry '{part}'")))?;
        let it = it
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad schedule iteration '{it}'")))?;
        let rate = rate
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad schedule rate '{rate}'")))?;
        schedule.push((it, rate));
    }
    Ok(schedule)
}

fn parse_strategy(name: &str) -> Result<Strategy, Error> {
    match name {
        "graph" => Ok(Strategy::Graph),
        "random" => Ok(Strategy::Random),
        other => Err(Error::Config(format!(
            "unknown strategy '{other}' (expected graph or random)"
        ))),
    }
}

fn exit_code_for(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 1,
        Error::Io { .. }
        | Error::Dataset(_)
        | Error::EmptyBatch
        | Error::TooFewClasses
        | Error::Checkpoint(_)
        | Error::NodeTarget(_)
        | Error::TrainingStalled(_) => 2,
        Error::DimensionMismatch { .. }
        | Error::EmptyTriplets
        | Error::DegenerateEmbedding { .. }
        | Error::NonFinite(_) => 3,
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    match path.parent() {
        Some(dir) => dir.join(name),
        None => PathBuf::from(name),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Synth {
            images,
            classes,
            size,
            out,
            seed,
        } => {
            let dataset = make_synthetic(images, classes, (size, size), seed)?;
            write_dataset(&dataset, &out)?;
            println!("wrote {images} image/label pairs to {}", out.display());
            Ok(())
        }
        Command::Tune {
            data,
            seed,
            strategy,
            variant,
            hidden_dim,
            out,
            history,
            cfg,
        } => {
            let strategy = parse_strategy(&strategy)?;
            let run_cfg = cfg.to_run_config(seed)?;
            let images = load_dataset(&data)?;
            let state = match variant.as_str() {
                "two-layer" if hidden_dim == DEFAULT_HIDDEN_DIM => {
                    tune(&images, &run_cfg, strategy)?
                }
                name => {
                    let channels = images[0].channels;
                    let input_dim = run_cfg.patch_resize * run_cfg.patch_resize * channels;
                    let mut rng = seeded_rng(sub_seed(seed, streams::INIT));
                    let mut embedder = match name {
                        "identity" => Embedder::identity(input_dim, channels),
                        "linear" => {
                            Embedder::linear(input_dim, run_cfg.embed_dim, channels, &mut rng)
                        }
                        "two-layer" => Embedder::two_layer(
                            input_dim,
                            hidden_dim,
                            run_cfg.embed_dim,
                            channels,
                            &mut rng,
                        ),
                        other => {
                            return Err(Error::Config(format!(
                            "unknown variant '{other}' (expected identity, linear, or two-layer)"
                        )))
                        }
                    };
                    if !matches!(name, "identity") {
                        let (mean, std) = channel_stats(&images);
                        embedder.set_standardization(mean, std)?;
                    }
                    tune_with_embedder(embedder, &images, &run_cfg, strategy)?
                }
            };
            state.embedder.save(&out)?;
            let last = state.history.last();
            println!(
                "tuned {} iterations ({} skipped); final loss {}",
                state.iteration,
                state.skipped_steps.len(),
                last.map_or("n/a".to_string(), |p| format!("{:.4}", p.loss)),
            );
            if let Some(history_path) = history {
                write_history_csv(&history_path, &state.history)?;
                write_history_svg(&sibling(&history_path, "tune.svg"), &state.history)?;
            }
            println!("checkpoint written to {}", out.display());
            Ok(())
        }
        Command::Eval {
            data,
            ckpt,
            seed,
            cfg,
        } => {
            let run_cfg = cfg.to_run_config(seed)?;
            let images = load_dataset(&data)?;
            let embedder = Embedder::load(&ckpt)?;
            let report = evaluate(&embedder, &images, &run_cfg, seed)?;
            println!("{report}");
            Ok(())
        }
        Command::Compare {
            data,
            seed,
            seeds,
            out,
            cfg,
        } => {
            let run_cfg = cfg.to_run_config(seed)?;
            let images = load_dataset(&data)?;
            let seed_list: Vec<u64> = (seed..seed + seeds).collect();
            let result = compare_strategies(&images, &run_cfg, &seed_list)?;
            write_experiment_csv(&out, &result)?;
            write_compare_svg(&sibling(&out, "compare.svg"), &result)?;
            for summary in &result.summaries {
                println!(
                    "{}: knn {:.4} +/- {:.4}, satisfaction median {:.4}",
                    summary.arm, summary.knn_mean, summary.knn_std, summary.satisfaction_median
                );
            }
            for (failed_seed, msg) in &result.failures {
                eprintln!("seed {failed_seed} failed: {msg}");
            }
            println!("results written to {}", out.display());
            Ok(())
        }
        Command::Sweep {
            data,
            seed,
            seeds,
            nodes,
            out,
            cfg,
        } => {
            let run_cfg = cfg.to_run_config(seed)?;
            let images = load_dataset(&data)?;
            let targets: Vec<usize> = nodes
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad node target '{t}'")))
                })
                .collect::<Result<_, _>>()?;
            let seed_list: Vec<u64> = (seed..seed + seeds).collect();
            let result = sweep_graph_size(&images, &run_cfg, &targets, &seed_list)?;
            write_experiment_csv(&out, &result)?;
            write_sweep_svg(&sibling(&out, "sweep.svg"), &result)?;
            for summary in &result.summaries {
                println!(
                    "{}: knn {:.4}, {:.2} ms/iter",
                    summary.arm, summary.knn_mean, summary.wall_ms_mean
                );
            }
            println!("results written to {}", out.display());
            Ok(())
        }
        Command::Check => {
            let results = self_check();
            let mut all_ok = true;
            for check in &results {
                let status = if check.passed { "ok " } else { "FAIL" };
                println!("{status} {} ({})", check.name, check.detail);
                all_ok &= check.passed;
            }
            if all_ok {
                Ok(())
            } else {
                Err(Error::NonFinite("self-check failures".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
