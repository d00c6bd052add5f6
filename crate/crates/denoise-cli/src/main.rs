//! Command-line front end: corrupt, flow, register, denoise, bench,
//! compare.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use denoise_core::flow::{
    endpoint_error, register_stack, solve_flow, FlowParams, SofVariant,
};
use denoise_core::image::psnr;
use denoise_core::multiframe::{run_pipeline, FilterSpec, FrameStack};
use denoise_core::noise::{add_awgn, derive_seed, NoiseSpec};

use denoise_cli::compare::{compare_to_reference, read_reference, render_report};
use denoise_cli::config::Config;
use denoise_cli::error::CliError;
use denoise_cli::experiment::{
    format_table, method_from_id, read_records, run_grid, write_records, ExperimentSpec,
    FlowSource, TuneCriterion, TuneGrid,
};
use denoise_cli::flo::{read_flo, write_flo};
use denoise_cli::flowviz::write_flow_png;
use denoise_cli::imageio::{load_image, load_image_luma, save_image};

#[derive(Parser)]
#[command(
    name = "denoise",
    about = "Single- and multi-frame grayscale denoising (collaborative patch filters + optical-flow registration)",
    version
)]
struct Cli {
    /// Worker threads (default: all cores). Results are identical for any
    /// value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct FlowArgs {
    /// Smoothness weight.
    #[arg(long, default_value_t = 100.0)]
    alpha: f64,
    /// Gradient-constancy weight.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Contrast parameter of the smoothness function (variants 1/2).
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Regularizer variant: sof1 | sof2 | sof3.
    #[arg(long, default_value = "sof3")]
    variant: String,
    /// Warp linearizations per pyramid level.
    #[arg(long, default_value_t = 5)]
    outer_iters: usize,
    /// Relaxation sweeps per linear system.
    #[arg(long, default_value_t = 30)]
    solver_iters: usize,
}

impl FlowArgs {
    fn params(&self) -> Result<FlowParams, CliError> {
        let variant = parse_variant(&self.variant)?;
        Ok(FlowParams {
            alpha: self.alpha,
            gamma: self.gamma,
            lambda: self.lambda,
            variant,
            outer_iters: self.outer_iters,
            solver_iters: self.solver_iters,
            ..FlowParams::default()
        })
    }
}

fn parse_variant(s: &str) -> Result<SofVariant, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "sof1" | "1" => Ok(SofVariant::Sof1),
        "sof2" | "2" => Ok(SofVariant::Sof2),
        "sof3" | "3" => Ok(SofVariant::Sof3),
        other => Err(CliError::invalid(format!("unknown variant `{other}`"))),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Add seeded white Gaussian noise to an image (or synthesize a noisy
    /// frame stack).
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        /// Output image, or with --frames a `printf`-style pattern
        /// containing `{}` for the frame index.
        #[arg(long)]
        output: String,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of independent noisy frames to write.
        #[arg(long)]
        frames: Option<usize>,
        /// Convert color input to luminance.
        #[arg(long)]
        luma: bool,
    },

    /// Estimate optical flow between two frames and write a .flo file.
    Flow {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        to: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Optional color-wheel rendering of the field.
        #[arg(long)]
        viz: Option<PathBuf>,
        /// Optional ground-truth .flo; prints the mean endpoint error.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[command(flatten)]
        flow: FlowArgs,
    },

    /// Register frames onto a reference frame via pairwise optical flow.
    Register {
        /// Input frames in temporal order.
        #[arg(long, num_args = 1.., required = true)]
        frames: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        ref_index: usize,
        /// Output directory (writes registered00.png, ...).
        #[arg(long)]
        output_dir: PathBuf,
        #[command(flatten)]
        flow: FlowArgs,
    },

    /// Denoise one image or a frame stack.
    Denoise {
        /// Input frames (one for single-frame filtering).
        #[arg(long, num_args = 1.., required = true)]
        frames: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// Method id, e.g. bm3d-af, nlb-mf (single frames accept plain
        /// bm3d / nlb).
        #[arg(long)]
        method: String,
        #[arg(long)]
        sigma: f64,
        /// Frames are already aligned; skip flow registration.
        #[arg(long)]
        registered: bool,
        #[arg(long, default_value_t = 0)]
        ref_index: usize,
        /// Optional clean reference; prints PSNR of the result.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// PSNR border when --reference is given.
        #[arg(long, default_value_t = 0)]
        border: usize,
        #[command(flatten)]
        flow: FlowArgs,
    },

    /// Run a benchmark grid (sigmas x frame counts x methods) and write
    /// PSNR records.
    Bench {
        /// Flat `key = value` config file; command-line flags override.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset id (bridge|peppers|house|grove2|shoe|birdhouse) or a
        /// path to a clean image / frame directory.
        #[arg(long)]
        dataset: Option<String>,
        /// Directory holding the dataset files.
        #[arg(long)]
        dataset_dir: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        sigmas: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        frames: Vec<usize>,
        /// Comma-separated method ids.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        border: Option<usize>,
        /// Rerun single-reference cells over every reference frame and
        /// keep the best PSNR.
        #[arg(long)]
        sweep_ref: bool,
        /// Flow parameter source: table | tune-epe | tune-psnr | explicit.
        #[arg(long, default_value = "table")]
        flow_source: String,
        /// Published flow parameter table (for --flow-source table).
        #[arg(long)]
        flow_table: Option<PathBuf>,
        #[command(flatten)]
        flow: FlowArgs,
        /// Output records file (TSV).
        #[arg(long)]
        records: PathBuf,
        /// Optional reference table; prints the comparison report.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        tolerance: f64,
    },

    /// Compare a records file against a reference table.
    Compare {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Corrupt {
            input,
            output,
            sigma,
            seed,
            frames,
            luma,
        } => {
            let clean = if luma {
                load_image_luma(&input)?
            } else {
                load_image(&input)?
            };
            match frames {
                None => {
                    let noisy = add_awgn(&clean, NoiseSpec::new(sigma, seed));
                    save_image(&noisy, PathBuf::from(&output).as_path())?;
                }
                Some(l) => {
                    if !output.contains("{}") {
                        return Err(CliError::invalid(
                            "--frames needs an --output pattern containing {}",
                        ));
                    }
                    for i in 0..l {
                        let noisy =
                            add_awgn(&clean, NoiseSpec::new(sigma, derive_seed(seed, i as u64)));
                        let path = output.replace("{}", &format!("{i:02}"));
                        save_image(&noisy, PathBuf::from(&path).as_path())?;
                    }
                }
            }
            Ok(())
        }

        Command::Flow {
            from,
            to,
            output,
            viz,
            ground_truth,
            flow,
        } => {
            let f1 = load_image(&from)?;
            let f2 = load_image(&to)?;
            let field = solve_flow(&f1, &f2, &flow.params()?)?;
            write_flo(&field, &output)?;
            if let Some(path) = viz {
                write_flow_png(&field, &path)?;
            }
            if let Some(path) = ground_truth {
                let truth = read_flo(&path)?;
                match endpoint_error(&field, &truth) {
                    Some(epe) => println!("epe\t{epe:.4}"),
                    None => return Err(CliError::invalid("ground truth has no known pixels")),
                }
            }
            Ok(())
        }

        Command::Register {
            frames,
            ref_index,
            output_dir,
            flow,
        } => {
            let planes = frames.iter().map(|p| load_image(p)).collect::<Result<Vec<_>, _>>()?;
            if ref_index >= planes.len() {
                return Err(CliError::invalid("--ref-index out of range"));
            }
            let (registered, masks) = register_stack(&planes, ref_index, &flow.params()?)?;
            std::fs::create_dir_all(&output_dir).map_err(|e| CliError::io(&output_dir, e))?;
            for (i, frame) in registered.iter().enumerate() {
                save_image(frame, &output_dir.join(format!("registered{i:02}.png")))?;
                let invalid = masks[i].iter().filter(|&&v| !v).count();
                println!("frame {i}\tinvalid_pixels\t{invalid}");
            }
            Ok(())
        }

        Command::Denoise {
            frames,
            output,
            method,
            sigma,
            registered,
            ref_index,
            reference,
            border,
            flow,
        } => {
            let method = match method.to_ascii_lowercase().as_str() {
                // Plain filter names mean single-frame filtering.
                "bm3d" => method_from_id("bm3d-mf")?,
                "nlb" => method_from_id("nlb-mf")?,
                other => method_from_id(other)?,
            };
            let planes = frames.iter().map(|p| load_image(p)).collect::<Result<Vec<_>, _>>()?;
            if ref_index >= planes.len() {
                return Err(CliError::invalid("--ref-index out of range"));
            }
            let stack = if registered || planes.len() == 1 {
                FrameStack::registered(planes)?
            } else {
                FrameStack::new(planes)?
            }
            .with_ref_index(ref_index);
            let out = run_pipeline(
                &stack,
                method,
                &flow.params()?,
                &FilterSpec::Default(method.filter),
                sigma,
            )?;
            save_image(&out, &output)?;
            if let Some(path) = reference {
                let clean = load_image(&path)?;
                println!("psnr_db\t{:.4}", psnr(&clean, &out, border)?);
            }
            Ok(())
        }

        Command::Bench {
            config,
            dataset,
            dataset_dir,
            sigmas,
            frames,
            methods,
            seed,
            border,
            sweep_ref,
            flow_source,
            flow_table,
            flow,
            records,
            reference,
            tolerance,
        } => {
            let cfg = match config {
                Some(path) => Config::load(&path)?,
                None => Config::default(),
            };
            let spec = build_spec(
                &cfg, dataset, dataset_dir, sigmas, frames, methods, seed, border, sweep_ref,
                &flow_source, flow_table, &flow,
            )?;
            let results = run_grid(&spec)?;
            write_records(&results, &records)?;
            print!("{}", format_table(&results));
            if let Some(path) = reference {
                let table = read_reference(&path)?;
                let report = compare_to_reference(&results, &table, tolerance);
                print!("{}", render_report(&report));
            }
            Ok(())
        }

        Command::Compare {
            records,
            reference,
            tolerance,
        } => {
            let results = read_records(&records)?;
            let table = read_reference(&reference)?;
            let report = compare_to_reference(&results, &table, tolerance);
            print!("{}", render_report(&report));
            if report.pass() {
                Ok(())
            } else {
                Err(CliError::invalid(format!(
                    "{} of {} cells outside +-{} dB",
                    report.cells.len() - report.within_tolerance(),
                    report.cells.len(),
                    tolerance
                )))
            }
        }
    }
}

/// Merges config-file values and command-line flags into a spec; flags
/// win.
#[allow(clippy::too_many_arguments)]
fn build_spec(
    cfg: &Config,
    dataset: Option<String>,
    dataset_dir: Option<PathBuf>,
    sigmas: Vec<f64>,
    frames: Vec<usize>,
    methods: Vec<String>,
    seed: Option<u64>,
    border: Option<usize>,
    sweep_ref: bool,
    flow_source: &str,
    flow_table: Option<PathBuf>,
    flow: &FlowArgs,
) -> Result<ExperimentSpec, CliError> {
    let dataset = dataset
        .or_else(|| cfg.get("dataset").map(String::from))
        .ok_or_else(|| CliError::invalid("missing --dataset (or `dataset =` in the config)"))?;
    let dataset_dir = dataset_dir
        .or_else(|| cfg.get("dataset_dir").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/datasets"));
    let sigmas = if sigmas.is_empty() {
        cfg.get_list::<f64>("sigmas")?
            .ok_or_else(|| CliError::invalid("missing --sigmas"))?
    } else {
        sigmas
    };
    let frame_counts = if frames.is_empty() {
        cfg.get_list::<usize>("frames")?
            .ok_or_else(|| CliError::invalid("missing --frames"))?
    } else {
        frames
    };
    let method_ids = if methods.is_empty() {
        cfg.get_list::<String>("methods")?
            .ok_or_else(|| CliError::invalid("missing --methods"))?
    } else {
        methods
    };
    let methods = method_ids
        .iter()
        .map(|m| method_from_id(m))
        .collect::<Result<Vec<_>, _>>()?;
    let seed = match seed {
        Some(s) => s,
        None => cfg.get_parsed::<u64>("seed")?.unwrap_or(0),
    };
    let border = match border {
        Some(b) => Some(b),
        None => cfg.get_parsed::<usize>("border")?,
    };
    let sweep_ref = sweep_ref || cfg.get("sweep_ref") == Some("true");

    let source = match flow_source.to_ascii_lowercase().as_str() {
        "table" => FlowSource::Table(
            flow_table
                .or_else(|| cfg.get("flow_table").map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("data/flow_params.tsv")),
        ),
        "explicit" => FlowSource::Explicit(flow.params()?),
        "tune-epe" | "tune-psnr" => {
            let grid = TuneGrid {
                alphas: cfg
                    .get_list::<f64>("tune_alphas")?
                    .unwrap_or_else(|| vec![15.0, 45.0, 95.0, 135.0]),
                gammas: cfg.get_list::<f64>("tune_gammas")?.unwrap_or_else(|| vec![0.5, 1.5]),
                lambdas: cfg.get_list::<f64>("tune_lambdas")?.unwrap_or_else(|| vec![0.1]),
                variants: vec![SofVariant::Sof1, SofVariant::Sof2, SofVariant::Sof3],
                criterion: if flow_source.ends_with("epe") {
                    TuneCriterion::GroundTruthEpe
                } else {
                    TuneCriterion::DownstreamPsnr
                },
            };
            FlowSource::Tune(grid)
        }
        other => {
            return Err(CliError::invalid(format!(
                "unknown flow source `{other}` (table | tune-epe | tune-psnr | explicit)"
            )))
        }
    };

    Ok(ExperimentSpec {
        dataset,
        dataset_dir,
        sigmas,
        frame_counts,
        methods,
        flow_source: source,
        seed,
        border,
        sweep_ref,
    })
}

