use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mmspot_cli::commands;
use mmspot_cli::error::{CliError, CliResult, EXIT_INTERNAL, EXIT_OK};
use mmspot_cli::pipeline::{self, RunOptions};
use mmspot_cli::store::CACHE_ENV;
use mmspot_cli::PipelineConfig;

#[derive(Parser)]
#[command(name = "mmspot", version, about = "Spot facial micro-movements in high-frame-rate video")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for the random-ranking control and for `synth`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Shared stage cache.
    #[arg(long, global = true, env = CACHE_ENV)]
    cache_dir: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Every stage from frames to the evaluation report.
    Run { input: PathBuf, output: PathBuf },
    /// One run per (descriptor, planes) cell of `[sweep]`, plus a merged table.
    Sweep { input: PathBuf, output: PathBuf },
    /// Writes a synthetic dataset; the default corpus when no spec is given.
    Synth {
        output: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Horizontal drift in px/frame for the movement clips.
        #[arg(long)]
        drift: Option<f64>,
    },
    /// Estimates per-frame shifts of a sequence folder.
    Align {
        sequence: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Also write the aligned frames here.
        #[arg(long)]
        aligned: Option<PathBuf>,
    },
    /// Fits the region mask for a landmark file.
    FitMask {
        landmarks: PathBuf,
        /// Take the frame size from this sequence folder.
        #[arg(long, conflicts_with = "dims", required_unless_present = "dims")]
        frames: Option<PathBuf>,
        /// Frame size as WIDTHxHEIGHT.
        #[arg(long, value_parser = parse_dims)]
        dims: Option<(usize, usize)>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Extracts region features of a sequence folder.
    Extract {
        sequence: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        shifts: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Spots one clip against baseline features.
    Spot {
        features: PathBuf,
        #[arg(long = "baseline", required = true)]
        baselines: Vec<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Scores a folder of spotting results against a ground-truth sheet.
    Evaluate {
        results: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v}: {e}"));
    Ok((parse(w)?, parse(h)?))
}

fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    match path {
        Some(p) => PipelineConfig::load(p),
        None => Ok(PipelineConfig::default()),
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    let cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    let opts = |input: PathBuf, output: PathBuf| RunOptions {
        input,
        output,
        seed,
        cache_dir: cli.cache_dir.clone(),
    };
    match cli.command {
        Command::Run { input, output } => {
            let s = pipeline::run(&cfg, &opts(input, output.clone()))?;
            let row = &s.evaluation.row;
            let m = row.metrics();
            println!(
                "{} clips; stages computed {}, cached {}",
                s.clips,
                s.tally.computed_total(),
                s.tally.cached_total()
            );
            println!(
                "R={} recall={} precision={} AUC={:.4}",
                row.r,
                m.recall.map_or("n/a".into(), |v| format!("{v:.4}")),
                m.precision.map_or("n/a".into(), |v| format!("{v:.4}")),
                row.roc.as_ref().map_or(f64::NAN, |r| r.auc)
            );
            println!("report: {}", output.join("report").join("report.txt").display());
        }
        Command::Sweep { input, output } => {
            let s = pipeline::sweep(&cfg, &opts(input, output.clone()))?;
            println!(
                "{} cells, {} failed; table: {}",
                s.cells.len(),
                s.failed(),
                output.join("report.txt").display()
            );
        }
        Command::Synth {
            output,
            spec,
            drift,
        } => {
            let ds = commands::synth(&cfg, spec.as_deref(), &output, cli.seed, drift)?;
            let clips: usize = ds.subjects.iter().map(|s| s.clips.len()).sum();
            println!("wrote {clips} clips of {} subjects to {}", ds.subjects.len(), output.display());
        }
        Command::Align {
            sequence,
            output,
            aligned,
        } => commands::align(&cfg, &sequence, &output, aligned.as_deref())?,
        Command::FitMask {
            landmarks,
            frames,
            dims,
            output,
        } => {
            let dims = match (dims, frames) {
                (Some(d), _) => d,
                (None, Some(dir)) => commands::frame_dims(&dir)?,
                (None, None) => return Err(CliError::Config("give --frames or --dims".into())),
            };
            commands::fit_mask(&cfg, &landmarks, dims, &output)?
        }
        Command::Extract {
            sequence,
            mask,
            shifts,
            output,
        } => commands::extract(&cfg, &sequence, &mask, shifts.as_deref(), &output)?,
        Command::Spot {
            features,
            baselines,
            output,
        } => {
            let r = commands::spot(&cfg, &features, &baselines, &output)?;
            println!("{} detections", r.result.detections.len());
        }
        Command::Evaluate {
            results,
            ground_truth,
            output,
        } => {
            commands::evaluate(&cfg, &results, &ground_truth, &output, seed)?;
            println!("report: {}", output.join("report.txt").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot start {jobs} workers: {e}");
            return ExitCode::from(EXIT_INTERNAL as u8);
        }
    }
    match std::panic::catch_unwind(|| execute(cli)) {
        Ok(Ok(())) => ExitCode::from(EXIT_OK as u8),
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(_) => {
            eprintln!("error: internal failure (panic)");
            ExitCode::from(EXIT_INTERNAL as u8)
        }
    }
}
