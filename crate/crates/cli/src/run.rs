use crate::{EXIT_LAUNCH, EXIT_OK, EXIT_USAGE};
use clap::Args;
use std::path::{Path, PathBuf};
use std::time::Duration;
use trax_core::harness::{
    combinations, load_sequence, run_experiment, write_trial, EventKind, ExperimentOptions, Grid,
    HarnessError, Mode, Trial, WallClock,
};
use trax_core::{ImageKind, Properties, TrackerCommand, Transport};

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Tracker command line, e.g. "trax dummy"
    #[arg(long)]
    tracker: String,
    /// Sequence directory
    #[arg(long)]
    sequence: PathBuf,
    #[arg(long, default_value = "unsupervised")]
    mode: Mode,
    /// Trial output directory
    #[arg(long, default_value = "./trial")]
    output: PathBuf,
    #[arg(long, default_value = "stdio")]
    transport: Transport,
    /// Frames between a failure and reinitialization (supervised)
    #[arg(long, default_value_t = trax_core::harness::DEFAULT_SKIP)]
    skip: usize,
    /// Overlap at or below which a frame counts as a failure (supervised)
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Override the sequence frame rate (realtime)
    #[arg(long)]
    fps: Option<f64>,
    /// Initialization parameter KEY=VALUE (repeatable)
    #[arg(long = "param", value_name = "KEY=VALUE", value_parser = parse_param)]
    params: Vec<(String, String)>,
    /// Sweep parameter KEY=V1,V2,... (repeatable)
    #[arg(long = "sweep", value_name = "KEY=V1,V2", value_parser = parse_sweep)]
    sweeps: Vec<(String, Vec<String>)>,
    /// Watchdog timeout in seconds
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    /// How frames are sent: as file paths or inline
    #[arg(long, default_value = "path")]
    image: ImageKind,
}

fn parse_param(s: &str) -> Result<(String, String), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected KEY=VALUE, got {s:?}"))?;
    if !trax_core::properties::is_valid_key(k) {
        return Err(format!("invalid key {k:?}"));
    }
    Ok((k.to_owned(), v.to_owned()))
}

fn parse_sweep(s: &str) -> Result<(String, Vec<String>), String> {
    let (k, v) = parse_param(s)?;
    let values = if v.is_empty() {
        Vec::new()
    } else {
        v.split(',').map(str::to_owned).collect()
    };
    Ok((k, values))
}

fn summary(label: &str, trial: &Trial, dir: &Path) -> String {
    let processed = trial.processed_frames();
    let mean = if processed.is_empty() {
        0.0
    } else {
        processed.iter().map(|&i| trial.timings[i]).sum::<f64>() / processed.len() as f64
    };
    format!(
        "{label}: mode={} frames={} processed={} failures={} reinits={} tracker-exit={} mean-time={mean:.6}s -> {}",
        trial.mode,
        trial.len(),
        processed.len(),
        trial.count(EventKind::Failure),
        trial.count(EventKind::Reinit),
        trial.count(EventKind::TrackerExit) > 0,
        dir.display()
    )
}

pub fn run(args: RunArgs) -> u8 {
    if !(args.timeout.is_finite() && args.timeout > 0.0) {
        eprintln!("trax run: --timeout must be positive");
        return EXIT_USAGE;
    }
    let seq = match load_sequence(&args.sequence) {
        Ok(seq) => seq,
        Err(e) => {
            eprintln!("trax run: {}: {e}", args.sequence.display());
            return EXIT_USAGE;
        }
    };
    let command = match TrackerCommand::parse(&args.tracker) {
        Ok(c) if !c.argv.is_empty() => c
            .transport(args.transport)
            .watchdog(Duration::from_secs_f64(args.timeout)),
        _ => {
            eprintln!("trax run: cannot parse tracker command {:?}", args.tracker);
            return EXIT_USAGE;
        }
    };

    let mut init_params = Properties::new();
    for (k, v) in &args.params {
        init_params.set(k.as_str(), v.as_str()).expect("validated key");
    }
    let base = ExperimentOptions {
        mode: args.mode,
        skip: args.skip,
        overlap_threshold: args.threshold,
        fps_override: args.fps,
        init_params,
        image_kind: args.image,
        ..ExperimentOptions::default()
    };
    if let Err(e) = base.validate() {
        eprintln!("trax run: {e}");
        return EXIT_USAGE;
    }

    let grid: Grid = args.sweeps.into_iter().collect();
    let points: Vec<(String, Properties, PathBuf)> = if grid.is_empty() {
        vec![("trial".to_owned(), Properties::new(), args.output.clone())]
    } else {
        match combinations(&grid) {
            Ok(combos) => combos
                .into_iter()
                .map(|p| {
                    let label = trax_core::harness::sweep::label(&p);
                    let dir = args.output.join(&label);
                    (label, p, dir)
                })
                .collect(),
            Err(e) => {
                eprintln!("trax run: {e}");
                return EXIT_USAGE;
            }
        }
    };

    let mut code = EXIT_OK;
    for (label, params, dir) in points {
        let opts = ExperimentOptions {
            init_params: base.init_params.merged(&params),
            ..base.clone()
        };
        match run_experiment(&command, &seq, &opts, &mut WallClock) {
            Ok(trial) => {
                if let Err(e) = write_trial(&trial, &dir) {
                    eprintln!("trax run: {label}: cannot write trial: {e}");
                    code = EXIT_USAGE;
                    continue;
                }
                println!("{}", summary(&label, &trial, &dir));
            }
            Err(e @ (HarnessError::Launch(_) | HarnessError::Handshake(_))) => {
                eprintln!("trax run: {label}: {e}");
                code = EXIT_LAUNCH;
            }
            Err(e) => {
                eprintln!("trax run: {label}: {e}");
                code = code.max(EXIT_USAGE);
            }
        }
    }
    code
}
