use crate::{EXIT_CONFORMANCE, EXIT_OK, EXIT_USAGE};
use clap::Args;
use std::time::Duration;
use trax_core::client::stderr_sink;
use trax_core::conformance::{run_conformance, ConformanceOptions, ConformanceReport};
use trax_core::synthetic::{generate_sequence, DEFAULT_SIZE};
use trax_core::{TrackerCommand, Transport};

const TEST_FRAMES: usize = 10;

#[derive(Args, Debug)]
pub struct TestArgs {
    /// Tracker command line, e.g. "trax dummy"
    #[arg(long)]
    tracker: String,
    #[arg(long, default_value = "stdio")]
    transport: Transport,
    /// Watchdog timeout in seconds
    #[arg(long, default_value_t = 10.0)]
    timeout: f64,
    /// Seconds the tracker gets to exit after quit
    #[arg(long, default_value_t = 5.0)]
    grace: f64,
    /// Print the report as a JSON object
    #[arg(long)]
    json: bool,
}

fn to_json(report: &ConformanceReport) -> serde_json::Value {
    let checks: serde_json::Map<String, serde_json::Value> = report
        .checks
        .iter()
        .map(|c| {
            (
                c.id.clone(),
                serde_json::json!({ "passed": c.passed, "detail": c.detail }),
            )
        })
        .collect();
    serde_json::Value::Object(checks)
}

pub fn test(args: TestArgs) -> u8 {
    for (name, value) in [("--timeout", args.timeout), ("--grace", args.grace)] {
        if !(value.is_finite() && value > 0.0) {
            eprintln!("trax test: {name} must be positive");
            return EXIT_USAGE;
        }
    }
    let command = match TrackerCommand::parse(&args.tracker) {
        Ok(c) if !c.argv.is_empty() => c
            .transport(args.transport)
            .watchdog(Duration::from_secs_f64(args.timeout)),
        _ => {
            eprintln!("trax test: cannot parse tracker command {:?}", args.tracker);
            return EXIT_USAGE;
        }
    };
    let workdir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => {
            eprintln!("trax test: {e}");
            return EXIT_USAGE;
        }
    };
    let seq = match generate_sequence(workdir.path(), TEST_FRAMES, DEFAULT_SIZE) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("trax test: cannot generate sequence: {e}");
            return EXIT_USAGE;
        }
    };
    let opts = ConformanceOptions {
        grace: Duration::from_secs_f64(args.grace),
        ..ConformanceOptions::default()
    };
    let report = run_conformance(&command, &seq, &opts, stderr_sink());

    if args.json {
        println!("{}", to_json(&report));
    } else {
        for check in &report.checks {
            let verdict = if check.passed { "PASS" } else { "FAIL" };
            println!("{verdict} {:<22} {}", check.id, check.detail);
        }
        println!(
            "{}",
            if report.overall() {
                "conformance: PASS"
            } else {
                "conformance: FAIL"
            }
        );
    }
    if report.overall() {
        EXIT_OK
    } else {
        EXIT_CONFORMANCE
    }
}
