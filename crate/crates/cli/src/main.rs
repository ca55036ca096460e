//! `trax`: experiment runner, conformance tester and reference tracker.

mod dummy;
mod run;
mod test_cmd;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_LAUNCH: u8 = 2;
pub const EXIT_CONFORMANCE: u8 = 3;
pub const EXIT_PROTOCOL: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "trax", version, about = "Visual tracking exchange protocol tools")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run an experiment with a tracker on a sequence
    Run(run::RunArgs),
    /// Check a tracker against the protocol rules
    Test(test_cmd::TestArgs),
    /// Reference static tracker (protocol server)
    Dummy(dummy::DummyArgs),
    /// Write a synthetic test sequence
    Generate(GenerateArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Output directory
    #[arg(long)]
    output: PathBuf,
    /// Number of frames
    #[arg(long, default_value_t = 20)]
    frames: usize,
    /// Frame size as WIDTHxHEIGHT
    #[arg(long, default_value = "160x120", value_parser = parse_size)]
    size: (usize, usize),
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let w = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    Ok((w, h))
}

fn generate(args: GenerateArgs) -> u8 {
    match trax_core::synthetic::generate_sequence(&args.output, args.frames, args.size) {
        Ok(seq) => {
            println!("wrote {} frames to {}", seq.len(), args.output.display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("trax generate: {e}");
            EXIT_USAGE
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Cmd::Run(args) => run::run(args),
        Cmd::Test(args) => test_cmd::test(args),
        Cmd::Dummy(args) => dummy::dummy(args),
        Cmd::Generate(args) => generate(args),
    };
    ExitCode::from(code)
}
