use crate::{EXIT_OK, EXIT_PROTOCOL, EXIT_USAGE};
use clap::Args;
use std::time::Duration;
use trax_core::server::{connect_from_env, ServerError, ServerSession};
use trax_core::tracker::{run_static_tracker, run_violating_tracker, StaticTrackerOptions, Violation};
use trax_core::RegionKind;

#[derive(Args, Debug)]
pub struct DummyArgs {
    /// Artificial per-frame delay in milliseconds
    #[arg(long, default_value_t = 0)]
    delay: u64,
    /// Answer K frames after each initialization, then report a far-off region
    #[arg(long, value_name = "K")]
    fail_after: Option<usize>,
    /// Region kind to declare and report
    #[arg(long, default_value = "rectangle")]
    region: RegionKind,
    /// Never answer the first frame
    #[arg(long)]
    hang: bool,
    /// Tracker name announced in the introduction
    #[arg(long, default_value = "dummy")]
    name: String,
    /// Break a protocol rule on purpose (conformance fixture)
    #[arg(long, hide = true)]
    violate: Option<Violation>,
}

pub fn dummy(args: DummyArgs) -> u8 {
    let opts = StaticTrackerOptions {
        name: args.name,
        region_kind: args.region,
        delay: Duration::from_millis(args.delay),
        fail_after: args.fail_after,
        hang: args.hang,
    };
    let (reader, writer) = match connect_from_env() {
        Ok(io) => io,
        Err(e) => {
            eprintln!("trax dummy: cannot open transport: {e}");
            return EXIT_USAGE;
        }
    };

    if let Some(violation) = args.violate {
        return match run_violating_tracker(reader, writer, &opts, violation) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("trax dummy: {e}");
                EXIT_PROTOCOL
            }
        };
    }

    let mut session = ServerSession::new(opts.capabilities(), reader, writer);
    match run_static_tracker(&mut session, &opts) {
        Ok(()) => EXIT_OK,
        Err(e @ (ServerError::ProtocolViolation(_)
        | ServerError::State { .. }
        | ServerError::RegionKindMismatch { .. })) => {
            eprintln!("trax dummy: {e}");
            EXIT_PROTOCOL
        }
        Err(ServerError::Io(e)) => {
            eprintln!("trax dummy: {e}");
            EXIT_USAGE
        }
    }
}
