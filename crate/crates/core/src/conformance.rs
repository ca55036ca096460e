//! Executable protocol checks against a tracker binary.
//!
//! The tester drives a short scripted session over a synthetic sequence and
//! records one named check per rule. It keeps going after a failed check
//! where it can, so that a tracker breaking one rule fails only that check.

use crate::client::{ClientError, LogSink, TrackerCommand, TrackerHandle};
use crate::harness::Sequence;
use crate::image::{Image, ImageKind};
use crate::properties::Properties;
use crate::protocol::ServerCapabilities;
use crate::region::{parse_region, RegionKind};
use crate::wire::{Message, MessageKind};
use std::time::Duration;

pub const CHECK_LAUNCH: &str = "launch";
pub const CHECK_HELLO: &str = "hello-first";
pub const CHECK_INITIALIZE: &str = "initialize";
pub const CHECK_FRAME: &str = "frame";
pub const CHECK_ONE_STATE: &str = "one-state-per-request";
pub const CHECK_REGION: &str = "state-region-valid";
pub const CHECK_REINIT: &str = "reinitialize";
pub const CHECK_QUIT: &str = "quit-exit";

/// Frame on which the tester re-initializes mid-run.
const REINIT_FRAME: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub id: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConformanceReport {
    pub checks: Vec<Check>,
}

impl ConformanceReport {
    pub fn overall(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, id: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.id == id)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.id.as_str())
            .collect()
    }

    fn record(&mut self, id: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            id: id.to_owned(),
            passed,
            detail: detail.into(),
        });
    }
}

#[derive(Debug, Clone)]
pub struct ConformanceOptions {
    /// Grace period for the tracker to exit after quit.
    pub grace: Duration,
    /// How long to listen for unrequested messages after each response.
    pub settle: Duration,
}

impl Default for ConformanceOptions {
    fn default() -> Self {
        Self {
            grace: Duration::from_secs(5),
            settle: Duration::from_millis(150),
        }
    }
}

struct Probe {
    handle: TrackerHandle,
    caps: ServerCapabilities,
    image_kind: ImageKind,
    extra_states: usize,
    bad_regions: Vec<String>,
    settle: Duration,
}

impl Probe {
    fn image(&self, seq: &Sequence, frame: usize) -> Result<Image, ClientError> {
        match self.image_kind {
            ImageKind::Path => Ok(seq.frame_image(frame)),
            ImageKind::Memory => Ok(Image::load(&seq.frames[frame])?),
        }
    }

    fn exchange(&mut self, request: Message) -> Result<(), ClientError> {
        let (response, _) = self.handle.exchange(&request)?;
        let text = &response.args[0];
        match parse_region(text) {
            Ok(r) if r.kind() == Some(self.caps.region_kind) => {}
            Ok(r) => self.bad_regions.push(format!(
                "{text:?} is {} but tracker declared {}",
                r.kind().map_or("special", RegionKind::name),
                self.caps.region_kind
            )),
            Err(e) => self.bad_regions.push(e.to_string()),
        }
        self.extra_states += self.handle.drain_unsolicited(self.settle).len();
        Ok(())
    }

    fn initialize(&mut self, seq: &Sequence, frame: usize) -> Result<(), ClientError> {
        let region = seq.groundtruth[frame]
            .convert(self.caps.region_kind)
            .map_err(|e| ClientError::InvalidRegion(e.to_string()))?;
        let image = self.image(seq, frame)?;
        self.exchange(Message::new(
            MessageKind::Initialize,
            vec![image.to_string(), region.to_string()],
            Properties::new(),
        ))
    }

    fn frame(&mut self, seq: &Sequence, frame: usize) -> Result<(), ClientError> {
        let image = self.image(seq, frame)?;
        self.exchange(Message::new(
            MessageKind::Frame,
            vec![image.to_string()],
            Properties::new(),
        ))
    }
}

/// Runs every check against the tracker started by `command` using the
/// frames of `seq` (at least `REINIT_FRAME + 2` frames).
pub fn run_conformance(
    command: &TrackerCommand,
    seq: &Sequence,
    opts: &ConformanceOptions,
    sink: LogSink,
) -> ConformanceReport {
    let mut report = ConformanceReport::default();
    let mut handle = match TrackerHandle::launch(command, sink) {
        Ok(h) => {
            report.record(CHECK_LAUNCH, true, "tracker started");
            h
        }
        Err(e) => {
            report.record(CHECK_LAUNCH, false, e.to_string());
            return report;
        }
    };

    let caps = match handle.handshake() {
        Ok(caps) => {
            report.record(
                CHECK_HELLO,
                true,
                format!(
                    "version {}, name {:?}, region {}, images {:?}",
                    caps.version,
                    caps.name,
                    caps.region_kind,
                    caps.image_kinds()
                ),
            );
            caps
        }
        Err(e) => {
            report.record(CHECK_HELLO, false, e.to_string());
            let fallback = ServerCapabilities::new("unknown", RegionKind::Rectangle, &[ImageKind::Path])
                .expect("non-empty image kinds");
            handle.assume_capabilities(fallback.clone());
            fallback
        }
    };

    let image_kind = if caps.supports_image(ImageKind::Path) {
        ImageKind::Path
    } else {
        ImageKind::Memory
    };
    let mut probe = Probe {
        handle,
        caps,
        image_kind,
        extra_states: 0,
        bad_regions: Vec::new(),
        settle: opts.settle,
    };

    let n = seq.len();
    let mut alive = match probe.initialize(seq, 0) {
        Ok(()) => {
            report.record(CHECK_INITIALIZE, true, "state received");
            true
        }
        Err(e) => {
            report.record(CHECK_INITIALIZE, false, e.to_string());
            false
        }
    };

    let frame_result = if alive {
        (1..REINIT_FRAME.min(n)).try_for_each(|i| probe.frame(seq, i))
    } else {
        Err(ClientError::TrackerExited)
    };
    match frame_result {
        Ok(()) => report.record(CHECK_FRAME, true, format!("{} frames answered", REINIT_FRAME.min(n) - 1)),
        Err(e) => {
            alive = false;
            report.record(CHECK_FRAME, false, e.to_string());
        }
    }

    let reinit_result = if !alive {
        Err(ClientError::TrackerExited)
    } else if n <= REINIT_FRAME + 1 {
        Err(ClientError::InvalidRegion(format!(
            "sequence too short for reinitialization ({n} frames)"
        )))
    } else {
        probe
            .initialize(seq, REINIT_FRAME)
            .and_then(|_| ((REINIT_FRAME + 1)..n).try_for_each(|i| probe.frame(seq, i)))
    };
    match reinit_result {
        Ok(()) => report.record(CHECK_REINIT, true, format!("re-initialized on frame {REINIT_FRAME}")),
        Err(e) => report.record(CHECK_REINIT, false, e.to_string()),
    }

    if probe.extra_states == 0 {
        report.record(CHECK_ONE_STATE, true, "no unrequested messages");
    } else {
        report.record(
            CHECK_ONE_STATE,
            false,
            format!("{} unrequested message(s)", probe.extra_states),
        );
    }
    if probe.bad_regions.is_empty() {
        report.record(CHECK_REGION, true, "all reported regions valid");
    } else {
        let first = probe.bad_regions[0].clone();
        report.record(
            CHECK_REGION,
            false,
            format!("{} invalid region(s), first: {first}", probe.bad_regions.len()),
        );
    }

    let exit = probe.handle.terminate(opts.grace);
    let exited_cleanly = !exit.killed && exit.status.map_or(true, |s| s.success());
    report.record(
        CHECK_QUIT,
        exited_cleanly,
        match (exit.killed, exit.status) {
            (true, _) => format!("killed after {:?} grace", opts.grace),
            (false, Some(s)) => format!("exited with {s}"),
            (false, None) => "stream closed".to_owned(),
        },
    );
    report
}
