//! Experiment loops: drive a tracker over a sequence and record a trial.

use super::clock::Clock;
use super::sequence::Sequence;
use super::trial::{EventKind, Mode, Trial};
use crate::client::{ClientError, Outcome, TrackerCommand, TrackerHandle};
use crate::image::{Image, ImageKind};
use crate::overlap::region_overlap;
use crate::properties::Properties;
use crate::protocol::ServerCapabilities;
use crate::region::{Region, RegionKind, SPECIAL_FAILURE, SPECIAL_INIT, SPECIAL_UNKNOWN};
use std::time::Duration;

pub const DEFAULT_SKIP: usize = 5;
pub const DEFAULT_GRACE: Duration = Duration::from_secs(5);

/// Tolerance on the frame-advance ratio so that a response time of exactly
/// `k` frame intervals does not round up to `k + 1`.
const ADVANCE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOptions {
    pub mode: Mode,
    /// Frames between a failure and the reinitialization.
    pub skip: usize,
    /// A frame fails when its overlap with the groundtruth is at most this.
    pub overlap_threshold: f64,
    pub fps_override: Option<f64>,
    pub init_params: Properties,
    pub image_kind: ImageKind,
    /// How long to wait for the tracker to exit after the trial.
    pub grace: Duration,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Unsupervised,
            skip: DEFAULT_SKIP,
            overlap_threshold: 0.0,
            fps_override: None,
            init_params: Properties::new(),
            image_kind: ImageKind::Path,
            grace: DEFAULT_GRACE,
        }
    }
}

impl ExperimentOptions {
    pub fn with_mode(mode: Mode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.skip < 1 {
            return Err(HarnessError::InvalidOptions("skip must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_threshold) {
            return Err(HarnessError::InvalidOptions(
                "overlap threshold must be in [0, 1)".into(),
            ));
        }
        if let Some(fps) = self.fps_override {
            if !(fps.is_finite() && fps > 0.0) {
                return Err(HarnessError::InvalidOptions("fps must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("launch failed: {0}")]
    Launch(ClientError),
    #[error("handshake failed: {0}")]
    Handshake(ClientError),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("cannot read frame {frame}: {source}")]
    Frame {
        frame: usize,
        source: std::io::Error,
    },
}

/// Produces a fresh, not yet introduced tracker connection.
pub trait Launcher {
    fn launch(&self) -> Result<TrackerHandle, ClientError>;
}

impl Launcher for TrackerCommand {
    fn launch(&self) -> Result<TrackerHandle, ClientError> {
        TrackerHandle::launch(self, crate::client::stderr_sink())
    }
}

impl<F> Launcher for F
where
    F: Fn() -> Result<TrackerHandle, ClientError>,
{
    fn launch(&self) -> Result<TrackerHandle, ClientError> {
        self()
    }
}

/// One tracker session over one sequence.
struct Session<'a> {
    handle: TrackerHandle,
    caps: ServerCapabilities,
    seq: &'a Sequence,
    opts: &'a ExperimentOptions,
    trial: Trial,
}

impl<'a> Session<'a> {
    fn open(
        launcher: &dyn Launcher,
        seq: &'a Sequence,
        opts: &'a ExperimentOptions,
        mode: Mode,
    ) -> Result<Self, HarnessError> {
        opts.validate()?;
        if opts.mode != mode {
            return Err(HarnessError::InvalidOptions(format!(
                "options are for {} experiments, not {mode}",
                opts.mode
            )));
        }
        let mut handle = launcher.launch().map_err(HarnessError::Launch)?;
        let caps = match handle.handshake() {
            Ok(caps) => caps,
            Err(e) => {
                handle.terminate(opts.grace);
                return Err(HarnessError::Handshake(e));
            }
        };
        Ok(Self {
            handle,
            caps,
            seq,
            opts,
            trial: Trial::new(mode, seq.len()),
        })
    }

    fn image(&self, frame: usize) -> Result<Image, HarnessError> {
        let wants_memory = self.opts.image_kind == ImageKind::Memory
            && self.caps.supports_image(ImageKind::Memory);
        if wants_memory || !self.caps.supports_image(ImageKind::Path) {
            Image::load(&self.seq.frames[frame]).map_err(|source| HarnessError::Frame { frame, source })
        } else {
            Ok(self.seq.frame_image(frame))
        }
    }

    /// Initializes on `frame` with its groundtruth. `Ok(None)` means the
    /// tracker is gone and the trial has been closed.
    fn initialize(&mut self, frame: usize, kind: EventKind) -> Result<Option<Outcome>, HarnessError> {
        let image = self.image(frame)?;
        let gt = self.seq.groundtruth[frame].clone();
        let params = self.opts.init_params.clone();
        match self.handle.initialize(&image, &gt, &params) {
            Ok(outcome) => {
                self.trial.trajectory[frame] = Region::Special(SPECIAL_INIT);
                self.trial.event(frame, kind, "");
                if gt.kind() == Some(RegionKind::Polygon) && self.caps.region_kind == RegionKind::Rectangle {
                    self.trial
                        .event(frame, EventKind::Downgrade, "polygon sent as bounding rectangle");
                }
                self.trial.tracker_props[frame] = outcome.props.clone();
                Ok(Some(outcome))
            }
            Err(e) => {
                self.tracker_lost(frame, &e);
                Ok(None)
            }
        }
    }

    fn frame(&mut self, frame: usize) -> Result<Option<Outcome>, HarnessError> {
        let image = self.image(frame)?;
        match self.handle.frame(&image, &Properties::new()) {
            Ok(outcome) => {
                self.trial.tracker_props[frame] = outcome.props.clone();
                Ok(Some(outcome))
            }
            Err(e) => {
                self.tracker_lost(frame, &e);
                Ok(None)
            }
        }
    }

    fn tracker_lost(&mut self, frame: usize, error: &ClientError) {
        for entry in &mut self.trial.trajectory[frame..] {
            *entry = Region::Special(SPECIAL_UNKNOWN);
        }
        for t in &mut self.trial.timings[frame..] {
            *t = 0.0;
        }
        self.trial.event(frame, EventKind::TrackerExit, error.to_string());
    }

    fn finish(mut self) -> Trial {
        self.handle.terminate(self.opts.grace);
        self.trial
    }
}

/// Initializes on the first frame and tracks through the rest of the
/// sequence without intervention.
pub fn run_unsupervised(
    launcher: &dyn Launcher,
    seq: &Sequence,
    opts: &ExperimentOptions,
) -> Result<Trial, HarnessError> {
    let mut s = Session::open(launcher, seq, opts, Mode::Unsupervised)?;
    let Some(outcome) = s.initialize(0, EventKind::Init)? else {
        return Ok(s.finish());
    };
    s.trial.timings[0] = outcome.elapsed;
    for i in 1..seq.len() {
        let Some(outcome) = s.frame(i)? else { break };
        s.trial.trajectory[i] = outcome.region;
        s.trial.timings[i] = outcome.elapsed;
    }
    Ok(s.finish())
}

/// Like [`run_unsupervised`], but a frame whose overlap with the
/// groundtruth is at or below the threshold is marked as a failure and the
/// tracker is reinitialized `skip` frames later.
pub fn run_supervised(
    launcher: &dyn Launcher,
    seq: &Sequence,
    opts: &ExperimentOptions,
) -> Result<Trial, HarnessError> {
    let mut s = Session::open(launcher, seq, opts, Mode::Supervised)?;
    let n = seq.len();
    let mut i = 0;
    let mut needs_init = true;
    while i < n {
        if needs_init {
            if seq.groundtruth[i].is_special() {
                s.trial.event(i, EventKind::Skip, "no groundtruth to initialize on");
                i += 1;
                continue;
            }
            let kind = if i == 0 { EventKind::Init } else { EventKind::Reinit };
            let Some(outcome) = s.initialize(i, kind)? else { break };
            s.trial.timings[i] = outcome.elapsed;
            needs_init = false;
            i += 1;
            continue;
        }

        let Some(outcome) = s.frame(i)? else { break };
        s.trial.timings[i] = outcome.elapsed;
        let gt = &seq.groundtruth[i];
        let overlap = region_overlap(&outcome.region, gt);
        if !gt.is_special() && overlap <= opts.overlap_threshold {
            s.trial.trajectory[i] = Region::Special(SPECIAL_FAILURE);
            s.trial
                .event(i, EventKind::Failure, format!("overlap {overlap:.4}"));
            let resume = i + opts.skip;
            for j in (i + 1)..resume.min(n) {
                s.trial.event(j, EventKind::Skip, "after failure");
            }
            i = resume;
            needs_init = true;
        } else {
            s.trial.trajectory[i] = outcome.region;
            i += 1;
        }
    }
    Ok(s.finish())
}

/// Number of frames to advance after a request that took `response`
/// seconds, at `dt` seconds per frame.
pub fn frames_to_advance(response: f64, dt: f64) -> usize {
    let ratio = response / dt;
    if !ratio.is_finite() || ratio <= 1.0 {
        return 1;
    }
    (ratio - ADVANCE_EPSILON).ceil().max(1.0) as usize
}

/// Plays the sequence at its frame rate: while the tracker works on a frame,
/// the frames that would have arrived meanwhile are dropped and inherit the
/// last reported region.
pub fn run_realtime(
    launcher: &dyn Launcher,
    seq: &Sequence,
    opts: &ExperimentOptions,
    clock: &mut dyn Clock,
) -> Result<Trial, HarnessError> {
    let mut s = Session::open(launcher, seq, opts, Mode::Realtime)?;
    clock.reset();
    let dt = 1.0 / opts.fps_override.unwrap_or(seq.fps);
    let n = seq.len();

    let Some(outcome) = s.initialize(0, EventKind::Init)? else {
        return Ok(s.finish());
    };
    let mut response = clock.response_time(outcome.elapsed);
    s.trial.timings[0] = response;
    let mut last = outcome.region;
    let mut k = 0;
    loop {
        let next = k + frames_to_advance(response, dt);
        for j in (k + 1)..next.min(n) {
            s.trial.trajectory[j] = last.clone();
            s.trial.event(j, EventKind::Skip, "dropped while tracker was busy");
        }
        if next >= n {
            break;
        }
        k = next;
        let Some(outcome) = s.frame(k)? else { break };
        response = clock.response_time(outcome.elapsed);
        s.trial.timings[k] = response;
        s.trial.trajectory[k] = outcome.region.clone();
        last = outcome.region;
    }
    Ok(s.finish())
}

/// Runs whichever loop `opts.mode` selects.
pub fn run_experiment(
    launcher: &dyn Launcher,
    seq: &Sequence,
    opts: &ExperimentOptions,
    clock: &mut dyn Clock,
) -> Result<Trial, HarnessError> {
    match opts.mode {
        Mode::Unsupervised => run_unsupervised(launcher, seq, opts),
        Mode::Supervised => run_supervised(launcher, seq, opts),
        Mode::Realtime => run_realtime(launcher, seq, opts, clock),
    }
}
