//! Trial results and their on-disk form.
//!
//! A trial directory holds four UTF-8 files:
//!
//! * `trajectory.txt`: one region per frame (a `# mode=realtime` header line
//!   marks real-time trials),
//! * `timings.txt`: seconds per frame with six decimals, `0.000000` for
//!   frames that were not sent,
//! * `events.txt`: `index<TAB>kind<TAB>note`,
//! * `properties.txt`: `index<TAB>key=value ...` for frames where the
//!   tracker reported properties.

use crate::properties::Properties;
use crate::region::{parse_region, Region};
use crate::wire;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const TRAJECTORY_FILE: &str = "trajectory.txt";
pub const TIMINGS_FILE: &str = "timings.txt";
pub const EVENTS_FILE: &str = "events.txt";
pub const PROPERTIES_FILE: &str = "properties.txt";

const REALTIME_HEADER: &str = "# mode=realtime";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Unsupervised,
    Supervised,
    Realtime,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Unsupervised => "unsupervised",
            Mode::Supervised => "supervised",
            Mode::Realtime => "realtime",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unsupervised" => Ok(Mode::Unsupervised),
            "supervised" => Ok(Mode::Supervised),
            "realtime" => Ok(Mode::Realtime),
            other => Err(format!("unknown mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Init,
    Failure,
    Reinit,
    Skip,
    Downgrade,
    TrackerExit,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Init => "init",
            EventKind::Failure => "failure",
            EventKind::Reinit => "reinit",
            EventKind::Skip => "skip",
            EventKind::Downgrade => "downgrade",
            EventKind::TrackerExit => "tracker-exit",
        }
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            EventKind::Init,
            EventKind::Failure,
            EventKind::Reinit,
            EventKind::Skip,
            EventKind::Downgrade,
            EventKind::TrackerExit,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown event kind {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialEvent {
    pub frame: usize,
    pub kind: EventKind,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub mode: Mode,
    pub trajectory: Vec<Region>,
    pub timings: Vec<f64>,
    pub events: Vec<TrialEvent>,
    pub tracker_props: Vec<Properties>,
}

impl Trial {
    /// A trial of `frames` unprocessed frames.
    pub fn new(mode: Mode, frames: usize) -> Self {
        Self {
            mode,
            trajectory: vec![Region::Special(crate::region::SPECIAL_UNKNOWN); frames],
            timings: vec![0.0; frames],
            events: Vec::new(),
            tracker_props: vec![Properties::new(); frames],
        }
    }

    pub fn len(&self) -> usize {
        self.trajectory.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectory.is_empty()
    }

    pub fn event(&mut self, frame: usize, kind: EventKind, note: impl Into<String>) {
        self.events.push(TrialEvent {
            frame,
            kind,
            note: note.into(),
        });
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Frames a request was sent for.
    pub fn processed_frames(&self) -> Vec<usize> {
        let skipped: std::collections::HashSet<usize> = self
            .events
            .iter()
            .filter(|e| e.kind == EventKind::Skip)
            .map(|e| e.frame)
            .collect();
        let exited = self
            .events
            .iter()
            .find(|e| e.kind == EventKind::TrackerExit)
            .map_or(self.len(), |e| e.frame);
        (0..exited)
            .filter(|i| !skipped.contains(i))
            .filter(|&i| self.trajectory[i] != Region::Special(crate::region::SPECIAL_UNKNOWN))
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrialIoError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{}:{line}: {reason}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        reason: String,
    },
}

fn clean_note(note: &str) -> String {
    note.replace(['\t', '\n', '\r'], " ")
}

pub fn write_trial(trial: &Trial, dir: &Path) -> Result<(), TrialIoError> {
    fs::create_dir_all(dir)?;

    let mut trajectory = String::new();
    if trial.mode == Mode::Realtime {
        trajectory.push_str(REALTIME_HEADER);
        trajectory.push('\n');
    }
    for region in &trial.trajectory {
        trajectory.push_str(&region.to_string());
        trajectory.push('\n');
    }
    fs::write(dir.join(TRAJECTORY_FILE), trajectory)?;

    let timings: String = trial.timings.iter().map(|t| format!("{t:.6}\n")).collect();
    fs::write(dir.join(TIMINGS_FILE), timings)?;

    let events: String = trial
        .events
        .iter()
        .map(|e| format!("{}\t{}\t{}\n", e.frame, e.kind.name(), clean_note(&e.note)))
        .collect();
    fs::write(dir.join(EVENTS_FILE), events)?;

    let mut props = String::new();
    for (i, p) in trial.tracker_props.iter().enumerate() {
        if p.is_empty() {
            continue;
        }
        let encoded = wire::encode_params(p).map_err(|e| {
            TrialIoError::Io(io::Error::new(io::ErrorKind::InvalidData, e))
        })?;
        props.push_str(&format!("{i}\t{encoded}\n"));
    }
    fs::write(dir.join(PROPERTIES_FILE), props)?;
    Ok(())
}

fn parse_err(file: &Path, line: usize, reason: impl Into<String>) -> TrialIoError {
    TrialIoError::Parse {
        file: file.to_owned(),
        line,
        reason: reason.into(),
    }
}

fn read_optional(path: &Path) -> Result<String, TrialIoError> {
    match fs::read_to_string(path) {
        Ok(s) => Ok(s),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(e.into()),
    }
}

pub fn read_trial(dir: &Path) -> Result<Trial, TrialIoError> {
    let path = dir.join(TRAJECTORY_FILE);
    let text = fs::read_to_string(&path)?;
    let mut mode = Mode::Unsupervised;
    let mut trajectory = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') {
            if line.trim() == REALTIME_HEADER {
                mode = Mode::Realtime;
            }
            continue;
        }
        trajectory.push(parse_region(line).map_err(|e| parse_err(&path, i + 1, e.to_string()))?);
    }

    let path = dir.join(TIMINGS_FILE);
    let timings = fs::read_to_string(&path)?
        .lines()
        .enumerate()
        .map(|(i, line)| {
            line.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(&path, i + 1, e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if timings.len() != trajectory.len() {
        return Err(parse_err(
            &path,
            timings.len() + 1,
            format!("{} timings for {} frames", timings.len(), trajectory.len()),
        ));
    }

    let path = dir.join(EVENTS_FILE);
    let mut events = Vec::new();
    for (i, line) in read_optional(&path)?.lines().enumerate() {
        let mut parts = line.splitn(3, '\t');
        let (Some(frame), Some(kind)) = (parts.next(), parts.next()) else {
            return Err(parse_err(&path, i + 1, "expected index and kind"));
        };
        events.push(TrialEvent {
            frame: frame
                .parse()
                .map_err(|_| parse_err(&path, i + 1, "bad frame index"))?,
            kind: kind.parse().map_err(|e: String| parse_err(&path, i + 1, e))?,
            note: parts.next().unwrap_or("").to_owned(),
        });
    }

    let path = dir.join(PROPERTIES_FILE);
    let mut tracker_props = vec![Properties::new(); trajectory.len()];
    for (i, line) in read_optional(&path)?.lines().enumerate() {
        let (frame, list) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(&path, i + 1, "expected index and properties"))?;
        let frame: usize = frame
            .parse()
            .ok()
            .filter(|f| *f < trajectory.len())
            .ok_or_else(|| parse_err(&path, i + 1, "bad frame index"))?;
        tracker_props[frame] =
            wire::decode_params(list).map_err(|e| parse_err(&path, i + 1, e.to_string()))?;
    }

    // Supervised trials are recognisable by their markers.
    if mode != Mode::Realtime
        && events
            .iter()
            .any(|e| matches!(e.kind, EventKind::Failure | EventKind::Reinit))
    {
        mode = Mode::Supervised;
    }

    Ok(Trial {
        mode,
        trajectory,
        timings,
        events,
        tracker_props,
    })
}
