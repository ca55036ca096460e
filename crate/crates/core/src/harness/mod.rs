//! Evaluation harness: sequences, experiment loops and trial files.

pub mod clock;
pub mod experiment;
pub mod sequence;
pub mod sweep;
pub mod trial;

pub use clock::{Clock, VirtualClock, WallClock};
pub use experiment::{
    frames_to_advance, run_experiment, run_realtime, run_supervised, run_unsupervised,
    ExperimentOptions, HarnessError, Launcher, DEFAULT_GRACE, DEFAULT_SKIP,
};
pub use sequence::{load_sequence, Sequence, SequenceError};
pub use sweep::{combinations, sweep, Grid, SweepPoint, SweepReport};
pub use trial::{read_trial, write_trial, EventKind, Mode, Trial, TrialEvent, TrialIoError};
