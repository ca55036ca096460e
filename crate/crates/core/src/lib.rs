//! Tracking exchange protocol: couples a tracker process (server) with an
//! evaluation application (client) through line-based messages embedded in
//! the tracker's ordinary output.
//!
//! * [`wire`] and [`framing`]: the line codec.
//! * [`region`], [`image`], [`overlap`]: target state, frame references and
//!   overlap geometry.
//! * [`server`] and [`client`]: the two session ends, sharing the ordering
//!   rules in [`protocol`].
//! * [`harness`]: sequences, experiment loops and trial files.
//! * [`tracker`], [`synthetic`], [`conformance`]: reference tracker,
//!   generated test sequences and the protocol conformance tester.

pub mod client;
pub mod conformance;
pub mod framing;
pub mod harness;
pub mod image;
pub mod overlap;
pub mod properties;
pub mod protocol;
pub mod region;
pub mod server;
pub mod synthetic;
pub mod tracker;
pub mod wire;

pub use client::{ClientError, ClientState, ExitReport, Outcome, TrackerCommand, TrackerHandle, Transport};
pub use image::{format_image, parse_image, Image, ImageFormat, ImageKind};
pub use overlap::{overlap_detailed, region_overlap, Overlap};
pub use properties::Properties;
pub use protocol::{ServerCapabilities, SessionMachine};
pub use region::{format_region, parse_region, Point, Region, RegionKind};
pub use server::{Request, ServerError, ServerSession, ServerState};
pub use wire::{decode, encode, Message, MessageKind, StreamItem, WireError};
