//! Session rules shared by both ends: the legal message order and the
//! capabilities announced in the introduction.

use crate::image::ImageKind;
use crate::properties::Properties;
use crate::region::RegionKind;
use crate::wire::MessageKind;

pub const PROTOCOL_VERSION: u32 = 1;

pub const KEY_VERSION: &str = "trax.version";
pub const KEY_NAME: &str = "trax.name";
pub const KEY_REGION: &str = "trax.region";
pub const KEY_IMAGE: &str = "trax.image";

/// Where a session stands in the exchange, seen from either side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    AwaitingHello,
    Ready { initialized: bool },
    Pending(MessageKind),
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{event} not allowed while {phase:?}")]
pub struct OrderViolation {
    pub phase: Phase,
    pub event: MessageKind,
}

/// Tracks the message order `hello (initialize state (frame state |
/// initialize state)*)? quit?`. Every message either side sends or receives
/// goes through [`SessionMachine::step`].
#[derive(Debug, Clone)]
pub struct SessionMachine {
    phase: Phase,
}

impl Default for SessionMachine {
    fn default() -> Self {
        Self::new()
    }
}

impl SessionMachine {
    pub fn new() -> Self {
        Self {
            phase: Phase::AwaitingHello,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// Checks a message against the current phase without advancing.
    pub fn check(&self, event: MessageKind) -> Result<Phase, OrderViolation> {
        use MessageKind::*;
        let next = match (self.phase, event) {
            (Phase::AwaitingHello, Hello) => Phase::Ready { initialized: false },
            (Phase::Ready { .. }, Initialize) => Phase::Pending(Initialize),
            (Phase::Ready { initialized: true }, Frame) => Phase::Pending(Frame),
            (Phase::Pending(_), State) => Phase::Ready { initialized: true },
            (Phase::Ready { .. }, Quit) => Phase::Closed,
            (phase, event) => return Err(OrderViolation { phase, event }),
        };
        Ok(next)
    }

    pub fn step(&mut self, event: MessageKind) -> Result<Phase, OrderViolation> {
        let next = self.check(event)?;
        self.phase = next;
        Ok(next)
    }

    /// Marks the session closed regardless of phase (stream ended, fatal
    /// error).
    pub fn close(&mut self) {
        self.phase = Phase::Closed;
    }

    /// True when the trace so far is a complete session.
    pub fn is_accepting(&self) -> bool {
        matches!(self.phase, Phase::Ready { .. } | Phase::Closed)
    }
}

/// Replays a whole trace through a fresh machine.
pub fn trace_is_legal(trace: &[MessageKind]) -> bool {
    let mut machine = SessionMachine::new();
    trace.iter().all(|&e| machine.step(e).is_ok()) && machine.is_accepting()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerCapabilities {
    pub name: String,
    pub region_kind: RegionKind,
    image_kinds: Vec<ImageKind>,
    pub version: u32,
    pub custom: Properties,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CapabilityError {
    #[error("unsupported protocol version {0:?}")]
    VersionMismatch(String),
    #[error("malformed capabilities: {0}")]
    Malformed(String),
}

impl ServerCapabilities {
    pub fn new(
        name: impl Into<String>,
        region_kind: RegionKind,
        image_kinds: &[ImageKind],
    ) -> Result<Self, CapabilityError> {
        let mut kinds = image_kinds.to_vec();
        kinds.sort();
        kinds.dedup();
        if kinds.is_empty() {
            return Err(CapabilityError::Malformed("no image kinds".into()));
        }
        Ok(Self {
            name: name.into(),
            region_kind,
            image_kinds: kinds,
            version: PROTOCOL_VERSION,
            custom: Properties::new(),
        })
    }

    pub fn image_kinds(&self) -> &[ImageKind] {
        &self.image_kinds
    }

    pub fn supports_image(&self, kind: ImageKind) -> bool {
        self.image_kinds.contains(&kind)
    }

    /// Parameters of the introduction message.
    pub fn to_properties(&self) -> Properties {
        let images: Vec<&str> = self.image_kinds.iter().map(|k| k.name()).collect();
        let mut props = Properties::new()
            .with(KEY_VERSION, self.version.to_string())
            .with(KEY_NAME, self.name.clone())
            .with(KEY_REGION, self.region_kind.name())
            .with(KEY_IMAGE, images.join(";"));
        for (k, v) in self.custom.iter() {
            if props.get(k).is_none() {
                props.set(k, v).expect("validated key");
            }
        }
        props
    }

    pub fn from_properties(props: &Properties) -> Result<Self, CapabilityError> {
        let version = props
            .get(KEY_VERSION)
            .ok_or_else(|| CapabilityError::Malformed(format!("missing {KEY_VERSION}")))?;
        if version.parse::<u32>().ok() != Some(PROTOCOL_VERSION) {
            return Err(CapabilityError::VersionMismatch(version.to_owned()));
        }
        let name = props.get(KEY_NAME).unwrap_or("").to_owned();
        let region_kind = props
            .get(KEY_REGION)
            .ok_or_else(|| CapabilityError::Malformed(format!("missing {KEY_REGION}")))?
            .parse::<RegionKind>()
            .map_err(CapabilityError::Malformed)?;
        let images = props
            .get(KEY_IMAGE)
            .ok_or_else(|| CapabilityError::Malformed(format!("missing {KEY_IMAGE}")))?
            .split(';')
            .map(str::parse::<ImageKind>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(CapabilityError::Malformed)?;
        let mut caps = ServerCapabilities::new(name, region_kind, &images)?;
        for (k, v) in props.iter() {
            if ![KEY_VERSION, KEY_NAME, KEY_REGION, KEY_IMAGE].contains(&k) {
                caps.custom.set(k, v).expect("validated key");
            }
        }
        Ok(caps)
    }
}
