//! Reference trackers.
//!
//! The static tracker reports the most recent initialization region for
//! every frame. Its knobs (artificial delay, scripted failure, hanging) make
//! it usable as a test double for every harness mode. The violating
//! trackers each break one protocol rule and serve as conformance
//! fixtures.

use crate::framing::LineReader;
use crate::image::ImageKind;
use crate::properties::Properties;
use crate::protocol::ServerCapabilities;
use crate::region::{Region, RegionKind};
use crate::server::{Request, ServerError, ServerSession};
use crate::wire::{self, Message, MessageKind, StreamItem};
use std::io::{self, Read, Write};
use std::str::FromStr;
use std::thread;
use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub struct StaticTrackerOptions {
    pub name: String,
    pub region_kind: RegionKind,
    /// Sleep before answering each frame.
    pub delay: Duration,
    /// Answer this many frames after each initialization correctly, then
    /// report [`far_off_region`] until the next initialization.
    pub fail_after: Option<usize>,
    /// Never answer the first frame.
    pub hang: bool,
}

impl Default for StaticTrackerOptions {
    fn default() -> Self {
        Self {
            name: "dummy".into(),
            region_kind: RegionKind::Rectangle,
            delay: Duration::ZERO,
            fail_after: None,
            hang: false,
        }
    }
}

impl StaticTrackerOptions {
    pub fn capabilities(&self) -> ServerCapabilities {
        ServerCapabilities::new(
            self.name.clone(),
            self.region_kind,
            &[ImageKind::Path, ImageKind::Memory],
        )
        .expect("non-empty image kinds")
    }
}

/// Region reported once a scripted failure kicks in.
pub fn far_off_region(kind: RegionKind) -> Region {
    Region::Rectangle {
        x: -100.0,
        y: -100.0,
        w: 1.0,
        h: 1.0,
    }
    .convert(kind)
    .expect("rectangle converts")
}

fn hang_forever() -> ! {
    loop {
        thread::sleep(Duration::from_secs(3600));
    }
}

/// Serves requests until the client quits or the stream ends.
pub fn run_static_tracker<R: Read, W: Write>(
    session: &mut ServerSession<R, W>,
    opts: &StaticTrackerOptions,
) -> Result<(), ServerError> {
    session.start()?;
    let mut current: Option<Region> = None;
    let mut frames_since_init = 0usize;
    let mut hang_pending = opts.hang;
    let none = Properties::new();
    loop {
        match session.wait()? {
            Request::Quit => return Ok(()),
            Request::Initialize { region, .. } => {
                let region = region
                    .convert(opts.region_kind)
                    .map_err(|e| ServerError::ProtocolViolation(e.to_string()))?;
                frames_since_init = 0;
                session.report(&region, &none)?;
                current = Some(region);
            }
            Request::Frame { .. } => {
                if hang_pending {
                    hang_forever();
                }
                hang_pending = false;
                if !opts.delay.is_zero() {
                    thread::sleep(opts.delay);
                }
                frames_since_init += 1;
                let failing = opts.fail_after.is_some_and(|k| frames_since_init > k);
                let region = if failing {
                    far_off_region(opts.region_kind)
                } else {
                    current.clone().expect("frame after initialize")
                };
                session.report(&region, &none)?;
            }
        }
    }
}

/// Protocol rule a fixture tracker breaks on purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    /// Never sends the introduction, otherwise behaves.
    NoHello,
    /// Answers every frame request twice.
    DoubleState,
    /// Answers every frame request with an unparseable region.
    MalformedRegion,
}

impl Violation {
    pub const ALL: [Violation; 3] = [
        Violation::NoHello,
        Violation::DoubleState,
        Violation::MalformedRegion,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Violation::NoHello => "no-hello",
            Violation::DoubleState => "double-state",
            Violation::MalformedRegion => "malformed-region",
        }
    }
}

impl FromStr for Violation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.id() == s)
            .ok_or_else(|| format!("unknown violation {s:?}"))
    }
}

/// A static tracker with one deliberate protocol bug. Written against the
/// wire codec directly since the server session would refuse to misbehave.
pub fn run_violating_tracker<R: Read, W: Write>(
    reader: R,
    mut writer: W,
    opts: &StaticTrackerOptions,
    violation: Violation,
) -> io::Result<()> {
    let send = |writer: &mut W, m: &Message| -> io::Result<()> {
        let line = wire::encode(m).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        writer.write_all(line.as_bytes())?;
        writer.flush()
    };
    let state = |text: String| Message::new(MessageKind::State, vec![text], Properties::new());

    if violation != Violation::NoHello {
        let hello = Message::new(
            MessageKind::Hello,
            Vec::new(),
            opts.capabilities().to_properties(),
        );
        send(&mut writer, &hello)?;
    }
    let mut lines = LineReader::new(reader);
    let mut current = String::new();
    while let Some(line) = lines.next_line()? {
        let Ok(StreamItem::Protocol(m)) = wire::decode(&line) else {
            continue;
        };
        match m.kind {
            MessageKind::Quit => break,
            MessageKind::Initialize => {
                current = crate::region::parse_region(&m.args[1])
                    .and_then(|r| r.convert(opts.region_kind))
                    .map(|r| r.to_string())
                    .unwrap_or_else(|_| m.args[1].clone());
                send(&mut writer, &state(current.clone()))?;
            }
            MessageKind::Frame => match violation {
                Violation::NoHello => send(&mut writer, &state(current.clone()))?,
                Violation::DoubleState => {
                    send(&mut writer, &state(current.clone()))?;
                    send(&mut writer, &state(current.clone()))?;
                }
                Violation::MalformedRegion => send(&mut writer, &state("1,2,x".into()))?,
            },
            MessageKind::Hello | MessageKind::State => {}
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drive(input: &str, opts: &StaticTrackerOptions) -> Vec<String> {
        let mut out = Vec::new();
        let mut session = ServerSession::new(opts.capabilities(), input.as_bytes(), &mut out);
        run_static_tracker(&mut session, opts).unwrap();
        drop(session);
        String::from_utf8(out)
            .unwrap()
            .lines()
            .filter(|l| l.starts_with("@@TRAX:state"))
            .map(|l| l["@@TRAX:state ".len()..].to_owned())
            .collect()
    }

    const INIT_THEN_3: &str = "@@TRAX:initialize file:///a.jpg 5,5,10,10\n\
        @@TRAX:frame file:///b.jpg\n@@TRAX:frame file:///c.jpg\n@@TRAX:frame file:///d.jpg\n@@TRAX:quit\n";

    #[test]
    fn static_semantics() {
        let states = drive(INIT_THEN_3, &StaticTrackerOptions::default());
        assert_eq!(states, ["5,5,10,10"; 4]);
    }

    #[test]
    fn fail_after() {
        let opts = StaticTrackerOptions {
            fail_after: Some(2),
            ..Default::default()
        };
        let states = drive(INIT_THEN_3, &opts);
        assert_eq!(states, ["5,5,10,10", "5,5,10,10", "5,5,10,10", "-100,-100,1,1"]);
    }

    #[test]
    fn fail_counter_resets_on_initialize() {
        let opts = StaticTrackerOptions {
            fail_after: Some(1),
            ..Default::default()
        };
        let input = "@@TRAX:initialize file:///a.jpg 5,5,10,10\n@@TRAX:frame file:///b.jpg\n\
            @@TRAX:frame file:///b.jpg\n@@TRAX:initialize file:///a.jpg 7,7,10,10\n@@TRAX:frame file:///b.jpg\n";
        let states = drive(input, &opts);
        assert_eq!(
            states,
            ["5,5,10,10", "5,5,10,10", "-100,-100,1,1", "7,7,10,10", "7,7,10,10"]
        );
    }

    #[test]
    fn polygon_mode() {
        let opts = StaticTrackerOptions {
            region_kind: RegionKind::Polygon,
            ..Default::default()
        };
        let states = drive(INIT_THEN_3, &opts);
        assert_eq!(states, ["5,5,15,5,15,15,5,15"; 4]);
    }

    fn violate(v: Violation) -> String {
        let mut out = Vec::new();
        run_violating_tracker(INIT_THEN_3.as_bytes(), &mut out, &StaticTrackerOptions::default(), v)
            .unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn violations() {
        let out = violate(Violation::NoHello);
        assert!(!out.contains("@@TRAX:hello"));
        assert_eq!(out.lines().count(), 4);

        let out = violate(Violation::DoubleState);
        assert!(out.starts_with("@@TRAX:hello"));
        assert_eq!(out.lines().filter(|l| l.starts_with("@@TRAX:state")).count(), 7);

        let out = violate(Violation::MalformedRegion);
        assert_eq!(out.lines().filter(|l| *l == "@@TRAX:state 1,2,x").count(), 3);
    }

    #[test]
    fn violation_ids() {
        for v in Violation::ALL {
            assert_eq!(v.id().parse::<Violation>().unwrap(), v);
        }
        assert!("bogus".parse::<Violation>().is_err());
    }
}
