//! Application side of a session: start or connect to a tracker, perform the
//! handshake, drive requests and shut the tracker down.
//!
//! Tracker output is read on a background thread and handed over a channel,
//! so a blocked read can be abandoned when the watchdog fires. Free-form
//! lines are forwarded to the log sink in arrival order.

use crate::framing::LineReader;
use crate::image::{Image, ImageKind};
use crate::properties::Properties;
use crate::protocol::{CapabilityError, ServerCapabilities, SessionMachine};
use crate::region::{parse_region, Region};
use crate::server::SOCKET_ENV;
use crate::wire::{self, Message, MessageKind, StreamItem};
use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::thread;
use std::time::{Duration, Instant};

pub const DEFAULT_WATCHDOG: Duration = Duration::from_secs(30);

/// How long `terminate` keeps draining output after the tracker is gone.
const DRAIN_LIMIT: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transport {
    #[default]
    Stdio,
    Tcp,
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stdio" => Ok(Transport::Stdio),
            "tcp" => Ok(Transport::Tcp),
            other => Err(format!("unknown transport {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClientState {
    AwaitingHello,
    Ready,
    AwaitingState,
    Terminated,
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("failed to start tracker: {0}")]
    SpawnFailure(String),
    #[error("tracker did not connect within {0:?}")]
    AcceptTimeout(Duration),
    #[error("tracker did not respond within {0:?}")]
    WatchdogTimeout(Duration),
    #[error("unsupported protocol version {0}")]
    VersionMismatch(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("tracker does not accept {0} images")]
    UnsupportedImageKind(ImageKind),
    #[error("tracker exited")]
    TrackerExited,
    #[error("invalid in state {state:?}: {what}")]
    State { state: ClientState, what: String },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Consumer of free-form tracker output.
pub type LogSink = Box<dyn FnMut(&str) + Send>;

/// Writes tracker output to standard error, prefixed `[tracker] `.
pub fn stderr_sink() -> LogSink {
    Box::new(|line| eprintln!("[tracker] {line}"))
}

pub fn null_sink() -> LogSink {
    Box::new(|_| {})
}

/// How to start a tracker process.
#[derive(Debug, Clone)]
pub struct TrackerCommand {
    pub argv: Vec<String>,
    pub env: Vec<(String, String)>,
    pub workdir: Option<PathBuf>,
    pub transport: Transport,
    pub watchdog: Duration,
}

impl TrackerCommand {
    pub fn new(argv: Vec<String>) -> Self {
        Self {
            argv,
            env: Vec::new(),
            workdir: None,
            transport: Transport::Stdio,
            watchdog: DEFAULT_WATCHDOG,
        }
    }

    /// Splits a shell-style command line.
    pub fn parse(command: &str) -> Result<Self, ClientError> {
        let argv = shlex::split(command)
            .ok_or_else(|| ClientError::SpawnFailure(format!("cannot parse command {command:?}")))?;
        Ok(Self::new(argv))
    }

    pub fn transport(mut self, transport: Transport) -> Self {
        self.transport = transport;
        self
    }

    pub fn watchdog(mut self, watchdog: Duration) -> Self {
        self.watchdog = watchdog;
        self
    }

    pub fn env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.env.push((key.into(), value.into()));
        self
    }

    pub fn workdir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.workdir = Some(dir.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub region: Region,
    pub props: Properties,
    /// Wall-clock seconds from sending the request to receiving the state.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExitReport {
    /// Exit status of the tracker process, when there was one and it was
    /// reaped.
    pub status: Option<ExitStatus>,
    pub killed: bool,
    /// Free-form lines drained during shutdown.
    pub residual: Vec<String>,
}

#[derive(Debug)]
enum Event {
    Item(StreamItem),
    /// Free-form output from a secondary stream (stdout in TCP mode).
    Aux(String),
    Malformed(String),
    ReadError(String),
}

fn spawn_reader(source: impl Read + Send + 'static, tx: Sender<Event>, aux: bool) {
    thread::spawn(move || {
        let mut lines = LineReader::new(source);
        loop {
            let event = match lines.next_line() {
                Ok(Some(line)) if aux => Event::Aux(line),
                Ok(Some(line)) => match wire::decode(&line) {
                    Ok(item) => Event::Item(item),
                    Err(e) => Event::Malformed(format!("{e} in {line:?}")),
                },
                Ok(None) if aux => break,
                Ok(None) => Event::Item(StreamItem::EndOfStream),
                Err(e) => Event::ReadError(e.to_string()),
            };
            let last = matches!(
                event,
                Event::Item(StreamItem::EndOfStream) | Event::ReadError(_)
            );
            if tx.send(event).is_err() || last {
                break;
            }
        }
    });
}

pub struct TrackerHandle {
    state: ClientState,
    machine: SessionMachine,
    capabilities: Option<ServerCapabilities>,
    child: Option<Child>,
    writer: Option<Box<dyn Write + Send>>,
    socket: Option<TcpStream>,
    events: Receiver<Event>,
    backlog: VecDeque<Event>,
    stream_closed: bool,
    sink: LogSink,
    watchdog: Duration,
    exit: Option<ExitReport>,
}

impl TrackerHandle {
    /// Starts the tracker process and attaches to it.
    pub fn launch(command: &TrackerCommand, sink: LogSink) -> Result<Self, ClientError> {
        let (program, args) = command
            .argv
            .split_first()
            .ok_or_else(|| ClientError::SpawnFailure("empty command".into()))?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .envs(command.env.iter().map(|(k, v)| (k, v)))
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit());
        if let Some(dir) = &command.workdir {
            cmd.current_dir(dir);
        }
        let spawn_err = |e: io::Error| ClientError::SpawnFailure(format!("{program}: {e}"));
        let (tx, rx) = mpsc::channel();

        match command.transport {
            Transport::Stdio => {
                cmd.env_remove(SOCKET_ENV).stdin(Stdio::piped());
                let mut child = cmd.spawn().map_err(spawn_err)?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                spawn_reader(stdout, tx, false);
                Ok(Self::attach(Some(child), Box::new(stdin), None, rx, sink, command.watchdog))
            }
            Transport::Tcp => {
                let listener = TcpListener::bind("127.0.0.1:0")?;
                let port = listener.local_addr()?.port();
                cmd.env(SOCKET_ENV, port.to_string()).stdin(Stdio::null());
                let mut child = cmd.spawn().map_err(spawn_err)?;
                spawn_reader(child.stdout.take().expect("piped stdout"), tx.clone(), true);
                let stream = match accept_within(&listener, &mut child, command.watchdog) {
                    Ok(stream) => stream,
                    Err(e) => {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(e);
                    }
                };
                let reader = stream.try_clone()?;
                let writer = stream.try_clone()?;
                spawn_reader(reader, tx, false);
                Ok(Self::attach(
                    Some(child),
                    Box::new(writer),
                    Some(stream),
                    rx,
                    sink,
                    command.watchdog,
                ))
            }
        }
    }

    /// Connects to a tracker already listening at `addr`.
    pub fn connect(
        addr: impl ToSocketAddrs,
        watchdog: Duration,
        sink: LogSink,
    ) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let (tx, rx) = mpsc::channel();
        spawn_reader(stream.try_clone()?, tx, false);
        let writer = stream.try_clone()?;
        Ok(Self::attach(None, Box::new(writer), Some(stream), rx, sink, watchdog))
    }

    /// Attaches to an arbitrary pair of streams, e.g. an in-process tracker.
    pub fn from_streams(
        reader: impl Read + Send + 'static,
        writer: impl Write + Send + 'static,
        watchdog: Duration,
        sink: LogSink,
    ) -> Self {
        let (tx, rx) = mpsc::channel();
        spawn_reader(reader, tx, false);
        Self::attach(None, Box::new(writer), None, rx, sink, watchdog)
    }

    fn attach(
        child: Option<Child>,
        writer: Box<dyn Write + Send>,
        socket: Option<TcpStream>,
        events: Receiver<Event>,
        sink: LogSink,
        watchdog: Duration,
    ) -> Self {
        Self {
            state: ClientState::AwaitingHello,
            machine: SessionMachine::new(),
            capabilities: None,
            child,
            writer: Some(writer),
            socket,
            events,
            backlog: VecDeque::new(),
            stream_closed: false,
            sink,
            watchdog,
            exit: None,
        }
    }

    pub fn state(&self) -> ClientState {
        self.state
    }

    pub fn capabilities(&self) -> Option<&ServerCapabilities> {
        self.capabilities.as_ref()
    }

    pub fn watchdog(&self) -> Duration {
        self.watchdog
    }

    pub fn set_watchdog(&mut self, watchdog: Duration) {
        self.watchdog = watchdog;
    }

    pub fn child_id(&self) -> Option<u32> {
        self.child.as_ref().map(Child::id)
    }

    fn state_error(&self, what: &str) -> ClientError {
        ClientError::State {
            state: self.state,
            what: what.to_owned(),
        }
    }

    fn fail(&mut self, error: ClientError) -> ClientError {
        self.state = ClientState::Terminated;
        self.machine.close();
        error
    }

    fn next_event(&mut self, timeout: Duration) -> Result<Event, RecvTimeoutError> {
        if let Some(event) = self.backlog.pop_front() {
            return Ok(event);
        }
        if self.stream_closed {
            return Err(RecvTimeoutError::Disconnected);
        }
        self.events.recv_timeout(timeout)
    }

    /// Next protocol message, forwarding free-form lines on the way. Fails
    /// once the watchdog expires.
    fn receive(&mut self) -> Result<Message, ClientError> {
        let deadline = Instant::now() + self.watchdog;
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.next_event(remaining) {
                Ok(Event::Item(StreamItem::Protocol(m))) => return Ok(m),
                Ok(Event::Item(StreamItem::Passthrough(line))) | Ok(Event::Aux(line)) => {
                    (self.sink)(&line)
                }
                Ok(Event::Item(StreamItem::EndOfStream)) | Err(RecvTimeoutError::Disconnected) => {
                    self.stream_closed = true;
                    return Err(self.fail(ClientError::TrackerExited));
                }
                Ok(Event::ReadError(e)) => {
                    self.stream_closed = true;
                    return Err(self.fail(ClientError::Io(io::Error::other(e))));
                }
                Ok(Event::Malformed(e)) => return Err(self.fail(ClientError::ProtocolViolation(e))),
                Err(RecvTimeoutError::Timeout) => {
                    return Err(self.fail(ClientError::WatchdogTimeout(self.watchdog)))
                }
            }
        }
    }

    /// Waits for the introduction and records the tracker's capabilities.
    pub fn handshake(&mut self) -> Result<ServerCapabilities, ClientError> {
        if self.state != ClientState::AwaitingHello {
            return Err(self.state_error("handshake"));
        }
        let hello = self.receive()?;
        if hello.kind != MessageKind::Hello {
            return Err(self.fail(ClientError::ProtocolViolation(format!(
                "expected hello, got {}",
                hello.kind
            ))));
        }
        let caps = match ServerCapabilities::from_properties(&hello.params) {
            Ok(caps) => caps,
            Err(CapabilityError::VersionMismatch(v)) => {
                return Err(self.fail(ClientError::VersionMismatch(v)))
            }
            Err(e @ CapabilityError::Malformed(_)) => {
                return Err(self.fail(ClientError::ProtocolViolation(e.to_string())))
            }
        };
        self.machine.step(MessageKind::Hello).expect("fresh machine");
        self.capabilities = Some(caps.clone());
        self.state = ClientState::Ready;
        Ok(caps)
    }

    /// Skips the handshake and proceeds with the given capabilities. Used
    /// by the conformance tester to keep probing a tracker whose
    /// introduction was missing or wrong.
    pub fn assume_capabilities(&mut self, caps: ServerCapabilities) {
        self.machine = SessionMachine::new();
        self.machine.step(MessageKind::Hello).expect("fresh machine");
        self.capabilities = Some(caps);
        self.state = ClientState::Ready;
    }

    fn write_line(&mut self, message: &Message) -> Result<(), ClientError> {
        let line = wire::encode(message).map_err(|e| ClientError::ProtocolViolation(e.to_string()))?;
        let writer = self.writer.as_mut().ok_or(ClientError::TrackerExited)?;
        let result = writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.flush());
        if result.is_err() {
            return Err(self.fail(ClientError::TrackerExited));
        }
        Ok(())
    }

    /// Sends one request and waits for its state message, without looking
    /// at the region it carries.
    pub fn exchange(&mut self, request: &Message) -> Result<(Message, f64), ClientError> {
        if self.state != ClientState::Ready {
            return Err(self.state_error("request"));
        }
        // A message already waiting was not asked for.
        loop {
            match self.events.try_recv() {
                Ok(Event::Item(StreamItem::Passthrough(line))) | Ok(Event::Aux(line)) => {
                    (self.sink)(&line)
                }
                Ok(Event::Item(StreamItem::Protocol(m))) => {
                    return Err(self.fail(ClientError::ProtocolViolation(format!(
                        "unsolicited {} message",
                        m.kind
                    ))))
                }
                Ok(other) => {
                    self.backlog.push_back(other);
                    break;
                }
                Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => break,
            }
        }
        self.machine
            .step(request.kind)
            .map_err(|e| ClientError::State {
                state: self.state,
                what: e.to_string(),
            })?;
        let started = Instant::now();
        self.write_line(request)?;
        self.state = ClientState::AwaitingState;
        let response = self.receive()?;
        let elapsed = started.elapsed().as_secs_f64();
        if response.kind != MessageKind::State {
            return Err(self.fail(ClientError::ProtocolViolation(format!(
                "expected state, got {}",
                response.kind
            ))));
        }
        self.machine.step(MessageKind::State).expect("pending request");
        self.state = ClientState::Ready;
        Ok((response, elapsed))
    }

    /// Collects protocol messages that arrive within `wait` without being
    /// requested. Free-form lines are forwarded as usual.
    pub fn drain_unsolicited(&mut self, wait: Duration) -> Vec<Message> {
        let deadline = Instant::now() + wait;
        let mut extra = Vec::new();
        loop {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.next_event(remaining) {
                Ok(Event::Item(StreamItem::Protocol(m))) => extra.push(m),
                Ok(Event::Item(StreamItem::Passthrough(line))) | Ok(Event::Aux(line)) => {
                    (self.sink)(&line)
                }
                Ok(other) => {
                    self.backlog.push_front(other);
                    break;
                }
                Err(_) => break,
            }
        }
        extra
    }

    fn checked_image(&self, image: &Image) -> Result<(), ClientError> {
        let caps = self.capabilities.as_ref().expect("ready implies capabilities");
        if !caps.supports_image(image.kind()) {
            return Err(ClientError::UnsupportedImageKind(image.kind()));
        }
        Ok(())
    }

    fn outcome(&mut self, response: Message, elapsed: f64) -> Result<Outcome, ClientError> {
        match parse_region(&response.args[0]) {
            Ok(region) if !region.is_special() => Ok(Outcome {
                region,
                props: response.params,
                elapsed,
            }),
            Ok(region) => Err(self.fail(ClientError::ProtocolViolation(format!(
                "special region {region} in state"
            )))),
            Err(e) => Err(self.fail(ClientError::ProtocolViolation(e.to_string()))),
        }
    }

    /// Initializes (or re-initializes) the tracker. The region is converted
    /// to the kind the tracker declared.
    pub fn initialize(
        &mut self,
        image: &Image,
        region: &Region,
        props: &Properties,
    ) -> Result<Outcome, ClientError> {
        if self.state != ClientState::Ready {
            return Err(self.state_error("initialize"));
        }
        let kind = self.capabilities.as_ref().expect("ready").region_kind;
        let region = region
            .convert(kind)
            .map_err(|e| ClientError::InvalidRegion(e.to_string()))?;
        self.checked_image(image)?;
        let message = Message::new(
            MessageKind::Initialize,
            vec![image.to_string(), region.to_string()],
            props.clone(),
        );
        let (response, elapsed) = self.exchange(&message)?;
        self.outcome(response, elapsed)
    }

    pub fn frame(&mut self, image: &Image, props: &Properties) -> Result<Outcome, ClientError> {
        if self.state != ClientState::Ready {
            return Err(self.state_error("frame"));
        }
        if self.machine.check(MessageKind::Frame).is_err() {
            return Err(self.state_error("frame before initialize"));
        }
        self.checked_image(image)?;
        let message = Message::new(MessageKind::Frame, vec![image.to_string()], props.clone());
        let (response, elapsed) = self.exchange(&message)?;
        self.outcome(response, elapsed)
    }

    /// Asks the tracker to quit, waits up to `grace` for it to exit and kills
    /// it otherwise. Calling it again returns the same report.
    pub fn terminate(&mut self, grace: Duration) -> ExitReport {
        if let Some(report) = &self.exit {
            return report.clone();
        }
        if !self.stream_closed && self.writer.is_some() {
            let _ = self.write_line(&Message::quit());
        }
        self.writer = None;
        if let Some(socket) = &self.socket {
            let _ = socket.shutdown(Shutdown::Write);
        }

        let mut residual = Vec::new();
        let mut status = None;
        let mut killed = false;
        let deadline = Instant::now() + grace;
        if let Some(child) = self.child.as_mut() {
            loop {
                match child.try_wait() {
                    Ok(Some(s)) => {
                        status = Some(s);
                        break;
                    }
                    Ok(None) if Instant::now() < deadline => {
                        thread::sleep(Duration::from_millis(5));
                    }
                    _ => {
                        let _ = child.kill();
                        status = child.wait().ok();
                        killed = true;
                        break;
                    }
                }
            }
        } else {
            // No process to watch: wait for the stream to close instead.
            self.drain_until_closed(deadline, &mut residual);
            if !self.stream_closed {
                if let Some(socket) = &self.socket {
                    let _ = socket.shutdown(Shutdown::Both);
                }
                killed = true;
            }
        }
        self.drain_until_closed(Instant::now() + DRAIN_LIMIT, &mut residual);

        self.state = ClientState::Terminated;
        self.machine.close();
        let report = ExitReport {
            status,
            killed,
            residual,
        };
        self.exit = Some(report.clone());
        report
    }

    fn drain_until_closed(&mut self, deadline: Instant, residual: &mut Vec<String>) {
        while !self.stream_closed {
            let remaining = deadline.saturating_duration_since(Instant::now());
            match self.next_event(remaining) {
                Ok(Event::Item(StreamItem::Passthrough(line))) | Ok(Event::Aux(line)) => {
                    (self.sink)(&line);
                    residual.push(line);
                }
                Ok(Event::Item(StreamItem::Protocol(_))) | Ok(Event::Malformed(_)) => {}
                Ok(Event::Item(StreamItem::EndOfStream))
                | Ok(Event::ReadError(_))
                | Err(RecvTimeoutError::Disconnected) => self.stream_closed = true,
                Err(RecvTimeoutError::Timeout) => break,
            }
        }
        // Late free-form lines from a secondary stream.
        while let Ok(event) = self.events.try_recv() {
            if let Event::Aux(line) | Event::Item(StreamItem::Passthrough(line)) = event {
                (self.sink)(&line);
                residual.push(line);
            }
        }
    }
}

impl Drop for TrackerHandle {
    fn drop(&mut self) {
        if let Some(child) = self.child.as_mut() {
            if let Ok(None) = child.try_wait() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

fn accept_within(
    listener: &TcpListener,
    child: &mut Child,
    timeout: Duration,
) -> Result<TcpStream, ClientError> {
    listener.set_nonblocking(true)?;
    let deadline = Instant::now() + timeout;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false)?;
                stream.set_nodelay(true)?;
                return Ok(stream);
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                if let Some(status) = child.try_wait()? {
                    return Err(ClientError::SpawnFailure(format!(
                        "tracker exited before connecting ({status})"
                    )));
                }
                if Instant::now() >= deadline {
                    return Err(ClientError::AcceptTimeout(timeout));
                }
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }
}
