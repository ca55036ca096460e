//! Tracker side of a session.
//!
//! A tracker builds a [`ServerSession`], sends its introduction with
//! [`ServerSession::start`], then loops on [`ServerSession::wait`] and answers
//! every initialize or frame request with exactly one
//! [`ServerSession::report`].

use crate::framing::LineReader;
use crate::image::{parse_image, Image};
use crate::properties::Properties;
use crate::protocol::{ServerCapabilities, SessionMachine};
use crate::region::{parse_region, Region, RegionKind};
use crate::wire::{self, Message, MessageKind, StreamItem, PREFIX};
use std::io::{self, Read, Write};
use std::net::TcpStream;

/// Environment variable carrying the port a TCP client listens on.
pub const SOCKET_ENV: &str = "TRAX_SOCKET";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerState {
    /// Created, introduction not yet sent.
    Introduced,
    AwaitingRequest,
    MustReport,
    Terminated,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Initialize {
        image: Image,
        region: Region,
        params: Properties,
    },
    Frame {
        image: Image,
        params: Properties,
    },
    Quit,
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("invalid in state {state:?}: {what}")]
    State { state: ServerState, what: String },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("declared {declared} regions but reported {got}")]
    RegionKindMismatch { declared: RegionKind, got: String },
}

pub struct ServerSession<R, W> {
    state: ServerState,
    capabilities: ServerCapabilities,
    reader: LineReader<R>,
    writer: W,
    machine: SessionMachine,
}

impl<R: Read, W: Write> ServerSession<R, W> {
    pub fn new(capabilities: ServerCapabilities, reader: R, writer: W) -> Self {
        Self {
            state: ServerState::Introduced,
            capabilities,
            reader: LineReader::new(reader),
            writer,
            machine: SessionMachine::new(),
        }
    }

    pub fn state(&self) -> ServerState {
        self.state
    }

    pub fn capabilities(&self) -> &ServerCapabilities {
        &self.capabilities
    }

    fn state_error(&self, what: &str) -> ServerError {
        ServerError::State {
            state: self.state,
            what: what.to_owned(),
        }
    }

    fn send(&mut self, message: &Message) -> Result<(), ServerError> {
        let line = wire::encode(message).map_err(|e| ServerError::ProtocolViolation(e.to_string()))?;
        self.writer.write_all(line.as_bytes())?;
        self.writer.flush()?;
        Ok(())
    }

    /// Sends the introduction. Only legal once.
    pub fn start(&mut self) -> Result<(), ServerError> {
        if self.state != ServerState::Introduced {
            return Err(self.state_error("introduction already sent"));
        }
        let hello = Message::new(
            MessageKind::Hello,
            Vec::new(),
            self.capabilities.to_properties(),
        );
        self.send(&hello)?;
        self.machine.step(MessageKind::Hello).expect("fresh machine");
        self.state = ServerState::AwaitingRequest;
        Ok(())
    }

    /// Writes a free-form line to the output stream. The line may not look
    /// like a protocol message.
    pub fn log(&mut self, text: &str) -> Result<(), ServerError> {
        if text.contains('\n') || text.starts_with(PREFIX) {
            return Err(ServerError::ProtocolViolation(
                "log line would corrupt the protocol stream".into(),
            ));
        }
        self.writer.write_all(text.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        Ok(())
    }

    fn violation(&mut self, reason: String) -> ServerError {
        self.state = ServerState::Terminated;
        self.machine.close();
        ServerError::ProtocolViolation(reason)
    }

    /// Blocks until the client sends a request. End of stream counts as quit.
    pub fn wait(&mut self) -> Result<Request, ServerError> {
        if self.state != ServerState::AwaitingRequest {
            return Err(self.state_error("wait"));
        }
        loop {
            let Some(line) = self.reader.next_line()? else {
                self.state = ServerState::Terminated;
                self.machine.close();
                return Ok(Request::Quit);
            };
            let message = match wire::decode(&line) {
                Ok(StreamItem::Protocol(m)) => m,
                Ok(_) => continue,
                Err(e) => return Err(self.violation(e.to_string())),
            };
            if let Err(e) = self.machine.step(message.kind) {
                return Err(self.violation(e.to_string()));
            }
            return match message.kind {
                MessageKind::Quit => {
                    self.state = ServerState::Terminated;
                    Ok(Request::Quit)
                }
                MessageKind::Initialize => {
                    let image = parse_image(&message.args[0])
                        .map_err(|e| self.violation(e.to_string()))?;
                    let region = parse_region(&message.args[1])
                        .map_err(|e| self.violation(e.to_string()))?;
                    if region.is_special() {
                        return Err(self.violation("special region in initialize".into()));
                    }
                    self.state = ServerState::MustReport;
                    Ok(Request::Initialize {
                        image,
                        region,
                        params: message.params,
                    })
                }
                MessageKind::Frame => {
                    let image = parse_image(&message.args[0])
                        .map_err(|e| self.violation(e.to_string()))?;
                    self.state = ServerState::MustReport;
                    Ok(Request::Frame {
                        image,
                        params: message.params,
                    })
                }
                // the machine rejects hello and state from a client
                MessageKind::Hello | MessageKind::State => unreachable!(),
            };
        }
    }

    /// Answers the pending request.
    pub fn report(&mut self, region: &Region, props: &Properties) -> Result<(), ServerError> {
        if self.state != ServerState::MustReport {
            return Err(self.state_error("report without a pending request"));
        }
        if region.kind() != Some(self.capabilities.region_kind) {
            return Err(ServerError::RegionKindMismatch {
                declared: self.capabilities.region_kind,
                got: region
                    .kind()
                    .map_or_else(|| "special".to_owned(), |k| k.to_string()),
            });
        }
        let message = Message::new(MessageKind::State, vec![region.to_string()], props.clone());
        self.send(&message)?;
        self.machine.step(MessageKind::State).expect("pending request");
        self.state = ServerState::AwaitingRequest;
        Ok(())
    }
}

pub type ServerReader = Box<dyn Read + Send>;
pub type ServerWriter = Box<dyn Write + Send>;

/// Opens the transport a launching client asked for: the TCP port in
/// `TRAX_SOCKET` when set, standard input/output otherwise.
pub fn connect_from_env() -> io::Result<(ServerReader, ServerWriter)> {
    match std::env::var(SOCKET_ENV) {
        Ok(value) if !value.trim().is_empty() => {
            let value = value.trim();
            let addr = if value.contains(':') {
                value.to_owned()
            } else {
                format!("127.0.0.1:{value}")
            };
            let stream = TcpStream::connect(addr)?;
            stream.set_nodelay(true)?;
            let reader = stream.try_clone()?;
            Ok((Box::new(reader), Box::new(stream)))
        }
        _ => Ok((Box::new(io::stdin()), Box::new(io::stdout()))),
    }
}

impl ServerSession<ServerReader, ServerWriter> {
    pub fn from_env(capabilities: ServerCapabilities) -> io::Result<Self> {
        let (reader, writer) = connect_from_env()?;
        Ok(Self::new(capabilities, reader, writer))
    }
}
