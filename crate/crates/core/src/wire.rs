//! Line codec for protocol messages embedded in an arbitrary text stream.
//!
//! A protocol line looks like
//!
//! ```text
//! @@TRAX:<type> <arg>* <key=value>*
//! ```
//!
//! Tokens are bare unless they contain a space, tab, carriage return, `"`,
//! `\` or `=` (or are empty), in which case they are double-quoted with `\"`
//! and `\\` as the only escapes. Lines that do not start with the prefix are
//! passed through untouched.

use crate::properties::{is_valid_key, Properties};
use std::fmt;

pub const PREFIX: &str = "@@TRAX:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Hello,
    Initialize,
    Frame,
    State,
    Quit,
}

impl MessageKind {
    pub const ALL: [MessageKind; 5] = [
        MessageKind::Hello,
        MessageKind::Initialize,
        MessageKind::Frame,
        MessageKind::State,
        MessageKind::Quit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Hello => "hello",
            MessageKind::Initialize => "initialize",
            MessageKind::Frame => "frame",
            MessageKind::State => "state",
            MessageKind::Quit => "quit",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Number of positional arguments a message of this kind carries.
    pub fn arity(self) -> usize {
        match self {
            MessageKind::Hello | MessageKind::Quit => 0,
            MessageKind::Frame | MessageKind::State => 1,
            MessageKind::Initialize => 2,
        }
    }
}

impl fmt::Display for MessageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub args: Vec<String>,
    pub params: Properties,
}

impl Message {
    pub fn new(kind: MessageKind, args: Vec<String>, params: Properties) -> Self {
        Self { kind, args, params }
    }

    pub fn quit() -> Self {
        Self::new(MessageKind::Quit, Vec::new(), Properties::new())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StreamItem {
    Protocol(Message),
    Passthrough(String),
    EndOfStream,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("{kind} expects {expected} argument(s), got {got}")]
    ArityViolation {
        kind: MessageKind,
        expected: usize,
        got: usize,
    },
    #[error("value contains a raw newline")]
    IllegalCharacter,
    #[error("invalid parameter key {0:?}")]
    InvalidKey(String),
    #[error("malformed protocol line: {0}")]
    MalformedMessage(String),
}

fn needs_quoting(value: &str) -> bool {
    value.is_empty()
        || value
            .bytes()
            .any(|b| matches!(b, b' ' | b'\t' | b'\r' | b'"' | b'\\' | b'='))
}

fn push_token(out: &mut String, value: &str) -> Result<(), WireError> {
    if value.contains('\n') {
        return Err(WireError::IllegalCharacter);
    }
    if !needs_quoting(value) {
        out.push_str(value);
        return Ok(());
    }
    out.push('"');
    for c in value.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    Ok(())
}

/// Renders the `key=value` list used for message parameters.
pub fn encode_params(params: &Properties) -> Result<String, WireError> {
    let mut out = String::new();
    for (key, value) in params.iter() {
        if !out.is_empty() {
            out.push(' ');
        }
        if !is_valid_key(key) {
            return Err(WireError::InvalidKey(key.to_owned()));
        }
        out.push_str(key);
        out.push('=');
        push_token(&mut out, value)?;
    }
    Ok(out)
}

/// Encodes a message as a single `\n`-terminated line.
pub fn encode(message: &Message) -> Result<String, WireError> {
    let expected = message.kind.arity();
    if message.args.len() != expected {
        return Err(WireError::ArityViolation {
            kind: message.kind,
            expected,
            got: message.args.len(),
        });
    }
    let mut out = String::with_capacity(64);
    out.push_str(PREFIX);
    out.push_str(message.kind.name());
    for arg in &message.args {
        out.push(' ');
        push_token(&mut out, arg)?;
    }
    if !message.params.is_empty() {
        out.push(' ');
        out.push_str(&encode_params(&message.params)?);
    }
    out.push('\n');
    Ok(out)
}

/// Classifies one framed line (no trailing newline).
pub fn decode(line: &str) -> Result<StreamItem, WireError> {
    match line.strip_prefix(PREFIX) {
        Some(body) => decode_body(body).map(StreamItem::Protocol),
        None => Ok(StreamItem::Passthrough(line.to_owned())),
    }
}

/// Parses a bare `key=value ...` list as produced by [`encode_params`].
pub fn decode_params(text: &str) -> Result<Properties, WireError> {
    let mut body = String::with_capacity(text.len() + 5);
    body.push_str("quit ");
    body.push_str(text);
    decode_body(&body).map(|m| m.params)
}

fn malformed(reason: impl Into<String>) -> WireError {
    WireError::MalformedMessage(reason.into())
}

fn is_sep(b: u8) -> bool {
    b == b' ' || b == b'\t'
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn peek(&self) -> Option<u8> {
        self.text.as_bytes().get(self.pos).copied()
    }

    fn skip_separators(&mut self) {
        while self.peek().is_some_and(is_sep) {
            self.pos += 1;
        }
    }

    fn at_token_end(&self) -> bool {
        self.peek().map_or(true, is_sep)
    }

    /// Reads a quoted token starting at the opening quote.
    fn quoted(&mut self) -> Result<String, WireError> {
        debug_assert_eq!(self.peek(), Some(b'"'));
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.text[self.pos..].char_indices();
        while let Some((offset, c)) = chars.next() {
            match c {
                '"' => {
                    self.pos += offset + 1;
                    if !self.at_token_end() {
                        return Err(malformed("garbage after closing quote"));
                    }
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, e @ ('"' | '\\'))) => out.push(e),
                    Some((_, other)) => {
                        return Err(malformed(format!("unknown escape \\{other}")))
                    }
                    None => break,
                },
                c => out.push(c),
            }
        }
        Err(malformed("unterminated quote"))
    }

    /// Reads bare characters up to a separator, `=`, or end of line.
    fn bare(&mut self) -> Result<&'a str, WireError> {
        let start = self.pos;
        while let Some(b) = self.peek() {
            match b {
                b' ' | b'\t' | b'=' => break,
                b'"' | b'\\' | b'\r' => {
                    return Err(malformed(format!(
                        "unexpected {:?} in bare token",
                        b as char
                    )))
                }
                _ => self.pos += 1,
            }
        }
        Ok(&self.text[start..self.pos])
    }
}

fn decode_body(body: &str) -> Result<Message, WireError> {
    let type_end = body
        .bytes()
        .position(is_sep)
        .unwrap_or(body.len());
    let type_name = &body[..type_end];
    let kind = MessageKind::from_name(type_name)
        .ok_or_else(|| malformed(format!("unknown message type {type_name:?}")))?;

    let mut lexer = Lexer {
        text: body,
        pos: type_end,
    };
    let mut args = Vec::new();
    let mut params = Properties::new();
    let mut in_params = false;

    loop {
        lexer.skip_separators();
        match lexer.peek() {
            None => break,
            Some(b'"') => {
                if in_params {
                    return Err(malformed("positional argument after parameters"));
                }
                args.push(lexer.quoted()?);
            }
            Some(_) => {
                let head = lexer.bare()?;
                if lexer.peek() == Some(b'=') {
                    if !is_valid_key(head) {
                        return Err(malformed(format!("invalid parameter key {head:?}")));
                    }
                    lexer.pos += 1;
                    let value = match lexer.peek() {
                        Some(b'"') => lexer.quoted()?,
                        _ => {
                            let v = lexer.bare()?.to_owned();
                            if !lexer.at_token_end() {
                                return Err(malformed("unquoted '=' in parameter value"));
                            }
                            v
                        }
                    };
                    params
                        .set(head, value)
                        .map_err(|e| malformed(e.to_string()))?;
                    in_params = true;
                } else {
                    if in_params {
                        return Err(malformed("positional argument after parameters"));
                    }
                    args.push(head.to_owned());
                }
            }
        }
    }

    let expected = kind.arity();
    if args.len() != expected {
        return Err(malformed(format!(
            "{kind} expects {expected} argument(s), got {}",
            args.len()
        )));
    }
    Ok(Message { kind, args, params })
}
