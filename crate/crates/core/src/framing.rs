//! Splits a byte stream into lines.

use std::collections::VecDeque;
use std::io::{self, Read};

/// Default cap on a single line; in-memory images travel base64-encoded
/// inside one line.
pub const DEFAULT_MAX_LINE: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line exceeds {limit} bytes")]
pub struct LineTooLong {
    pub limit: usize,
}

impl From<LineTooLong> for io::Error {
    fn from(e: LineTooLong) -> Self {
        io::Error::new(io::ErrorKind::InvalidData, e)
    }
}

/// Incremental `\n` splitter. A trailing `\r` is stripped from every line.
#[derive(Debug)]
pub struct LineSplitter {
    buf: Vec<u8>,
    max_line: usize,
}

impl Default for LineSplitter {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_LINE)
    }
}

impl LineSplitter {
    pub fn new(max_line: usize) -> Self {
        Self {
            buf: Vec::new(),
            max_line,
        }
    }

    /// Feeds a chunk and returns every line it completed.
    pub fn push(&mut self, chunk: &[u8]) -> Result<Vec<String>, LineTooLong> {
        let mut lines = Vec::new();
        let mut rest = chunk;
        while let Some(nl) = rest.iter().position(|&b| b == b'\n') {
            if self.buf.len() + nl > self.max_line {
                self.buf.clear();
                return Err(LineTooLong {
                    limit: self.max_line,
                });
            }
            self.buf.extend_from_slice(&rest[..nl]);
            lines.push(take_line(&mut self.buf));
            rest = &rest[nl + 1..];
        }
        if self.buf.len() + rest.len() > self.max_line {
            self.buf.clear();
            return Err(LineTooLong {
                limit: self.max_line,
            });
        }
        self.buf.extend_from_slice(rest);
        Ok(lines)
    }

    /// Signals end of stream; returns the unterminated tail, if any.
    pub fn finish(&mut self) -> Option<String> {
        if self.buf.is_empty() {
            None
        } else {
            Some(take_line(&mut self.buf))
        }
    }
}

fn take_line(buf: &mut Vec<u8>) -> String {
    if buf.last() == Some(&b'\r') {
        buf.pop();
    }
    let line = String::from_utf8_lossy(buf).into_owned();
    buf.clear();
    line
}

/// Blocking line reader over any byte source.
pub struct LineReader<R> {
    inner: R,
    splitter: LineSplitter,
    ready: VecDeque<String>,
    done: bool,
    chunk: Box<[u8]>,
}

impl<R: Read> LineReader<R> {
    pub fn new(inner: R) -> Self {
        Self::with_limit(inner, DEFAULT_MAX_LINE)
    }

    pub fn with_limit(inner: R, max_line: usize) -> Self {
        Self {
            inner,
            splitter: LineSplitter::new(max_line),
            ready: VecDeque::new(),
            done: false,
            chunk: vec![0u8; 64 * 1024].into_boxed_slice(),
        }
    }

    /// Next line, or `None` at end of stream.
    pub fn next_line(&mut self) -> io::Result<Option<String>> {
        loop {
            if let Some(line) = self.ready.pop_front() {
                return Ok(Some(line));
            }
            if self.done {
                return Ok(None);
            }
            let n = match self.inner.read(&mut self.chunk) {
                Ok(n) => n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e),
            };
            if n == 0 {
                self.done = true;
                self.ready.extend(self.splitter.finish());
            } else {
                let lines = self.splitter.push(&self.chunk[..n])?;
                self.ready.extend(lines);
            }
        }
    }
}
