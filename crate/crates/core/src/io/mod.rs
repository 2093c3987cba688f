//! Line-oriented text formats.
//!
//! Every file starts with a one-line JSON header carrying at least `format`
//! and `version`, followed by one whitespace-separated record per line.
//! Floats are written in their shortest round-tripping form, so writing a
//! parsed file reproduces it byte for byte.

mod colmap;
mod neighborhoods;
mod obfuscation;
mod points;
mod recovered;
mod report;
mod sidecar;

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Dim;

pub use colmap::{import_colmap_points3d, read_colmap_points3d};
pub use neighborhoods::{format_neighborhoods, parse_neighborhoods, read_neighborhoods, write_neighborhoods};
pub use obfuscation::{format_obfuscation, parse_obfuscation, read_obfuscation, write_obfuscation};
pub use points::{format_points, parse_points, read_points, write_points};
pub use recovered::{format_recovered, parse_recovered, read_recovered, write_recovered};
pub use report::{format_report, parse_report, read_report, write_report};
pub use sidecar::{format_sidecar, parse_sidecar, read_sidecar, write_sidecar};

pub const FORMAT_VERSION: u32 = 1;

/// Default unit label for a dimension: pixels in 2D, meters in 3D.
pub fn default_units(dim: Dim) -> &'static str {
    match dim {
        Dim::Two => "px",
        Dim::Three => "m",
    }
}

#[derive(Deserialize)]
struct Tag {
    format: String,
    version: u32,
}

pub(crate) fn header_line<H: Serialize>(header: &H) -> Result<String> {
    let mut s = serde_json::to_string(header)?;
    s.push('\n');
    Ok(s)
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    Ok(std::fs::read_to_string(path)?)
}

pub(crate) fn push_tokens<T: std::fmt::Display>(out: &mut String, values: impl IntoIterator<Item = T>) {
    for v in values {
        let _ = write!(out, " {v}");
    }
}

/// Cursor over the lines of a file, tracking byte offsets for errors.
pub(crate) struct Lines<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

pub(crate) struct Line<'a> {
    pub offset: usize,
    pub number: usize,
    pub text: &'a str,
}

impl<'a> Line<'a> {
    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.offset,
            line: self.number,
            message: message.into(),
        }
    }

    pub fn tokens(&self) -> Tokens<'a, '_> {
        Tokens {
            line: self,
            rest: self.text,
        }
    }
}

impl<'a> Lines<'a> {
    pub fn new(text: &'a str) -> Self {
        Lines { text, pos: 0, line: 0 }
    }

    fn eof_error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.text.len(),
            line: self.line + 1,
            message: message.into(),
        }
    }

    /// Next line; a final line without its newline counts as truncated.
    pub fn next_line(&mut self, what: &str) -> Result<Line<'a>> {
        if self.pos >= self.text.len() {
            return Err(self.eof_error(format!("unexpected end of file, expected {what}")));
        }
        let rest = &self.text[self.pos..];
        let Some(end) = rest.find('\n') else {
            return Err(self.eof_error(format!("truncated {what}: missing line terminator")));
        };
        let line = Line {
            offset: self.pos,
            number: self.line + 1,
            text: rest[..end].strip_suffix('\r').unwrap_or(&rest[..end]),
        };
        self.pos += end + 1;
        self.line += 1;
        Ok(line)
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.text.len()
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.text[self.pos..].trim().is_empty() {
            Ok(())
        } else {
            Err(Error::Parse {
                offset: self.pos,
                line: self.line + 1,
                message: "unexpected content after the last record".into(),
            })
        }
    }
}

pub(crate) struct Tokens<'a, 'l> {
    line: &'l Line<'a>,
    rest: &'a str,
}

impl<'a> Tokens<'a, '_> {
    fn next_token(&mut self) -> Option<&'a str> {
        let s = self.rest.trim_start_matches(|c: char| c.is_ascii_whitespace());
        if s.is_empty() {
            self.rest = s;
            return None;
        }
        let end = s.find(|c: char| c.is_ascii_whitespace()).unwrap_or(s.len());
        self.rest = &s[end..];
        Some(&s[..end])
    }

    pub fn next_str(&mut self, what: &str) -> Result<&'a str> {
        self.next_token()
            .ok_or_else(|| self.line.error(format!("missing {what}")))
    }

    pub fn parse<V: FromStr>(&mut self, what: &str) -> Result<V> {
        let tok = self.next_str(what)?;
        tok.parse()
            .map_err(|_| self.line.error(format!("invalid {what} '{tok}'")))
    }

    pub fn parse_n<V: FromStr>(&mut self, n: usize, what: &str) -> Result<Vec<V>> {
        (0..n).map(|_| self.parse(what)).collect()
    }

    pub fn optional<V: FromStr>(&mut self, what: &str) -> Result<Option<V>> {
        match self.next_str(what)? {
            "-" => Ok(None),
            tok => tok
                .parse()
                .map(Some)
                .map_err(|_| self.line.error(format!("invalid {what} '{tok}'"))),
        }
    }

    /// Everything after the consumed tokens, trimmed.
    pub fn remainder(self) -> &'a str {
        self.rest.trim()
    }

    pub fn finish(mut self) -> Result<()> {
        match self.next_token() {
            None => Ok(()),
            Some(tok) => Err(self.line.error(format!("unexpected extra field '{tok}'"))),
        }
    }
}

/// Reads and checks the header line, returning it and the record cursor.
pub(crate) fn read_header<'a, H: DeserializeOwned>(text: &'a str, format: &str) -> Result<(H, Lines<'a>)> {
    let mut lines = Lines::new(text);
    let line = lines.next_line("header")?;
    let tag: Tag = serde_json::from_str(line.text).map_err(|e| line.error(format!("invalid header: {e}")))?;
    if tag.format != format {
        return Err(line.error(format!("expected a {format} file, found '{}'", tag.format)));
    }
    if tag.version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            format: format.to_string(),
            expected: FORMAT_VERSION,
            found: tag.version,
        });
    }
    let header = serde_json::from_str(line.text).map_err(|e| line.error(format!("invalid header: {e}")))?;
    Ok((header, lines))
}
