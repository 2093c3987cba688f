use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{header_line, read_file, read_header, write_file, FORMAT_VERSION};
use crate::error::Result;
use crate::scalar::Real;
use crate::sidecar::SceneSidecar;

pub(crate) const FORMAT: &str = "sidecar";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
}

/// Header line followed by the whole sidecar as one JSON line.
pub fn format_sidecar<T: Real>(sidecar: &SceneSidecar<T>) -> Result<String> {
    let mut out = header_line(&Header {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
    })?;
    out.push_str(&serde_json::to_string(sidecar)?);
    out.push('\n');
    Ok(out)
}

pub fn parse_sidecar<T: Real>(text: &str) -> Result<SceneSidecar<T>> {
    let (_, mut lines): (Header, _) = read_header(text, FORMAT)?;
    let at = lines.next_line("sidecar body")?;
    let sidecar: SceneSidecar<T> =
        serde_json::from_str(at.text).map_err(|e| at.error(format!("invalid sidecar: {e}")))?;
    sidecar.original.validate()?;
    lines.expect_end()?;
    Ok(sidecar)
}

pub fn write_sidecar<T: Real>(path: &Path, sidecar: &SceneSidecar<T>) -> Result<()> {
    write_file(path, &format_sidecar(sidecar)?)
}

pub fn read_sidecar<T: Real>(path: &Path) -> Result<SceneSidecar<T>> {
    parse_sidecar(&read_file(path)?)
}
