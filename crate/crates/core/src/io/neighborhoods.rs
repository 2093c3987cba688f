use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{header_line, push_tokens, read_file, read_header, write_file, FORMAT_VERSION};
use crate::error::Result;
use crate::neighborhood::{Neighborhood, NeighborhoodSet, Provenance, SubjectKey};

pub(crate) const FORMAT: &str = "neighborhoods";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    k: usize,
    n: usize,
    provenance: Provenance,
    seed: Option<u64>,
}

/// Record: `item_id slot n1 ... nK`, sorted by subject.
pub fn format_neighborhoods(set: &NeighborhoodSet) -> Result<String> {
    set.validate()?;
    let mut out = header_line(&Header {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        k: set.k,
        n: set.len(),
        provenance: set.provenance,
        seed: set.seed,
    })?;
    for h in &set.neighborhoods {
        out.push_str(&h.subject.item_id.to_string());
        push_tokens(&mut out, [h.subject.slot]);
        push_tokens(&mut out, &h.neighbors);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_neighborhoods(text: &str) -> Result<NeighborhoodSet> {
    let (h, mut lines): (Header, _) = read_header(text, FORMAT)?;
    let mut hoods = Vec::with_capacity(h.n);
    for _ in 0..h.n {
        let at = lines.next_line("neighborhood record")?;
        let mut tok = at.tokens();
        let item_id = tok.parse("subject item id")?;
        let slot = tok.parse("subject slot")?;
        let neighbors = tok.parse_n(h.k, "neighbor id")?;
        tok.finish()?;
        hoods.push(Neighborhood {
            subject: SubjectKey::new(item_id, slot),
            neighbors,
        });
    }
    lines.expect_end()?;
    NeighborhoodSet::new(h.k, h.provenance, h.seed, hoods)
}

pub fn write_neighborhoods(path: &Path, set: &NeighborhoodSet) -> Result<()> {
    write_file(path, &format_neighborhoods(set)?)
}

pub fn read_neighborhoods(path: &Path) -> Result<NeighborhoodSet> {
    parse_neighborhoods(&read_file(path)?)
}
