use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{default_units, header_line, push_tokens, read_file, read_header, write_file, FORMAT_VERSION};
use crate::error::Result;
use crate::geometry::{Dim, Vec3};
use crate::neighborhood::SubjectKey;
use crate::obfuscation::Scheme;
use crate::recovery::{RecoveredCloud, RecoveredPoint, RecoveryConfig, Status, SwapAxisVote};
use crate::scalar::Real;

pub(crate) const FORMAT: &str = "recovered";

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
struct Header<T> {
    format: String,
    version: u32,
    scheme: Scheme,
    dim: Dim,
    n: usize,
    units: String,
    config: RecoveryConfig,
    anchor: Vec3<T>,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    swap_axes: Option<BTreeMap<u64, SwapAxisVote>>,
}

fn status_name(s: Status) -> &'static str {
    match s {
        Status::Ok => "ok",
        Status::Degenerate => "degenerate",
        Status::Failed => "failed",
    }
}

/// Record: `item slot status coords inliers neighbors cost iterations
/// descriptor tie [error]`, with `-` for a missing descriptor and the error
/// message as a trailing JSON string.
pub fn format_recovered<T: Real>(rec: &RecoveredCloud<T>) -> Result<String> {
    let mut out = header_line(&Header {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        scheme: rec.scheme,
        dim: rec.dim,
        n: rec.len(),
        units: default_units(rec.dim).into(),
        config: rec.config.clone(),
        anchor: rec.anchor,
        swap_axes: rec.swap_axes.clone(),
    })?;
    let m = rec.dim.count();
    for p in &rec.points {
        out.push_str(&p.subject.item_id.to_string());
        push_tokens(&mut out, [p.subject.slot]);
        out.push(' ');
        out.push_str(status_name(p.status));
        push_tokens(&mut out, &p.point[..m]);
        push_tokens(&mut out, [p.inlier_count, p.neighbor_count]);
        push_tokens(&mut out, [p.final_cost]);
        push_tokens(&mut out, [p.iterations]);
        match p.descriptor {
            Some(d) => push_tokens(&mut out, [d]),
            None => out.push_str(" -"),
        }
        push_tokens(&mut out, [u8::from(p.assignment_tie)]);
        if let Some(e) = &p.error {
            out.push(' ');
            out.push_str(&serde_json::to_string(e)?);
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_recovered<T: Real>(text: &str) -> Result<RecoveredCloud<T>> {
    let (h, mut lines): (Header<T>, _) = read_header(text, FORMAT)?;
    let m = h.dim.count();
    let mut points = Vec::with_capacity(h.n);
    for _ in 0..h.n {
        let at = lines.next_line("recovered point")?;
        let mut tok = at.tokens();
        let item_id = tok.parse("subject item id")?;
        let slot = tok.parse("subject slot")?;
        let status = match tok.next_str("status")? {
            "ok" => Status::Ok,
            "degenerate" => Status::Degenerate,
            "failed" => Status::Failed,
            other => return Err(at.error(format!("invalid status '{other}'"))),
        };
        let mut point = [T::zero(); 3];
        for c in point.iter_mut().take(m) {
            *c = tok.parse("coordinate")?;
        }
        let inlier_count = tok.parse("inlier count")?;
        let neighbor_count = tok.parse("neighbor count")?;
        let final_cost = tok.parse("cost")?;
        let iterations = tok.parse("iterations")?;
        let descriptor = tok.optional("descriptor index")?;
        let assignment_tie = match tok.next_str("tie flag")? {
            "0" => false,
            "1" => true,
            other => return Err(at.error(format!("invalid tie flag '{other}'"))),
        };
        let rest = tok.remainder();
        let error = if rest.is_empty() {
            None
        } else {
            Some(serde_json::from_str(rest).map_err(|e| at.error(format!("invalid error message: {e}")))?)
        };
        points.push(RecoveredPoint {
            subject: SubjectKey::new(item_id, slot),
            point,
            inlier_count,
            neighbor_count,
            final_cost,
            iterations,
            status,
            descriptor,
            assignment_tie,
            error,
        });
    }
    lines.expect_end()?;
    Ok(RecoveredCloud {
        scheme: h.scheme,
        dim: h.dim,
        config: h.config,
        anchor: h.anchor,
        points,
        swap_axes: h.swap_axes,
        wall_time_secs: 0.0,
    })
}

pub fn write_recovered<T: Real>(path: &Path, rec: &RecoveredCloud<T>) -> Result<()> {
    write_file(path, &format_recovered(rec)?)
}

pub fn read_recovered<T: Real>(path: &Path) -> Result<RecoveredCloud<T>> {
    parse_recovered(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neighborhood::oracle_neighborhoods;
    use crate::obfuscation::{obfuscate, ObfuscationOptions};
    use crate::recovery::recover_cloud;
    use crate::synthetic::{generate_synthetic, SceneKind, SyntheticParams};

    fn round_trip(scheme: Scheme, dim: Dim) {
        let mut p = SyntheticParams::new(SceneKind::UniformBox, 150, dim, 2);
        p.descriptor_dim = 4;
        let c = generate_synthetic::<f64>(&p).unwrap().cloud;
        let o = obfuscate(&c, scheme, 1, &ObfuscationOptions::default()).unwrap();
        let nbrs = oracle_neighborhoods(&c, &o.cloud, Some(&o.sidecar), 10).unwrap();
        let mut rec = recover_cloud(&o.cloud, &nbrs, &RecoveryConfig::for_scene(dim, c.diameter())).unwrap();
        rec.wall_time_secs = 0.0;
        rec.points[0].status = Status::Failed;
        rec.points[0].error = Some("unknown id \"7\"\nbad".into());
        let text = format_recovered(&rec).unwrap();
        let back = parse_recovered::<f64>(&text).unwrap();
        assert_eq!(back, rec, "{scheme}");
        assert_eq!(format_recovered(&back).unwrap(), text);
    }

    #[test]
    fn round_trips() {
        round_trip(Scheme::Ppl, Dim::Three);
        round_trip(Scheme::Cp, Dim::Two);
        round_trip(Scheme::Plane, Dim::Three);
    }
}
