use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    default_units, header_line, push_tokens, read_file, read_header, write_file, Line, Tokens, FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::geometry::{vec3, Axis, AxisPlaneGeom, Dim, LineGeom, Vec3};
use crate::obfuscation::{ItemGeometry, ObfuscatedCloud, ObfuscatedItem, ObfuscationMeta, Scheme};
use crate::scalar::Real;

pub(crate) const FORMAT: &str = "obfuscation";

#[derive(Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Real"))]
struct Header<T> {
    format: String,
    version: u32,
    scheme: Scheme,
    dim: Dim,
    n: usize,
    units: String,
    descriptor_dim: usize,
    descriptors_per_item: usize,
    metadata: ObfuscationMeta<T>,
}

/// Records by scheme, each followed by the item's descriptors:
/// lines `id base dir`, rays `id center base dir`, planes `id axis offset`,
/// permuted points `id coords`.
pub fn format_obfuscation<T: Real>(obf: &ObfuscatedCloud<T>) -> Result<String> {
    let d = obf.descriptor_dim();
    let per_item = if d == 0 { 0 } else { obf.scheme.descriptors_per_item() };
    let units = obf
        .metadata
        .params
        .get("units")
        .and_then(|u| u.as_str())
        .unwrap_or(default_units(obf.dim));
    let mut out = header_line(&Header {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        scheme: obf.scheme,
        dim: obf.dim,
        n: obf.len(),
        units: units.into(),
        descriptor_dim: d,
        descriptors_per_item: per_item,
        metadata: obf.metadata.clone(),
    })?;
    let m = obf.dim.count();
    for item in &obf.items {
        out.push_str(&item.id.to_string());
        match (&item.geometry, obf.scheme) {
            (ItemGeometry::Line(l), s) if s.is_line_based() && s != Scheme::Ray => {
                push_tokens(&mut out, &l.base[..m]);
                push_tokens(&mut out, &l.direction[..m]);
            }
            (ItemGeometry::Ray { line, center_id }, Scheme::Ray) => {
                push_tokens(&mut out, [center_id]);
                push_tokens(&mut out, &line.base[..m]);
                push_tokens(&mut out, &line.direction[..m]);
            }
            (ItemGeometry::Plane(p), Scheme::Plane) => {
                out.push(' ');
                out.push_str(p.axis.name());
                push_tokens(&mut out, [p.offset]);
            }
            (ItemGeometry::Point(p), Scheme::Cp) => push_tokens(&mut out, &p[..m]),
            _ => {
                return Err(Error::SchemeMismatch(format!(
                    "item {} does not match scheme {}",
                    item.id, obf.scheme
                )))
            }
        }
        if item.descriptors.len() != per_item || item.descriptors.iter().any(|x| x.len() != d) {
            return Err(Error::invalid(format!(
                "item {} must carry {per_item} descriptors of length {d}",
                item.id
            )));
        }
        for desc in &item.descriptors {
            push_tokens(&mut out, desc);
        }
        out.push('\n');
    }
    Ok(out)
}

fn vector<T: Real>(tok: &mut Tokens<'_, '_>, m: usize, what: &str) -> Result<Vec3<T>> {
    let mut v = [T::zero(); 3];
    for c in v.iter_mut().take(m) {
        *c = tok.parse(what)?;
    }
    Ok(v)
}

fn line<T: Real>(tok: &mut Tokens<'_, '_>, dim: Dim, at: &Line<'_>) -> Result<LineGeom<T>> {
    let base: Vec3<T> = vector(tok, dim.count(), "line base")?;
    let direction: Vec3<T> = vector(tok, dim.count(), "line direction")?;
    let norm = vec3::norm(&direction).as_f64();
    if (norm - 1.0).abs() >= 1e-6 || !vec3::is_finite(&base) {
        return Err(at.error("line direction must be a finite unit vector"));
    }
    Ok(LineGeom { base, direction, dim })
}

pub fn parse_obfuscation<T: Real>(text: &str) -> Result<ObfuscatedCloud<T>> {
    let (h, mut lines): (Header<T>, _) = read_header(text, FORMAT)?;
    if !h.scheme.supports(h.dim) {
        return Err(Error::invalid(format!(
            "scheme {} does not support {}D",
            h.scheme,
            h.dim.count()
        )));
    }
    let m = h.dim.count();
    let mut items = Vec::with_capacity(h.n);
    for _ in 0..h.n {
        let at = lines.next_line("obfuscated item")?;
        let mut tok = at.tokens();
        let id = tok.parse("item id")?;
        let geometry = match h.scheme {
            Scheme::Ray => {
                let center_id: u8 = tok.parse("center id")?;
                if center_id > 1 {
                    return Err(at.error(format!("center id must be 0 or 1, got {center_id}")));
                }
                ItemGeometry::Ray {
                    center_id,
                    line: line(&mut tok, h.dim, &at)?,
                }
            }
            Scheme::Plane => {
                let name = tok.next_str("plane axis")?;
                let axis = Axis::parse(name).ok_or_else(|| at.error(format!("invalid plane axis '{name}'")))?;
                ItemGeometry::Plane(AxisPlaneGeom::new(axis, tok.parse("plane offset")?))
            }
            Scheme::Cp => ItemGeometry::Point(vector(&mut tok, m, "coordinate")?),
            _ => ItemGeometry::Line(line(&mut tok, h.dim, &at)?),
        };
        let descriptors = (0..h.descriptors_per_item)
            .map(|_| tok.parse_n(h.descriptor_dim, "descriptor value"))
            .collect::<Result<_>>()?;
        tok.finish()?;
        items.push(ObfuscatedItem {
            id,
            geometry,
            descriptors,
        });
    }
    lines.expect_end()?;
    Ok(ObfuscatedCloud {
        scheme: h.scheme,
        dim: h.dim,
        items,
        metadata: h.metadata,
    })
}

pub fn write_obfuscation<T: Real>(path: &Path, obf: &ObfuscatedCloud<T>) -> Result<()> {
    write_file(path, &format_obfuscation(obf)?)
}

pub fn read_obfuscation<T: Real>(path: &Path) -> Result<ObfuscatedCloud<T>> {
    parse_obfuscation(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obfuscation::{obfuscate, ObfuscationOptions};
    use crate::synthetic::{generate_synthetic, SceneKind, SyntheticParams};

    #[test]
    fn round_trip_every_scheme() {
        for scheme in Scheme::ALL {
            let dim = if scheme == Scheme::Line2d { Dim::Two } else { Dim::Three };
            for descriptor_dim in [0, 3] {
                let mut p = SyntheticParams::new(SceneKind::GaussianBlobs, 120, dim, 4);
                p.descriptor_dim = descriptor_dim;
                let c = generate_synthetic::<f64>(&p).unwrap().cloud;
                let mut opts = ObfuscationOptions::default();
                opts.ppl.min_plane_inliers = 10;
                let o = obfuscate(&c, scheme, 2, &opts).unwrap();
                let text = format_obfuscation(&o.cloud).unwrap();
                let back = parse_obfuscation::<f64>(&text).unwrap();
                assert_eq!(back, o.cloud, "{scheme}");
                assert_eq!(format_obfuscation(&back).unwrap(), text);
            }
        }
    }

    #[test]
    fn cp_2d_records_have_two_coordinates() {
        let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::Grid, 4, Dim::Two, 0))
            .unwrap()
            .cloud;
        let o = obfuscate(&c, Scheme::Cp, 1, &ObfuscationOptions::default()).unwrap();
        let text = format_obfuscation(&o.cloud).unwrap();
        for line in text.lines().skip(1) {
            assert_eq!(line.split(' ').count(), 3);
        }
    }

    #[test]
    fn rejects_malformed_records() {
        let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::UniformBox, 10, Dim::Three, 0))
            .unwrap()
            .cloud;
        let o = obfuscate(&c, Scheme::Plane, 1, &ObfuscationOptions::default()).unwrap();
        let text = format_obfuscation(&o.cloud).unwrap();
        let bad = text
            .replacen(" x ", " w ", 1)
            .replacen(" y ", " w ", 1)
            .replacen(" z ", " w ", 1);
        assert!(matches!(parse_obfuscation::<f64>(&bad), Err(Error::Parse { .. })));
        let o = obfuscate(&c, Scheme::Line3d, 1, &ObfuscationOptions::default()).unwrap();
        let mut lines: Vec<String> = format_obfuscation(&o.cloud)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        lines[1] = "0 0 0 0 1 1 1".into();
        let text = lines.join("\n") + "\n";
        assert!(matches!(
            parse_obfuscation::<f64>(&text),
            Err(Error::Parse { line: 2, .. })
        ));
    }
}
