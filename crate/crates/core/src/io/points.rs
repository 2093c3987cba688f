use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{default_units, header_line, push_tokens, read_file, read_header, write_file, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::geometry::{Dim, Point, PointCloud};
use crate::scalar::Real;

pub(crate) const FORMAT: &str = "points";

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dim: Dim,
    n: usize,
    units: String,
    descriptor_dim: usize,
    metadata: BTreeMap<String, serde_json::Value>,
}

/// Record: `id x y [z] [d1 ... dD]`.
pub fn format_points<T: Real>(cloud: &PointCloud<T>) -> Result<String> {
    let d = cloud.descriptor_dim();
    let units = cloud
        .metadata
        .get("units")
        .and_then(|u| u.as_str())
        .unwrap_or(default_units(cloud.dim));
    let mut out = header_line(&Header {
        format: FORMAT.into(),
        version: FORMAT_VERSION,
        dim: cloud.dim,
        n: cloud.len(),
        units: units.into(),
        descriptor_dim: d,
        metadata: cloud.metadata.clone(),
    })?;
    let m = cloud.dim.count();
    for p in &cloud.points {
        out.push_str(&p.id.to_string());
        push_tokens(&mut out, &p.coords[..m]);
        match &p.descriptor {
            Some(desc) if desc.len() == d => push_tokens(&mut out, desc),
            None if d == 0 => {}
            _ => {
                return Err(Error::invalid(format!(
                    "point {} lacks a {d}-dimensional descriptor",
                    p.id
                )))
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_points<T: Real>(text: &str) -> Result<PointCloud<T>> {
    let (h, mut lines): (Header, _) = read_header(text, FORMAT)?;
    let m = h.dim.count();
    let mut points = Vec::with_capacity(h.n);
    for _ in 0..h.n {
        let line = lines.next_line("point record")?;
        let mut tok = line.tokens();
        let id = tok.parse("point id")?;
        let mut coords = [T::zero(); 3];
        for c in coords.iter_mut().take(m) {
            *c = tok.parse("coordinate")?;
        }
        let mut p = Point::new(id, coords);
        if h.descriptor_dim > 0 {
            p.descriptor = Some(tok.parse_n(h.descriptor_dim, "descriptor value")?);
        }
        tok.finish()?;
        points.push(p);
    }
    lines.expect_end()?;
    let mut cloud = PointCloud::new(h.dim, points)?;
    cloud.metadata = h.metadata;
    Ok(cloud)
}

pub fn write_points<T: Real>(path: &Path, cloud: &PointCloud<T>) -> Result<()> {
    write_file(path, &format_points(cloud)?)
}

pub fn read_points<T: Real>(path: &Path) -> Result<PointCloud<T>> {
    parse_points(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_synthetic, SceneKind, SyntheticParams};

    #[test]
    fn round_trip_with_descriptors() {
        for dim in [Dim::Two, Dim::Three] {
            let mut p = SyntheticParams::new(SceneKind::UniformBox, 50, dim, 1);
            p.descriptor_dim = 4;
            let c = generate_synthetic::<f64>(&p).unwrap().cloud;
            let text = format_points(&c).unwrap();
            assert_eq!(parse_points::<f64>(&text).unwrap(), c);
            let c32 = generate_synthetic::<f32>(&p).unwrap().cloud;
            assert_eq!(parse_points::<f32>(&format_points(&c32).unwrap()).unwrap(), c32);
        }
    }

    #[test]
    fn record_layout() {
        let c = PointCloud::new(Dim::Two, vec![Point::new(7, [1.5, -2.0, 0.0])]).unwrap();
        let text = format_points(&c).unwrap();
        assert_eq!(text.lines().nth(1), Some("7 1.5 -2"));
        assert!(text.starts_with("{\"format\":\"points\",\"version\":1,\"dim\":2,\"n\":1,\"units\":\"px\""));
    }

    #[test]
    fn truncated_file_names_offset() {
        let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::Grid, 8, Dim::Three, 0))
            .unwrap()
            .cloud;
        let text = format_points(&c).unwrap();
        let cut = &text[..text.len() - 4];
        match parse_points::<f64>(cut) {
            Err(Error::Parse { offset, message, .. }) => {
                assert_eq!(offset, cut.len());
                assert!(message.contains("truncated"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let last_line_start = text[..text.len() - 1].rfind('\n').unwrap() + 1;
        let cut = &text[..last_line_start];
        assert!(matches!(parse_points::<f64>(cut), Err(Error::Parse { offset, .. }) if offset == cut.len()));
    }

    #[test]
    fn bad_field_reports_its_line() {
        let text = "{\"format\":\"points\",\"version\":1,\"dim\":3,\"n\":2,\"units\":\"m\",\"descriptor_dim\":0,\"metadata\":{}}\n1 0 0 0\n2 0 x 0\n";
        match parse_points::<f64>(text) {
            Err(Error::Parse { line, offset, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(offset, text.find("2 0 x").unwrap());
            }
            other => panic!("{other:?}"),
        }
    }
}
