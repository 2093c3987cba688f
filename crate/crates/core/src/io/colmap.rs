use std::borrow::Cow;
use std::path::Path;

use super::{read_file, Lines};
use crate::error::Result;
use crate::geometry::{Dim, Point, PointCloud};
use crate::scalar::Real;

/// Reads a COLMAP `points3D.txt` table: `POINT3D_ID X Y Z R G B ERROR
/// TRACK[]`. Only the id and position are kept; `#` lines are comments.
pub fn import_colmap_points3d<T: Real>(text: &str) -> Result<PointCloud<T>> {
    let text: Cow<'_, str> = if text.is_empty() || text.ends_with('\n') {
        Cow::Borrowed(text)
    } else {
        Cow::Owned(format!("{text}\n"))
    };
    let mut lines = Lines::new(&text);
    let mut points = Vec::new();
    while !lines.at_end() {
        let at = lines.next_line("point row")?;
        let trimmed = at.text.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tok = at.tokens();
        let id = tok.parse("point id")?;
        let coords = [tok.parse("x")?, tok.parse("y")?, tok.parse("z")?];
        points.push(Point::new(id, coords));
    }
    let mut cloud = PointCloud::new(Dim::Three, points)?;
    cloud
        .metadata
        .insert("source".into(), serde_json::Value::String("colmap_points3d".into()));
    Ok(cloud)
}

pub fn read_colmap_points3d<T: Real>(path: &Path) -> Result<PointCloud<T>> {
    import_colmap_points3d(&read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    const SAMPLE: &str = "# 3D point list with one line of data per point:\n\
#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n\
# Number of points: 2, mean track length: 2\n\
17 0.5 -1.25 3 255 0 0 0.4 1 10 2 11\n\
\n\
42 1e-3 2 -4.5 0 255 0 1.1 3 5 4 6\n";

    #[test]
    fn reads_ids_and_positions() {
        let c = import_colmap_points3d::<f64>(SAMPLE).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.points[0].id, 17);
        assert_eq!(c.points[1].coords, [0.001, 2.0, -4.5]);
        assert!(c.points[0].descriptor.is_none());
        let no_newline = SAMPLE.trim_end();
        assert_eq!(import_colmap_points3d::<f64>(no_newline).unwrap().len(), 2);
    }

    #[test]
    fn malformed_row_reports_position() {
        let text = "1 0 0 0 0 0 0 0\n2 0 zz 0\n";
        assert!(matches!(
            import_colmap_points3d::<f64>(text),
            Err(Error::Parse {
                offset: 16,
                line: 2,
                ..
            })
        ));
    }
}
