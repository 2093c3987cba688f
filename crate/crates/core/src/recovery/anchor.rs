//! Initialization anchor, used only where the closed-form solve leaves a
//! coordinate unconstrained.

use rand::Rng;

use crate::geometry::{centroid, vec3, Axis, Dim, Vec3};
use crate::obfuscation::{ItemGeometry, ObfuscatedCloud};
use crate::rng::seeded;
use crate::scalar::Real;

/// Number of random line pairs intersected for line-based schemes.
pub const ANCHOR_SAMPLES: usize = 10_000;
const PARALLEL_CROSS: f64 = 1e-9;

/// Line clouds: centroid of sampled pairwise intersections of the lines
/// projected onto `z = 0` (3D) or of the lines themselves (2D). Planes: mean
/// offset per axis. Permuted points: their centroid.
pub fn init_anchor<T: Real>(obf: &ObfuscatedCloud<T>, seed: u64) -> Vec3<T> {
    if obf.scheme.is_line_based() {
        return line_anchor(obf, seed);
    }
    let mut sums = [T::zero(); 3];
    let mut counts = [0usize; 3];
    let mut points = Vec::new();
    for item in &obf.items {
        match &item.geometry {
            ItemGeometry::Plane(pl) => {
                let k = pl.axis.index();
                sums[k] = sums[k] + pl.offset;
                counts[k] += 1;
            }
            ItemGeometry::Point(p) => points.push(*p),
            _ => {}
        }
    }
    if !points.is_empty() {
        return centroid(&points).unwrap_or_else(vec3::zero);
    }
    let mut anchor = vec3::zero::<T>();
    for a in Axis::ALL {
        let k = a.index();
        if counts[k] > 0 {
            anchor[k] = sums[k] / T::from_usize_lossy(counts[k]);
        }
    }
    anchor
}

fn line_anchor<T: Real>(obf: &ObfuscatedCloud<T>, seed: u64) -> Vec3<T> {
    // projected 2D lines with unit direction
    let lines: Vec<([f64; 2], [f64; 2])> = obf
        .items
        .iter()
        .filter_map(|it| it.geometry.as_line())
        .filter_map(|l| {
            let (b, d) = (vec3::to_f64(&l.base), vec3::to_f64(&l.direction));
            let n = (d[0] * d[0] + d[1] * d[1]).sqrt();
            (n > 1e-12).then(|| ([b[0], b[1]], [d[0] / n, d[1] / n]))
        })
        .collect();
    let fallback = || {
        let bases: Vec<Vec3<T>> = obf
            .items
            .iter()
            .filter_map(|it| it.geometry.as_line())
            .map(|l| l.base)
            .collect();
        centroid(&bases).unwrap_or_else(vec3::zero)
    };
    if lines.len() < 2 {
        return fallback();
    }
    let mut rng = seeded(seed);
    let (mut sx, mut sy, mut count) = (0.0, 0.0, 0usize);
    for _ in 0..ANCHOR_SAMPLES {
        let i = rng.random_range(0..lines.len());
        let mut j = rng.random_range(0..lines.len() - 1);
        if j >= i {
            j += 1;
        }
        let ((b1, d1), (b2, d2)) = (lines[i], lines[j]);
        let cross = d1[0] * d2[1] - d1[1] * d2[0];
        if cross.abs() < PARALLEL_CROSS {
            continue;
        }
        let w = [b2[0] - b1[0], b2[1] - b1[1]];
        let s = (w[0] * d2[1] - w[1] * d2[0]) / cross;
        sx += b1[0] + s * d1[0];
        sy += b1[1] + s * d1[1];
        count += 1;
    }
    if count < 2 {
        return fallback();
    }
    let c = [sx / count as f64, sy / count as f64, 0.0];
    debug_assert!(obf.dim == Dim::Three || c[2] == 0.0);
    vec3::cast(&c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{AxisPlaneGeom, LineGeom};
    use crate::obfuscation::{obfuscate, ObfuscatedItem, ObfuscationMeta, ObfuscationOptions, Scheme};
    use crate::synthetic::{generate_synthetic, SceneKind, SyntheticParams};

    fn cloud(scheme: Scheme, dim: Dim, geoms: Vec<ItemGeometry<f64>>) -> ObfuscatedCloud<f64> {
        ObfuscatedCloud {
            scheme,
            dim,
            items: geoms
                .into_iter()
                .enumerate()
                .map(|(i, g)| ObfuscatedItem {
                    id: i as u64,
                    geometry: g,
                    descriptors: vec![],
                })
                .collect(),
            metadata: ObfuscationMeta::default(),
        }
    }

    #[test]
    fn lines_through_origin() {
        let mut rng = seeded(3);
        let geoms = (0..200)
            .map(|_| {
                let d: Vec3<f64> = [
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                ];
                let l = LineGeom::new(Dim::Three, [0.0; 3], d).unwrap();
                ItemGeometry::Line(LineGeom {
                    base: l.at(rng.random_range(-3.0..3.0)),
                    ..l
                })
            })
            .collect();
        let a = init_anchor(&cloud(Scheme::Line3d, Dim::Three, geoms), 1);
        assert!(vec3::norm(&a) < 1e-6, "{a:?}");
    }

    #[test]
    fn plane_offset_means() {
        let geoms = vec![
            ItemGeometry::Plane(AxisPlaneGeom::new(Axis::X, 0.0)),
            ItemGeometry::Plane(AxisPlaneGeom::new(Axis::X, 2.0)),
            ItemGeometry::Plane(AxisPlaneGeom::new(Axis::Y, 1.0)),
            ItemGeometry::Plane(AxisPlaneGeom::new(Axis::Z, 3.0)),
            ItemGeometry::Plane(AxisPlaneGeom::new(Axis::Z, 5.0)),
        ];
        assert_eq!(
            init_anchor(&cloud(Scheme::Plane, Dim::Three, geoms), 0),
            [1.0, 1.0, 4.0]
        );
    }

    #[test]
    fn too_few_lines_fall_back_to_base_centroid() {
        let l = LineGeom::new(Dim::Three, [1.0, 2.0, 3.0], [0.0, 0.0, 1.0]).unwrap();
        let a = init_anchor(&cloud(Scheme::Line3d, Dim::Three, vec![ItemGeometry::Line(l)]), 0);
        assert_eq!(a, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn anchor_lies_in_bounding_box() {
        for dim in [Dim::Two, Dim::Three] {
            let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::UniformBox, 500, dim, 5))
                .unwrap()
                .cloud;
            let (lo, hi) = c.bounding_box().unwrap();
            let scheme = if dim == Dim::Two {
                Scheme::Line2d
            } else {
                Scheme::Line3d
            };
            for s in [scheme, Scheme::Cp] {
                let o = obfuscate(&c, s, 2, &ObfuscationOptions::default()).unwrap();
                let a = init_anchor(&o.cloud, 9);
                // line anchors are placed on z = 0 by construction
                let axes = if s.is_line_based() { 2 } else { dim.count() };
                for k in 0..axes {
                    assert!(a[k] >= lo[k] && a[k] <= hi[k], "{s} {a:?}");
                }
            }
        }
    }
}
