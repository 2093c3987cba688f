//! Deterministic synthetic scenes standing in for SfM reconstructions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vec3, Dim, Point, PointCloud, Vec3};
use crate::rng::{seeded, stage_seed, StreamRng};
use crate::scalar::Real;
use crate::spatial::KdTree;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    UniformBox,
    GaussianBlobs,
    PlanarRooms,
    Grid,
}

impl SceneKind {
    pub fn name(self) -> &'static str {
        match self {
            SceneKind::UniformBox => "uniform_box",
            SceneKind::GaussianBlobs => "gaussian_blobs",
            SceneKind::PlanarRooms => "planar_rooms",
            SceneKind::Grid => "grid",
        }
    }
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SceneKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            SceneKind::UniformBox,
            SceneKind::GaussianBlobs,
            SceneKind::PlanarRooms,
            SceneKind::Grid,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::invalid(format!("unknown scene kind '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticParams {
    pub kind: SceneKind,
    pub n: usize,
    pub dim: Dim,
    pub seed: u64,
    /// Side length of the scene box; `None` picks 1 m in 3D and 640 px in 2D.
    pub extent: Option<f64>,
    /// 0 disables descriptors.
    pub descriptor_dim: usize,
    /// Number of spatial clusters sharing a descriptor distribution.
    pub descriptor_clusters: usize,
    pub descriptor_noise: f64,
    pub blobs: usize,
    /// Blob standard deviation as a fraction of the extent.
    pub blob_std: f64,
    /// Number of planes for `planar_rooms`; random in 2..=6 (2..=4 in 2D) when unset.
    pub planes: Option<usize>,
    pub clutter_fraction: f64,
}

impl SyntheticParams {
    pub fn new(kind: SceneKind, n: usize, dim: Dim, seed: u64) -> Self {
        SyntheticParams {
            kind,
            n,
            dim,
            seed,
            ..SyntheticParams::default()
        }
    }

    pub fn extent(&self) -> f64 {
        self.extent.unwrap_or(match self.dim {
            Dim::Two => 640.0,
            Dim::Three => 1.0,
        })
    }
}

impl Default for SyntheticParams {
    fn default() -> Self {
        SyntheticParams {
            kind: SceneKind::UniformBox,
            n: 1000,
            dim: Dim::Three,
            seed: 0,
            extent: None,
            descriptor_dim: 0,
            descriptor_clusters: 64,
            descriptor_noise: 0.25,
            blobs: 4,
            blob_std: 0.05,
            planes: None,
            clutter_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene<T> {
    pub cloud: PointCloud<T>,
    pub plane_labels: Option<BTreeMap<u64, Option<u32>>>,
    pub blob_centers: Option<Vec<Vec3<T>>>,
    pub descriptor_clusters: Option<BTreeMap<u64, u32>>,
}

fn uniform_in_box(dim: Dim, extent: f64, rng: &mut StreamRng) -> Vec3<f64> {
    let mut p = [0.0; 3];
    for c in p.iter_mut().take(dim.count()) {
        *c = rng.random::<f64>() * extent;
    }
    p
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn generate_synthetic<T: Real>(params: &SyntheticParams) -> Result<SyntheticScene<T>> {
    if params.n == 0 {
        return Err(Error::invalid("synthetic scenes need n >= 1"));
    }
    let mut rng = seeded(params.seed);
    let extent = params.extent();
    let m = params.dim.count();
    let mut plane_labels = None;
    let mut blob_centers = None;

    let coords: Vec<Vec3<f64>> = match params.kind {
        SceneKind::UniformBox => (0..params.n)
            .map(|_| uniform_in_box(params.dim, extent, &mut rng))
            .collect(),
        SceneKind::Grid => {
            let side = (1..)
                .find(|s: &usize| s.pow(m as u32) >= params.n)
                .expect("side exists");
            (0..params.n)
                .map(|i| {
                    let mut p = [0.0; 3];
                    let mut rest = i;
                    for a in (0..m).rev() {
                        p[a] = (rest % side) as f64;
                        rest /= side;
                    }
                    p
                })
                .collect()
        }
        SceneKind::GaussianBlobs => {
            let k = params.blobs.max(1);
            let centers: Vec<Vec3<f64>> = (0..k)
                .map(|_| {
                    let mut c = uniform_in_box(params.dim, extent * 0.6, &mut rng);
                    for v in c.iter_mut().take(m) {
                        *v += 0.2 * extent;
                    }
                    c
                })
                .collect();
            let std = params.blob_std * extent;
            let pts = (0..params.n)
                .map(|i| {
                    let mut p = centers[i % k];
                    for v in p.iter_mut().take(m) {
                        *v += std * normal(&mut rng);
                    }
                    p
                })
                .collect();
            blob_centers = Some(centers.iter().map(vec3::cast).collect());
            pts
        }
        SceneKind::PlanarRooms => {
            // box faces: (axis, at_max)
            let mut faces: Vec<(usize, bool)> = (0..m).flat_map(|a| [(a, false), (a, true)]).collect();
            faces.shuffle(&mut rng);
            let max_planes = faces.len();
            let count = match params.planes {
                Some(p) if (1..=max_planes).contains(&p) => p,
                Some(p) => {
                    return Err(Error::invalid(format!(
                        "planar_rooms supports 1..={max_planes} planes, got {p}"
                    )))
                }
                None => rng.random_range(2..=max_planes),
            };
            faces.truncate(count);
            let clutter = ((params.n as f64) * params.clutter_fraction.clamp(0.0, 1.0)).round() as usize;
            let on_planes = params.n - clutter;
            let mut labels = Vec::with_capacity(params.n);
            let mut pts = Vec::with_capacity(params.n);
            for i in 0..on_planes {
                let plane = i % count;
                let (axis, at_max) = faces[plane];
                let mut p = uniform_in_box(params.dim, extent, &mut rng);
                p[axis] = if at_max { extent } else { 0.0 };
                pts.push(p);
                labels.push(Some(plane as u32));
            }
            for _ in 0..clutter {
                pts.push(uniform_in_box(params.dim, extent, &mut rng));
                labels.push(None);
            }
            plane_labels = Some(labels);
            pts
        }
    };

    let mut points: Vec<Point<T>> = coords
        .iter()
        .enumerate()
        .map(|(i, c)| Point::new(i as u64, vec3::cast(c)))
        .collect();

    let mut descriptor_clusters = None;
    if params.descriptor_dim > 0 {
        let mut drng = seeded(stage_seed(params.seed, "descriptors"));
        let clusters = assign_descriptor_clusters(&coords, m, params.descriptor_clusters, &mut drng);
        let k = clusters.iter().max().map_or(0, |&c| c as usize + 1);
        let d = params.descriptor_dim;
        let means: Vec<Vec<f64>> = (0..k)
            .map(|_| unit((0..d).map(|_| normal(&mut drng)).collect()))
            .collect();
        let scale = params.descriptor_noise / (d as f64).sqrt();
        for (p, &c) in points.iter_mut().zip(&clusters) {
            let raw: Vec<f64> = means[c as usize]
                .iter()
                .map(|&mu| mu + scale * normal(&mut drng))
                .collect();
            p.descriptor = Some(unit(raw).into_iter().map(T::lit).collect());
        }
        descriptor_clusters = Some(points.iter().map(|p| p.id).zip(clusters).collect());
    }

    let mut cloud = PointCloud::new(params.dim, points)?;
    cloud.metadata.insert("generator".into(), serde_json::to_value(params)?);
    let plane_labels = plane_labels.map(|l| cloud.points.iter().map(|p| p.id).zip(l).collect());
    Ok(SyntheticScene {
        cloud,
        plane_labels,
        blob_centers,
        descriptor_clusters,
    })
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.into_iter().map(|x| x / n).collect()
    } else {
        v
    }
}

/// Voronoi cells of `k` seed points drawn from the cloud.
fn assign_descriptor_clusters(coords: &[Vec3<f64>], m: usize, k: usize, rng: &mut StreamRng) -> Vec<u32> {
    let k = k.clamp(1, coords.len());
    let mut idx: Vec<usize> = (0..coords.len()).collect();
    idx.shuffle(rng);
    let seeds: Vec<Vec3<f64>> = idx[..k].iter().map(|&i| coords[i]).collect();
    let tree = KdTree::build(seeds, (0..k as u64).collect(), m);
    coords.iter().map(|c| tree.nearest(c, 1, None)[0].id as u32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_integer_lattice() {
        let s = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::Grid, 27, Dim::Three, 0)).unwrap();
        let mut coords: Vec<[i64; 3]> = s
            .cloud
            .points
            .iter()
            .map(|p| [p.coords[0] as i64, p.coords[1] as i64, p.coords[2] as i64])
            .collect();
        coords.sort();
        let mut expected = Vec::new();
        for x in 0..3 {
            for y in 0..3 {
                for z in 0..3 {
                    expected.push([x, y, z]);
                }
            }
        }
        assert_eq!(coords, expected);
    }

    #[test]
    fn deterministic_under_seed() {
        for kind in [SceneKind::UniformBox, SceneKind::GaussianBlobs, SceneKind::PlanarRooms] {
            let p = SyntheticParams {
                descriptor_dim: 8,
                ..SyntheticParams::new(kind, 300, Dim::Three, 42)
            };
            let a = generate_synthetic::<f64>(&p).unwrap();
            let b = generate_synthetic::<f64>(&p).unwrap();
            assert_eq!(a.cloud, b.cloud);
        }
    }

    #[test]
    fn blob_means_match_centers() {
        // law of large numbers: 2500 samples per blob
        let p = SyntheticParams::new(SceneKind::GaussianBlobs, 10_000, Dim::Three, 7);
        let s = generate_synthetic::<f64>(&p).unwrap();
        let centers = s.blob_centers.unwrap();
        let k = centers.len();
        for (b, c) in centers.iter().enumerate() {
            let members: Vec<Vec3<f64>> = s.cloud.points.iter().skip(b).step_by(k).map(|p| p.coords).collect();
            let mean = crate::geometry::centroid(&members).unwrap();
            assert!(vec3::dist(&mean, c) < 0.05 * p.extent());
        }
    }

    #[test]
    fn planar_rooms_points_lie_on_labelled_faces() {
        let p = SyntheticParams {
            planes: Some(3),
            ..SyntheticParams::new(SceneKind::PlanarRooms, 500, Dim::Three, 3)
        };
        let s = generate_synthetic::<f64>(&p).unwrap();
        let labels = s.plane_labels.unwrap();
        assert_eq!(labels.values().filter(|l| l.is_none()).count(), 50);
        let distinct: std::collections::BTreeSet<_> = labels.values().flatten().collect();
        assert_eq!(distinct.len(), 3);
        assert!(generate_synthetic::<f64>(&SyntheticParams { planes: Some(7), ..p }).is_err());
    }

    #[test]
    fn descriptors_are_unit_and_cluster_correlated() {
        let p = SyntheticParams {
            descriptor_dim: 32,
            descriptor_clusters: 8,
            ..SyntheticParams::new(SceneKind::UniformBox, 400, Dim::Three, 1)
        };
        let s = generate_synthetic::<f64>(&p).unwrap();
        let clusters = s.descriptor_clusters.unwrap();
        let d = |a: &Point<f64>, b: &Point<f64>| -> f64 {
            let (x, y) = (a.descriptor.as_ref().unwrap(), b.descriptor.as_ref().unwrap());
            x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
        };
        let (mut same, mut diff) = (vec![], vec![]);
        for a in &s.cloud.points[..50] {
            let norm: f64 = a.descriptor.as_ref().unwrap().iter().map(|x| x * x).sum();
            assert!((norm - 1.0).abs() < 1e-9);
            for b in &s.cloud.points[50..100] {
                if clusters[&a.id] == clusters[&b.id] {
                    same.push(d(a, b));
                } else {
                    diff.push(d(a, b));
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&same) < 0.5 * mean(&diff));
    }

    #[test]
    fn zero_points_is_an_error() {
        assert!(generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::Grid, 0, Dim::Two, 0)).is_err());
        assert!("cube".parse::<SceneKind>().is_err());
    }
}
