//! Geometry obfuscation schemes mapping each point to a set that contains it
//! (a line or a plane) or to a permuted point.
//!
//! Every scheme returns the attacker-visible [`ObfuscatedCloud`] together with
//! a [`SceneSidecar`] holding the ground truth. Items never carry original
//! coordinates or pairing links.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, segment_planes, KMeansParams, PlaneSegmentationParams};
use crate::error::{Error, Result};
use crate::geometry::{vec3, Axis, AxisPlaneGeom, Dim, LineGeom, PointCloud, Vec3};
use crate::rng::{seeded, StreamRng};
use crate::scalar::Real;
use crate::sidecar::{CpSwap, ItemLink, SceneSidecar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Line2d,
    Line3d,
    Ppl,
    PplPlus,
    Ray,
    Plane,
    Cp,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Line2d,
        Scheme::Line3d,
        Scheme::Ppl,
        Scheme::PplPlus,
        Scheme::Ray,
        Scheme::Plane,
        Scheme::Cp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Line2d => "line2d",
            Scheme::Line3d => "line3d",
            Scheme::Ppl => "ppl",
            Scheme::PplPlus => "pplplus",
            Scheme::Ray => "ray",
            Scheme::Plane => "plane",
            Scheme::Cp => "cp",
        }
    }

    pub fn is_paired_lines(self) -> bool {
        matches!(self, Scheme::Ppl | Scheme::PplPlus)
    }

    /// Schemes whose items are lines (all but planes and CP).
    pub fn is_line_based(self) -> bool {
        !matches!(self, Scheme::Plane | Scheme::Cp)
    }

    /// Descriptors per item (when the source cloud carries descriptors).
    pub fn descriptors_per_item(self) -> usize {
        if self.is_paired_lines() {
            2
        } else {
            1
        }
    }

    /// Whether the scheme supports dimension `dim`.
    pub fn supports(self, dim: Dim) -> bool {
        match self {
            Scheme::Line2d => dim == Dim::Two,
            Scheme::Line3d | Scheme::Ppl | Scheme::PplPlus | Scheme::Ray | Scheme::Plane => dim == Dim::Three,
            Scheme::Cp => true,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let normalized = match lower.as_str() {
            "line3d_olc" | "olc" => "line3d",
            "ppl+" | "ppl_plus" => "pplplus",
            other => other,
        };
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == normalized)
            .ok_or_else(|| Error::invalid(format!("unknown scheme '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ItemGeometry<T> {
    Line(LineGeom<T>),
    Ray { line: LineGeom<T>, center_id: u8 },
    Plane(AxisPlaneGeom<T>),
    Point(Vec3<T>),
}

impl<T: Real> ItemGeometry<T> {
    pub fn as_line(&self) -> Option<&LineGeom<T>> {
        match self {
            ItemGeometry::Line(l) | ItemGeometry::Ray { line: l, .. } => Some(l),
            _ => None,
        }
    }

    /// Distance from `p` to the item's point set (CP items: to the point).
    pub fn distance(&self, p: &Vec3<T>) -> T {
        match self {
            ItemGeometry::Line(l) | ItemGeometry::Ray { line: l, .. } => l.distance(p),
            ItemGeometry::Plane(pl) => pl.distance(p),
            ItemGeometry::Point(q) => vec3::dist(p, q),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObfuscatedItem<T> {
    pub id: u64,
    pub geometry: ItemGeometry<T>,
    pub descriptors: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct ObfuscationMeta<T> {
    pub seed: u64,
    /// The two cluster centers of a ray cloud.
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub ray_centers: Option<[Vec3<T>; 2]>,
    /// CP: the odd leftover point that passes through unchanged.
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub unpaired_id: Option<u64>,
    #[serde(default)]
    pub params: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObfuscatedCloud<T> {
    pub scheme: Scheme,
    pub dim: Dim,
    pub items: Vec<ObfuscatedItem<T>>,
    pub metadata: ObfuscationMeta<T>,
}

impl<T: Real> ObfuscatedCloud<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn index_by_id(&self) -> HashMap<u64, usize> {
        self.items.iter().enumerate().map(|(i, it)| (it.id, i)).collect()
    }

    pub fn item_ids(&self) -> Vec<u64> {
        self.items.iter().map(|it| it.id).collect()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.items
            .iter()
            .find_map(|it| it.descriptors.first().map(Vec::len))
            .unwrap_or(0)
    }

    /// Applies `x -> R x + v` to every item. `rotation` must be orthonormal;
    /// axis-aligned schemes accept only the identity rotation.
    pub fn transformed(&self, rotation: &[[T; 3]; 3], translation: &Vec3<T>) -> Result<Self> {
        let rot = |v: &Vec3<T>| -> Vec3<T> {
            [
                vec3::dot(&rotation[0], v),
                vec3::dot(&rotation[1], v),
                vec3::dot(&rotation[2], v),
            ]
        };
        let is_identity = (0..3).all(|i| (0..3).all(|j| rotation[i][j] == if i == j { T::one() } else { T::zero() }));
        let line_tf = |l: &LineGeom<T>| LineGeom {
            base: vec3::add(&rot(&l.base), translation),
            direction: rot(&l.direction),
            dim: l.dim,
        };
        let mut out = self.clone();
        for item in &mut out.items {
            item.geometry = match &item.geometry {
                ItemGeometry::Line(l) => ItemGeometry::Line(line_tf(l)),
                ItemGeometry::Ray { line, center_id } => ItemGeometry::Ray {
                    line: line_tf(line),
                    center_id: *center_id,
                },
                ItemGeometry::Plane(pl) if is_identity => {
                    ItemGeometry::Plane(AxisPlaneGeom::new(pl.axis, pl.offset + translation[pl.axis.index()]))
                }
                ItemGeometry::Point(p) if is_identity => ItemGeometry::Point(vec3::add(p, translation)),
                _ => return Err(Error::invalid("axis-aligned schemes only support translations")),
            };
        }
        if let Some(c) = &mut out.metadata.ray_centers {
            for center in c.iter_mut() {
                *center = vec3::add(&rot(center), translation);
            }
        }
        Ok(out)
    }
}

/// Attacker-visible obfuscation plus its ground truth.
#[derive(Clone, Debug)]
pub struct Obfuscation<T> {
    pub cloud: ObfuscatedCloud<T>,
    pub sidecar: SceneSidecar<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RayCenterAssignment {
    /// Line through the center of the other cluster.
    #[default]
    Opposite,
    /// Line through the point's own cluster center.
    Same,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PplOptions {
    pub plus: bool,
    /// Plane inlier threshold for PPL+; defaults to 1% of the scene diameter.
    pub plane_inlier_threshold: Option<f64>,
    pub max_retries: usize,
    pub min_plane_inliers: usize,
    pub plane_ransac_iters: usize,
}

impl Default for PplOptions {
    fn default() -> Self {
        PplOptions {
            plus: false,
            plane_inlier_threshold: None,
            max_retries: 20,
            min_plane_inliers: 50,
            plane_ransac_iters: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObfuscationOptions {
    pub ppl: PplOptions,
    pub ray_assignment: RayCenterAssignment,
}

/// Runs the obfuscation for `scheme`.
pub fn obfuscate<T: Real>(
    cloud: &PointCloud<T>,
    scheme: Scheme,
    seed: u64,
    opts: &ObfuscationOptions,
) -> Result<Obfuscation<T>> {
    if !scheme.supports(cloud.dim) {
        return Err(Error::invalid(format!(
            "scheme {scheme} does not support {}D clouds",
            cloud.dim.count()
        )));
    }
    match scheme {
        Scheme::Line2d | Scheme::Line3d => obfuscate_random_lines(cloud, seed),
        Scheme::Ppl | Scheme::PplPlus => {
            let ppl = PplOptions {
                plus: scheme == Scheme::PplPlus,
                ..opts.ppl
            };
            obfuscate_ppl(cloud, seed, &ppl)
        }
        Scheme::Ray => obfuscate_ray(cloud, seed, opts.ray_assignment),
        Scheme::Plane => obfuscate_planes(cloud, seed),
        Scheme::Cp => obfuscate_cp(cloud, seed),
    }
}

fn random_direction<T: Real>(dim: Dim, rng: &mut StreamRng) -> Vec3<T> {
    match dim {
        Dim::Two => {
            let theta = rng.random::<f64>() * std::f64::consts::TAU;
            [T::lit(theta.cos()), T::lit(theta.sin()), T::zero()]
        }
        Dim::Three => loop {
            let v: [f64; 3] = [
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
                StandardNormal.sample(rng),
            ];
            let n = vec3::norm(&v);
            if n > 1e-12 {
                break vec3::cast(&vec3::scale(&v, 1.0 / n));
            }
        },
    }
}

/// Moves the stored base to a random position along the line, so it does
/// not coincide with the source point.
fn hide_base<T: Real>(line: LineGeom<T>, extent: f64, rng: &mut StreamRng) -> LineGeom<T> {
    let u = if extent > 0.0 {
        rng.random_range(-extent..=extent)
    } else {
        0.0
    };
    LineGeom {
        base: line.at(T::lit(u)),
        ..line
    }
}

fn identity_links<T: Real>(cloud: &PointCloud<T>) -> Vec<ItemLink> {
    cloud
        .points
        .iter()
        .map(|p| ItemLink {
            item_id: p.id,
            sources: vec![p.id],
        })
        .collect()
}

fn descriptor_list<T: Real>(d: &Option<Vec<T>>) -> Vec<Vec<T>> {
    d.iter().cloned().collect()
}

fn meta<T>(seed: u64) -> ObfuscationMeta<T> {
    ObfuscationMeta {
        seed,
        ray_centers: None,
        unpaired_id: None,
        params: BTreeMap::new(),
    }
}

/// One random-direction line through every point (OLC in 3D, its 2D
/// analogue for 2D clouds).
pub fn obfuscate_random_lines<T: Real>(cloud: &PointCloud<T>, seed: u64) -> Result<Obfuscation<T>> {
    let mut rng = seeded(seed);
    let extent = cloud.diameter().as_f64();
    let items = cloud
        .points
        .iter()
        .map(|p| {
            let dir = random_direction(cloud.dim, &mut rng);
            let line = LineGeom::new(cloud.dim, p.coords, dir)?;
            Ok(ObfuscatedItem {
                id: p.id,
                geometry: ItemGeometry::Line(hide_base(line, extent, &mut rng)),
                descriptors: descriptor_list(&p.descriptor),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let scheme = match cloud.dim {
        Dim::Two => Scheme::Line2d,
        Dim::Three => Scheme::Line3d,
    };
    Ok(Obfuscation {
        cloud: ObfuscatedCloud {
            scheme,
            dim: cloud.dim,
            items,
            metadata: meta(seed),
        },
        sidecar: SceneSidecar::new(scheme, cloud.clone(), identity_links(cloud)),
    })
}

const COINCIDENT: f64 = 1e-9;

/// Paired-point lifting: random pairs replaced by the line through both
/// points, carrying both descriptors in random order. With `opts.plus`,
/// pairs on the same detected plane are re-drawn up to `max_retries` times.
pub fn obfuscate_ppl<T: Real>(cloud: &PointCloud<T>, seed: u64, opts: &PplOptions) -> Result<Obfuscation<T>> {
    if cloud.len() < 2 {
        return Err(Error::invalid("paired-point lifting needs at least two points"));
    }
    let mut rng = seeded(seed);
    let extent = cloud.diameter().as_f64();
    let positions = cloud.positions();

    let plane_labels = if opts.plus {
        let threshold = opts.plane_inlier_threshold.unwrap_or(0.01 * extent);
        let seg = segment_planes(
            &positions,
            &PlaneSegmentationParams {
                threshold,
                min_inliers: opts.min_plane_inliers,
                iterations: opts.plane_ransac_iters,
                max_planes: 64,
            },
            &mut rng,
        );
        Some(seg.labels)
    } else {
        None
    };
    let same_plane = |a: usize, b: usize| match &plane_labels {
        Some(l) => l[a].is_some() && l[a] == l[b],
        None => false,
    };
    let coincident = |a: usize, b: usize| vec3::dist(&positions[a], &positions[b]).as_f64() < COINCIDENT;

    let mut pool: Vec<usize> = (0..cloud.len()).collect();
    pool.shuffle(&mut rng);
    let mut pairs = Vec::with_capacity(cloud.len() / 2);
    while pool.len() >= 2 {
        let a = pool.pop().expect("pool has two entries");
        let mut retries = 0;
        let b = loop {
            let j = rng.random_range(0..pool.len());
            let b = pool[j];
            if coincident(a, b) {
                if pool.iter().all(|&c| coincident(a, c)) {
                    return Err(Error::Degenerate(format!(
                        "point {} coincides with every remaining point",
                        cloud.points[a].id
                    )));
                }
                continue;
            }
            if same_plane(a, b) {
                if retries < opts.max_retries {
                    retries += 1;
                    continue;
                }
                // out of retries: take any partner off the plane, if one is left
                if let Some(k) = pool.iter().position(|&c| !same_plane(a, c) && !coincident(a, c)) {
                    break pool.swap_remove(k);
                }
            }
            pool.swap_remove(j);
            break b;
        };
        pairs.push((a, b));
    }

    let scheme = if opts.plus { Scheme::PplPlus } else { Scheme::Ppl };
    let mut items = Vec::with_capacity(pairs.len());
    let mut links = Vec::with_capacity(pairs.len());
    let mut slots = BTreeMap::new();
    for (line_id, &(a, b)) in pairs.iter().enumerate() {
        let (pa, pb) = (&cloud.points[a], &cloud.points[b]);
        let mut line = LineGeom::through(cloud.dim, &pa.coords, &pb.coords)?;
        if rng.random::<bool>() {
            line = line.reversed();
        }
        let line = hide_base(line, extent, &mut rng);
        let swap = rng.random::<bool>();
        let mut descriptors = Vec::new();
        if let (Some(da), Some(db)) = (&pa.descriptor, &pb.descriptor) {
            if swap {
                descriptors = vec![db.clone(), da.clone()];
            } else {
                descriptors = vec![da.clone(), db.clone()];
            }
        }
        let id = line_id as u64;
        items.push(ObfuscatedItem {
            id,
            geometry: ItemGeometry::Line(line),
            descriptors,
        });
        links.push(ItemLink {
            item_id: id,
            sources: vec![pa.id, pb.id],
        });
        slots.insert(id, if swap { [1, 0] } else { [0, 1] });
    }

    let mut params = BTreeMap::new();
    params.insert("plus".into(), serde_json::json!(opts.plus));
    if opts.plus {
        params.insert("max_retries".into(), serde_json::json!(opts.max_retries));
    }
    let mut sidecar = SceneSidecar::new(scheme, cloud.clone(), links);
    sidecar.ppl_descriptor_slots = slots;
    sidecar.dropped = pool.iter().map(|&i| cloud.points[i].id).collect();
    if let Some(labels) = plane_labels {
        sidecar.detected_planes = Some(cloud.points.iter().zip(labels).map(|(p, l)| (p.id, l)).collect());
    }
    Ok(Obfuscation {
        cloud: ObfuscatedCloud {
            scheme,
            dim: cloud.dim,
            items,
            metadata: ObfuscationMeta { params, ..meta(seed) },
        },
        sidecar,
    })
}

/// Ray cloud: two k-means clusters; each point emits a line through itself
/// and one of the two centers.
pub fn obfuscate_ray<T: Real>(
    cloud: &PointCloud<T>,
    seed: u64,
    assignment: RayCenterAssignment,
) -> Result<Obfuscation<T>> {
    if cloud.dim != Dim::Three {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: cloud.dim.count(),
        });
    }
    if cloud.len() < 2 {
        return Err(Error::invalid("ray clouds need at least two points"));
    }
    let mut rng = seeded(seed);
    let extent = cloud.diameter().as_f64();
    let positions = cloud.positions();
    let km = kmeans(&positions, &KMeansParams::default(), &mut rng)?;
    let centers = [km.centers[0], km.centers[1]];
    let mut items = Vec::with_capacity(cloud.len());
    for (p, &label) in cloud.points.iter().zip(&km.labels) {
        let center_id = match assignment {
            RayCenterAssignment::Opposite => 1 - label,
            RayCenterAssignment::Same => label,
        } as u8;
        let toward = vec3::sub(&centers[center_id as usize], &p.coords);
        let dir = if vec3::norm(&toward).as_f64() > 1e-12 {
            toward
        } else {
            random_direction(Dim::Three, &mut rng)
        };
        let line = hide_base(LineGeom::new(Dim::Three, p.coords, dir)?, extent, &mut rng);
        items.push(ObfuscatedItem {
            id: p.id,
            geometry: ItemGeometry::Ray { line, center_id },
            descriptors: descriptor_list(&p.descriptor),
        });
    }
    let mut params = BTreeMap::new();
    params.insert("assignment".into(), serde_json::to_value(assignment)?);
    Ok(Obfuscation {
        cloud: ObfuscatedCloud {
            scheme: Scheme::Ray,
            dim: Dim::Three,
            items,
            metadata: ObfuscationMeta {
                ray_centers: Some(centers),
                params,
                ..meta(seed)
            },
        },
        sidecar: SceneSidecar::new(Scheme::Ray, cloud.clone(), identity_links(cloud)),
    })
}

/// Plane lifting: ids split into three near-equal groups; a point in the
/// `a`-group becomes the plane `p[a] = x[a]`.
pub fn obfuscate_planes<T: Real>(cloud: &PointCloud<T>, seed: u64) -> Result<Obfuscation<T>> {
    if cloud.dim != Dim::Three {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: cloud.dim.count(),
        });
    }
    if cloud.len() < 3 {
        return Err(Error::invalid("plane lifting needs at least three points"));
    }
    let mut rng = seeded(seed);
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(&mut rng);
    let mut axis_of = vec![Axis::X; cloud.len()];
    for (rank, &i) in order.iter().enumerate() {
        axis_of[i] = Axis::ALL[rank % 3];
    }
    let items = cloud
        .points
        .iter()
        .zip(&axis_of)
        .map(|(p, &axis)| ObfuscatedItem {
            id: p.id,
            geometry: ItemGeometry::Plane(AxisPlaneGeom::new(axis, p.coords[axis.index()])),
            descriptors: descriptor_list(&p.descriptor),
        })
        .collect();
    Ok(Obfuscation {
        cloud: ObfuscatedCloud {
            scheme: Scheme::Plane,
            dim: Dim::Three,
            items,
            metadata: meta(seed),
        },
        sidecar: SceneSidecar::new(Scheme::Plane, cloud.clone(), identity_links(cloud)),
    })
}

/// Coordinate permutation: random pairs exchange one uniformly chosen
/// coordinate. An odd leftover passes through unchanged.
pub fn obfuscate_cp<T: Real>(cloud: &PointCloud<T>, seed: u64) -> Result<Obfuscation<T>> {
    if cloud.len() < 2 {
        return Err(Error::invalid("coordinate permutation needs at least two points"));
    }
    let mut rng = seeded(seed);
    let m = cloud.dim.count();
    let mut order: Vec<usize> = (0..cloud.len()).collect();
    order.shuffle(&mut rng);
    let mut coords = cloud.positions();
    let mut swaps = BTreeMap::new();
    for pair in order.chunks_exact(2) {
        let (a, b) = (pair[0], pair[1]);
        let axis = Axis::ALL[rng.random_range(0..m)];
        let k = axis.index();
        let tmp = coords[a][k];
        coords[a][k] = coords[b][k];
        coords[b][k] = tmp;
        let (ida, idb) = (cloud.points[a].id, cloud.points[b].id);
        swaps.insert(
            ida,
            CpSwap {
                axis: Some(axis),
                partner: Some(idb),
            },
        );
        swaps.insert(
            idb,
            CpSwap {
                axis: Some(axis),
                partner: Some(ida),
            },
        );
    }
    let unpaired = (order.len() % 2 == 1).then(|| cloud.points[order[order.len() - 1]].id);
    if let Some(id) = unpaired {
        swaps.insert(
            id,
            CpSwap {
                axis: None,
                partner: None,
            },
        );
    }
    let items = cloud
        .points
        .iter()
        .zip(coords)
        .map(|(p, c)| ObfuscatedItem {
            id: p.id,
            geometry: ItemGeometry::Point(c),
            descriptors: descriptor_list(&p.descriptor),
        })
        .collect();
    let mut sidecar = SceneSidecar::new(Scheme::Cp, cloud.clone(), identity_links(cloud));
    sidecar.cp_swaps = swaps;
    Ok(Obfuscation {
        cloud: ObfuscatedCloud {
            scheme: Scheme::Cp,
            dim: cloud.dim,
            items,
            metadata: ObfuscationMeta {
                unpaired_id: unpaired,
                ..meta(seed)
            },
        },
        sidecar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::synthetic::{generate_synthetic, SceneKind, SyntheticParams};

    fn cube(n: usize, seed: u64, desc: usize) -> PointCloud<f64> {
        generate_synthetic(&SyntheticParams {
            descriptor_dim: desc,
            ..SyntheticParams::new(SceneKind::UniformBox, n, Dim::Three, seed)
        })
        .unwrap()
        .cloud
    }

    fn contains_source(obf: &Obfuscation<f64>) {
        let src = obf.sidecar.source_map();
        let orig: HashMap<u64, Vec3<f64>> = obf.sidecar.original.points.iter().map(|p| (p.id, p.coords)).collect();
        for item in &obf.cloud.items {
            for slot in 0..2u8 {
                if let Some(s) = src.get(&(item.id, slot)) {
                    let d = item.geometry.distance(&orig[s]);
                    assert!(d <= 1e-9, "item {} slot {slot}: {d}", item.id);
                }
            }
        }
    }

    #[test]
    fn random_lines_contain_their_points_and_are_deterministic() {
        let c = cube(200, 1, 0);
        let a = obfuscate_random_lines(&c, 9).unwrap();
        contains_source(&a);
        let b = obfuscate_random_lines(&c, 9).unwrap();
        assert_eq!(a.cloud, b.cloud);
        // stored base is not the source point
        for (item, p) in a.cloud.items.iter().zip(&c.points) {
            assert_ne!(item.geometry.as_line().unwrap().base, p.coords);
        }
    }

    #[test]
    fn random_directions_are_uniform() {
        // Monte-Carlo uniformity check on the unit sphere and circle
        let mut rng = seeded(2);
        for dim in [Dim::Two, Dim::Three] {
            let mut acc = [0.0f64; 3];
            let n = 100_000;
            for _ in 0..n {
                acc = vec3::add(&acc, &random_direction::<f64>(dim, &mut rng));
            }
            assert!(vec3::norm(&acc) / (n as f64) < 0.02);
        }
    }

    #[test]
    fn lines_in_2d() {
        let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::UniformBox, 100, Dim::Two, 4))
            .unwrap()
            .cloud;
        let o = obfuscate_random_lines(&c, 1).unwrap();
        assert_eq!(o.cloud.scheme, Scheme::Line2d);
        contains_source(&o);
        assert!(o
            .cloud
            .items
            .iter()
            .all(|it| it.geometry.as_line().unwrap().direction[2] == 0.0));
    }

    #[test]
    fn ppl_pairs_and_drops_odd_point() {
        let c = cube(101, 3, 8);
        let o = obfuscate_ppl(&c, 5, &PplOptions::default()).unwrap();
        assert_eq!(o.cloud.len(), 50);
        assert_eq!(o.sidecar.dropped.len(), 1);
        contains_source(&o);
        for item in &o.cloud.items {
            assert_eq!(item.descriptors.len(), 2);
        }
        // every kept source point appears exactly once
        let mut seen: Vec<u64> = o.sidecar.links.iter().flat_map(|l| l.sources.clone()).collect();
        seen.extend(&o.sidecar.dropped);
        seen.sort();
        assert_eq!(seen, (0..101).collect::<Vec<_>>());
    }

    #[test]
    fn ppl_descriptors_follow_slot_record() {
        let c = cube(40, 3, 4);
        let o = obfuscate_ppl(&c, 5, &PplOptions::default()).unwrap();
        let by_id: HashMap<u64, &Point<f64>> = c.points.iter().map(|p| (p.id, p)).collect();
        for item in &o.cloud.items {
            let slots = o.sidecar.ppl_descriptor_slots[&item.id];
            for (d, &slot) in item.descriptors.iter().zip(&slots) {
                let src = o.sidecar.source_of(item.id, slot).unwrap();
                assert_eq!(by_id[&src].descriptor.as_ref().unwrap(), d);
            }
        }
    }

    #[test]
    fn ppl_rejects_all_coincident_points() {
        let pts = (0..4).map(|i| Point::new(i, [1.0, 1.0, 1.0])).collect();
        let c = PointCloud::new(Dim::Three, pts).unwrap();
        assert!(matches!(
            obfuscate_ppl(&c, 0, &PplOptions::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn ppl_plus_avoids_same_plane_pairs() {
        let scene = generate_synthetic::<f64>(&SyntheticParams {
            planes: Some(2),
            clutter_fraction: 0.0,
            ..SyntheticParams::new(SceneKind::PlanarRooms, 1000, Dim::Three, 8)
        })
        .unwrap();
        let labels = scene.plane_labels.clone().unwrap();
        let same_plane_fraction = |o: &Obfuscation<f64>| {
            let same = o
                .sidecar
                .links
                .iter()
                .filter(|l| {
                    let (a, b) = (labels[&l.sources[0]], labels[&l.sources[1]]);
                    a.is_some() && a == b
                })
                .count();
            same as f64 / o.sidecar.links.len() as f64
        };
        let plain = obfuscate_ppl(&scene.cloud, 1, &PplOptions::default()).unwrap();
        let plus = obfuscate_ppl(
            &scene.cloud,
            1,
            &PplOptions {
                plus: true,
                ..PplOptions::default()
            },
        )
        .unwrap();
        let (fp, fq) = (same_plane_fraction(&plain), same_plane_fraction(&plus));
        assert!((fp - 0.5).abs() < 0.1, "plain {fp}");
        assert!(fq < 0.05, "plus {fq}");
        assert_eq!(plus.cloud.scheme, Scheme::PplPlus);
    }

    #[test]
    fn ray_lines_pass_through_point_and_center() {
        let c = cube(300, 2, 0);
        for assignment in [RayCenterAssignment::Opposite, RayCenterAssignment::Same] {
            let o = obfuscate_ray(&c, 4, assignment).unwrap();
            contains_source(&o);
            let centers = o.cloud.metadata.ray_centers.unwrap();
            let mut ids = std::collections::BTreeSet::new();
            for item in &o.cloud.items {
                let ItemGeometry::Ray { line, center_id } = &item.geometry else {
                    panic!("not a ray")
                };
                ids.insert(*center_id);
                assert!(line.distance(&centers[*center_id as usize]) < 1e-9);
            }
            assert_eq!(ids.len(), 2);
        }
    }

    #[test]
    fn ray_centers_match_blob_means() {
        let scene = generate_synthetic::<f64>(&SyntheticParams {
            blobs: 2,
            ..SyntheticParams::new(SceneKind::GaussianBlobs, 2000, Dim::Three, 3)
        })
        .unwrap();
        let o = obfuscate_ray(&scene.cloud, 1, RayCenterAssignment::Opposite).unwrap();
        let centers = o.cloud.metadata.ray_centers.unwrap();
        let blob_centers = scene.blob_centers.unwrap();
        let sep = vec3::dist(&blob_centers[0], &blob_centers[1]);
        for bc in &blob_centers {
            let d = centers.iter().map(|c| vec3::dist(c, bc)).fold(f64::INFINITY, f64::min);
            assert!(d < 0.05 * sep, "{d} vs separation {sep}");
        }
    }

    #[test]
    fn planes_partition_evenly() {
        for n in [3usize, 100, 101, 102] {
            let c = cube(n, 5, 0);
            let o = obfuscate_planes(&c, 7).unwrap();
            contains_source(&o);
            let mut counts = [0usize; 3];
            for item in &o.cloud.items {
                let ItemGeometry::Plane(pl) = item.geometry else {
                    panic!()
                };
                counts[pl.axis.index()] += 1;
            }
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
            assert_eq!(o.cloud, obfuscate_planes(&c, 7).unwrap().cloud);
        }
    }

    #[test]
    fn cp_swap_example() {
        let pts = vec![Point::new(0, [0.0, 0.0, 0.0]), Point::new(1, [5.0, 7.0, 0.0])];
        let c = PointCloud::new(Dim::Two, pts).unwrap();
        // find a seed that swaps along x
        let o = (0..64)
            .map(|s| obfuscate_cp(&c, s).unwrap())
            .find(|o| o.sidecar.cp_swaps[&0].axis == Some(Axis::X))
            .unwrap();
        assert_eq!(o.cloud.items[0].geometry, ItemGeometry::Point([5.0, 0.0, 0.0]));
        assert_eq!(o.cloud.items[1].geometry, ItemGeometry::Point([0.0, 7.0, 0.0]));
    }

    #[test]
    fn cp_preserves_column_multisets_and_moves_one_axis() {
        let c = cube(201, 6, 0);
        let o = obfuscate_cp(&c, 3).unwrap();
        assert!(o.cloud.metadata.unpaired_id.is_some());
        for a in 0..3 {
            let mut before: Vec<f64> = c.points.iter().map(|p| p.coords[a]).collect();
            let mut after: Vec<f64> = o
                .cloud
                .items
                .iter()
                .map(|it| match it.geometry {
                    ItemGeometry::Point(p) => p[a],
                    _ => unreachable!(),
                })
                .collect();
            before.sort_by(f64::total_cmp);
            after.sort_by(f64::total_cmp);
            assert_eq!(before, after);
        }
        for (item, p) in o.cloud.items.iter().zip(&c.points) {
            let ItemGeometry::Point(q) = item.geometry else {
                panic!()
            };
            let differing = (0..3).filter(|&a| q[a] != p.coords[a]).count();
            assert!(differing <= 1);
            // the source lies on the axis-aligned line of the recorded swap
            if let Some(axis) = o.sidecar.cp_swaps[&p.id].axis {
                let line = LineGeom::axis_aligned(Dim::Three, q, axis);
                assert!(line.distance(&p.coords) < 1e-12);
            }
        }
    }

    #[test]
    fn descriptors_are_preserved() {
        let c = cube(100, 1, 4);
        let mut expected: Vec<Vec<f64>> = c.points.iter().map(|p| p.descriptor.clone().unwrap()).collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for scheme in [Scheme::Line3d, Scheme::Ppl, Scheme::Ray, Scheme::Plane, Scheme::Cp] {
            let o = obfuscate(&c, scheme, 2, &ObfuscationOptions::default()).unwrap();
            let mut got: Vec<Vec<f64>> = o.cloud.items.iter().flat_map(|it| it.descriptors.clone()).collect();
            got.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(got, expected, "{scheme}");
        }
    }

    #[test]
    fn unsupported_dimension_is_rejected() {
        let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::UniformBox, 10, Dim::Two, 4))
            .unwrap()
            .cloud;
        assert!(obfuscate(&c, Scheme::Plane, 0, &ObfuscationOptions::default()).is_err());
        assert!(obfuscate(&c, Scheme::Ray, 0, &ObfuscationOptions::default()).is_err());
        assert!(obfuscate(&c, Scheme::Cp, 0, &ObfuscationOptions::default()).is_ok());
    }

    #[test]
    fn empty_cloud_gives_empty_lines() {
        let c = PointCloud::<f64>::new(Dim::Three, vec![]).unwrap();
        assert!(obfuscate_random_lines(&c, 0).unwrap().cloud.is_empty());
    }
}
