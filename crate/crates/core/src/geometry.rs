//! Dimension-generic geometric primitives and distance kernels.
//!
//! Coordinates are always stored as `[T; 3]`. Two-dimensional data lives in
//! the `z = 0` plane, so every kernel works unchanged for both dimensions and
//! only the I/O layer needs to know how many coordinates are significant.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub type Vec3<T> = [T; 3];

/// Small fixed-size vector helpers over `[T; 3]`.
pub mod vec3 {
    use super::Vec3;
    use crate::scalar::Real;

    #[inline]
    pub fn zero<T: Real>() -> Vec3<T> {
        [T::zero(); 3]
    }
    #[inline]
    pub fn add<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }
    #[inline]
    pub fn sub<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }
    #[inline]
    pub fn scale<T: Real>(a: &Vec3<T>, s: T) -> Vec3<T> {
        [a[0] * s, a[1] * s, a[2] * s]
    }
    /// `a + s * b`
    #[inline]
    pub fn axpy<T: Real>(a: &Vec3<T>, s: T, b: &Vec3<T>) -> Vec3<T> {
        [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
    }
    #[inline]
    pub fn dot<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }
    #[inline]
    pub fn cross<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> Vec3<T> {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }
    #[inline]
    pub fn norm_sq<T: Real>(a: &Vec3<T>) -> T {
        dot(a, a)
    }
    #[inline]
    pub fn norm<T: Real>(a: &Vec3<T>) -> T {
        norm_sq(a).sqrt()
    }
    #[inline]
    pub fn dist<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
        norm(&sub(a, b))
    }
    #[inline]
    pub fn dist_sq<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
        norm_sq(&sub(a, b))
    }
    pub fn normalized<T: Real>(a: &Vec3<T>) -> Option<Vec3<T>> {
        let n = norm(a);
        if n > T::zero() && n.is_finite() {
            Some(scale(a, T::one() / n))
        } else {
            None
        }
    }
    pub fn is_finite<T: Real>(a: &Vec3<T>) -> bool {
        a.iter().all(|c| c.is_finite())
    }
    pub fn cast<T: Real>(a: &Vec3<f64>) -> Vec3<T> {
        [T::lit(a[0]), T::lit(a[1]), T::lit(a[2])]
    }
    pub fn to_f64<T: Real>(a: &Vec3<T>) -> Vec3<f64> {
        [a[0].as_f64(), a[1].as_f64(), a[2].as_f64()]
    }
}

/// Ambient dimension `m` of a cloud.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn count(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    pub fn from_count(m: usize) -> Result<Self> {
        match m {
            2 => Ok(Dim::Two),
            3 => Ok(Dim::Three),
            _ => Err(Error::invalid(format!("dimension must be 2 or 3, got {m}"))),
        }
    }

    pub fn axes(self) -> &'static [Axis] {
        match self {
            Dim::Two => &[Axis::X, Axis::Y],
            Dim::Three => &[Axis::X, Axis::Y, Axis::Z],
        }
    }
}

impl TryFrom<u8> for Dim {
    type Error = Error;
    fn try_from(m: u8) -> Result<Self> {
        Dim::from_count(m as usize)
    }
}

impl From<Dim> for u8 {
    fn from(d: Dim) -> u8 {
        d.count() as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Axis> {
        Axis::ALL.get(i).copied()
    }

    pub fn unit<T: Real>(self) -> Vec3<T> {
        let mut v = vec3::zero();
        v[self.index()] = T::one();
        v
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s {
            "x" | "X" => Some(Axis::X),
            "y" | "Y" => Some(Axis::Y),
            "z" | "Z" => Some(Axis::Z),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point<T> {
    pub id: u64,
    pub coords: Vec3<T>,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<Vec<T>>,
}

impl<T: Real> Point<T> {
    pub fn new(id: u64, coords: Vec3<T>) -> Self {
        Point {
            id,
            coords,
            descriptor: None,
        }
    }

    pub fn with_descriptor(mut self, descriptor: Vec<T>) -> Self {
        self.descriptor = Some(descriptor);
        self
    }
}

/// An ordered set of points sharing one dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointCloud<T> {
    pub dim: Dim,
    pub points: Vec<Point<T>>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

impl<T: Real> PointCloud<T> {
    /// Builds a cloud, checking ids, finiteness, the `z = 0` embedding for
    /// 2D data and descriptor length consistency.
    pub fn new(dim: Dim, points: Vec<Point<T>>) -> Result<Self> {
        let cloud = PointCloud {
            dim,
            points,
            metadata: BTreeMap::new(),
        };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.points.len());
        let mut desc_len = None;
        for p in &self.points {
            if !seen.insert(p.id) {
                return Err(Error::invalid(format!("duplicate point id {}", p.id)));
            }
            if !vec3::is_finite(&p.coords) {
                return Err(Error::invalid(format!("point {} has non-finite coordinates", p.id)));
            }
            if self.dim == Dim::Two && p.coords[2] != T::zero() {
                return Err(Error::DimensionMismatch { expected: 2, found: 3 });
            }
            if let Some(d) = &p.descriptor {
                match desc_len {
                    None => desc_len = Some(d.len()),
                    Some(l) if l != d.len() => {
                        return Err(Error::invalid(format!(
                            "point {} descriptor length {} differs from {}",
                            p.id,
                            d.len(),
                            l
                        )))
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn descriptor_dim(&self) -> usize {
        self.points
            .iter()
            .find_map(|p| p.descriptor.as_ref().map(Vec::len))
            .unwrap_or(0)
    }

    pub fn positions(&self) -> Vec<Vec3<T>> {
        self.points.iter().map(|p| p.coords).collect()
    }

    pub fn position_of(&self, id: u64) -> Option<&Vec3<T>> {
        self.points.iter().find(|p| p.id == id).map(|p| &p.coords)
    }

    pub fn bounding_box(&self) -> Option<(Vec3<T>, Vec3<T>)> {
        bounding_box(self.points.iter().map(|p| &p.coords))
    }

    /// Length of the bounding-box diagonal; zero for fewer than two points.
    pub fn diameter(&self) -> T {
        match self.bounding_box() {
            Some((lo, hi)) => vec3::dist(&lo, &hi),
            None => T::zero(),
        }
    }

    pub fn centroid(&self) -> Option<Vec3<T>> {
        centroid(self.points.iter().map(|p| &p.coords))
    }
}

pub fn bounding_box<'a, T: Real, I>(pts: I) -> Option<(Vec3<T>, Vec3<T>)>
where
    I: IntoIterator<Item = &'a Vec3<T>>,
{
    let mut it = pts.into_iter();
    let first = *it.next()?;
    let (mut lo, mut hi) = (first, first);
    for p in it {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    Some((lo, hi))
}

pub fn centroid<'a, T: Real, I>(pts: I) -> Option<Vec3<T>>
where
    I: IntoIterator<Item = &'a Vec3<T>>,
{
    let mut acc = vec3::zero::<T>();
    let mut n = 0usize;
    for p in pts {
        acc = vec3::add(&acc, p);
        n += 1;
    }
    (n > 0).then(|| vec3::scale(&acc, T::one() / T::from_usize_lossy(n)))
}

/// A line `{ base + t * direction }` with unit-norm direction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineGeom<T> {
    pub base: Vec3<T>,
    pub direction: Vec3<T>,
    pub dim: Dim,
}

/// Closest point on a line: distance and the line parameter of the foot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineProjection<T> {
    pub distance: T,
    pub t: T,
}

impl<T: Real> LineGeom<T> {
    /// Normalizes `direction`. Fails for a zero or non-finite direction, or a
    /// 2D line leaving the `z = 0` plane.
    pub fn new(dim: Dim, base: Vec3<T>, direction: Vec3<T>) -> Result<Self> {
        if dim == Dim::Two && (base[2] != T::zero() || direction[2] != T::zero()) {
            return Err(Error::DimensionMismatch { expected: 2, found: 3 });
        }
        if !vec3::is_finite(&base) {
            return Err(Error::invalid("line base is not finite"));
        }
        let direction = vec3::normalized(&direction).ok_or_else(|| Error::invalid("line direction has zero length"))?;
        Ok(LineGeom { base, direction, dim })
    }

    pub fn through(dim: Dim, a: &Vec3<T>, b: &Vec3<T>) -> Result<Self> {
        Self::new(dim, *a, vec3::sub(b, a))
    }

    /// Axis-aligned line through `p`.
    pub fn axis_aligned(dim: Dim, p: Vec3<T>, axis: Axis) -> Self {
        LineGeom {
            base: p,
            direction: axis.unit(),
            dim,
        }
    }

    #[inline]
    pub fn at(&self, t: T) -> Vec3<T> {
        vec3::axpy(&self.base, t, &self.direction)
    }

    /// Unchecked kernel used on hot paths.
    #[inline]
    pub fn project(&self, p: &Vec3<T>) -> LineProjection<T> {
        let w = vec3::sub(p, &self.base);
        let t = vec3::dot(&w, &self.direction);
        let perp = vec3::axpy(&w, -t, &self.direction);
        LineProjection {
            distance: vec3::norm(&perp),
            t,
        }
    }

    #[inline]
    pub fn distance(&self, p: &Vec3<T>) -> T {
        self.project(p).distance
    }

    pub fn reversed(&self) -> Self {
        LineGeom {
            direction: vec3::scale(&self.direction, -T::one()),
            ..*self
        }
    }
}

/// The plane `{ p : p[axis] = offset }` in 3D.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisPlaneGeom<T> {
    pub axis: Axis,
    pub offset: T,
}

impl<T: Real> AxisPlaneGeom<T> {
    pub fn new(axis: Axis, offset: T) -> Self {
        AxisPlaneGeom { axis, offset }
    }

    #[inline]
    pub fn distance(&self, p: &Vec3<T>) -> T {
        (p[self.axis.index()] - self.offset).abs()
    }

    /// The two in-plane axes, ascending.
    pub fn free_axes(&self) -> [Axis; 2] {
        match self.axis {
            Axis::X => [Axis::Y, Axis::Z],
            Axis::Y => [Axis::X, Axis::Z],
            Axis::Z => [Axis::X, Axis::Y],
        }
    }
}

fn embed<T: Real>(p: &[T], expected: usize) -> Result<Vec3<T>> {
    if p.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: p.len(),
        });
    }
    let mut out = vec3::zero();
    out[..p.len()].copy_from_slice(p);
    Ok(out)
}

/// Euclidean distance from `p` to the closest point of `line`, together with
/// the parameter `t` of that closest point.
pub fn point_to_line_distance<T: Real>(p: &[T], line: &LineGeom<T>) -> Result<LineProjection<T>> {
    let p = embed(p, line.dim.count())?;
    Ok(line.project(&p))
}

/// `|p[axis] - offset|` for a 3-vector `p`.
pub fn point_to_plane_distance<T: Real>(p: &[T], plane: &AxisPlaneGeom<T>) -> Result<T> {
    let p = embed(p, 3)?;
    Ok(plane.distance(&p))
}
