//! Closed-form per-point solvers.
//!
//! A point restricted to a line has one degree of freedom `t`; its squared
//! distance to any neighboring line or axis-aligned plane is a quadratic in
//! `t`, so the summed objective is minimized in closed form. On an
//! axis-aligned plane the two free coordinates decouple and each is the mean
//! of the constraining plane offsets.

use crate::error::{Error, Result};
use crate::geometry::{vec3, Axis, AxisPlaneGeom, LineGeom, Vec3};
use crate::scalar::Real;

/// Below this total curvature the line objective is treated as flat.
pub const FLAT_CURVATURE: f64 = 1e-12;

/// Geometry of a neighboring obfuscated item.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Constraint<T> {
    Line(LineGeom<T>),
    Plane(AxisPlaneGeom<T>),
}

impl<T: Real> Constraint<T> {
    #[inline]
    pub fn distance(&self, p: &Vec3<T>) -> T {
        match self {
            Constraint::Line(l) => l.distance(p),
            Constraint::Plane(pl) => pl.distance(p),
        }
    }

    /// Coefficients `(a, b, c)` of `dist(base + t * dir)^2 = a t^2 + b t + c`.
    #[inline]
    pub fn quadratic_along(&self, subject: &LineGeom<T>) -> (T, T, T) {
        let two = T::lit(2.0);
        match self {
            Constraint::Line(l) => {
                let u = &subject.direction;
                let v = &l.direction;
                let w = vec3::sub(&subject.base, &l.base);
                let uv = vec3::dot(u, v);
                let vw = vec3::dot(v, &w);
                let pw = vec3::axpy(&w, -vw, v);
                let a = (T::one() - uv * uv).max(T::zero());
                let b = two * (vec3::dot(u, &w) - uv * vw);
                (a, b, vec3::norm_sq(&pw))
            }
            Constraint::Plane(pl) => {
                let k = pl.axis.index();
                let uk = subject.direction[k];
                let off = subject.base[k] - pl.offset;
                (uk * uk, two * uk * off, off * off)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSolution<T> {
    pub t: T,
    pub point: Vec3<T>,
    /// Sum of unsquared distances at `t`.
    pub cost: T,
    /// False when every neighbor is parallel to the subject and `t` is the
    /// initial value.
    pub constrained: bool,
}

/// Minimizes the summed squared distance from `subject.at(t)` to the
/// selected neighbors. Falls back to `init_t` when the objective is flat.
pub fn solve_on_line_subset<T: Real>(
    subject: &LineGeom<T>,
    neighbors: &[Constraint<T>],
    subset: impl Iterator<Item = usize> + Clone,
    init_t: T,
) -> LineSolution<T> {
    let (mut sa, mut sb) = (T::zero(), T::zero());
    for i in subset.clone() {
        let (a, b, _) = neighbors[i].quadratic_along(subject);
        sa = sa + a;
        sb = sb + b;
    }
    let constrained = sa >= T::lit(FLAT_CURVATURE);
    let t = if constrained { -sb / (T::lit(2.0) * sa) } else { init_t };
    let point = subject.at(t);
    let cost = subset.map(|i| neighbors[i].distance(&point)).sum();
    LineSolution {
        t,
        point,
        cost,
        constrained,
    }
}

pub fn solve_on_line<T: Real>(
    subject: &LineGeom<T>,
    neighbors: &[Constraint<T>],
    init_t: T,
) -> Result<LineSolution<T>> {
    if neighbors.is_empty() {
        return Err(Error::NoNeighbors);
    }
    Ok(solve_on_line_subset(subject, neighbors, 0..neighbors.len(), init_t))
}

/// Minimizes the sum of unsquared distances along the subject line, starting
/// from `t0`. The objective is convex in `t`, so a bracket that rises on both
/// sides contains the minimizer and golden-section search converges to it.
pub fn refine_line_unsquared<T: Real>(
    subject: &LineGeom<T>,
    neighbors: &[Constraint<T>],
    subset: &[usize],
    t0: T,
) -> LineSolution<T> {
    let f = |t: T| -> T {
        let p = subject.at(t);
        subset.iter().map(|&i| neighbors[i].distance(&p)).sum()
    };
    let f0 = f(t0);
    let mut h = (f0 / T::from_usize_lossy(subset.len().max(1))).max(T::lit(1e-9));
    for _ in 0..80 {
        if f(t0 - h) >= f0 && f(t0 + h) >= f0 {
            break;
        }
        h = h * T::lit(2.0);
    }
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let (mut lo, mut hi) = (t0 - h, t0 + h);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo).abs() <= T::epsilon() * (T::one() + t0.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let t = (lo + hi) / T::lit(2.0);
    let (t, cost) = if f(t) <= f0 { (t, f(t)) } else { (t0, f0) };
    LineSolution {
        t,
        point: subject.at(t),
        cost,
        constrained: true,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneSolution<T> {
    pub point: Vec3<T>,
    /// Coordinates along the two free axes, ascending axis order.
    pub uv: [T; 2],
    pub cost: T,
    /// Per free axis: whether some neighbor constrained it.
    pub constrained: [bool; 2],
}

impl<T> PlaneSolution<T> {
    pub fn any_constrained(&self) -> bool {
        self.constrained[0] || self.constrained[1]
    }
}

fn plane_point<T: Real>(subject: &AxisPlaneGeom<T>, uv: [T; 2]) -> Vec3<T> {
    let [a, b] = subject.free_axes();
    let mut p = vec3::zero();
    p[subject.axis.index()] = subject.offset;
    p[a.index()] = uv[0];
    p[b.index()] = uv[1];
    p
}

/// Per free axis: the mean (least squares) or median (sum of distances) of
/// the offsets of neighbor planes orthogonal to that axis.
pub fn solve_on_plane_subset<T: Real>(
    subject: &AxisPlaneGeom<T>,
    neighbors: &[AxisPlaneGeom<T>],
    subset: impl Iterator<Item = usize> + Clone,
    init: [T; 2],
    median: bool,
) -> PlaneSolution<T> {
    let free: [Axis; 2] = subject.free_axes();
    let mut uv = init;
    let mut constrained = [false; 2];
    for (slot, axis) in free.iter().enumerate() {
        let mut offsets: Vec<T> = subset
            .clone()
            .filter(|&i| neighbors[i].axis == *axis)
            .map(|i| neighbors[i].offset)
            .collect();
        if offsets.is_empty() {
            continue;
        }
        constrained[slot] = true;
        uv[slot] = if median {
            offsets.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
            let n = offsets.len();
            if n % 2 == 1 {
                offsets[n / 2]
            } else {
                (offsets[n / 2 - 1] + offsets[n / 2]) / T::lit(2.0)
            }
        } else {
            offsets.iter().copied().sum::<T>() / T::from_usize_lossy(offsets.len())
        };
    }
    let point = plane_point(subject, uv);
    let cost = subset.map(|i| neighbors[i].distance(&point)).sum();
    PlaneSolution {
        point,
        uv,
        cost,
        constrained,
    }
}

pub fn solve_on_plane<T: Real>(
    subject: &AxisPlaneGeom<T>,
    neighbors: &[AxisPlaneGeom<T>],
    init: [T; 2],
) -> Result<PlaneSolution<T>> {
    if neighbors.is_empty() {
        return Err(Error::NoNeighbors);
    }
    Ok(solve_on_plane_subset(
        subject,
        neighbors,
        0..neighbors.len(),
        init,
        false,
    ))
}
