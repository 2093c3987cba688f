//! k-means and sequential RANSAC plane segmentation, used by the ray-cloud
//! and PPL+ obfuscations.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{vec3, Vec3};
use crate::scalar::Real;

#[derive(Clone, Debug)]
pub struct KMeans<T> {
    pub centers: Vec<Vec3<T>>,
    pub labels: Vec<usize>,
    pub inertia: T,
}

#[derive(Clone, Copy, Debug)]
pub struct KMeansParams {
    pub k: usize,
    pub max_iters: usize,
    pub restarts: usize,
    /// Restarts caused by an empty cluster before giving up.
    pub max_failures: usize,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 2,
            max_iters: 50,
            restarts: 5,
            max_failures: 10,
        }
    }
}

fn nearest_center<T: Real>(p: &Vec3<T>, centers: &[Vec3<T>]) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, center) in centers.iter().enumerate() {
        let d = vec3::dist_sq(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_init<T: Real, R: Rng>(points: &[Vec3<T>], k: usize, rng: &mut R) -> Vec<Vec3<T>> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| vec3::dist_sq(p, &centers[0]).as_f64()).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next]);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(vec3::dist_sq(p, &points[next]).as_f64());
        }
    }
    centers
}

/// Lloyd iterations from a k-means++ start; returns `None` when a cluster
/// empties.
fn lloyd<T: Real, R: Rng>(points: &[Vec3<T>], params: &KMeansParams, rng: &mut R) -> Option<KMeans<T>> {
    let mut centers = plus_plus_init(points, params.k, rng);
    let mut labels = vec![usize::MAX; points.len()];
    for _ in 0..params.max_iters {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest_center(p, &centers);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
        }
        let mut sums = vec![vec3::zero::<T>(); params.k];
        let mut counts = vec![0usize; params.k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] = vec3::add(&sums[l], p);
            counts[l] += 1;
        }
        if counts.contains(&0) {
            return None;
        }
        for c in 0..params.k {
            centers[c] = vec3::scale(&sums[c], T::one() / T::from_usize_lossy(counts[c]));
        }
        if !changed {
            break;
        }
    }
    // final assignment against the last centers
    let mut inertia = T::zero();
    let mut counts = vec![0usize; params.k];
    for (i, p) in points.iter().enumerate() {
        let (c, d) = nearest_center(p, &centers);
        labels[i] = c;
        counts[c] += 1;
        inertia = inertia + d;
    }
    if counts.contains(&0) {
        return None;
    }
    Some(KMeans {
        centers,
        labels,
        inertia,
    })
}

/// Seeded k-means keeping the lowest-inertia run out of `params.restarts`.
pub fn kmeans<T: Real, R: Rng>(points: &[Vec3<T>], params: &KMeansParams, rng: &mut R) -> Result<KMeans<T>> {
    if params.k == 0 || points.len() < params.k {
        return Err(Error::invalid(format!(
            "k-means needs at least k = {} points, got {}",
            params.k,
            points.len()
        )));
    }
    let mut best: Option<KMeans<T>> = None;
    let mut done = 0;
    let mut failures = 0;
    while done < params.restarts.max(1) {
        match lloyd(points, params, rng) {
            Some(run) => {
                done += 1;
                if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
                    best = Some(run);
                }
            }
            None => {
                failures += 1;
                if failures >= params.max_failures {
                    return Err(Error::Degenerate(format!(
                        "k-means produced an empty cluster {failures} times"
                    )));
                }
            }
        }
    }
    Ok(best.expect("at least one successful restart"))
}

#[derive(Clone, Debug)]
pub struct PlaneSegmentation {
    /// Plane index per input point; `None` for points on no detected plane.
    pub labels: Vec<Option<u32>>,
    /// Unit normal and offset `n . p = d` per detected plane.
    pub planes: Vec<([f64; 3], f64)>,
}

#[derive(Clone, Copy, Debug)]
pub struct PlaneSegmentationParams {
    pub threshold: f64,
    pub min_inliers: usize,
    pub iterations: usize,
    pub max_planes: usize,
}

/// Sequential RANSAC: repeatedly extracts the plane with the most inliers
/// among unlabeled points until it has fewer than `min_inliers`.
pub fn segment_planes<T: Real, R: Rng>(
    points: &[Vec3<T>],
    params: &PlaneSegmentationParams,
    rng: &mut R,
) -> PlaneSegmentation {
    let pts: Vec<[f64; 3]> = points.iter().map(vec3::to_f64).collect();
    let mut labels = vec![None; pts.len()];
    let mut planes = Vec::new();
    let mut remaining: Vec<usize> = (0..pts.len()).collect();
    while planes.len() < params.max_planes && remaining.len() >= params.min_inliers.max(3) {
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for _ in 0..params.iterations {
            let s = sample(rng, remaining.len(), 3);
            let (a, b, c) = (
                pts[remaining[s.index(0)]],
                pts[remaining[s.index(1)]],
                pts[remaining[s.index(2)]],
            );
            let Some(n) = vec3::normalized(&vec3::cross(&vec3::sub(&b, &a), &vec3::sub(&c, &a))) else {
                continue;
            };
            let d = vec3::dot(&n, &a);
            let count = remaining
                .iter()
                .filter(|&&i| (vec3::dot(&n, &pts[i]) - d).abs() <= params.threshold)
                .count();
            if best.is_none_or(|(bc, _, _)| count > bc) {
                best = Some((count, n, d));
            }
        }
        let Some((count, n, d)) = best else { break };
        if count < params.min_inliers {
            break;
        }
        let label = planes.len() as u32;
        remaining.retain(|&i| {
            if (vec3::dot(&n, &pts[i]) - d).abs() <= params.threshold {
                labels[i] = Some(label);
                false
            } else {
                true
            }
        });
        planes.push((n, d));
    }
    // points near an intersection go to the closest plane, not the first found
    for (p, label) in pts.iter().zip(labels.iter_mut()) {
        if label.is_some() {
            let dist = |k: usize| (vec3::dot(&planes[k].0, p) - planes[k].1).abs();
            *label = (0..planes.len())
                .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                .map(|k| k as u32);
        }
    }
    PlaneSegmentation { labels, planes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_blobs_recover_their_means() {
        let mut rng = seeded(1);
        let centers = [[0.0, 0.0, 0.0], [10.0, 5.0, 0.0]];
        let mut pts = Vec::new();
        for i in 0..2000 {
            let c = centers[i % 2];
            let n: [f64; 3] = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            pts.push(vec3::axpy(&c, 0.5, &n));
        }
        let km = kmeans(&pts, &KMeansParams::default(), &mut rng).unwrap();
        for c in centers {
            let (_, d) = nearest_center(&c, &km.centers);
            assert!(d.sqrt() < 0.05 * vec3::norm(&[10.0, 5.0, 0.0]));
        }
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts = vec![[1.0, 1.0, 1.0]; 10];
        let err = kmeans(&pts, &KMeansParams::default(), &mut seeded(0)).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
    }

    #[test]
    fn finds_two_planes() {
        let mut rng = seeded(4);
        let mut pts = Vec::new();
        for _ in 0..300 {
            pts.push([rng.random::<f64>(), rng.random(), 0.0]);
            pts.push([0.0, rng.random::<f64>(), rng.random()]);
        }
        let seg = segment_planes(
            &pts,
            &PlaneSegmentationParams {
                threshold: 1e-3,
                min_inliers: 50,
                iterations: 200,
                max_planes: 10,
            },
            &mut rng,
        );
        assert_eq!(seg.planes.len(), 2);
        assert!(seg.labels.iter().all(Option::is_some));
    }
}
