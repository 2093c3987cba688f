//! Hypothesize-and-verify loop over a subject's neighbors.

use rand::seq::index::sample;
use rand::Rng;

use crate::geometry::Vec3;
use crate::scalar::Real;

/// Subsets of at most this many candidates are enumerated exhaustively
/// instead of sampled.
pub const ENUMERATION_LIMIT: usize = 64;

/// A per-subject estimation problem: fit a candidate position from a subset
/// of neighbors and score it against each neighbor.
pub trait SubjectModel<T: Real> {
    fn num_neighbors(&self) -> usize;

    /// Candidate position from the given neighbors; `None` when degenerate.
    fn fit(&self, subset: &[usize]) -> Option<Vec3<T>>;

    fn residual(&self, candidate: &Vec3<T>, neighbor: usize) -> T;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams<T> {
    pub max_iters: usize,
    pub sample_size: usize,
    pub threshold: T,
    pub confidence: f64,
    pub assumed_inlier_ratio: Option<f64>,
    /// Enumerate subsets in lexicographic order instead of sampling.
    pub exhaustive: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacOutcome<T> {
    /// Best hypothesis; `None` when every hypothesis was degenerate.
    pub candidate: Option<Vec3<T>>,
    pub inliers: Vec<usize>,
    /// Sum of inlier residuals at `candidate`.
    pub cost: T,
    pub iterations: usize,
}

/// Hypotheses needed to draw one all-inlier sample with probability
/// `confidence`, given inlier ratio `w`.
pub fn adaptive_iterations(confidence: f64, w: f64, sample_size: usize) -> usize {
    if w >= 1.0 {
        return 0;
    }
    let p_good = w.powi(sample_size as i32);
    if p_good <= 0.0 {
        return usize::MAX;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if n.is_finite() && n >= 0.0 {
        n.ceil().min(usize::MAX as f64) as usize
    } else {
        usize::MAX
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return usize::MAX,
        };
    }
    acc
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

struct Best<T> {
    candidate: Vec3<T>,
    inliers: Vec<usize>,
    cost: T,
}

fn score<T: Real, M: SubjectModel<T>>(model: &M, candidate: &Vec3<T>, threshold: T) -> (Vec<usize>, T) {
    let mut inliers = Vec::new();
    let mut cost = T::zero();
    for i in 0..model.num_neighbors() {
        let r = model.residual(candidate, i);
        if r <= threshold {
            inliers.push(i);
            cost = cost + r;
        }
    }
    (inliers, cost)
}

/// Keeps the hypothesis with the most inliers (ties: lower inlier cost) and
/// re-fits on its inlier set.
pub fn ransac<T: Real, M: SubjectModel<T>, R: Rng>(
    model: &M,
    params: &RansacParams<T>,
    rng: &mut R,
) -> RansacOutcome<T> {
    let n = model.num_neighbors();
    let s = params.sample_size.clamp(1, n.max(1));
    let mut best: Option<Best<T>> = None;
    let mut iterations = 0;

    let consider = |subset: &[usize], best: &mut Option<Best<T>>| {
        let Some(candidate) = model.fit(subset) else {
            return false;
        };
        let (inliers, cost) = score(model, &candidate, params.threshold);
        let better = match best {
            None => true,
            Some(b) => inliers.len() > b.inliers.len() || (inliers.len() == b.inliers.len() && cost < b.cost),
        };
        if better {
            *best = Some(Best {
                candidate,
                inliers,
                cost,
            });
        }
        better
    };

    // when even the full set is degenerate, every subset is too
    let all: Vec<usize> = (0..n).collect();
    if n > 0 && model.fit(&all).is_some() {
        let combos = binomial(n, s);
        if params.exhaustive || combos <= ENUMERATION_LIMIT {
            let mut c: Vec<usize> = (0..s).collect();
            loop {
                if iterations >= params.max_iters {
                    break;
                }
                iterations += 1;
                consider(&c, &mut best);
                if !next_combination(&mut c, n) {
                    break;
                }
            }
        } else {
            let mut limit = params.max_iters;
            if let Some(w) = params.assumed_inlier_ratio {
                limit = limit.min(adaptive_iterations(params.confidence, w, s).max(1));
            }
            let mut subset = vec![0usize; s];
            while iterations < limit {
                iterations += 1;
                for (slot, idx) in subset.iter_mut().zip(sample(rng, n, s).iter()) {
                    *slot = idx;
                }
                if consider(&subset, &mut best) && params.assumed_inlier_ratio.is_none() {
                    let w = best.as_ref().map_or(0.0, |b| b.inliers.len() as f64 / n as f64);
                    limit = limit.min(adaptive_iterations(params.confidence, w, s).max(1));
                }
            }
        }
    }

    match best {
        None => RansacOutcome {
            candidate: None,
            inliers: Vec::new(),
            cost: T::zero(),
            iterations,
        },
        Some(b) => {
            let refit = if b.inliers.is_empty() {
                None
            } else {
                model.fit(&b.inliers)
            };
            let candidate = refit.unwrap_or(b.candidate);
            let cost = b.inliers.iter().map(|&i| model.residual(&candidate, i)).sum();
            RansacOutcome {
                candidate: Some(candidate),
                inliers: b.inliers,
                cost,
                iterations,
            }
        }
    }
}
