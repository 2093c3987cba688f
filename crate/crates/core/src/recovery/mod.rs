//! Per-point position recovery from obfuscated geometry and neighborhoods.
//!
//! Every subject point is constrained to its own obfuscated item (a line or
//! an axis-aligned plane) and placed where it is closest to the items of its
//! neighbors. Outlier neighbors are rejected with a RANSAC loop around the
//! closed-form solvers in [`solve`].

pub mod anchor;
pub mod descriptors;
pub mod ransac;
pub mod solve;
pub mod swap_axes;

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{vec3, AxisPlaneGeom, Dim, LineGeom, Vec3};
use crate::neighborhood::{Neighborhood, NeighborhoodSet, SubjectKey};
use crate::obfuscation::{ItemGeometry, ObfuscatedCloud, Scheme};
use crate::rng::stream;
use crate::scalar::Real;

pub use anchor::init_anchor;
pub use descriptors::{assign_ppl_descriptors, PplAssignment};
pub use ransac::{ransac, RansacOutcome, RansacParams, SubjectModel};
pub use solve::{solve_on_line, solve_on_plane, Constraint, LineSolution, PlaneSolution};
pub use swap_axes::{estimate_swap_axes, SwapAxisVote};

const ANCHOR_STREAM: u64 = 0xa7c0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Squared distances, solved in closed form.
    #[default]
    SumOfSquares,
    /// Unsquared distances: golden-section refinement on lines, medians on
    /// planes.
    SumOfDistances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryConfig {
    pub ransac_max_iters: usize,
    pub ransac_sample_size: usize,
    /// Absolute inlier distance threshold.
    pub inlier_threshold: f64,
    /// Fixes the adaptive iteration bound instead of updating it from the
    /// best inlier ratio seen so far.
    pub assumed_inlier_ratio: Option<f64>,
    pub confidence: f64,
    pub seed: u64,
    pub k_neighbors: usize,
    pub objective: Objective,
    /// Enumerate every sample subset instead of drawing them.
    pub exhaustive: bool,
    /// Replaces the computed initialization anchor.
    pub anchor: Option<[f64; 3]>,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig::for_scene(Dim::Three, 1.0)
    }
}

impl RecoveryConfig {
    pub const DELTA_FRACTION: f64 = 0.02;

    /// Defaults for a scene of the given dimension and diameter.
    pub fn for_scene(dim: Dim, diameter: f64) -> Self {
        let (sample, k) = match dim {
            Dim::Two => (2, 20),
            Dim::Three => (3, 50),
        };
        RecoveryConfig {
            ransac_max_iters: 10_000,
            ransac_sample_size: sample,
            inlier_threshold: Self::DELTA_FRACTION * diameter,
            assumed_inlier_ratio: None,
            confidence: 0.99,
            seed: 0,
            k_neighbors: k,
            objective: Objective::SumOfSquares,
            exhaustive: false,
            anchor: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return Err(Error::invalid(format!(
                "inlier threshold must be positive, got {}",
                self.inlier_threshold
            )));
        }
        if self.ransac_sample_size == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        if let Some(w) = self.assumed_inlier_ratio {
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::invalid(format!(
                    "assumed inlier ratio must lie in (0, 1], got {w}"
                )));
            }
        }
        if self.ransac_max_iters == 0 {
            return Err(Error::invalid("max iterations must be at least 1"));
        }
        if let Some(a) = self.anchor {
            if !a.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid("anchor must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    /// No neighbor constrains the subject; the point is the anchor projected
    /// onto the subject's item.
    Degenerate,
    /// The subject could not be processed (unknown ids, incompatible items).
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredPoint<T> {
    pub subject: SubjectKey,
    pub point: Vec3<T>,
    pub inlier_count: usize,
    pub neighbor_count: usize,
    /// Sum of unsquared inlier distances at `point`.
    pub final_cost: T,
    pub iterations: usize,
    pub status: Status,
    /// PPL: index of the line descriptor assigned to this slot.
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<u8>,
    #[serde(default)]
    pub assignment_tie: bool,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl<T: Real> RecoveredPoint<T> {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveredCloud<T> {
    pub scheme: Scheme,
    pub dim: Dim,
    pub config: RecoveryConfig,
    pub anchor: Vec3<T>,
    pub points: Vec<RecoveredPoint<T>>,
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub swap_axes: Option<BTreeMap<u64, SwapAxisVote>>,
    /// Not serialized so that outputs stay byte-identical across runs.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl<T: Real> RecoveredCloud<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, subject: SubjectKey) -> Option<&RecoveredPoint<T>> {
        self.points
            .binary_search_by_key(&subject, |p| p.subject)
            .ok()
            .map(|i| &self.points[i])
    }

    pub fn count_status(&self, status: Status) -> usize {
        self.points.iter().filter(|p| p.status == status).count()
    }

    /// Iteration, inlier and status summary of the run.
    pub fn diagnostics(&self) -> serde_json::Value {
        let n = self.points.len().max(1) as f64;
        let iters: usize = self.points.iter().map(|p| p.iterations).sum();
        let inliers: usize = self.points.iter().map(|p| p.inlier_count).sum();
        let ties = self.points.iter().filter(|p| p.assignment_tie).count();
        serde_json::json!({
            "scheme": self.scheme,
            "subjects": self.points.len(),
            "ok": self.count_status(Status::Ok),
            "degenerate": self.count_status(Status::Degenerate),
            "failed": self.count_status(Status::Failed),
            "mean_iterations": iters as f64 / n,
            "max_iterations": self.points.iter().map(|p| p.iterations).max().unwrap_or(0),
            "mean_inliers": inliers as f64 / n,
            "assignment_ties": ties,
            "swap_axis_ties": self.swap_axes.as_ref().map(|v| v.values().filter(|s| s.tie).count()),
            "wall_time_secs": self.wall_time_secs,
        })
    }
}

/// Line-constrained subject.
pub struct LineModel<T> {
    pub subject: LineGeom<T>,
    pub neighbors: Vec<Constraint<T>>,
    pub init_t: T,
}

impl<T: Real> SubjectModel<T> for LineModel<T> {
    fn num_neighbors(&self) -> usize {
        self.neighbors.len()
    }

    fn fit(&self, subset: &[usize]) -> Option<Vec3<T>> {
        let s = solve::solve_on_line_subset(&self.subject, &self.neighbors, subset.iter().copied(), self.init_t);
        s.constrained.then_some(s.point)
    }

    fn residual(&self, candidate: &Vec3<T>, neighbor: usize) -> T {
        self.neighbors[neighbor].distance(candidate)
    }
}

/// Plane-constrained subject.
pub struct PlaneModel<T> {
    pub subject: AxisPlaneGeom<T>,
    pub neighbors: Vec<AxisPlaneGeom<T>>,
    pub init: [T; 2],
    pub median: bool,
}

impl<T: Real> SubjectModel<T> for PlaneModel<T> {
    fn num_neighbors(&self) -> usize {
        self.neighbors.len()
    }

    fn fit(&self, subset: &[usize]) -> Option<Vec3<T>> {
        let s = solve::solve_on_plane_subset(
            &self.subject,
            &self.neighbors,
            subset.iter().copied(),
            self.init,
            self.median,
        );
        s.any_constrained().then_some(s.point)
    }

    fn residual(&self, candidate: &Vec3<T>, neighbor: usize) -> T {
        self.neighbors[neighbor].distance(candidate)
    }
}

enum SubjectGeom<T> {
    Line(LineGeom<T>),
    Plane(AxisPlaneGeom<T>),
}

/// Shared read-only state for recovering the subjects of one cloud.
pub struct RecoveryContext<'a, T> {
    pub obf: &'a ObfuscatedCloud<T>,
    pub cfg: &'a RecoveryConfig,
    pub anchor: Vec3<T>,
    pub swap_axes: Option<BTreeMap<u64, SwapAxisVote>>,
    index: HashMap<u64, usize>,
    /// CP: the voted axis-aligned line of each item, by item index.
    cp_lines: Vec<LineGeom<T>>,
}

impl<'a, T: Real> RecoveryContext<'a, T> {
    pub fn new(obf: &'a ObfuscatedCloud<T>, nbrs: &NeighborhoodSet, cfg: &'a RecoveryConfig) -> Result<Self> {
        cfg.validate()?;
        if obf.is_empty() {
            return Err(Error::invalid("obfuscated cloud is empty"));
        }
        let anchor = match cfg.anchor {
            Some(a) => vec3::cast(&a),
            None => init_anchor(obf, crate::rng::derive_seed(cfg.seed, &[ANCHOR_STREAM])),
        };
        let (swap_axes, cp_lines) = if obf.scheme == Scheme::Cp {
            let votes = estimate_swap_axes(obf, nbrs)?;
            let lines = obf
                .items
                .iter()
                .map(|it| match it.geometry {
                    ItemGeometry::Point(p) => Ok(LineGeom::axis_aligned(obf.dim, p, votes[&it.id].axis)),
                    _ => Err(Error::SchemeMismatch(format!("cp item {} is not a point", it.id))),
                })
                .collect::<Result<Vec<_>>>()?;
            (Some(votes), lines)
        } else {
            (None, Vec::new())
        };
        Ok(RecoveryContext {
            obf,
            cfg,
            anchor,
            swap_axes,
            index: obf.index_by_id(),
            cp_lines,
        })
    }

    fn item_index(&self, id: u64) -> Result<usize> {
        self.index.get(&id).copied().ok_or(Error::UnknownId(id))
    }

    fn geometry(&self, idx: usize) -> SubjectGeom<T> {
        match &self.obf.items[idx].geometry {
            ItemGeometry::Line(l) | ItemGeometry::Ray { line: l, .. } => SubjectGeom::Line(*l),
            ItemGeometry::Plane(p) => SubjectGeom::Plane(*p),
            ItemGeometry::Point(_) => SubjectGeom::Line(self.cp_lines[idx]),
        }
    }

    fn center_of(&self, idx: usize) -> Option<u8> {
        match self.obf.items[idx].geometry {
            ItemGeometry::Ray { center_id, .. } => Some(center_id),
            _ => None,
        }
    }

    /// Neighbor item indices entering the solve. Ray subjects drop neighbors
    /// built from the same cluster center: all those lines meet the subject
    /// at the center.
    pub fn neighbor_indices(&self, subject_idx: usize, hood: &Neighborhood) -> Result<Vec<usize>> {
        let center = self.center_of(subject_idx);
        let mut out = Vec::with_capacity(hood.neighbors.len());
        for id in &hood.neighbors {
            let idx = self.item_index(*id)?;
            if center.is_some() && self.center_of(idx) == center {
                continue;
            }
            out.push(idx);
        }
        Ok(out)
    }

    fn ransac_params(&self) -> RansacParams<T> {
        RansacParams {
            max_iters: self.cfg.ransac_max_iters,
            sample_size: self.cfg.ransac_sample_size,
            threshold: T::lit(self.cfg.inlier_threshold),
            confidence: self.cfg.confidence,
            assumed_inlier_ratio: self.cfg.assumed_inlier_ratio,
            exhaustive: self.cfg.exhaustive,
        }
    }

    fn anchor_on_plane(&self, plane: &AxisPlaneGeom<T>) -> [T; 2] {
        let [a, b] = plane.free_axes();
        [self.anchor[a.index()], self.anchor[b.index()]]
    }

    fn failed(&self, subject: SubjectKey, err: Error) -> RecoveredPoint<T> {
        RecoveredPoint {
            subject,
            point: self.anchor,
            inlier_count: 0,
            neighbor_count: 0,
            final_cost: T::zero(),
            iterations: 0,
            status: Status::Failed,
            descriptor: None,
            assignment_tie: false,
            error: Some(err.to_string()),
        }
    }

    /// Recovers one subject; errors are recorded in the returned entry.
    pub fn recover_subject(&self, hood: &Neighborhood) -> RecoveredPoint<T> {
        match self.try_recover_subject(hood) {
            Ok(p) => p,
            Err(e) => self.failed(hood.subject, e),
        }
    }

    fn try_recover_subject(&self, hood: &Neighborhood) -> Result<RecoveredPoint<T>> {
        let subject_idx = self.item_index(hood.subject.item_id)?;
        let nb = self.neighbor_indices(subject_idx, hood)?;
        let mut rng = stream(self.cfg.seed, &[hood.subject.item_id, hood.subject.slot as u64]);
        let params = self.ransac_params();
        let unsquared = self.cfg.objective == Objective::SumOfDistances;
        let entry = |point: Vec3<T>, outcome: &RansacOutcome<T>, status: Status| RecoveredPoint {
            subject: hood.subject,
            point,
            inlier_count: outcome.inliers.len(),
            neighbor_count: nb.len(),
            final_cost: outcome.cost,
            iterations: outcome.iterations,
            status,
            descriptor: None,
            assignment_tie: false,
            error: None,
        };
        match self.geometry(subject_idx) {
            SubjectGeom::Line(subject) => {
                let neighbors = nb
                    .iter()
                    .map(|&i| match self.geometry(i) {
                        SubjectGeom::Line(l) => Constraint::Line(l),
                        SubjectGeom::Plane(p) => Constraint::Plane(p),
                    })
                    .collect();
                let init_t = subject.project(&self.anchor).t;
                let model = LineModel {
                    subject,
                    neighbors,
                    init_t,
                };
                let mut outcome = ransac(&model, &params, &mut rng);
                match outcome.candidate {
                    None => Ok(entry(subject.at(init_t), &outcome, Status::Degenerate)),
                    Some(point) if unsquared && !outcome.inliers.is_empty() => {
                        let t0 = subject.project(&point).t;
                        let refined = solve::refine_line_unsquared(&subject, &model.neighbors, &outcome.inliers, t0);
                        outcome.cost = refined.cost;
                        Ok(entry(refined.point, &outcome, Status::Ok))
                    }
                    Some(point) => Ok(entry(point, &outcome, Status::Ok)),
                }
            }
            SubjectGeom::Plane(subject) => {
                let neighbors = nb
                    .iter()
                    .map(|&i| match self.geometry(i) {
                        SubjectGeom::Plane(p) => Ok(p),
                        SubjectGeom::Line(_) => Err(Error::SchemeMismatch(format!(
                            "plane subject {} has a line neighbor",
                            hood.subject.item_id
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let init = self.anchor_on_plane(&subject);
                let model = PlaneModel {
                    subject,
                    neighbors,
                    init,
                    median: unsquared,
                };
                let outcome = ransac(&model, &params, &mut rng);
                match outcome.candidate {
                    None => {
                        let mut p = self.anchor;
                        p[subject.axis.index()] = subject.offset;
                        Ok(entry(p, &outcome, Status::Degenerate))
                    }
                    Some(point) => Ok(entry(point, &outcome, Status::Ok)),
                }
            }
        }
    }
}

/// Recovers one subject with a freshly built context. Prefer
/// [`recover_cloud`] for whole clouds: the context computes the anchor and,
/// for CP, the swap-axis votes.
pub fn ransac_recover_subject<T: Real>(
    obf: &ObfuscatedCloud<T>,
    nbrs: &NeighborhoodSet,
    subject: SubjectKey,
    cfg: &RecoveryConfig,
) -> Result<RecoveredPoint<T>> {
    let hood = nbrs.get(subject).ok_or(Error::UnknownId(subject.item_id))?;
    if hood.neighbors.is_empty() {
        return Err(Error::NoNeighbors);
    }
    let ctx = RecoveryContext::new(obf, nbrs, cfg)?;
    Ok(ctx.recover_subject(hood))
}

fn check_compatible<T: Real>(obf: &ObfuscatedCloud<T>, nbrs: &NeighborhoodSet) -> Result<()> {
    let slots = if obf.scheme.is_paired_lines() { 2 } else { 1 };
    if let Some(bad) = nbrs.neighborhoods.iter().find(|n| n.subject.slot as usize >= slots) {
        return Err(Error::SchemeMismatch(format!(
            "subject slot {} is invalid for scheme {}",
            bad.subject.slot, obf.scheme
        )));
    }
    Ok(())
}

/// Recovers every subject of `nbrs` in parallel on the current rayon pool.
pub fn recover_cloud<T: Real>(
    obf: &ObfuscatedCloud<T>,
    nbrs: &NeighborhoodSet,
    cfg: &RecoveryConfig,
) -> Result<RecoveredCloud<T>> {
    let start = Instant::now();
    check_compatible(obf, nbrs)?;
    let ctx = RecoveryContext::new(obf, nbrs, cfg)?;
    let mut points: Vec<RecoveredPoint<T>> = nbrs.neighborhoods.par_iter().map(|h| ctx.recover_subject(h)).collect();
    if obf.scheme.is_paired_lines() {
        assign_descriptors(obf, nbrs, &ctx.index, &mut points);
    }
    Ok(RecoveredCloud {
        scheme: obf.scheme,
        dim: obf.dim,
        config: cfg.clone(),
        anchor: ctx.anchor,
        points,
        swap_axes: ctx.swap_axes,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// [`recover_cloud`] on a dedicated pool of `threads` workers.
pub fn recover_cloud_with_threads<T: Real>(
    obf: &ObfuscatedCloud<T>,
    nbrs: &NeighborhoodSet,
    cfg: &RecoveryConfig,
    threads: usize,
) -> Result<RecoveredCloud<T>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| recover_cloud(obf, nbrs, cfg))
}

fn assign_descriptors<T: Real>(
    obf: &ObfuscatedCloud<T>,
    nbrs: &NeighborhoodSet,
    index: &HashMap<u64, usize>,
    points: &mut [RecoveredPoint<T>],
) {
    let position: HashMap<SubjectKey, usize> = points.iter().enumerate().map(|(i, p)| (p.subject, i)).collect();
    let results: Vec<_> = obf
        .items
        .par_iter()
        .filter_map(|item| {
            let h0 = nbrs.get(SubjectKey::new(item.id, 0))?;
            let h1 = nbrs.get(SubjectKey::new(item.id, 1))?;
            let r = assign_ppl_descriptors(item, [h0, h1], obf, index).ok()?;
            Some((item.id, r))
        })
        .collect();
    for (item_id, r) in results {
        for slot in 0..2u8 {
            if let Some(&i) = position.get(&SubjectKey::new(item_id, slot)) {
                points[i].descriptor = Some(r.descriptor_for_slot[slot as usize]);
                points[i].assignment_tie = r.tie;
            }
        }
    }
}
