//! Neighborhood sets: per-subject lists of obfuscated-item ids that hide the
//! subject's nearest neighbors.

use std::collections::{BTreeSet, HashMap, HashSet};

use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::obfuscation::ObfuscatedCloud;
use crate::rng::stream;
use crate::scalar::Real;
use crate::sidecar::SceneSidecar;
use crate::spatial::SpatialIndex;

/// The hidden point being recovered: an obfuscated item plus, for paired
/// lines, which of its two points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SubjectKey {
    pub item_id: u64,
    pub slot: u8,
}

impl SubjectKey {
    pub fn new(item_id: u64, slot: u8) -> Self {
        SubjectKey { item_id, slot }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    OracleExact,
    OracleCorrupted(f64),
    Estimated,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub subject: SubjectKey,
    pub neighbors: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodSet {
    pub k: usize,
    pub provenance: Provenance,
    pub seed: Option<u64>,
    /// Sorted by subject.
    pub neighborhoods: Vec<Neighborhood>,
}

impl NeighborhoodSet {
    /// Sorts by subject and checks size, distinctness and self-exclusion.
    pub fn new(
        k: usize,
        provenance: Provenance,
        seed: Option<u64>,
        mut neighborhoods: Vec<Neighborhood>,
    ) -> Result<Self> {
        neighborhoods.sort_by_key(|n| n.subject);
        let set = NeighborhoodSet {
            k,
            provenance,
            seed,
            neighborhoods,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.neighborhoods.windows(2) {
            if w[0].subject >= w[1].subject {
                return Err(Error::invalid(format!(
                    "subjects must be unique and sorted ({:?})",
                    w[1].subject
                )));
            }
        }
        for n in &self.neighborhoods {
            if n.neighbors.len() != self.k {
                return Err(Error::invalid(format!(
                    "subject {:?} has {} neighbors, expected {}",
                    n.subject,
                    n.neighbors.len(),
                    self.k
                )));
            }
            let distinct: HashSet<_> = n.neighbors.iter().collect();
            if distinct.len() != n.neighbors.len() {
                return Err(Error::invalid(format!(
                    "subject {:?} has repeated neighbors",
                    n.subject
                )));
            }
            if distinct.contains(&n.subject.item_id) {
                return Err(Error::invalid(format!("subject {:?} lists itself", n.subject)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.neighborhoods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighborhoods.is_empty()
    }

    pub fn get(&self, subject: SubjectKey) -> Option<&Neighborhood> {
        self.neighborhoods
            .binary_search_by_key(&subject, |n| n.subject)
            .ok()
            .map(|i| &self.neighborhoods[i])
    }
}

/// Exact neighborhoods from the original geometry: for every original point,
/// the obfuscated items of its nearest neighbors.
///
/// Scheme with paired lines map two points to one item, so the K-NN list is
/// walked in distance order and items are taken until `k` distinct ones,
/// other than the subject's own item, have been collected. `sidecar` is
/// required when items are not one-to-one with points (PPL, CP).
pub fn oracle_neighborhoods<T: Real>(
    cloud: &PointCloud<T>,
    obf: &ObfuscatedCloud<T>,
    sidecar: Option<&SceneSidecar<T>>,
    k: usize,
) -> Result<NeighborhoodSet> {
    let subject_of: HashMap<u64, SubjectKey> = match sidecar {
        Some(sc) => sc
            .subject_map()
            .into_iter()
            .map(|(src, (item, slot))| (src, SubjectKey::new(item, slot)))
            .collect(),
        None if obf.scheme.is_paired_lines() || obf.scheme == crate::obfuscation::Scheme::Cp => {
            return Err(Error::MissingSidecar(obf.scheme.to_string()))
        }
        None => obf.items.iter().map(|it| (it.id, SubjectKey::new(it.id, 0))).collect(),
    };
    let item_ids: HashSet<u64> = obf.items.iter().map(|it| it.id).collect();
    if let Some(bad) = subject_of.values().find(|s| !item_ids.contains(&s.item_id)) {
        return Err(Error::UnknownId(bad.item_id));
    }
    if k >= obf.len() {
        return Err(Error::KTooLarge { k, n: obf.len() });
    }
    let index = SpatialIndex::new(cloud);
    let n = cloud.len();
    let mut out = Vec::with_capacity(subject_of.len());
    for p in &cloud.points {
        let Some(&subject) = subject_of.get(&p.id) else {
            continue;
        };
        let mut want = (k + 1).min(n - 1);
        let neighbors = loop {
            let mut taken = Vec::with_capacity(k);
            let mut seen = HashSet::with_capacity(k);
            for nb in index.knn(p.id, want)? {
                let Some(s) = subject_of.get(&nb.id) else { continue };
                if s.item_id != subject.item_id && seen.insert(s.item_id) {
                    taken.push(s.item_id);
                    if taken.len() == k {
                        break;
                    }
                }
            }
            if taken.len() == k {
                break taken;
            }
            if want == n - 1 {
                return Err(Error::KTooLarge { k, n: seen.len() });
            }
            want = (want * 2).min(n - 1);
        };
        out.push(Neighborhood { subject, neighbors });
    }
    NeighborhoodSet::new(k, Provenance::OracleExact, None, out)
}

/// Inliers kept per neighborhood of size `k` at inlier ratio `ratio`:
/// `floor(ratio * k)`, with a small tolerance against representation error.
pub fn kept_inliers(ratio: f64, k: usize) -> usize {
    ((ratio * k as f64) + 1e-9).floor().min(k as f64) as usize
}

/// Replaces `k - floor(ratio * k)` uniformly chosen members of every
/// neighborhood by uniformly chosen items outside the subject's neighborhood.
///
/// `universe` lists every obfuscated item id. Each subject draws from its own
/// stream keyed by `(seed, item, slot)`.
pub fn corrupt_neighborhoods(
    nbrs: &NeighborhoodSet,
    universe: &[u64],
    inlier_ratio: f64,
    seed: u64,
) -> Result<NeighborhoodSet> {
    if !(inlier_ratio > 0.0 && inlier_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "inlier ratio must lie in (0, 1], got {inlier_ratio}"
        )));
    }
    let k = nbrs.k;
    let replace = k - kept_inliers(inlier_ratio, k);
    let universe: BTreeSet<u64> = universe.iter().copied().collect();
    let mut out = Vec::with_capacity(nbrs.len());
    for n in &nbrs.neighborhoods {
        let mut neighbors = n.neighbors.clone();
        if replace > 0 {
            let mut rng = stream(seed, &[n.subject.item_id, n.subject.slot as u64]);
            let excluded: HashSet<u64> = n.neighbors.iter().copied().chain([n.subject.item_id]).collect();
            let pool: Vec<u64> = universe.iter().copied().filter(|id| !excluded.contains(id)).collect();
            if pool.len() < replace {
                return Err(Error::invalid(format!(
                    "only {} non-neighbors available to replace {replace} members of {:?}",
                    pool.len(),
                    n.subject
                )));
            }
            let positions = sample(&mut rng, k, replace);
            let fresh: Vec<u64> = pool.choose_multiple(&mut rng, replace).copied().collect();
            for (pos, id) in positions.iter().zip(fresh) {
                neighbors[pos] = id;
            }
        }
        out.push(Neighborhood {
            subject: n.subject,
            neighbors,
        });
    }
    NeighborhoodSet::new(k, Provenance::OracleCorrupted(inlier_ratio), Some(seed), out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InlierStats {
    pub per_subject: Vec<(SubjectKey, f64)>,
    /// True neighbors over all neighbor slots.
    pub mean: f64,
}

/// Fraction of each estimated neighborhood that lies in the true one.
pub fn measure_inlier_ratio(estimated: &NeighborhoodSet, truth: &NeighborhoodSet) -> Result<InlierStats> {
    if estimated.len() != truth.len() {
        return Err(Error::invalid(format!(
            "subject count mismatch: {} vs {}",
            estimated.len(),
            truth.len()
        )));
    }
    let mut per_subject = Vec::with_capacity(estimated.len());
    let (mut hits_total, mut slots_total) = (0usize, 0usize);
    for (e, t) in estimated.neighborhoods.iter().zip(&truth.neighborhoods) {
        if e.subject != t.subject {
            return Err(Error::invalid(format!(
                "subject mismatch: {:?} vs {:?}",
                e.subject, t.subject
            )));
        }
        let true_set: HashSet<u64> = t.neighbors.iter().copied().collect();
        let hits = e.neighbors.iter().filter(|id| true_set.contains(id)).count();
        hits_total += hits;
        slots_total += e.neighbors.len();
        let ratio = if e.neighbors.is_empty() {
            1.0
        } else {
            hits as f64 / e.neighbors.len() as f64
        };
        per_subject.push((e.subject, ratio));
    }
    // pooled over all slots, so equal-size neighborhoods give an exact ratio
    let mean = if slots_total == 0 {
        if per_subject.is_empty() {
            0.0
        } else {
            1.0
        }
    } else {
        hits_total as f64 / slots_total as f64
    };
    Ok(InlierStats { per_subject, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{vec3, Dim, Point};
    use crate::obfuscation::{obfuscate, ObfuscationOptions, Scheme};
    use crate::synthetic::{generate_synthetic, SceneKind, SyntheticParams};

    fn collinear() -> PointCloud<f64> {
        PointCloud::new(
            Dim::Three,
            [0.0, 1.0, 2.0, 10.0]
                .iter()
                .enumerate()
                .map(|(i, &x)| Point::new(i as u64, [x, 0.0, 0.0]))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn collinear_oracle() {
        let c = collinear();
        let o = obfuscate(&c, Scheme::Line3d, 1, &ObfuscationOptions::default()).unwrap();
        let n = oracle_neighborhoods(&c, &o.cloud, None, 2).unwrap();
        assert_eq!(n.get(SubjectKey::new(0, 0)).unwrap().neighbors, vec![1, 2]);
        let all = oracle_neighborhoods(&c, &o.cloud, None, 3).unwrap();
        let mut ids = all.get(SubjectKey::new(0, 0)).unwrap().neighbors.clone();
        ids.sort();
        assert_eq!(ids, vec![1, 2, 3]);
        assert!(oracle_neighborhoods(&c, &o.cloud, None, 4).is_err());
    }

    #[test]
    fn paired_schemes_require_sidecar() {
        let c = collinear();
        for scheme in [Scheme::Ppl, Scheme::Cp] {
            let o = obfuscate(&c, scheme, 1, &ObfuscationOptions::default()).unwrap();
            assert!(matches!(
                oracle_neighborhoods(&c, &o.cloud, None, 1),
                Err(Error::MissingSidecar(_))
            ));
        }
    }

    fn brute_force_items(sidecar: &SceneSidecar<f64>, subject_src: u64, k: usize) -> Vec<u64> {
        let subj = sidecar.subject_map();
        let q = *sidecar.original.position_of(subject_src).unwrap();
        let own = subj[&subject_src].0;
        let mut all: Vec<(f64, u64)> = sidecar
            .original
            .points
            .iter()
            .filter(|p| p.id != subject_src)
            .map(|p| (vec3::dist_sq(&q, &p.coords), p.id))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mut out = Vec::new();
        for (_, id) in all {
            if let Some(&(item, _)) = subj.get(&id) {
                if item != own && !out.contains(&item) {
                    out.push(item);
                }
            }
            if out.len() == k {
                break;
            }
        }
        out
    }

    #[test]
    fn oracle_matches_brute_force_through_sidecar() {
        let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::UniformBox, 500, Dim::Three, 2))
            .unwrap()
            .cloud;
        for scheme in [Scheme::Line3d, Scheme::Ppl, Scheme::Cp] {
            let o = obfuscate(&c, scheme, 4, &ObfuscationOptions::default()).unwrap();
            let n = oracle_neighborhoods(&c, &o.cloud, Some(&o.sidecar), 20).unwrap();
            let src = o.sidecar.source_map();
            assert_eq!(n.len(), src.len());
            for nb in &n.neighborhoods {
                let s = src[&(nb.subject.item_id, nb.subject.slot)];
                assert_eq!(nb.neighbors, brute_force_items(&o.sidecar, s, 20), "{scheme}");
            }
        }
    }

    #[test]
    fn ppl_subjects_appear_once_per_slot() {
        let c = generate_synthetic::<f64>(&SyntheticParams::new(SceneKind::UniformBox, 60, Dim::Three, 2))
            .unwrap()
            .cloud;
        let o = obfuscate(&c, Scheme::Ppl, 4, &ObfuscationOptions::default()).unwrap();
        let n = oracle_neighborhoods(&c, &o.cloud, Some(&o.sidecar), 5).unwrap();
        assert_eq!(n.len(), 60);
        for item in &o.cloud.items {
            assert!(n.get(SubjectKey::new(item.id, 0)).is_some());
            assert!(n.get(SubjectKey::new(item.id, 1)).is_some());
        }
    }

    fn simple_set(k: usize, subjects: u64) -> (NeighborhoodSet, Vec<u64>) {
        let universe: Vec<u64> = (0..subjects).collect();
        let hoods = (0..subjects)
            .map(|s| Neighborhood {
                subject: SubjectKey::new(s, 0),
                neighbors: (1..=k as u64).map(|d| (s + d) % subjects).collect(),
            })
            .collect();
        (
            NeighborhoodSet::new(k, Provenance::OracleExact, None, hoods).unwrap(),
            universe,
        )
    }

    #[test]
    fn corruption_counts() {
        let (n, u) = simple_set(4, 30);
        let c = corrupt_neighborhoods(&n, &u, 0.5, 1).unwrap();
        for (a, b) in c.neighborhoods.iter().zip(&n.neighborhoods) {
            let changed = a.neighbors.iter().zip(&b.neighbors).filter(|(x, y)| x != y).count();
            assert_eq!(changed, 2);
        }
        assert_eq!(
            corrupt_neighborhoods(&n, &u, 1.0, 1).unwrap().neighborhoods,
            n.neighborhoods
        );

        let (n, u) = simple_set(20, 100);
        let c = corrupt_neighborhoods(&n, &u, 0.3, 9).unwrap();
        let stats = measure_inlier_ratio(&c, &n).unwrap();
        assert!(stats.per_subject.iter().all(|(_, r)| *r == 6.0 / 20.0));
        assert_eq!(c.provenance, Provenance::OracleCorrupted(0.3));
    }

    #[test]
    fn corruption_rejects_bad_ratio_and_small_pool() {
        let (n, u) = simple_set(4, 30);
        assert!(corrupt_neighborhoods(&n, &u, 0.0, 1).is_err());
        assert!(corrupt_neighborhoods(&n, &u, 1.5, 1).is_err());
        let (n, u) = simple_set(4, 6);
        assert!(corrupt_neighborhoods(&n, &u, 0.25, 1).is_err());
    }

    #[test]
    fn corruption_is_deterministic_and_keeps_validity() {
        let (n, u) = simple_set(10, 200);
        let a = corrupt_neighborhoods(&n, &u, 0.2, 5).unwrap();
        assert_eq!(a, corrupt_neighborhoods(&n, &u, 0.2, 5).unwrap());
        a.validate().unwrap();
    }

    #[test]
    fn measure_edge_cases() {
        let (n, _) = simple_set(5, 50);
        assert_eq!(measure_inlier_ratio(&n, &n).unwrap().mean, 1.0);
        let disjoint = NeighborhoodSet::new(
            5,
            Provenance::Estimated,
            None,
            n.neighborhoods
                .iter()
                .map(|h| Neighborhood {
                    subject: h.subject,
                    neighbors: (1..=5u64).map(|d| (h.subject.item_id + 10 + d) % 50).collect(),
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(measure_inlier_ratio(&disjoint, &n).unwrap().mean, 0.0);
        let (other, _) = simple_set(5, 51);
        assert!(measure_inlier_ratio(&other, &n).is_err());
    }

    #[test]
    fn set_validation() {
        let bad = vec![Neighborhood {
            subject: SubjectKey::new(1, 0),
            neighbors: vec![1, 2],
        }];
        assert!(NeighborhoodSet::new(2, Provenance::Estimated, None, bad).is_err());
        let dup = vec![Neighborhood {
            subject: SubjectKey::new(1, 0),
            neighbors: vec![2, 2],
        }];
        assert!(NeighborhoodSet::new(2, Provenance::Estimated, None, dup).is_err());
    }

    #[test]
    fn kept_inliers_floor() {
        assert_eq!(kept_inliers(0.3, 20), 6);
        assert_eq!(kept_inliers(0.1, 4), 0);
        assert_eq!(kept_inliers(0.7, 10), 7);
        assert_eq!(kept_inliers(0.29, 100), 29);
        assert_eq!(kept_inliers(1.0, 50), 50);
    }
}
