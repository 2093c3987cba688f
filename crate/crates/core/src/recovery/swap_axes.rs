//! Swapped-coordinate voting for coordinate-permuted clouds.
//!
//! Within a true neighborhood, members keep their unswapped coordinates close
//! to each other while the swapped coordinate comes from an unrelated point.
//! Each member votes for the axis along which its cumulative absolute
//! difference to the other members is largest relative to the other members;
//! votes accumulate over every neighborhood the item appears in.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Axis, Vec3};
use crate::neighborhood::NeighborhoodSet;
use crate::obfuscation::{ItemGeometry, ObfuscatedCloud, Scheme};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwapAxisVote {
    pub axis: Axis,
    pub votes: [u32; 3],
    /// The winning count was shared (or no vote was cast); `axis` is the
    /// lowest-index candidate.
    pub tie: bool,
}

/// Axis with the strictly largest relative cumulative difference for each
/// member, or `None` when the maximum is shared. A member's cumulative
/// difference along an axis is divided by the members' mean along that axis,
/// so that axes with a wider spread in the scene do not win by default.
pub fn local_votes<T: Real>(members: &[Vec3<T>], m: usize) -> Vec<Option<Axis>> {
    if members.len() < 2 {
        return vec![None; members.len()];
    }
    let cum: Vec<[T; 3]> = members
        .iter()
        .map(|p| {
            let mut c = [T::zero(); 3];
            for q in members {
                for (a, v) in c.iter_mut().enumerate().take(m) {
                    *v = *v + (p[a] - q[a]).abs();
                }
            }
            c
        })
        .collect();
    let mut mean = [T::zero(); 3];
    for c in &cum {
        for a in 0..m {
            mean[a] = mean[a] + c[a];
        }
    }
    cum.iter()
        .map(|c| {
            let rel: Vec<T> = (0..m)
                .map(|a| if mean[a] > T::zero() { c[a] / mean[a] } else { T::zero() })
                .collect();
            let max = rel.iter().copied().fold(T::neg_infinity(), T::max);
            let mut winners = (0..m).filter(|&a| rel[a] == max);
            let first = winners.next()?;
            winners.next().is_none().then(|| Axis::ALL[first])
        })
        .collect()
}

/// Per-item estimate of the swapped axis. Each neighborhood contributes the
/// subject and its neighbors as members.
pub fn estimate_swap_axes<T: Real>(
    obf: &ObfuscatedCloud<T>,
    nbrs: &NeighborhoodSet,
) -> Result<BTreeMap<u64, SwapAxisVote>> {
    if obf.scheme != Scheme::Cp {
        return Err(Error::SchemeMismatch(format!(
            "swap-axis voting needs cp, got {}",
            obf.scheme
        )));
    }
    let m = obf.dim.count();
    let positions: HashMap<u64, Vec3<T>> = obf
        .items
        .iter()
        .map(|it| match it.geometry {
            ItemGeometry::Point(p) => Ok((it.id, p)),
            _ => Err(Error::SchemeMismatch(format!("item {} is not a point", it.id))),
        })
        .collect::<Result<_>>()?;
    let mut votes: BTreeMap<u64, [u32; 3]> = obf.items.iter().map(|it| (it.id, [0; 3])).collect();
    let mut ids = Vec::new();
    let mut members = Vec::new();
    for n in &nbrs.neighborhoods {
        ids.clear();
        members.clear();
        for id in std::iter::once(n.subject.item_id).chain(n.neighbors.iter().copied()) {
            if ids.contains(&id) {
                continue;
            }
            let p = positions.get(&id).ok_or(Error::UnknownId(id))?;
            ids.push(id);
            members.push(*p);
        }
        for (id, vote) in ids.iter().zip(local_votes(&members, m)) {
            if let Some(axis) = vote {
                votes.get_mut(id).expect("known item")[axis.index()] += 1;
            }
        }
    }
    Ok(votes
        .into_iter()
        .map(|(id, v)| {
            let max = *v[..m].iter().max().expect("m >= 2");
            let first = (0..m).find(|&a| v[a] == max).expect("max is attained");
            let shared = (0..m).filter(|&a| v[a] == max).count() > 1;
            (
                id,
                SwapAxisVote {
                    axis: Axis::ALL[first],
                    votes: v,
                    tie: shared,
                },
            )
        })
        .collect())
}
