//! Descriptor-to-point assignment for paired-point lines.
//!
//! Each of a line's two descriptors is compared with the two neighbor sets
//! (one per hidden point): the distance between a descriptor and a set sums,
//! over the set's lines, the distance to the closer of that line's
//! descriptors. The bijection with the smaller total wins. Point positions
//! are never used.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighborhood::Neighborhood;
use crate::obfuscation::{ObfuscatedCloud, ObfuscatedItem};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PplAssignment {
    /// Index into the line's descriptor list for slot 0 and slot 1.
    pub descriptor_for_slot: [u8; 2],
    /// Both bijections scored equally; the identity was kept.
    pub tie: bool,
}

fn euclidean<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum::<T>().sqrt()
}

fn set_distance<T: Real>(
    desc: &[T],
    hood: &Neighborhood,
    obf: &ObfuscatedCloud<T>,
    index: &HashMap<u64, usize>,
) -> Result<T> {
    let mut total = T::zero();
    for id in &hood.neighbors {
        let item = &obf.items[*index.get(id).ok_or(Error::UnknownId(*id))?];
        let closest = item
            .descriptors
            .iter()
            .map(|d| euclidean(desc, d))
            .fold(None, |acc: Option<T>, d| Some(acc.map_or(d, |a| a.min(d))))
            .ok_or_else(|| Error::invalid(format!("neighbor line {id} has no descriptors")))?;
        total = total + closest;
    }
    Ok(total)
}

pub fn assign_ppl_descriptors<T: Real>(
    line: &ObfuscatedItem<T>,
    slot_neighborhoods: [&Neighborhood; 2],
    obf: &ObfuscatedCloud<T>,
    index: &HashMap<u64, usize>,
) -> Result<PplAssignment> {
    if line.descriptors.len() != 2 {
        return Err(Error::invalid(format!(
            "line {} carries {} descriptors, expected 2",
            line.id,
            line.descriptors.len()
        )));
    }
    let mut d = [[T::zero(); 2]; 2];
    for (i, desc) in line.descriptors.iter().enumerate() {
        for (s, hood) in slot_neighborhoods.iter().enumerate() {
            d[i][s] = set_distance(desc, hood, obf, index)?;
        }
    }
    let identity = d[0][0] + d[1][1];
    let swapped = d[0][1] + d[1][0];
    Ok(if swapped < identity {
        PplAssignment {
            descriptor_for_slot: [1, 0],
            tie: false,
        }
    } else {
        PplAssignment {
            descriptor_for_slot: [0, 1],
            tie: swapped == identity,
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Dim, LineGeom};
    use crate::neighborhood::SubjectKey;
    use crate::obfuscation::{ItemGeometry, ObfuscationMeta, Scheme};

    fn item(id: u64, descriptors: Vec<Vec<f64>>) -> ObfuscatedItem<f64> {
        ObfuscatedItem {
            id,
            geometry: ItemGeometry::Line(LineGeom::new(Dim::Three, [0.0; 3], [1.0, 0.0, 0.0]).unwrap()),
            descriptors,
        }
    }

    fn hood(item: u64, slot: u8, neighbors: Vec<u64>) -> Neighborhood {
        Neighborhood {
            subject: SubjectKey::new(item, slot),
            neighbors,
        }
    }

    fn cloud(items: Vec<ObfuscatedItem<f64>>) -> (ObfuscatedCloud<f64>, HashMap<u64, usize>) {
        let c = ObfuscatedCloud {
            scheme: Scheme::Ppl,
            dim: Dim::Three,
            items,
            metadata: ObfuscationMeta::default(),
        };
        let idx = c.index_by_id();
        (c, idx)
    }

    #[test]
    fn zero_distance_construction() {
        let a = vec![1.0, 0.0];
        let b = vec![0.0, 1.0];
        // descriptor order on the subject line is [b, a]; slot-0 neighbors carry copies of a
        let (c, idx) = cloud(vec![
            item(0, vec![b.clone(), a.clone()]),
            item(1, vec![a.clone(), vec![5.0, 5.0]]),
            item(2, vec![vec![-5.0, 5.0], a.clone()]),
            item(3, vec![b.clone(), vec![5.0, -5.0]]),
            item(4, vec![b.clone(), b.clone()]),
        ]);
        let h0 = hood(0, 0, vec![1, 2]);
        let h1 = hood(0, 1, vec![3, 4]);
        let r = assign_ppl_descriptors(&c.items[0], [&h0, &h1], &c, &idx).unwrap();
        assert_eq!(r.descriptor_for_slot, [1, 0]);
        assert!(!r.tie);
    }

    #[test]
    fn tie_keeps_identity() {
        let a = vec![1.0, 0.0];
        let (c, idx) = cloud(vec![
            item(0, vec![a.clone(), a.clone()]),
            item(1, vec![a.clone(), a.clone()]),
        ]);
        let h0 = hood(0, 0, vec![1]);
        let h1 = hood(0, 1, vec![1]);
        let r = assign_ppl_descriptors(&c.items[0], [&h0, &h1], &c, &idx).unwrap();
        assert_eq!(r.descriptor_for_slot, [0, 1]);
        assert!(r.tie);
    }

    #[test]
    fn missing_descriptors_error() {
        let (c, idx) = cloud(vec![item(0, vec![]), item(1, vec![vec![1.0]])]);
        let h = hood(0, 0, vec![1]);
        assert!(assign_ppl_descriptors(&c.items[0], [&h, &h], &c, &idx).is_err());
        let (c, idx) = cloud(vec![item(0, vec![vec![1.0], vec![2.0]]), item(1, vec![])]);
        assert!(assign_ppl_descriptors(&c.items[0], [&h, &h], &c, &idx).is_err());
    }
}
