//! Ground truth kept apart from the attacker-visible obfuscation: original
//! cloud, item-to-source links, PPL slot records and CP swap records.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::geometry::{Axis, PointCloud};
use crate::obfuscation::Scheme;

/// Source point ids of one obfuscated item, indexed by slot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemLink {
    pub item_id: u64,
    pub sources: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CpSwap {
    pub axis: Option<Axis>,
    pub partner: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSidecar<T> {
    pub scheme: Scheme,
    pub original: PointCloud<T>,
    pub links: Vec<ItemLink>,
    /// PPL: slot owning each of the line's two stored descriptors.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub ppl_descriptor_slots: BTreeMap<u64, [u8; 2]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub cp_swaps: BTreeMap<u64, CpSwap>,
    /// Source points left out of the obfuscation (odd PPL leftover).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<u64>,
    /// Plane labels of the synthetic generator, when known.
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub plane_labels: Option<BTreeMap<u64, Option<u32>>>,
    /// Planes found by the PPL+ detector.
    #[serde(default = "Option::default", skip_serializing_if = "Option::is_none")]
    pub detected_planes: Option<BTreeMap<u64, Option<u32>>>,
}

impl<T> SceneSidecar<T> {
    pub fn new(scheme: Scheme, original: PointCloud<T>, links: Vec<ItemLink>) -> Self {
        SceneSidecar {
            scheme,
            original,
            links,
            ppl_descriptor_slots: BTreeMap::new(),
            cp_swaps: BTreeMap::new(),
            dropped: Vec::new(),
            plane_labels: None,
            detected_planes: None,
        }
    }

    pub fn source_of(&self, item_id: u64, slot: u8) -> Option<u64> {
        self.links
            .iter()
            .find(|l| l.item_id == item_id)
            .and_then(|l| l.sources.get(slot as usize).copied())
    }

    /// `(item_id, slot) -> source point id`.
    pub fn source_map(&self) -> HashMap<(u64, u8), u64> {
        self.links
            .iter()
            .flat_map(|l| {
                l.sources
                    .iter()
                    .enumerate()
                    .map(move |(slot, &src)| ((l.item_id, slot as u8), src))
            })
            .collect()
    }

    /// `source point id -> (item_id, slot)`.
    pub fn subject_map(&self) -> HashMap<u64, (u64, u8)> {
        self.source_map().into_iter().map(|(k, v)| (v, k)).collect()
    }
}
