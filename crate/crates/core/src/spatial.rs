//! Exact k-nearest-neighbor queries over a static point set.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::error::{Error, Result};
use crate::geometry::{vec3, PointCloud, Vec3};
use crate::scalar::Real;

const LEAF_SIZE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub id: u64,
    pub dist_sq: T,
}

#[derive(Clone, Copy, Debug)]
enum Node<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

/// Ordered by `(dist_sq, id)`; the heap top is the current worst candidate.
#[derive(Clone, Copy)]
struct Candidate<T> {
    dist_sq: T,
    id: u64,
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Real> Eq for Candidate<T> {}
impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .partial_cmp(&other.dist_sq)
            .unwrap_or(Ordering::Equal)
            .then(self.id.cmp(&other.id))
    }
}

/// Static kd-tree. Distances are exact Euclidean and ties are resolved by
/// ascending id, so results do not depend on input order.
#[derive(Clone, Debug)]
pub struct KdTree<T> {
    points: Vec<Vec3<T>>,
    ids: Vec<u64>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
    dims: usize,
}

impl<T: Real> KdTree<T> {
    /// `dims` is the number of significant coordinates (2 or 3).
    pub fn build(points: Vec<Vec3<T>>, ids: Vec<u64>, dims: usize) -> Self {
        assert_eq!(points.len(), ids.len());
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            ids,
            nodes: Vec::new(),
            dims: dims.clamp(1, 3),
        };
        if !tree.points.is_empty() {
            tree.build_node(0, tree.points.len());
        }
        tree
    }

    pub fn from_cloud(cloud: &PointCloud<T>) -> Self {
        Self::build(
            cloud.positions(),
            cloud.points.iter().map(|p| p.id).collect(),
            cloud.dim.count(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let idx = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return idx;
        }
        // split along the axis of largest extent
        let (lo, hi) = crate::geometry::bounding_box(self.order[start..end].iter().map(|&i| &self.points[i]))
            .expect("non-empty range");
        let axis = (0..self.dims)
            .max_by(|&a, &b| (hi[a] - lo[a]).partial_cmp(&(hi[b] - lo[b])).unwrap_or(Ordering::Equal))
            .unwrap_or(0);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][axis].partial_cmp(&points[b][axis]).unwrap_or(Ordering::Equal)
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[idx] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        idx
    }

    /// The `k` nearest points to `query`, skipping `exclude`, sorted by
    /// `(distance, id)`.
    pub fn nearest(&self, query: &Vec3<T>, k: usize, exclude: Option<u64>) -> Vec<Neighbor<T>> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, exclude, &mut heap);
        let mut out: Vec<_> = heap
            .into_iter()
            .map(|c| Neighbor {
                id: c.id,
                dist_sq: c.dist_sq,
            })
            .collect();
        out.sort_by(|a, b| {
            a.dist_sq
                .partial_cmp(&b.dist_sq)
                .unwrap_or(Ordering::Equal)
                .then(a.id.cmp(&b.id))
        });
        out
    }

    fn search(&self, node: usize, q: &Vec3<T>, k: usize, exclude: Option<u64>, heap: &mut BinaryHeap<Candidate<T>>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let id = self.ids[i];
                    if exclude == Some(id) {
                        continue;
                    }
                    let cand = Candidate {
                        dist_sq: vec3::dist_sq(q, &self.points[i]),
                        id,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, heap);
                // `<=` keeps equal-distance candidates reachable for id tie-breaking
                if heap.len() < k || diff * diff <= heap.peek().expect("heap is full").dist_sq {
                    self.search(far, q, k, exclude, heap);
                }
            }
        }
    }
}

/// Index over a cloud that answers queries by point id.
pub struct SpatialIndex<T> {
    tree: KdTree<T>,
    by_id: HashMap<u64, usize>,
    positions: Vec<Vec3<T>>,
}

impl<T: Real> SpatialIndex<T> {
    pub fn new(cloud: &PointCloud<T>) -> Self {
        SpatialIndex {
            tree: KdTree::from_cloud(cloud),
            by_id: cloud.points.iter().enumerate().map(|(i, p)| (p.id, i)).collect(),
            positions: cloud.positions(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// The `k` nearest neighbors of point `query_id`, excluding itself.
    pub fn knn(&self, query_id: u64, k: usize) -> Result<Vec<Neighbor<T>>> {
        let &i = self.by_id.get(&query_id).ok_or(Error::UnknownId(query_id))?;
        let n = self.positions.len();
        if k >= n {
            return Err(Error::KTooLarge { k, n });
        }
        Ok(self.tree.nearest(&self.positions[i], k, Some(query_id)))
    }
}

/// Ids of the `k` points nearest to `query_id` (the query itself excluded,
/// ties broken by smaller id).
pub fn knn<T: Real>(cloud: &PointCloud<T>, query_id: u64, k: usize) -> Result<Vec<u64>> {
    Ok(SpatialIndex::new(cloud)
        .knn(query_id, k)?
        .into_iter()
        .map(|n| n.id)
        .collect())
}
