//! A k-d tree over the rows of a [`Dataset`](crate::Dataset) for exact
//! nearest-neighbour and fixed-radius queries in any dimension.
//!
//! Neighbours are ordered by `(squared distance, index)`, so ties resolve to
//! the lower row index. The brute-force reference in the tests uses the same
//! order, which keeps neighbour sets comparable exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Tree over a borrowed row-major point set.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<f64>,
    dim: usize,
    order: Vec<usize>,
    root: Node,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl KdTree {
    /// Builds the tree from `n` row-major points of dimension `dim`.
    pub fn new(points: &[f64], dim: usize) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        let root = build(points, dim, &mut order, 0);
        Self {
            points: points.to_vec(),
            dim,
            order,
            root,
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// The `k` nearest points to `query`, closest first. `exclude` removes one
    /// index from consideration (a training point querying its own row).
    pub fn nearest(&self, query: &[f64], k: usize, exclude: Option<usize>) -> Vec<Neighbor> {
        assert_eq!(query.len(), self.dim);
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        self.search_knn(&self.root, query, k, exclude, &mut heap);
        let mut out = heap.into_vec();
        out.sort_unstable();
        out
    }

    fn search_knn(
        &self,
        node: &Node,
        query: &[f64],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Neighbor>,
    ) {
        match node {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start..*end] {
                    if Some(idx) == exclude {
                        continue;
                    }
                    let cand = Neighbor {
                        index: idx,
                        dist_sq: dist_sq(query, self.point(idx)),
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
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[*dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search_knn(near, query, k, exclude, heap);
                // `<=` keeps equal-distance candidates with lower indices reachable.
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty").dist_sq {
                    self.search_knn(far, query, k, exclude, heap);
                }
            }
        }
    }

    /// All points with squared distance `<= radius_sq`, in index order.
    pub fn within(&self, query: &[f64], radius_sq: f64) -> Vec<Neighbor> {
        assert_eq!(query.len(), self.dim);
        let mut out = Vec::new();
        self.search_radius(&self.root, query, radius_sq, &mut out);
        out.sort_unstable_by_key(|nb| nb.index);
        out
    }

    fn search_radius(&self, node: &Node, query: &[f64], radius_sq: f64, out: &mut Vec<Neighbor>) {
        match node {
            Node::Leaf { start, end } => {
                for &idx in &self.order[*start..*end] {
                    let d = dist_sq(query, self.point(idx));
                    if d <= radius_sq {
                        out.push(Neighbor { index: idx, dist_sq: d });
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[*dim] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search_radius(near, query, radius_sq, out);
                if diff * diff <= radius_sq {
                    self.search_radius(far, query, radius_sq, out);
                }
            }
        }
    }
}

fn build(points: &[f64], dim: usize, order: &mut [usize], offset: usize) -> Node {
    let len = order.len();
    if len <= LEAF_SIZE {
        return Node::Leaf {
            start: offset,
            end: offset + len,
        };
    }
    // split along the widest coordinate
    let mut best = (0, f64::NEG_INFINITY);
    for d in 0..dim {
        let (lo, hi) = order.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = points[i * dim + d];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best.1 {
            best = (d, hi - lo);
        }
    }
    let split_dim = best.0;
    if best.1 <= 0.0 {
        // all points identical
        return Node::Leaf {
            start: offset,
            end: offset + len,
        };
    }
    let mid = len / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a * dim + split_dim].total_cmp(&points[b * dim + split_dim])
    });
    let value = points[order[mid] * dim + split_dim];
    let (lo, hi) = order.split_at_mut(mid);
    Node::Split {
        dim: split_dim,
        value,
        left: Box::new(build(points, dim, lo, offset)),
        right: Box::new(build(points, dim, hi, offset + mid)),
    }
}
