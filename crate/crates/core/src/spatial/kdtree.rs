//! Exact k-d tree over fixed-dimension points.
//!
//! Every result list is ordered by (squared distance, index), so equal
//! distances always resolve to the lower target index.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::squared_distance;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const LEAF_SIZE: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    /// Euclidean distance.
    pub distance: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnResult<T> {
    pub neighbors: Vec<Vec<Neighbor<T>>>,
    /// Set when fewer targets than `k` exist.
    pub short: bool,
}

enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: usize, right: usize },
}

pub struct KdTree<'a, T, const D: usize> {
    points: &'a [[T; D]],
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

/// Heap entry; the max-heap top is the current worst candidate.
#[derive(Clone, Copy)]
struct Candidate<T> {
    d2: T,
    index: usize,
}

impl<T: Scalar> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<T: Scalar> Eq for Candidate<T> {}
impl<T: Scalar> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Candidate<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.d2
            .partial_cmp(&other.d2)
            .unwrap_or(Ordering::Equal)
            .then(self.index.cmp(&other.index))
    }
}

impl<'a, T: Scalar, const D: usize> KdTree<'a, T, D> {
    pub fn build(points: &'a [[T; D]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::TooFewPoints("k-d tree needs at least one target".into()));
        }
        if points.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite("k-d tree target coordinate".into()));
        }
        let mut tree = KdTree {
            points,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.len());
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // Split on the axis of largest spread at the median.
        let mut best_axis = 0;
        let mut best_spread = T::neg_infinity();
        for axis in 0..D {
            let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
            for &i in &self.order[start..end] {
                let v = self.points[i][axis];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best_spread {
                best_spread = hi - lo;
                best_axis = axis;
            }
        }
        let mid = start + (end - start) / 2;
        let points = self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][best_axis]
                .partial_cmp(&points[b][best_axis])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let value = points[self.order[mid]][best_axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis: best_axis, value, left, right };
        id
    }

    /// `k` nearest targets, ascending by (distance, index).
    pub fn knn(&self, query: &[T; D], k: usize) -> Vec<Neighbor<T>> {
        self.knn_excluding(query, k, None)
    }

    /// As [`KdTree::knn`], skipping target `exclude`.
    pub fn knn_excluding(&self, query: &[T; D], k: usize, exclude: Option<usize>) -> Vec<Neighbor<T>> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_visit(0, query, k, exclude, &mut heap);
        finish(heap.into_vec())
    }

    pub fn knn_many(&self, queries: &[[T; D]], k: usize) -> KnnResult<T> {
        KnnResult {
            neighbors: queries.iter().map(|q| self.knn(q, k)).collect(),
            short: k > self.points.len(),
        }
    }

    fn knn_visit(
        &self,
        node: usize,
        query: &[T; D],
        k: usize,
        exclude: Option<usize>,
        heap: &mut BinaryHeap<Candidate<T>>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let c = Candidate {
                        d2: squared_distance(query, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if c < *heap.peek().expect("non-empty") {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.knn_visit(near, query, k, exclude, heap);
                // Equal plane distance must still be visited: a lower index may tie.
                let plane = diff * diff;
                if heap.len() < k || plane <= heap.peek().expect("non-empty").d2 {
                    self.knn_visit(far, query, k, exclude, heap);
                }
            }
        }
    }

    /// Every target with distance ≤ `radius`, ascending by (distance, index).
    pub fn within(&self, query: &[T; D], radius: T) -> Vec<Neighbor<T>> {
        let r2 = radius * radius;
        let mut found = Vec::new();
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            match self.nodes[node] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[start..end] {
                        let d2 = squared_distance(query, &self.points[i]);
                        if d2 <= r2 {
                            found.push(Candidate { d2, index: i });
                        }
                    }
                }
                Node::Split { axis, value, left, right } => {
                    let diff = query[axis] - value;
                    let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                    stack.push(near);
                    if diff * diff <= r2 {
                        stack.push(far);
                    }
                }
            }
        }
        finish(found)
    }
}

fn finish<T: Scalar>(mut c: Vec<Candidate<T>>) -> Vec<Neighbor<T>> {
    c.sort_unstable();
    c.into_iter()
        .map(|c| Neighbor {
            index: c.index,
            distance: c.d2.sqrt(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(query: &[f64; 3], pts: &[[f64; 3]], k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| (squared_distance(query, p), i)).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.into_iter().take(k).map(|(d, i)| (i, d.sqrt())).collect()
    }

    #[test]
    fn ties_on_integer_grid_break_by_index() {
        // Many equal distances on a lattice exercise the tie rule through the pruning.
        let mut pts = Vec::new();
        for x in 0..6 {
            for y in 0..6 {
                for z in 0..3 {
                    pts.push([x as f64, y as f64, z as f64]);
                }
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for i in (1..pts.len()).rev() {
            pts.swap(i, rng.gen_range(0..=i));
        }
        let tree = KdTree::build(&pts).unwrap();
        for q in [[2.5, 2.5, 1.0], [0.0, 0.0, 0.0], [3.0, 2.5, 0.5]] {
            let got: Vec<(usize, f64)> = tree.knn(&q, 20).iter().map(|n| (n.index, n.distance)).collect();
            assert_eq!(got, brute(&q, &pts, 20));
        }
    }
}
