//! Voxel grids, exact neighbor search and dense label broadcast.

mod broadcast;
mod kdtree;
mod voxel;

pub use broadcast::broadcast_labels;
pub use kdtree::{KdTree, KnnResult, Neighbor};

pub use voxel::{voxel_downsample, VoxelCloud};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Neighborhoods attached to the voxel points of one preprocessed cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborSets<T> {
    /// Per voxel point, its `k` nearest dense points, ascending by (distance, index).
    pub knn_dense: Vec<Vec<Neighbor<T>>>,
    /// Per voxel point, its `m` nearest other voxel points (coordinate space).
    pub graph_edges: Vec<Vec<usize>>,
    pub k: usize,
    pub m: usize,
}

/// Exact k nearest neighbors of every query among `targets`.
pub fn knn<T: Scalar, const D: usize>(queries: &[[T; D]], targets: &[[T; D]], k: usize) -> Result<KnnResult<T>> {
    if k == 0 {
        return Err(Error::Argument("k must be ≥ 1".into()));
    }
    let tree = KdTree::build(targets)?;
    Ok(tree.knn_many(queries, k))
}

/// All targets within the closed ball of `radius` around each query.
pub fn radius_neighbors<T: Scalar, const D: usize>(
    queries: &[[T; D]],
    targets: &[[T; D]],
    radius: T,
) -> Result<Vec<Vec<Neighbor<T>>>> {
    if !(radius > T::zero()) {
        return Err(Error::Argument(format!("radius must be > 0, got {radius}")));
    }
    let tree = KdTree::build(targets)?;
    Ok(queries.iter().map(|q| tree.within(q, radius)).collect())
}

/// Directed M-nearest-neighbor graph over `points`, without self loops.
///
/// Each list holds exactly `min(m, n − 1)` entries ordered by (distance, index).
pub fn knn_graph<T: Scalar, const D: usize>(points: &[[T; D]], m: usize) -> Result<Vec<Vec<usize>>> {
    if points.len() < 2 {
        return Err(Error::TooFewPoints(format!("graph needs ≥ 2 nodes, got {}", points.len())));
    }
    if m == 0 {
        return Err(Error::Argument("m must be ≥ 1".into()));
    }
    let tree = KdTree::build(points)?;
    let take = m.min(points.len() - 1);
    Ok(points
        .iter()
        .enumerate()
        .map(|(i, p)| tree.knn_excluding(p, take, Some(i)).into_iter().map(|n| n.index).collect())
        .collect())
}

pub fn squared_distance<T: Scalar, const D: usize>(a: &[T; D], b: &[T; D]) -> T {
    let mut s = T::zero();
    for d in 0..D {
        let t = a[d] - b[d];
        s = s + t * t;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_knn_cases() {
        let targets = [[1.0f64, 0.0, 0.0], [2.0, 0.0, 0.0]];
        let r = knn(&[[0.0, 0.0, 0.0]], &targets, 1).unwrap();
        assert_eq!(r.neighbors[0][0].index, 0);
        assert_eq!(r.neighbors[0][0].distance, 1.0);
        assert!(!r.short);

        let r = knn(&[[2.0, 0.0, 0.0]], &targets, 1).unwrap();
        assert_eq!((r.neighbors[0][0].index, r.neighbors[0][0].distance), (1, 0.0));

        let r = knn(&[[0.0, 0.0, 0.0]], &targets, 5).unwrap();
        assert!(r.short);
        assert_eq!(r.neighbors[0].len(), 2);
        assert!(knn(&[[0.0; 3]], &targets, 0).is_err());
    }

    #[test]
    fn closed_ball() {
        let r = radius_neighbors(&[[0.0f64, 0.0, 0.0]], &[[0.4, 0.0, 0.0], [0.5, 0.0, 0.0], [0.6, 0.0, 0.0]], 0.5).unwrap();
        let idx: Vec<usize> = r[0].iter().map(|n| n.index).collect();
        assert_eq!(idx, vec![0, 1]);
        assert!(radius_neighbors(&[[0.0f64; 3]], &[[0.0; 3]], 0.0).is_err());
    }

    #[test]
    fn graph_sizes() {
        let pts = [[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0], [3.0, 0.0, 0.0]];
        let g = knn_graph(&pts, 1).unwrap();
        assert_eq!(g, vec![vec![1], vec![0], vec![1]]);
        let g = knn_graph(&pts, 10).unwrap();
        assert!(g.iter().enumerate().all(|(i, e)| e.len() == 2 && !e.contains(&i)));
        assert!(knn_graph(&pts[..1], 1).is_err());
    }
}
