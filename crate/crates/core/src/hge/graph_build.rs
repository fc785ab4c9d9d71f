use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spatial::knn_graph;

/// Directed M-nearest-neighbor graph over the rows of `features`.
///
/// Euclidean distance in the row space; ties break by ascending index; no
/// self loops; each node gets exactly `min(m, n − 1)` edges. Three-column
/// inputs go through the k-d tree, wider ones through an exhaustive scan.
pub fn build_graph<T: Scalar>(features: &Tensor<T>, m: usize) -> Result<Vec<Vec<usize>>> {
    let (n, c) = features.shape();
    if n < 2 {
        return Err(Error::TooFewPoints(format!("graph needs ≥ 2 nodes, got {n}")));
    }
    if m == 0 {
        return Err(Error::Argument("m must be ≥ 1".into()));
    }
    if c == 3 {
        let pts: Vec<[T; 3]> = (0..n).map(|i| [features.get(i, 0), features.get(i, 1), features.get(i, 2)]).collect();
        return knn_graph(&pts, m);
    }
    let take = m.min(n - 1);
    let data = features.data();
    let mut scratch: Vec<(T, usize)> = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let xi = &data[i * c..(i + 1) * c];
        scratch.clear();
        for j in (0..n).filter(|&j| j != i) {
            scratch.push((sq_dist(xi, &data[j * c..(j + 1) * c]), j));
        }
        let cmp = |a: &(T, usize), b: &(T, usize)| {
            a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1))
        };
        if take < scratch.len() {
            scratch.select_nth_unstable_by(take - 1, cmp);
            scratch.truncate(take);
        }
        scratch.sort_unstable_by(cmp);
        out.push(scratch.iter().map(|&(_, j)| j).collect());
    }
    Ok(out)
}

/// Squared distance with eight independent partial sums, which lets the
/// compiler vectorize. Identical rows still give bit-identical results.
fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            let t = x[l] - y[l];
            acc[l] = acc[l] + t * t;
        }
    }
    for (l, (x, y)) in ra.iter().zip(rb).enumerate() {
        let t = *x - *y;
        acc[l] = acc[l] + t * t;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

/// Flattens equal-length edge lists for the graph ops.
pub fn flatten_edges(edges: &[Vec<usize>]) -> Result<(Vec<usize>, usize)> {
    let per_node = edges.first().map_or(0, Vec::len);
    if edges.iter().any(|e| e.len() != per_node) {
        return Err(Error::Argument("edge lists must all have the same length".into()));
    }
    Ok((edges.iter().flatten().copied().collect(), per_node))
}
