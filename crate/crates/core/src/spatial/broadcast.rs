use super::kdtree::KdTree;
use crate::error::{Error, Result};
use crate::io::UNLABELED;
use crate::scalar::Scalar;

/// Assigns every dense point the label of its nearest labeled voxel point.
///
/// The search first looks inside the closed ball of `radius`; dense points
/// with no labeled voxel in range fall back to the globally nearest labeled
/// voxel, so the result is total. Equidistant voxels resolve to the lower
/// voxel index.
pub fn broadcast_labels<T: Scalar>(
    voxel_positions: &[[T; 3]],
    voxel_labels: &[u32],
    dense_positions: &[[T; 3]],
    radius: T,
) -> Result<Vec<u32>> {
    if voxel_positions.len() != voxel_labels.len() {
        return Err(Error::LengthMismatch {
            what: "voxel labels",
            got: voxel_labels.len(),
            expected: voxel_positions.len(),
        });
    }
    if !(radius > T::zero()) {
        return Err(Error::Argument(format!("broadcast radius must be > 0, got {radius}")));
    }
    // Indices into the voxel arrays of labeled voxels; ascending keeps the tie rule.
    let labeled: Vec<usize> = (0..voxel_labels.len()).filter(|&i| voxel_labels[i] != UNLABELED).collect();
    if labeled.is_empty() {
        return Err(Error::TooFewPoints("broadcast needs at least one labeled voxel point".into()));
    }
    let positions: Vec<[T; 3]> = labeled.iter().map(|&i| voxel_positions[i]).collect();
    let tree = KdTree::build(&positions)?;
    Ok(dense_positions
        .iter()
        .map(|q| {
            let hit = tree
                .within(q, radius)
                .first()
                .copied()
                .unwrap_or_else(|| tree.knn(q, 1)[0]);
            voxel_labels[labeled[hit.index]]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_voxel_labels_everything() {
        let dense = [[0.1f64, 0.0, 0.0], [0.0, 0.2, 0.0], [9.0, 9.0, 9.0]];
        let out = broadcast_labels(&[[0.0, 0.0, 0.0]], &[2], &dense, 0.5).unwrap();
        assert_eq!(out, vec![2, 2, 2]);
    }

    #[test]
    fn equidistant_prefers_lower_index() {
        let mut voxels = vec![[100.0f64, 0.0, 0.0]; 8];
        voxels[3] = [-1.0, 0.0, 0.0];
        voxels[7] = [1.0, 0.0, 0.0];
        let labels = [0, 0, 0, 3, 0, 0, 0, 7];
        let out = broadcast_labels(&voxels, &labels, &[[0.0, 0.0, 0.0]], 2.0).unwrap();
        assert_eq!(out, vec![3]);
        // Same through the fallback path.
        let out = broadcast_labels(&voxels, &labels, &[[0.0, 0.0, 0.0]], 0.5).unwrap();
        assert_eq!(out, vec![3]);
    }

    #[test]
    fn skips_unlabeled_voxels() {
        let voxels = [[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let out = broadcast_labels(&voxels, &[UNLABELED, 4], &[[0.0, 0.0, 0.0]], 0.5).unwrap();
        assert_eq!(out, vec![4]);
        assert!(broadcast_labels(&voxels, &[UNLABELED, UNLABELED], &[[0.0; 3]], 0.5).is_err());
        assert!(broadcast_labels::<f64>(&[], &[], &[[0.0; 3]], 0.5).is_err());
    }
}
