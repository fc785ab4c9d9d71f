use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::io::{PointCloud, NUM_ATTRS, UNLABELED};
use crate::scalar::Scalar;

/// Voxel-grid representatives of a dense cloud.
///
/// One record per occupied cell: the centroid of the cell's points and their
/// mean intensity. Cells are ordered by ascending key, lexicographically.
#[derive(Clone, Debug, PartialEq)]
pub struct VoxelCloud<T> {
    pub points: Vec<[T; NUM_ATTRS]>,
    pub resolution: T,
    /// Dense indices that fell in each cell, ascending.
    pub source_indices: Vec<Vec<usize>>,
    pub voxel_keys: Vec<[i64; 3]>,
}

impl<T: Scalar> VoxelCloud<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<[T; 3]> {
        self.points.iter().map(|p| [p[0], p[1], p[2]]).collect()
    }

    /// Majority label of each cell's dense points; ties go to the smaller class.
    /// Cells with only unlabeled members get [`UNLABELED`].
    pub fn majority_labels(&self, dense_labels: &[u32], num_classes: usize) -> Vec<u32> {
        self.source_indices
            .iter()
            .map(|members| {
                let mut votes = vec![0usize; num_classes];
                for &i in members {
                    let l = dense_labels[i];
                    if l != UNLABELED {
                        votes[l as usize] += 1;
                    }
                }
                let best = votes.iter().copied().max().unwrap_or(0);
                if best == 0 {
                    UNLABELED
                } else {
                    votes.iter().position(|&v| v == best).unwrap() as u32
                }
            })
            .collect()
    }

    /// Keeps the listed voxels, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            resolution: self.resolution,
            source_indices: indices.iter().map(|&i| self.source_indices[i].clone()).collect(),
            voxel_keys: indices.iter().map(|&i| self.voxel_keys[i]).collect(),
        }
    }

    /// The representatives as a plain cloud, with majority labels when the
    /// dense cloud carries labels.
    pub fn to_cloud(&self, dense: &PointCloud<T>) -> Result<PointCloud<T>> {
        let mut cloud = PointCloud::new(self.points.clone())?;
        if let (Some(labels), Some(c)) = (dense.labels(), dense.num_classes()) {
            cloud.attach_labels(self.majority_labels(labels, c), c)?;
        }
        Ok(cloud)
    }
}

/// Cell key of a coordinate: `floor(coord / resolution)` per axis.
pub fn cell_key<T: Scalar>(p: &[T; NUM_ATTRS], resolution: T) -> [i64; 3] {
    [0, 1, 2].map(|a| (p[a] / resolution).floor().to_i64().expect("coordinate within i64 cell range"))
}

pub fn voxel_downsample<T: Scalar>(cloud: &PointCloud<T>, resolution: T) -> Result<VoxelCloud<T>> {
    if !(resolution > T::zero()) || !resolution.is_finite() {
        return Err(Error::Argument(format!("voxel resolution must be > 0, got {resolution}")));
    }
    let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.points().iter().enumerate() {
        cells.entry(cell_key(p, resolution)).or_default().push(i);
    }
    let mut out = VoxelCloud {
        points: Vec::with_capacity(cells.len()),
        resolution,
        source_indices: Vec::with_capacity(cells.len()),
        voxel_keys: Vec::with_capacity(cells.len()),
    };
    for (key, members) in cells {
        // Accumulate in f64 regardless of T.
        let mut sum = [0.0f64; NUM_ATTRS];
        for &i in &members {
            for (s, v) in sum.iter_mut().zip(cloud.points()[i]) {
                *s += v.as_f64();
            }
        }
        let n = members.len() as f64;
        out.points.push(sum.map(|s| T::lit(s / n)));
        out.source_indices.push(members);
        out.voxel_keys.push(key);
    }
    Ok(out)
}
