use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::PreprocessConfig;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::hge::{dense_neighbors, neighbor_sq_distances, HgeConfig, HgeInputs};
use crate::io::{sample_sparse_mask, PointCloud, SparseLabelMask, NUM_ATTRS};
use crate::scalar::Scalar;
use crate::spatial::{knn_graph, voxel_downsample, NeighborSets, VoxelCloud};

/// One cloud ready for the network.
///
/// The coarse voxel cloud is capped at `dense_cap` points; the sparse mask and
/// the dense neighborhoods cover all of them. `selected` is one uniform draw
/// of `point_budget` of those points with its graph and encoder inputs.
#[derive(Clone, Debug)]
pub struct Preprocessed<T> {
    /// Raw points after the optional window; the cloud that gets labeled in the end.
    pub raw: PointCloud<T>,
    /// Capped voxel points at the coarse resolution.
    pub voxel: VoxelCloud<T>,
    /// Voxel cloud at the fine resolution.
    pub dense: VoxelCloud<T>,
    /// Majority label per capped voxel point, when the raw cloud is labeled.
    pub voxel_labels: Option<Vec<u32>>,
    /// Sparse annotation over the capped voxel points.
    pub mask: Option<SparseLabelMask>,
    /// `N × K` squared distances from every capped voxel point to its dense neighbors.
    pub sq_dist: Tensor<T>,
    /// Horizontal center subtracted from the input features.
    pub center: [T; 2],
    pub feature_scale: f64,
    pub m: usize,
    /// Indices into `voxel` of the default network input, ascending.
    pub selected: Vec<usize>,
    /// Neighborhoods of the selected points (graph indices refer to `selected`).
    pub neighbors: NeighborSets<T>,
    pub inputs: HgeInputs<T>,
}

impl<T: Scalar> Preprocessed<T> {
    /// Capped voxel labels with everything outside the sparse mask set to the sentinel.
    pub fn sparse_labels(&self) -> Option<Vec<u32>> {
        match (&self.voxel_labels, &self.mask) {
            (Some(l), Some(m)) => Some(m.apply(l)),
            _ => None,
        }
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.raw.num_classes()
    }

    /// Encoder inputs for a subset of the capped voxel points.
    pub fn subset_inputs(&self, indices: &[usize]) -> Result<HgeInputs<T>> {
        self.rotated_subset_inputs(indices, 0.0)
    }

    /// Like [`Self::subset_inputs`] with the centered horizontal coordinates
    /// rotated by `angle` radians about the vertical axis. Distances, graphs
    /// and labels are unchanged by the rotation.
    pub fn rotated_subset_inputs(&self, indices: &[usize], angle: f64) -> Result<HgeInputs<T>> {
        let pts: Vec<[T; NUM_ATTRS]> = indices.iter().map(|&i| self.voxel.points[i]).collect();
        let positions: Vec<[T; 3]> = pts.iter().map(|p| [p[0], p[1], p[2]]).collect();
        let mut features = input_features(&pts, self.center, self.feature_scale);
        if angle != 0.0 {
            let (sin, cos) = (T::lit(angle.sin()), T::lit(angle.cos()));
            for r in 0..features.rows() {
                let (x, y) = (features.get(r, 0), features.get(r, 1));
                features.set(r, 0, cos * x - sin * y);
                features.set(r, 1, sin * x + cos * y);
            }
        }
        Ok(HgeInputs {
            features,
            coord_edges: knn_graph(&positions, self.m)?,
            sq_dist: Rc::new(self.sq_dist.select_rows(indices)),
        })
    }

    /// Splits the capped voxel points into random chunks of at most `budget`
    /// points each (every chunk sorted ascending).
    pub fn chunks(&self, budget: usize, seed: u64) -> Vec<Vec<usize>> {
        let n = self.voxel.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let parts = n.div_ceil(budget.max(1));
        // Equal-sized chunks so no chunk is much sparser than the training draws.
        (0..parts)
            .map(|c| {
                let mut chunk: Vec<usize> = order[c * n / parts..(c + 1) * n / parts].to_vec();
                chunk.sort_unstable();
                chunk
            })
            .collect()
    }
}

/// Uniform selection without replacement, returned in ascending order.
pub fn uniform_subset(n: usize, keep: usize, rng: &mut impl Rng) -> Vec<usize> {
    if keep >= n {
        return (0..n).collect();
    }
    let mut idx = rand::seq::index::sample(rng, n, keep).into_vec();
    idx.sort_unstable();
    idx
}

/// Horizontal centroid of a point set.
pub fn horizontal_center<T: Scalar>(points: &[[T; NUM_ATTRS]]) -> [T; 2] {
    let n = T::from_usize_lossy(points.len().max(1));
    [0, 1].map(|a| points.iter().fold(T::zero(), |s, p| s + p[a]) / n)
}

/// Per-voxel network input: `(x − cx, y − cy, z) / scale` and intensity.
pub fn input_features<T: Scalar>(points: &[[T; NUM_ATTRS]], center: [T; 2], scale: f64) -> Tensor<T> {
    let s = T::lit(scale);
    Tensor::from_fn(points.len(), NUM_ATTRS, |r, c| {
        let p = points[r];
        match c {
            0 => (p[0] - center[0]) / s,
            1 => (p[1] - center[1]) / s,
            2 => p[2] / s,
            _ => p[3],
        }
    })
}

/// Window, voxelize at both resolutions, cap the coarse cloud, build dense
/// neighborhoods, draw the sparse mask and one input selection.
/// Deterministic in `seed`.
pub fn preprocess<T: Scalar>(raw: &PointCloud<T>, cfg: &PreprocessConfig, hge: &HgeConfig, seed: u64) -> Result<Preprocessed<T>> {
    cfg.validate()?;
    hge.validate()?;
    let raw = cfg.window.apply(raw)?;
    let coarse = voxel_downsample(&raw, T::lit(cfg.global_resolution))?;
    let dense = voxel_downsample(&raw, T::lit(cfg.local_resolution))?;
    if dense.len() < hge.bank.k {
        return Err(Error::TooFewPoints(format!(
            "only {} dense points for K = {}; lower K or use denser input",
            dense.len(),
            hge.bank.k
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let voxel = coarse.select(&uniform_subset(coarse.len(), cfg.dense_cap, &mut rng));
    if voxel.len() < 2 {
        return Err(Error::TooFewPoints(format!("{} voxel points after downsampling, need 2", voxel.len())));
    }
    let selected = uniform_subset(voxel.len(), cfg.point_budget, &mut rng);

    let knn_all = dense_neighbors(&voxel.points, &dense.points, hge.bank.k, hge.bank.use_intensity)?;
    let sq_dist = neighbor_sq_distances(&voxel.points, &dense.points, &knn_all, hge.bank.use_intensity)?;

    let voxel_labels = match (raw.labels(), raw.num_classes()) {
        (Some(l), Some(c)) => Some(voxel.majority_labels(l, c)),
        _ => None,
    };
    let mask = match (&voxel_labels, raw.num_classes()) {
        (Some(l), Some(c)) => Some(sample_sparse_mask(l, c, cfg.sparse_fraction, seed.wrapping_add(1))?),
        _ => None,
    };
    let mut pre = Preprocessed {
        center: horizontal_center(&voxel.points),
        feature_scale: cfg.feature_scale,
        m: hge.gsm.m,
        raw,
        voxel,
        dense,
        voxel_labels,
        mask,
        sq_dist,
        selected: Vec::new(),
        neighbors: NeighborSets {
            knn_dense: Vec::new(),
            graph_edges: Vec::new(),
            k: hge.bank.k,
            m: hge.gsm.m,
        },
        inputs: HgeInputs {
            features: Tensor::zeros(0, NUM_ATTRS),
            coord_edges: Vec::new(),
            sq_dist: Rc::new(Tensor::zeros(0, hge.bank.k)),
        },
    };
    pre.inputs = pre.subset_inputs(&selected)?;
    pre.neighbors.graph_edges = pre.inputs.coord_edges.clone();
    pre.neighbors.knn_dense = selected.iter().map(|&i| knn_all[i].clone()).collect();
    pre.selected = selected;
    Ok(pre)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{generate_scene, SceneSpec};

    #[test]
    fn budget_and_neighbor_counts() {
        let cloud: PointCloud<f64> = generate_scene(&SceneSpec::default_four_class(1)).unwrap();
        let cfg = PreprocessConfig {
            point_budget: 300,
            dense_cap: 1000,
            ..Default::default()
        };
        let p = preprocess(&cloud, &cfg, &HgeConfig::default(), 4).unwrap();
        assert_eq!(p.voxel.len(), 1000);
        assert_eq!(p.selected.len(), 300);
        assert!(p.neighbors.knn_dense.iter().all(|n| n.len() == 16));
        assert!(p.neighbors.graph_edges.iter().all(|e| e.len() == 20));
        assert_eq!(p.inputs.sq_dist.shape(), (300, 16));
        let labels = p.voxel_labels.as_ref().unwrap();
        let mask = p.mask.as_ref().unwrap();
        let mut counts = [0usize; 4];
        labels.iter().for_each(|&l| counts[l as usize] += 1);
        let mut kept = [0usize; 4];
        mask.indices.iter().for_each(|&i| kept[labels[i] as usize] += 1);
        for c in 0..4 {
            assert_eq!(kept[c], crate::io::stratum_size(counts[c], 0.05));
        }
    }

    #[test]
    fn chunks_partition_the_cloud() {
        let cloud: PointCloud<f64> = generate_scene(&SceneSpec::default_four_class(2)).unwrap();
        let cfg = PreprocessConfig {
            point_budget: 300,
            dense_cap: 1000,
            ..Default::default()
        };
        let p = preprocess(&cloud, &cfg, &HgeConfig::default(), 4).unwrap();
        let chunks = p.chunks(300, 9);
        assert_eq!(chunks.len(), 4);
        assert!(chunks.iter().all(|c| c.len() == 250));
        let mut all: Vec<usize> = chunks.concat();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_dense_points() {
        let cloud = PointCloud::new(vec![[0.0f64; 4], [1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0]]).unwrap();
        let err = preprocess(&cloud, &PreprocessConfig::default(), &HgeConfig::default(), 0).unwrap_err();
        assert!(err.to_string().contains("lower K"));
    }

    #[test]
    fn features_are_centered() {
        let pts = [[1.0f64, 2.0, 3.0, 0.5], [3.0, 4.0, 5.0, 0.25]];
        let f = input_features(&pts, horizontal_center(&pts), 2.0);
        assert_eq!(f.row(0), &[-0.5, -0.5, 1.5, 0.5]);
    }
}
