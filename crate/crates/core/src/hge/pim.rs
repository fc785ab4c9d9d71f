use std::rc::Rc;

use super::config::KernelBank;
use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::NUM_ATTRS;
use crate::scalar::Scalar;
use crate::spatial::{squared_distance, KdTree, Neighbor};

pub const GAMMA_PARAM: &str = "pim.gamma_raw";

/// Stores the kernel widths in their unconstrained exp-cumsum form.
pub fn init_pim_params<T: Scalar>(store: &mut ParamStore<T>, bank: &KernelBank) -> Result<()> {
    bank.validate()?;
    let raw: Vec<T> = bank.raw_parameters().into_iter().map(T::lit).collect();
    store.insert(GAMMA_PARAM, Tensor::new(1, raw.len(), raw)?)
}

/// Kernel widths as the network sees them: `cumsum(exp(raw))`.
pub fn effective_gammas<T: Scalar>(store: &ParamStore<T>) -> Result<Vec<T>> {
    let raw = store
        .get(GAMMA_PARAM)
        .ok_or_else(|| Error::Argument(format!("missing parameter '{GAMMA_PARAM}'")))?;
    let mut acc = T::zero();
    Ok(raw
        .data()
        .iter()
        .map(|r| {
            acc = acc + r.exp();
            acc
        })
        .collect())
}

fn metric_point<T: Scalar>(p: &[T; NUM_ATTRS], use_intensity: bool) -> [T; 4] {
    if use_intensity {
        *p
    } else {
        [p[0], p[1], p[2], T::zero()]
    }
}

/// The `k` nearest dense points of each voxel point, in the PIM metric space.
pub fn dense_neighbors<T: Scalar>(
    voxels: &[[T; NUM_ATTRS]],
    dense: &[[T; NUM_ATTRS]],
    k: usize,
    use_intensity: bool,
) -> Result<Vec<Vec<Neighbor<T>>>> {
    if dense.len() < k {
        return Err(Error::TooFewPoints(format!(
            "point identity descriptor needs K = {k} dense neighbors but only {} dense points exist; lower K or use denser input",
            dense.len()
        )));
    }
    let targets: Vec<[T; 4]> = dense.iter().map(|p| metric_point(p, use_intensity)).collect();
    let tree = KdTree::build(&targets)?;
    Ok(voxels.iter().map(|p| tree.knn(&metric_point(p, use_intensity), k)).collect())
}

/// `N × K` squared distances from each voxel point to its listed dense neighbors.
pub fn neighbor_sq_distances<T: Scalar>(
    voxels: &[[T; NUM_ATTRS]],
    dense: &[[T; NUM_ATTRS]],
    neighbors: &[Vec<Neighbor<T>>],
    use_intensity: bool,
) -> Result<Tensor<T>> {
    let k = neighbors.first().map_or(0, Vec::len);
    if neighbors.len() != voxels.len() || neighbors.iter().any(|n| n.len() != k) {
        return Err(Error::Argument("neighbor lists must cover every voxel with K entries".into()));
    }
    let mut data = Vec::with_capacity(voxels.len() * k);
    for (p, list) in voxels.iter().zip(neighbors) {
        let a = metric_point(p, use_intensity);
        data.extend(list.iter().map(|n| squared_distance(&a, &metric_point(&dense[n.index], use_intensity))));
    }
    Tensor::new(voxels.len(), k, data)
}

/// Kernel-major expansion `out[i, j·K + k] = exp(−γ_j · d²_ik)`.
pub fn rbf_values<T: Scalar>(sq_dist: &Tensor<T>, gammas: &[T]) -> Tensor<T> {
    let (n, k) = sq_dist.shape();
    Tensor::from_fn(n, k * gammas.len(), |i, col| (-gammas[col / k] * sq_dist.get(i, col % k)).exp())
}

/// Point identity descriptor of each voxel point from its `k` nearest dense points.
pub fn pim_features<T: Scalar>(
    voxels: &[[T; NUM_ATTRS]],
    dense: &[[T; NUM_ATTRS]],
    gammas: &[T],
    k: usize,
    use_intensity: bool,
) -> Result<Tensor<T>> {
    let neighbors = dense_neighbors(voxels, dense, k, use_intensity)?;
    let d2 = neighbor_sq_distances(voxels, dense, &neighbors, use_intensity)?;
    Ok(rbf_values(&d2, gammas))
}

/// Descriptor using the bank's configured (initial) widths.
pub fn pim_features_for_bank<T: Scalar>(voxels: &[[T; NUM_ATTRS]], dense: &[[T; NUM_ATTRS]], bank: &KernelBank) -> Result<Tensor<T>> {
    bank.validate()?;
    let gammas: Vec<T> = bank.gammas.iter().map(|&g| T::lit(g)).collect();
    pim_features(voxels, dense, &gammas, bank.k, bank.use_intensity)
}

/// Differentiable descriptor; widths are trainable unless the bank is frozen.
pub fn pim_forward<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, sq_dist: Rc<Tensor<T>>, bank: &KernelBank) -> Result<Var> {
    let raw = if bank.trainable {
        g.param(store, GAMMA_PARAM)?
    } else {
        g.frozen_param(store, GAMMA_PARAM)?
    };
    let increments = g.exp(raw)?;
    let gammas = g.cumsum_cols(increments)?;
    g.rbf_expand(sq_dist, gammas)
}
