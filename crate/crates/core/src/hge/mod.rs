//! Hierarchical geometry encoder: EdgeConv structure features on voxel points
//! concatenated with radial-kernel identity descriptors from dense neighbors.

mod config;
mod edgeconv;
mod graph_build;
mod gsm;
mod pim;

use std::rc::Rc;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use config::{GsmConfig, KernelBank};
pub use edgeconv::edgeconv_layer;
pub use graph_build::{build_graph, flatten_edges};
pub use gsm::{gsm_forward, init_gsm_params, layer_name, GsmOutput};
pub use pim::{
    dense_neighbors, effective_gammas, init_pim_params, neighbor_sq_distances, pim_features, pim_features_for_bank,
    pim_forward, rbf_values, GAMMA_PARAM,
};

use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HgeConfig {
    pub gsm: GsmConfig,
    pub bank: KernelBank,
    /// When false the identity block is all zeros (width is kept).
    pub pim_enabled: bool,
}

impl Default for HgeConfig {
    fn default() -> Self {
        Self {
            gsm: GsmConfig::default(),
            bank: KernelBank::default(),
            pim_enabled: true,
        }
    }
}

impl HgeConfig {
    /// `C_GSM + J·K`.
    pub fn output_width(&self) -> usize {
        self.gsm.output_width() + self.bank.output_width()
    }

    pub fn validate(&self) -> Result<()> {
        self.gsm.validate()?;
        self.bank.validate()
    }
}

/// Per-cloud encoder inputs produced by preprocessing.
#[derive(Clone, Debug)]
pub struct HgeInputs<T> {
    /// `N × D` voxel features fed to the first EdgeConv layer.
    pub features: Tensor<T>,
    /// Coordinate-space M-NN graph for the first layer.
    pub coord_edges: Vec<Vec<usize>>,
    /// `N × K` squared distances to the dense neighbors.
    pub sq_dist: Rc<Tensor<T>>,
}

/// Encoder outputs as graph nodes.
#[derive(Clone, Copy, Debug)]
pub struct HgdVars {
    pub gsm: Var,
    pub pid: Var,
    pub hgd: Var,
}

/// Encoder outputs as plain matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct HgdFeatures<T> {
    pub gsm: Tensor<T>,
    pub pid: Tensor<T>,
    pub hgd: Tensor<T>,
}

impl HgdVars {
    pub fn values<T: Scalar>(&self, g: &Graph<T>) -> HgdFeatures<T> {
        HgdFeatures {
            gsm: g.value(self.gsm).clone(),
            pid: g.value(self.pid).clone(),
            hgd: g.value(self.hgd).clone(),
        }
    }
}

pub fn init_hge_params<T: Scalar>(store: &mut ParamStore<T>, cfg: &HgeConfig, in_width: usize, rng: &mut impl Rng) -> Result<()> {
    init_gsm_params(store, &cfg.gsm, in_width, rng)?;
    init_pim_params(store, &cfg.bank)
}

/// `hgd = [gsm | pid]`, widths `C_GSM` and `J·K`.
pub fn hge_forward<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, inputs: &HgeInputs<T>, cfg: &HgeConfig) -> Result<HgdVars> {
    cfg.validate()?;
    let n = inputs.features.rows();
    if inputs.sq_dist.shape() != (n, cfg.bank.k) {
        return Err(Error::Shape {
            op: "hge_forward dense distances",
            lhs: (n, cfg.bank.k),
            rhs: inputs.sq_dist.shape(),
        });
    }
    let gsm = gsm_forward(g, store, &inputs.features, Some(&inputs.coord_edges), &cfg.gsm)?;
    let pid = if cfg.pim_enabled {
        pim_forward(g, store, inputs.sq_dist.clone(), &cfg.bank)?
    } else {
        g.constant(Tensor::zeros(n, cfg.bank.output_width()))
    };
    let hgd = g.concat_cols(&[gsm.features, pid])?;
    Ok(HgdVars {
        gsm: gsm.features,
        pid,
        hgd,
    })
}
