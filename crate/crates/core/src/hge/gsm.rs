use rand::Rng;

use super::config::GsmConfig;
use super::edgeconv::edgeconv_layer;
use super::graph_build::build_graph;
use crate::autodiff::{Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub fn layer_name(layer: usize) -> String {
    format!("gsm.ec{}", layer + 1)
}

/// Registers one weight/bias pair per EdgeConv layer.
pub fn init_gsm_params<T: Scalar>(store: &mut ParamStore<T>, cfg: &GsmConfig, in_width: usize, rng: &mut impl Rng) -> Result<()> {
    cfg.validate()?;
    let mut c_in = in_width;
    for (l, &c_out) in cfg.channels.iter().enumerate() {
        store.insert_linear(&layer_name(l), 2 * c_in, c_out, cfg.leaky_slope, rng)?;
        c_in = c_out;
    }
    Ok(())
}

pub struct GsmOutput {
    /// Column concatenation of every layer output, `N × sum(channels)`.
    pub features: Var,
    pub layers: Vec<Var>,
    /// Edge lists used by each layer.
    pub graphs: Vec<Vec<Vec<usize>>>,
}

/// Runs the EdgeConv stack on per-voxel input features.
///
/// The first layer's graph comes from `coord_edges`, or from the first three
/// input columns when absent. With `dynamic_graph`, later layers rebuild the
/// graph from the previous layer's output; otherwise every layer reuses the
/// first graph.
pub fn gsm_forward<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    input: &Tensor<T>,
    coord_edges: Option<&[Vec<usize>]>,
    cfg: &GsmConfig,
) -> Result<GsmOutput> {
    cfg.validate()?;
    if input.cols() < 3 {
        return Err(Error::Shape {
            op: "gsm_forward input",
            lhs: input.shape(),
            rhs: (input.rows(), 3),
        });
    }
    let first = match coord_edges {
        Some(e) => e.to_vec(),
        None => build_graph(&input.cols_range(0, 3), cfg.m)?,
    };
    let slope = T::lit(cfg.leaky_slope);
    let mut x = g.constant(input.clone());
    let mut layers = Vec::with_capacity(cfg.channels.len());
    let mut graphs = Vec::with_capacity(cfg.channels.len());
    for l in 0..cfg.channels.len() {
        let edges = if l == 0 || !cfg.dynamic_graph {
            first.clone()
        } else {
            build_graph(g.value(x), cfg.m)?
        };
        let name = layer_name(l);
        let w = g.param(store, &format!("{name}.weight"))?;
        let b = g.param(store, &format!("{name}.bias"))?;
        let mut y = edgeconv_layer(g, x, &edges, w, b, slope)?;
        if cfg.standardize {
            y = g.standardize(y, T::lit(1e-5))?;
        }
        layers.push(y);
        graphs.push(edges);
        x = y;
    }
    let features = g.concat_cols(&layers)?;
    Ok(GsmOutput { features, layers, graphs })
}
