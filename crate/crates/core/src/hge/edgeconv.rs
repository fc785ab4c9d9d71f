use std::rc::Rc;

use super::graph_build::flatten_edges;
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One EdgeConv layer: `out_i = max_j LeakyReLU(W·[x_i, x_j − x_i] + b)` over i's edges.
///
/// `weight` is `(2·C_in) × C_out`; its first `C_in` rows act on `x_i`, the
/// rest on `x_j − x_i`. Since `W·[x_i, x_j − x_i] = (W_c − W_d)·x_i + W_d·x_j`,
/// the layer multiplies once per node and gathers per edge.
pub fn edgeconv_layer<T: Scalar>(
    g: &mut Graph<T>,
    x: Var,
    edges: &[Vec<usize>],
    weight: Var,
    bias: Var,
    slope: T,
) -> Result<Var> {
    let (n, c_in) = g.shape(x);
    let (w_rows, c_out) = g.shape(weight);
    if w_rows != 2 * c_in {
        return Err(Error::Shape {
            op: "edgeconv_layer",
            lhs: (n, c_in),
            rhs: (w_rows, c_out),
        });
    }
    if edges.len() != n {
        return Err(Error::Shape {
            op: "edgeconv_layer edges",
            lhs: (n, c_in),
            rhs: (edges.len(), 0),
        });
    }
    let (flat, per_node) = flatten_edges(edges)?;
    let w_center = g.slice_rows(weight, 0, c_in)?;
    let w_diff = g.slice_rows(weight, c_in, 2 * c_in)?;
    let w_self = g.sub(w_center, w_diff)?;
    let a = g.matmul(x, w_self)?;
    let b = g.matmul(x, w_diff)?;
    let h = g.edge_gather_add(a, b, Rc::new(flat), per_node)?;
    let h = g.add_bias(h, bias)?;
    let h = g.leaky_relu(h, slope)?;
    g.rowwise_max_over_groups(h, per_node)
}
