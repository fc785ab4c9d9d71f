//! Dense-matrix reverse-mode differentiation, parameters and optimizer.

mod checkpoint;
mod graph;
mod params;
mod tensor;

pub use checkpoint::{
    decode_tensors, encode_tensors, load_checkpoint, load_tensors, save_checkpoint, save_tensors, MAGIC, VERSION,
};
pub use graph::{Graph, Var};
pub use params::{optimizer_step, AdamConfig, ParamStore};
pub use tensor::Tensor;
