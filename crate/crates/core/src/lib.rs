//! Weakly supervised point cloud segmentation from sparse voxel labels.
//!
//! A dense cloud is voxelized at two resolutions. An EdgeConv stack encodes
//! the coarse voxel points, radial kernels over fine neighbors give each point
//! an identity descriptor, and a decoder predicts labels from the combined
//! descriptor while an adversarial branch ties the two parts together.
//! Predictions are broadcast back to every dense point.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`).

pub mod autodiff;
pub mod ccd;
pub mod error;
pub mod hge;
pub mod io;
pub mod pipeline;
pub mod scalar;
pub mod spatial;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PointCloud32 = io::PointCloud<f32>;
pub type PointCloud64 = io::PointCloud<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Graph32 = autodiff::Graph<f32>;
pub type Graph64 = autodiff::Graph<f64>;
pub type ParamStore32 = autodiff::ParamStore<f32>;
pub type ParamStore64 = autodiff::ParamStore<f64>;
