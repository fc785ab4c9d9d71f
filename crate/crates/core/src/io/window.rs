use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::Result;
use crate::scalar::Scalar;

/// Spatial window used to cut a sub-map out of a larger registered cloud.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    /// Horizontal disc around `center` (x, y), e.g. 30 m for vehicle scans.
    Circle { center: [f64; 2], radius: f64 },
    /// Axis-aligned box `size` centered at `center`, e.g. 40 × 40 × 10 m sub-maps.
    Box { center: [f64; 3], size: [f64; 3] },
}

impl Window {
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Window::None => true,
            Window::Circle { center, radius } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                dx * dx + dy * dy <= radius * radius
            }
            Window::Box { center, size } => (0..3).all(|a| (p[a] - center[a]).abs() <= size[a] / 2.0),
        }
    }

    /// Keeps the points inside the window; errors if none remain.
    pub fn apply<T: Scalar>(&self, cloud: &PointCloud<T>) -> Result<PointCloud<T>> {
        if matches!(self, Window::None) {
            return Ok(cloud.clone());
        }
        let keep: Vec<usize> = (0..cloud.len())
            .filter(|&i| self.contains(cloud.xyz(i).map(|v| v.as_f64())))
            .collect();
        cloud.select(&keep)
    }
}
