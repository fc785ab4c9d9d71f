use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// EdgeConv stack settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GsmConfig {
    /// Neighbors per node in each EdgeConv graph.
    pub m: usize,
    /// Output width of each EdgeConv layer.
    pub channels: Vec<usize>,
    /// Rebuild each layer's graph in the previous layer's feature space.
    pub dynamic_graph: bool,
    pub leaky_slope: f64,
    /// Per-feature standardization after every layer.
    pub standardize: bool,
}

impl Default for GsmConfig {
    fn default() -> Self {
        Self {
            m: 20,
            channels: vec![64, 64, 128, 256],
            dynamic_graph: true,
            leaky_slope: 0.2,
            standardize: false,
        }
    }
}

impl GsmConfig {
    /// Total descriptor width (sum of layer widths).
    pub fn output_width(&self) -> usize {
        self.channels.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("GSM neighbor count M must be ≥ 1".into()));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::Config("GSM channels must be non-empty and positive".into()));
        }
        Ok(())
    }
}

/// Radial kernel bank of the point identity descriptor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelBank {
    /// Initial kernel widths γ (1/m²), strictly increasing.
    pub gammas: Vec<f64>,
    /// Dense neighbors per voxel point.
    pub k: usize,
    pub trainable: bool,
    /// Include intensity as a fourth distance axis.
    pub use_intensity: bool,
}

impl Default for KernelBank {
    fn default() -> Self {
        Self {
            gammas: vec![1.0, 4.0, 16.0, 64.0],
            k: 16,
            trainable: true,
            use_intensity: false,
        }
    }
}

impl KernelBank {
    pub fn j(&self) -> usize {
        self.gammas.len()
    }

    pub fn output_width(&self) -> usize {
        self.j() * self.k
    }

    /// `count` widths spaced by factors of 4 from 1 m⁻² (1, 4, 16, 64, …).
    pub fn geometric(count: usize, k: usize) -> Self {
        Self {
            gammas: (0..count).map(|j| 4f64.powi(j as i32)).collect(),
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() || self.k == 0 {
            return Err(Error::Config("kernel bank needs J ≥ 1 and K ≥ 1".into()));
        }
        if self.gammas.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::Config("kernel widths must be positive".into()));
        }
        if self.gammas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("kernel widths must be strictly increasing".into()));
        }
        Ok(())
    }

    /// Unconstrained parameters whose exp-cumsum reproduces `gammas`:
    /// `γ_1 = e^{r_1}`, `γ_j = γ_{j−1} + e^{r_j}`.
    pub fn raw_parameters(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.gammas
            .iter()
            .map(|&g| {
                let r = (g - prev).ln();
                prev = g;
                r
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        assert_eq!(GsmConfig::default().output_width(), 512);
        let bank = KernelBank::default();
        assert_eq!(bank.output_width(), 64);
        bank.validate().unwrap();
        assert_eq!(KernelBank::geometric(4, 16).gammas, bank.gammas);
    }

    #[test]
    fn raw_parameters_invert() {
        let bank = KernelBank::default();
        let mut acc = 0.0;
        for (r, g) in bank.raw_parameters().iter().zip(&bank.gammas) {
            acc += r.exp();
            assert!((acc - g).abs() < 1e-12);
        }
    }

    #[test]
    fn validation() {
        assert!(KernelBank { gammas: vec![4.0, 1.0], ..Default::default() }.validate().is_err());
        assert!(KernelBank { gammas: vec![0.0], ..Default::default() }.validate().is_err());
        assert!(GsmConfig { m: 0, ..Default::default() }.validate().is_err());
        assert!(GsmConfig { channels: vec![], ..Default::default() }.validate().is_err());
    }
}
