use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::ccd::ModelConfig;
use crate::error::{Error, Result};
use crate::io::Window;

/// A labeled cloud on disk: a `.bin` or `.ply` file and its `.labels` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataFile {
    pub cloud: PathBuf,
    pub labels: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    /// Voxel size of the points the network labels.
    pub global_resolution: f64,
    /// Voxel size of the dense cloud the identity descriptor looks at.
    pub local_resolution: f64,
    /// Voxel points kept before the final uniform selection.
    pub dense_cap: usize,
    pub point_budget: usize,
    pub sparse_fraction: f64,
    pub window: Window,
    /// Input features are `(x − x̄, y − ȳ, z) / feature_scale` plus intensity.
    pub feature_scale: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            global_resolution: 0.2,
            local_resolution: 0.1,
            dense_cap: 10_000,
            point_budget: 4096,
            sparse_fraction: 0.05,
            window: Window::None,
            feature_scale: 1.0,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.global_resolution > 0.0 && self.local_resolution > 0.0) {
            return bad("resolutions must be positive".into());
        }
        if self.point_budget < 2 || self.dense_cap < self.point_budget {
            return bad(format!(
                "need 2 ≤ point_budget ≤ dense_cap, got {} and {}",
                self.point_budget, self.dense_cap
            ));
        }
        if !(self.sparse_fraction > 0.0 && self.sparse_fraction <= 1.0) {
            return bad(format!("sparse_fraction must be in (0, 1], got {}", self.sparse_fraction));
        }
        if !(self.feature_scale > 0.0) {
            return bad("feature_scale must be positive".into());
        }
        Ok(())
    }
}

/// Synthetic four-class scenes used when no files are configured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub train_scenes: usize,
    pub test_scenes: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_scenes: 5,
            test_scenes: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub preprocess: PreprocessConfig,
    pub adam: AdamConfig,
    /// Passes over the training clouds, one step per cloud.
    pub epochs: usize,
    /// Rotate each training draw by a random angle about the vertical axis.
    pub augment_rotation: bool,
    pub seed: u64,
    pub broadcast_radius: f64,
    /// With a frozen kernel bank, steps spent fitting the widths on the first
    /// training cloud before freezing them. Zero keeps the initial widths.
    pub gamma_pretrain_steps: usize,
    pub synthetic: SyntheticConfig,
    pub train_files: Vec<DataFile>,
    pub test_files: Vec<DataFile>,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                ccd: crate::ccd::CcdConfig::with_classes(4),
                ..ModelConfig::default()
            },
            preprocess: PreprocessConfig::default(),
            adam: AdamConfig::default(),
            epochs: 100,
            augment_rotation: true,
            seed: 0,
            broadcast_radius: 0.5,
            gamma_pretrain_steps: 0,
            synthetic: SyntheticConfig::default(),
            train_files: Vec::new(),
            test_files: Vec::new(),
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.preprocess.validate()?;
        if !(self.broadcast_radius > 0.0) {
            return Err(Error::Config("broadcast_radius must be positive".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Training steps implied by `epochs` over `clouds` training clouds.
    pub fn total_steps(&self, clouds: usize) -> usize {
        self.epochs * clouds
    }
}
