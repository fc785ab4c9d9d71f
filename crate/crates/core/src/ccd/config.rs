use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CcdConfig {
    pub num_classes: usize,
    /// Hidden width of the first reconstruction layer; the second emits `16·C_out`.
    pub recons_hidden: usize,
    pub gen_hidden: usize,
    pub disc_hidden: Vec<usize>,
    pub lambda_adv: f64,
    pub noise_max: f64,
    pub clamp_eps: f64,
    pub leaky_slope: f64,
    /// Optional per-class cross-entropy weights (off by default).
    pub class_weights: Option<Vec<f64>>,
}

impl Default for CcdConfig {
    fn default() -> Self {
        Self {
            num_classes: 8,
            recons_hidden: 256,
            gen_hidden: 96,
            disc_hidden: vec![32, 16],
            lambda_adv: 0.1,
            noise_max: 1e-3,
            clamp_eps: 1e-7,
            leaky_slope: 0.2,
            class_weights: None,
        }
    }
}

impl CcdConfig {
    pub fn with_classes(num_classes: usize) -> Self {
        Self {
            num_classes,
            ..Self::default()
        }
    }

    /// `[in → hidden, hidden → 16·C]`.
    pub fn recons_dims(&self, in_width: usize) -> Vec<usize> {
        vec![in_width, self.recons_hidden, 16 * self.num_classes]
    }

    /// `16·C → 8·C → 4·C → 2·C → C`.
    pub fn seg_dims(&self) -> Vec<usize> {
        let c = self.num_classes;
        vec![16 * c, 8 * c, 4 * c, 2 * c, c]
    }

    pub fn gen_dims(&self, pid_width: usize) -> Vec<usize> {
        vec![16 * self.num_classes, self.gen_hidden, pid_width]
    }

    pub fn disc_dims(&self, pid_width: usize) -> Vec<usize> {
        let mut d = vec![pid_width];
        d.extend(&self.disc_hidden);
        d.push(1);
        d
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes < 2 {
            return bad(format!("num_classes must be at least 2, got {}", self.num_classes));
        }
        if self.recons_hidden == 0 || self.gen_hidden == 0 || self.disc_hidden.contains(&0) {
            return bad("decoder widths must be at least 1".into());
        }
        if !(self.lambda_adv >= 0.0 && self.lambda_adv.is_finite()) {
            return bad(format!("lambda_adv must be finite and non-negative, got {}", self.lambda_adv));
        }
        if !(self.noise_max >= 0.0 && self.noise_max.is_finite()) {
            return bad(format!("noise_max must be finite and non-negative, got {}", self.noise_max));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return bad(format!("clamp_eps must lie in (0, 0.5), got {}", self.clamp_eps));
        }
        if let Some(w) = &self.class_weights {
            if w.len() != self.num_classes || w.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
                return bad("class_weights needs one finite non-negative weight per class".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_follow_class_count() {
        let c8 = CcdConfig::with_classes(8);
        assert_eq!(c8.recons_dims(576), vec![576, 256, 128]);
        assert_eq!(c8.seg_dims(), vec![128, 64, 32, 16, 8]);
        assert_eq!(c8.gen_dims(64), vec![128, 96, 64]);
        assert_eq!(c8.disc_dims(64), vec![64, 32, 16, 1]);
        assert_eq!(CcdConfig::with_classes(6).recons_dims(576)[2], 96);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(CcdConfig::with_classes(1).validate().is_err());
        let mut c = CcdConfig::default();
        c.clamp_eps = 0.0;
        assert!(c.validate().is_err());
        c = CcdConfig::default();
        c.class_weights = Some(vec![1.0; 3]);
        assert!(c.validate().is_err());
    }
}
