use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adaptive-moment optimizer hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
struct Entry<T> {
    value: Tensor<T>,
    grad: Tensor<T>,
    m: Tensor<T>,
    v: Tensor<T>,
    step: u64,
}

/// Named learnable tensors with their gradients and optimizer moments.
///
/// Iteration order is by name, which keeps checkpoints and updates deterministic.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    entries: BTreeMap<String, Entry<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Argument(format!("duplicate parameter '{name}'")));
        }
        let (r, c) = value.shape();
        self.entries.insert(
            name,
            Entry {
                value,
                grad: Tensor::zeros(r, c),
                m: Tensor::zeros(r, c),
                v: Tensor::zeros(r, c),
                step: 0,
            },
        );
        Ok(())
    }

    /// Adds `{prefix}.weight` (`fan_in × fan_out`, He-uniform for LeakyReLU) and a zero `{prefix}.bias`.
    pub fn insert_linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize, slope: f64, rng: &mut impl Rng) -> Result<()> {
        let bound = (6.0 / ((1.0 + slope * slope) * fan_in.max(1) as f64)).sqrt();
        let w = Tensor::from_fn(fan_in, fan_out, |_, _| T::lit(rng.gen_range(-bound..bound)));
        self.insert(format!("{prefix}.weight"), w)?;
        self.insert(format!("{prefix}.bias"), Tensor::zeros(1, fan_out))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.get(name).map(|e| &e.grad)
    }

    pub fn step_count(&self, name: &str) -> Option<u64> {
        self.entries.get(name).map(|e| e.step)
    }

    /// Overwrites a value; the shape must not change.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Argument(format!("unknown parameter '{name}'")))?;
        if e.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "ParamStore::set",
                lhs: e.value.shape(),
                rhs: value.shape(),
            });
        }
        e.value = value;
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), &e.value))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.value.len()).sum()
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, g: &Tensor<T>) -> Result<()> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::Argument(format!("unknown parameter '{name}'")))?;
        if e.grad.shape() != g.shape() {
            return Err(Error::Shape {
                op: "accumulate_grad",
                lhs: e.grad.shape(),
                rhs: g.shape(),
            });
        }
        for (a, &b) in e.grad.data_mut().iter_mut().zip(g.data()) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Adam update with bias correction on every parameter accepted by `filter`,
    /// using the accumulated gradients. Gradients are not cleared.
    pub fn adam_step(&mut self, cfg: &AdamConfig, filter: impl Fn(&str) -> bool) -> Result<()> {
        for (name, e) in &self.entries {
            if filter(name) && !e.grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter '{name}'")));
            }
        }
        let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
        let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.eps));
        for (_, e) in self.entries.iter_mut().filter(|(n, _)| filter(n)) {
            e.step += 1;
            let t = e.step as i32;
            let c1 = T::one() - b1.powi(t);
            let c2 = T::one() - b2.powi(t);
            let Entry { value, grad, m, v, .. } = e;
            for (((p, &g), m), v) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / c1;
                let vhat = *v / c2;
                *p = *p - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Converts values to another precision; optimizer state is reset.
    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (name, value) in self.iter() {
            out.insert(name, value.cast()).expect("unique names");
        }
        out
    }
}

/// Runs `store.adam_step` over every parameter (convenience for single-objective training).
pub fn optimizer_step<T: Scalar>(store: &mut ParamStore<T>, cfg: &AdamConfig) -> Result<()> {
    store.adam_step(cfg, |_| true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;

    #[test]
    fn zero_gradient_leaves_values() {
        let mut s = ParamStore::<f64>::new();
        s.insert("w", Tensor::new(1, 2, vec![1.0, -2.0]).unwrap()).unwrap();
        optimizer_step(&mut s, &AdamConfig::default()).unwrap();
        assert_eq!(s.get("w").unwrap().data(), &[1.0, -2.0]);
        assert_eq!(s.step_count("w"), Some(1));
    }

    #[test]
    fn quadratic_converges() {
        // loss = (w − 3)², analytic minimizer 3.
        let mut s = ParamStore::<f64>::new();
        s.insert("w", Tensor::scalar(0.0)).unwrap();
        let cfg = AdamConfig { lr: 0.1, ..Default::default() };
        for _ in 0..200 {
            s.zero_grad();
            let mut g = Graph::new();
            let w = g.param(&s, "w").unwrap();
            let d = g.affine(w, 1.0, -3.0).unwrap();
            let loss = g.matmul(d, d).unwrap();
            g.backward(loss, &mut s).unwrap();
            optimizer_step(&mut s, &cfg).unwrap();
        }
        assert!((s.get("w").unwrap().item() - 3.0).abs() < 1e-3, "{}", s.get("w").unwrap().item());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = ParamStore::<f64>::new();
        s.insert("layer.weight", Tensor::scalar(1.0)).unwrap();
        s.accumulate_grad("layer.weight", &Tensor::scalar(f64::NAN)).unwrap();
        let err = optimizer_step(&mut s, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("layer.weight"));
    }

    #[test]
    fn filter_freezes_other_parameters() {
        let mut s = ParamStore::<f32>::new();
        s.insert("a", Tensor::scalar(1.0)).unwrap();
        s.insert("b", Tensor::scalar(1.0)).unwrap();
        s.accumulate_grad("a", &Tensor::scalar(1.0)).unwrap();
        s.accumulate_grad("b", &Tensor::scalar(1.0)).unwrap();
        s.adam_step(&AdamConfig::default(), |n| n == "a").unwrap();
        assert_ne!(s.get("a").unwrap().item(), 1.0);
        assert_eq!(s.get("b").unwrap().item().to_bits(), 1.0f32.to_bits());
        assert_eq!(s.step_count("b"), Some(0));
    }

    #[test]
    fn duplicate_and_shape_checks() {
        let mut s = ParamStore::<f32>::new();
        s.insert("a", Tensor::zeros(2, 2)).unwrap();
        assert!(s.insert("a", Tensor::zeros(1, 1)).is_err());
        assert!(s.set("a", Tensor::zeros(1, 4)).is_err());
    }
}
