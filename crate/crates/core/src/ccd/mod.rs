//! Conditional constraint decoder: reconstruction MLPs feeding a segmentation
//! head and an identity-descriptor generator, plus the discriminator that
//! pushes `F_PID − F̂_PID` toward near-zero noise.

mod config;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use config::CcdConfig;

use crate::autodiff::{AdamConfig, Graph, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::hge::{hge_forward, init_hge_params, HgdVars, HgeConfig, HgeInputs};
use crate::scalar::Scalar;

pub const DISC_PREFIX: &str = "ccd.disc";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Head {
    Linear,
    Leaky,
    Sigmoid,
}

fn mlp_names(stage: &str, layers: usize) -> Vec<String> {
    (1..=layers).map(|l| format!("ccd.{stage}{l}")).collect()
}

fn init_mlp<T: Scalar>(store: &mut ParamStore<T>, stage: &str, dims: &[usize], slope: f64, rng: &mut impl Rng) -> Result<()> {
    for (name, w) in mlp_names(stage, dims.len() - 1).iter().zip(dims.windows(2)) {
        store.insert_linear(name, w[0], w[1], slope, rng)?;
    }
    Ok(())
}

/// LeakyReLU between layers; `head` picks the last activation.
fn run_mlp<T: Scalar>(
    g: &mut Graph<T>,
    store: &ParamStore<T>,
    stage: &str,
    layers: usize,
    mut x: Var,
    slope: T,
    head: Head,
    frozen: bool,
) -> Result<Var> {
    for (l, name) in mlp_names(stage, layers).iter().enumerate() {
        let (wn, bn) = (format!("{name}.weight"), format!("{name}.bias"));
        let (w, b) = if frozen {
            (g.frozen_param(store, &wn)?, g.frozen_param(store, &bn)?)
        } else {
            (g.param(store, &wn)?, g.param(store, &bn)?)
        };
        let h = g.matmul(x, w)?;
        x = g.add_bias(h, b)?;
        let last = l + 1 == layers;
        x = match (last, head) {
            (false, _) | (true, Head::Leaky) => g.leaky_relu(x, slope)?,
            (true, Head::Sigmoid) => g.sigmoid(x)?,
            (true, Head::Linear) => x,
        };
    }
    Ok(x)
}

/// Registers reconstruction, segmentation, generator and discriminator weights.
pub fn init_ccd_params<T: Scalar>(
    store: &mut ParamStore<T>,
    cfg: &CcdConfig,
    hgd_width: usize,
    pid_width: usize,
    rng: &mut impl Rng,
) -> Result<()> {
    cfg.validate()?;
    let s = cfg.leaky_slope;
    init_mlp(store, "recons", &cfg.recons_dims(hgd_width), s, rng)?;
    init_mlp(store, "seg", &cfg.seg_dims(), s, rng)?;
    init_mlp(store, "gen", &cfg.gen_dims(pid_width), s, rng)?;
    init_mlp(store, "disc", &cfg.disc_dims(pid_width), s, rng)
}

#[derive(Clone, Copy, Debug)]
pub struct DecodeVars {
    pub recons: Var,
    pub logits: Var,
    pub f_pid_hat: Var,
}

/// Segmentation logits `N × C` and generated identity descriptor `N × J·K`.
pub fn decode<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, hgd: Var, cfg: &CcdConfig) -> Result<DecodeVars> {
    cfg.validate()?;
    let expected = store
        .get("ccd.recons1.weight")
        .ok_or_else(|| Error::Argument("missing parameter 'ccd.recons1.weight'".into()))?
        .rows();
    let (n, width) = g.shape(hgd);
    if width != expected {
        return Err(Error::Shape {
            op: "decode input width",
            lhs: (n, width),
            rhs: (n, expected),
        });
    }
    let slope = T::lit(cfg.leaky_slope);
    let recons = run_mlp(g, store, "recons", 2, hgd, slope, Head::Leaky, false)?;
    let logits = run_mlp(g, store, "seg", 4, recons, slope, Head::Linear, false)?;
    let f_pid_hat = run_mlp(g, store, "gen", 2, recons, slope, Head::Sigmoid, false)?;
    Ok(DecodeVars {
        recons,
        logits,
        f_pid_hat,
    })
}

/// Mean cross-entropy over rows whose label is not the unlabeled sentinel.
pub fn seg_loss<T: Scalar>(g: &mut Graph<T>, logits: Var, labels: &[u32], cfg: &CcdConfig) -> Result<Var> {
    if !labels.iter().any(|&l| l != crate::io::UNLABELED) {
        log::warn!("segmentation loss over an empty label mask is zero");
    }
    let weights: Option<Vec<T>> = cfg.class_weights.as_ref().map(|w| w.iter().map(|&x| T::lit(x)).collect());
    g.softmax_cross_entropy(logits, labels, weights.as_deref())
}

/// Identity descriptors of one training step.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialBundle<T> {
    pub f_pid: Tensor<T>,
    pub f_pid_hat: Tensor<T>,
    pub delta: Tensor<T>,
    pub sigma: Tensor<T>,
}

impl<T: Scalar> AdversarialBundle<T> {
    /// `delta = f_pid − f_pid_hat`; `sigma` uniform on `[0, noise_max]`.
    pub fn new(f_pid: Tensor<T>, f_pid_hat: Tensor<T>, noise_max: f64, rng: &mut impl Rng) -> Result<Self> {
        if f_pid.shape() != f_pid_hat.shape() {
            return Err(Error::Shape {
                op: "AdversarialBundle",
                lhs: f_pid.shape(),
                rhs: f_pid_hat.shape(),
            });
        }
        let delta = Tensor::from_fn(f_pid.rows(), f_pid.cols(), |r, c| f_pid.get(r, c) - f_pid_hat.get(r, c));
        let sigma = sample_noise(f_pid.rows(), f_pid.cols(), noise_max, rng);
        Ok(Self {
            f_pid,
            f_pid_hat,
            delta,
            sigma,
        })
    }
}

pub fn sample_noise<T: Scalar>(rows: usize, cols: usize, noise_max: f64, rng: &mut impl Rng) -> Tensor<T> {
    Tensor::from_fn(rows, cols, |_, _| T::lit(rng.gen::<f64>() * noise_max))
}

/// Discriminator scores `N × 1`, clamped to `[ε, 1 − ε]`.
pub fn discriminate<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, x: Var, cfg: &CcdConfig, frozen: bool) -> Result<Var> {
    let layers = cfg.disc_hidden.len() + 1;
    let s = run_mlp(g, store, "disc", layers, x, T::lit(cfg.leaky_slope), Head::Sigmoid, frozen)?;
    if !g.value(s).is_finite() {
        return Err(Error::NonFinite("discriminator score before clamping".into()));
    }
    let eps = T::lit(cfg.clamp_eps);
    g.clamp(s, eps, T::one() - eps)
}

/// `mean log(1 − D(δ))`, minimized by the generator side.
pub fn adv_loss_from_scores<T: Scalar>(g: &mut Graph<T>, d_delta: Var) -> Result<Var> {
    let one_minus = g.affine(d_delta, -T::one(), T::one())?;
    let l = g.log(one_minus)?;
    g.mean(l)
}

/// Discriminator objective `mean log D(σ) + mean log(1 − D(δ))`, which the
/// discriminator maximizes (σ is real, δ is fake).
pub fn disc_objective_from_scores<T: Scalar>(g: &mut Graph<T>, d_sigma: Var, d_delta: Var) -> Result<Var> {
    let ls = g.log(d_sigma)?;
    let real = g.mean(ls)?;
    let fake = adv_loss_from_scores(g, d_delta)?;
    g.add(real, fake)
}

/// `(L_Adv, L_Dis)` of a bundle under the current discriminator.
pub fn adversarial_losses<T: Scalar>(bundle: &AdversarialBundle<T>, store: &ParamStore<T>, cfg: &CcdConfig) -> Result<(T, T)> {
    let mut g = Graph::new();
    let delta = g.constant(bundle.delta.clone());
    let sigma = g.constant(bundle.sigma.clone());
    let dd = discriminate(&mut g, store, delta, cfg, true)?;
    let ds = discriminate(&mut g, store, sigma, cfg, true)?;
    let adv = adv_loss_from_scores(&mut g, dd)?;
    let dis = disc_objective_from_scores(&mut g, ds, dd)?;
    Ok((g.value(adv).item(), g.value(dis).item()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hge: HgeConfig,
    pub ccd: CcdConfig,
    /// Voxel feature width fed to the encoder.
    pub in_width: usize,
    /// When false the discriminator is neither trained nor applied.
    pub adversarial: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hge: HgeConfig::default(),
            ccd: CcdConfig::default(),
            in_width: crate::io::NUM_ATTRS,
            adversarial: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.hge.validate()?;
        self.ccd.validate()?;
        if self.in_width < 3 {
            return Err(Error::Config(format!("in_width must be at least 3, got {}", self.in_width)));
        }
        Ok(())
    }

    fn effective_lambda(&self) -> f64 {
        if self.adversarial {
            self.ccd.lambda_adv
        } else {
            0.0
        }
    }
}

pub fn init_model_params<T: Scalar>(cfg: &ModelConfig, rng: &mut impl Rng) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    init_hge_params(&mut store, &cfg.hge, cfg.in_width, rng)?;
    init_ccd_params(&mut store, &cfg.ccd, cfg.hge.output_width(), cfg.hge.bank.output_width(), rng)?;
    Ok(store)
}

pub struct ForwardVars {
    pub hgd: HgdVars,
    pub decode: DecodeVars,
}

pub fn model_forward<T: Scalar>(g: &mut Graph<T>, store: &ParamStore<T>, inputs: &HgeInputs<T>, cfg: &ModelConfig) -> Result<ForwardVars> {
    let hgd = hge_forward(g, store, inputs, &cfg.hge)?;
    let decode = decode(g, store, hgd.hgd, &cfg.ccd)?;
    Ok(ForwardVars { hgd, decode })
}

/// Per-voxel logits without building gradients for anything but the forward pass.
pub fn predict_logits<T: Scalar>(store: &ParamStore<T>, inputs: &HgeInputs<T>, cfg: &ModelConfig) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let out = model_forward(&mut g, store, inputs, cfg)?;
    Ok(g.value(out.decode.logits).clone())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_seg: f64,
    pub l_adv: f64,
    /// Discriminator objective (maximized by the discriminator).
    pub l_dis: f64,
    pub total_gen: f64,
}

/// Which parameters an optimizer step may touch.
pub fn is_disc_param(name: &str) -> bool {
    name.starts_with(DISC_PREFIX)
}

pub struct Batch<'a, T> {
    pub inputs: &'a HgeInputs<T>,
    /// Voxel labels with the unlabeled sentinel outside the sparse mask.
    pub labels: &'a [u32],
}

fn diagnose<T: Scalar>(store: &ParamStore<T>, what: &str, err: Error) -> Error {
    let norms: Vec<String> = store.iter().map(|(n, t)| format!("{n}={:.4e}", t.norm())).collect();
    Error::NonFinite(format!("{what}: {err}; parameter norms: {}", norms.join(", ")))
}

fn check_finite<T: Scalar>(store: &ParamStore<T>, what: &str, v: T) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(diagnose(store, what, Error::NonFinite(format!("value {}", v.as_f64()))))
    }
}

/// One discriminator update on `δ` (fake) against fresh noise (real).
/// Touches only discriminator weights. Returns the objective before the update.
pub fn discriminator_step<T: Scalar>(
    store: &mut ParamStore<T>,
    cfg: &ModelConfig,
    delta: &Tensor<T>,
    adam: &AdamConfig,
    rng: &mut impl Rng,
) -> Result<T> {
    let sigma = sample_noise::<T>(delta.rows(), delta.cols(), cfg.ccd.noise_max, rng);
    let mut g = Graph::new();
    let dv = g.constant(delta.clone());
    let sv = g.constant(sigma);
    let dd = discriminate(&mut g, store, dv, &cfg.ccd, false)?;
    let ds = discriminate(&mut g, store, sv, &cfg.ccd, false)?;
    let objective = disc_objective_from_scores(&mut g, ds, dd)?;
    let value = g.value(objective).item();
    check_finite(store, "discriminator objective", value)?;
    let loss = g.scale(objective, -T::one())?;
    store.zero_grad();
    g.backward(loss, store)?;
    store.adam_step(adam, is_disc_param).map_err(|e| diagnose(store, "discriminator step", e))?;
    Ok(value)
}

/// Full alternating step: discriminator first, then encoder, decoder and
/// generator on `L_Seg + λ·L_Adv` with the discriminator frozen.
pub fn train_step<T: Scalar>(
    store: &mut ParamStore<T>,
    cfg: &ModelConfig,
    batch: &Batch<'_, T>,
    adam: &AdamConfig,
    rng: &mut impl Rng,
) -> Result<LossReport> {
    let mut g = Graph::new();
    let fwd = model_forward(&mut g, store, batch.inputs, cfg).map_err(|e| match e {
        Error::NonFinite(_) => diagnose(store, "forward pass", e),
        other => other,
    })?;
    let l_seg = seg_loss(&mut g, fwd.decode.logits, batch.labels, &cfg.ccd)?;
    let delta = g.sub(fwd.hgd.pid, fwd.decode.f_pid_hat)?;

    let l_dis = if cfg.adversarial {
        let delta_value = g.value(delta).clone();
        discriminator_step(store, cfg, &delta_value, adam, rng)?.as_f64()
    } else {
        0.0
    };

    let l_adv = if cfg.adversarial {
        let dd = discriminate(&mut g, store, delta, &cfg.ccd, true)?;
        Some(adv_loss_from_scores(&mut g, dd)?)
    } else {
        None
    };
    let lambda = cfg.effective_lambda();
    let total = match l_adv {
        Some(a) if lambda > 0.0 => {
            let w = g.scale(a, T::lit(lambda))?;
            g.add(l_seg, w)?
        }
        _ => l_seg,
    };
    let report = LossReport {
        l_seg: g.value(l_seg).item().as_f64(),
        l_adv: l_adv.map_or(0.0, |a| g.value(a).item().as_f64()),
        l_dis,
        total_gen: g.value(total).item().as_f64(),
    };
    check_finite(store, "generator objective", g.value(total).item())?;
    store.zero_grad();
    g.backward(total, store)?;
    let frozen_gamma = !cfg.hge.bank.trainable;
    store
        .adam_step(adam, |n| !is_disc_param(n) && !(frozen_gamma && n == crate::hge::GAMMA_PARAM))
        .map_err(|e| diagnose(store, "generator step", e))?;
    Ok(report)
}
