#![allow(dead_code)]

pub mod op_checks;
pub mod oracles;

use gidseg::autodiff::{ParamStore, Tensor};

/// Central finite difference of `f` with respect to one scalar of parameter `name`.
pub fn central_difference(
    store: &ParamStore<f64>,
    name: &str,
    index: usize,
    h: f64,
    f: &dyn Fn(&ParamStore<f64>) -> f64,
) -> f64 {
    let base = store.get(name).expect("parameter").clone();
    let mut probe = store.clone();
    let mut plus = base.clone();
    plus.data_mut()[index] += h;
    probe.set(name, plus).unwrap();
    let fp = f(&probe);
    let mut minus = base;
    minus.data_mut()[index] -= h;
    probe.set(name, minus).unwrap();
    let fm = f(&probe);
    (fp - fm) / (2.0 * h)
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Worst relative error over every coordinate of every listed parameter.
pub fn max_gradient_error(
    store: &ParamStore<f64>,
    names: &[&str],
    analytic: &ParamStore<f64>,
    f: &dyn Fn(&ParamStore<f64>) -> f64,
) -> f64 {
    let mut worst = 0.0f64;
    for name in names {
        let g = analytic.grad(name).expect("gradient");
        for i in 0..g.len() {
            let n = central_difference(store, name, i, 1e-5, f);
            worst = worst.max(relative_error(g.data()[i], n, 1e-6));
        }
    }
    worst
}

/// Deterministic pseudo-random matrix in roughly [-1, 1].
pub fn pseudo_random(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    Tensor::from_fn(rows, cols, |_, _| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    })
}
