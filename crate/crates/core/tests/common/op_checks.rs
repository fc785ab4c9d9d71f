//! Finite-difference checks shared by the gradient tests and the acceptance suite.

use std::rc::Rc;

use super::{max_gradient_error, pseudo_random};
use gidseg::autodiff::{Graph, ParamStore, Tensor, Var};
use gidseg::io::UNLABELED;

type Build<'a> = dyn Fn(&mut Graph<f64>, &ParamStore<f64>) -> Var + 'a;

/// Contracts the op output against a fixed random matrix so every entry matters.
fn weighted_sum(g: &mut Graph<f64>, y: Var, seed: u64) -> Var {
    let (r, c) = g.shape(y);
    let w = g.constant(pseudo_random(r, c, seed));
    let p = g.mul(y, w).unwrap();
    g.sum(p).unwrap()
}

pub fn check(store: &ParamStore<f64>, names: &[&str], build: &Build<'_>) -> f64 {
    let mut analytic = store.clone();
    analytic.zero_grad();
    let mut g = Graph::new();
    let loss = build(&mut g, store);
    g.backward(loss, &mut analytic).unwrap();
    let f = |s: &ParamStore<f64>| {
        let mut g = Graph::new();
        let loss = build(&mut g, s);
        g.value(loss).item()
    };
    max_gradient_error(store, names, &analytic, &f)
}

pub fn store_with(entries: &[(&str, Tensor<f64>)]) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (n, t) in entries {
        s.insert(*n, t.clone()).unwrap();
    }
    s
}

/// Pushes every entry at least `gap` away from zero, keeping its sign.
fn away_from_zero(t: Tensor<f64>, gap: f64) -> Tensor<f64> {
    let (r, c) = t.shape();
    Tensor::new(r, c, t.data().iter().map(|&v| if v >= 0.0 { v + gap } else { v - gap }).collect()).unwrap()
}


pub fn matmul_and_bias() -> f64 {
    let s = store_with(&[
        ("a", pseudo_random(4, 3, 1)),
        ("b", pseudo_random(3, 5, 2)),
        ("bias", pseudo_random(1, 5, 3)),
    ]);
    let err = check(&s, &["a", "b", "bias"], &|g, s| {
        let a = g.param(s, "a").unwrap();
        let b = g.param(s, "b").unwrap();
        let bias = g.param(s, "bias").unwrap();
        let y = g.matmul(a, b).unwrap();
        let y = g.add_bias(y, bias).unwrap();
        weighted_sum(g, y, 9)
    });
    err
}

pub fn add_sub_mul_affine() -> f64 {
    let s = store_with(&[("a", pseudo_random(3, 4, 4)), ("b", pseudo_random(3, 4, 5))]);
    let err = check(&s, &["a", "b"], &|g, s| {
        let a = g.param(s, "a").unwrap();
        let b = g.param(s, "b").unwrap();
        let x = g.add(a, b).unwrap();
        let y = g.sub(x, b).unwrap();
        let y = g.sub(y, b).unwrap();
        let z = g.mul(y, a).unwrap();
        let z = g.affine(z, -1.7, 0.3).unwrap();
        weighted_sum(g, z, 10)
    });
    err
}

pub fn leaky_relu() -> f64 {
    let s = store_with(&[("x", away_from_zero(pseudo_random(5, 4, 6), 0.05))]);
    let err = check(&s, &["x"], &|g, s| {
        let x = g.param(s, "x").unwrap();
        let y = g.leaky_relu(x, 0.2).unwrap();
        weighted_sum(g, y, 11)
    });
    err
}

pub fn sigmoid_log_exp() -> f64 {
    let s = store_with(&[("x", pseudo_random(3, 3, 7))]);
    let err = check(&s, &["x"], &|g, s| {
        let x = g.param(s, "x").unwrap();
        let y = g.sigmoid(x).unwrap();
        let y = g.log(y).unwrap();
        let e = g.exp(x).unwrap();
        let z = g.add(y, e).unwrap();
        weighted_sum(g, z, 12)
    });
    err
}

pub fn clamp_inside_and_outside() -> f64 {
    // Entries at least 0.05 from either bound.
    let x = Tensor::new(1, 6, vec![-0.9, -0.3, 0.1, 0.45, 0.7, 2.0]).unwrap();
    let s = store_with(&[("x", x)]);
    let err = check(&s, &["x"], &|g, s| {
        let x = g.param(s, "x").unwrap();
        let y = g.clamp(x, -0.5, 0.6).unwrap();
        weighted_sum(g, y, 13)
    });
    err
}

pub fn concat_slice_cumsum() -> f64 {
    let s = store_with(&[("a", pseudo_random(6, 2, 8)), ("b", pseudo_random(6, 3, 9))]);
    let err = check(&s, &["a", "b"], &|g, s| {
        let a = g.param(s, "a").unwrap();
        let b = g.param(s, "b").unwrap();
        let c = g.concat_cols(&[a, b, a]).unwrap();
        let top = g.slice_rows(c, 1, 4).unwrap();
        let cs = g.cumsum_cols(top).unwrap();
        weighted_sum(g, cs, 14)
    });
    err
}

pub fn edge_gather_add_and_group_max() -> f64 {
    let s = store_with(&[("c", pseudo_random(5, 3, 15)), ("o", pseudo_random(5, 3, 16))]);
    let edges = Rc::new(vec![1, 2, 0, 3, 4, 1, 0, 1, 2, 3]);
    let err = check(&s, &["c", "o"], &|g, s| {
        let c = g.param(s, "c").unwrap();
        let o = g.param(s, "o").unwrap();
        let e = g.edge_gather_add(c, o, edges.clone(), 2).unwrap();
        let m = g.rowwise_max_over_groups(e, 2).unwrap();
        weighted_sum(g, m, 17)
    });
    err
}

pub fn rbf_expand_gammas() -> f64 {
    let d2 = Rc::new(Tensor::from_fn(4, 3, |r, c| 0.05 + 0.1 * (r * 3 + c) as f64));
    let raw = Tensor::new(1, 3, vec![0.0, 1.0f64.ln(), 2.0f64.ln()]).unwrap();
    let s = store_with(&[("raw", raw)]);
    let err = check(&s, &["raw"], &|g, s| {
        let raw = g.param(s, "raw").unwrap();
        let inc = g.exp(raw).unwrap();
        let gammas = g.cumsum_cols(inc).unwrap();
        let y = g.rbf_expand(d2.clone(), gammas).unwrap();
        weighted_sum(g, y, 18)
    });
    err
}

pub fn masked_weighted_cross_entropy() -> f64 {
    let s = store_with(&[("z", pseudo_random(6, 4, 19))]);
    let labels = [0, UNLABELED, 3, 2, UNLABELED, 1];
    let err = check(&s, &["z"], &|g, s| {
        let z = g.param(s, "z").unwrap();
        g.softmax_cross_entropy(z, &labels, None).unwrap()
    });
    let weighted = check(&s, &["z"], &|g, s| {
        let z = g.param(s, "z").unwrap();
        g.softmax_cross_entropy(z, &labels, Some(&[0.5, 1.0, 2.0, 1.5])).unwrap()
    });
    err.max(weighted)
}

pub fn standardize_mean_sum() -> f64 {
    let s = store_with(&[("x", pseudo_random(7, 3, 20))]);
    let err = check(&s, &["x"], &|g, s| {
        let x = g.param(s, "x").unwrap();
        let y = g.standardize(x, 1e-5).unwrap();
        let w = weighted_sum(g, y, 21);
        let m = g.mean(x).unwrap();
        let sq = g.mul(x, x).unwrap();
        let t = g.sum(sq).unwrap();
        let a = g.add(w, m).unwrap();
        g.add(a, t).unwrap()
    });
    err
}

/// Every per-op case with its name.
pub fn all_op_cases() -> Vec<(&'static str, fn() -> f64)> {
    vec![
        ("matmul_and_bias", matmul_and_bias),
        ("add_sub_mul_affine", add_sub_mul_affine),
        ("leaky_relu", leaky_relu),
        ("sigmoid_log_exp", sigmoid_log_exp),
        ("clamp_inside_and_outside", clamp_inside_and_outside),
        ("concat_slice_cumsum", concat_slice_cumsum),
        ("edge_gather_add_and_group_max", edge_gather_add_and_group_max),
        ("rbf_expand_gammas", rbf_expand_gammas),
        ("masked_weighted_cross_entropy", masked_weighted_cross_entropy),
        ("standardize_mean_sum", standardize_mean_sum),
    ]
}

/// Small model whose loss exercises every layer: EdgeConv stack, identity
/// descriptor, decoder heads and discriminator.
pub fn tiny_model() -> (gidseg::ccd::ModelConfig, gidseg::hge::HgeInputs<f64>, Vec<u32>) {
    use gidseg::ccd::{CcdConfig, ModelConfig};
    use gidseg::hge::{dense_neighbors, neighbor_sq_distances, GsmConfig, HgeConfig, HgeInputs, KernelBank};
    use gidseg::spatial::knn_graph;

    let cfg = ModelConfig {
        hge: HgeConfig {
            gsm: GsmConfig {
                m: 4,
                channels: vec![6, 8],
                ..GsmConfig::default()
            },
            bank: KernelBank {
                gammas: vec![1.0, 4.0],
                k: 4,
                ..KernelBank::default()
            },
            pim_enabled: true,
        },
        ccd: CcdConfig {
            recons_hidden: 16,
            gen_hidden: 8,
            disc_hidden: vec![8, 4],
            ..CcdConfig::with_classes(3)
        },
        ..ModelConfig::default()
    };
    let voxel = pseudo_random(20, 4, 31);
    let dense = pseudo_random(60, 4, 32);
    let vp: Vec<[f64; 4]> = (0..20).map(|r| [voxel.get(r, 0), voxel.get(r, 1), voxel.get(r, 2), voxel.get(r, 3)]).collect();
    let dp: Vec<[f64; 4]> = (0..60).map(|r| [dense.get(r, 0), dense.get(r, 1), dense.get(r, 2), dense.get(r, 3)]).collect();
    let nbrs = dense_neighbors(&vp, &dp, 4, false).unwrap();
    let sq = neighbor_sq_distances(&vp, &dp, &nbrs, false).unwrap();
    let pos: Vec<[f64; 3]> = vp.iter().map(|p| [p[0], p[1], p[2]]).collect();
    let inputs = HgeInputs {
        features: voxel,
        coord_edges: knn_graph(&pos, 4).unwrap(),
        sq_dist: Rc::new(sq),
    };
    let labels = (0..20).map(|i| if i % 3 == 1 { UNLABELED } else { (i % 3) as u32 }).collect();
    (cfg, inputs, labels)
}

/// `L_Seg + λ·L_Adv − L_Dis` with every parameter live.
pub fn composed_loss(g: &mut Graph<f64>, s: &ParamStore<f64>) -> Var {
    use gidseg::ccd::{adv_loss_from_scores, disc_objective_from_scores, discriminate, model_forward, seg_loss};
    let (cfg, inputs, labels) = tiny_model();
    let fwd = model_forward(g, s, &inputs, &cfg).unwrap();
    let seg = seg_loss(g, fwd.decode.logits, &labels, &cfg.ccd).unwrap();
    let delta = g.sub(fwd.hgd.pid, fwd.decode.f_pid_hat).unwrap();
    let noise = g.constant(Tensor::from_fn(20, 8, |r, c| 1e-4 * ((r * 8 + c) % 10) as f64));
    let dd = discriminate(g, s, delta, &cfg.ccd, false).unwrap();
    let ds = discriminate(g, s, noise, &cfg.ccd, false).unwrap();
    let adv = adv_loss_from_scores(g, dd).unwrap();
    let dis = disc_objective_from_scores(g, ds, dd).unwrap();
    let adv = g.scale(adv, cfg.ccd.lambda_adv).unwrap();
    let total = g.add(seg, adv).unwrap();
    g.sub(total, dis).unwrap()
}

/// Worst relative error over 50 random parameter coordinates of the composed loss.
pub fn end_to_end_error() -> f64 {
    use rand::{Rng, SeedableRng};
    let (cfg, _, _) = tiny_model();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
    let mut store = gidseg::ccd::init_model_params::<f64>(&cfg, &mut rng).unwrap();
    // Zero biases put tiny noise inputs right on the leaky-ReLU kink.
    let biases: Vec<String> = store.names().filter(|n| n.ends_with(".bias")).map(str::to_string).collect();
    for name in biases {
        let mut b = store.get(&name).unwrap().clone();
        b.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.2..0.2));
        store.set(&name, b).unwrap();
    }
    let mut analytic = store.clone();
    let mut g = Graph::new();
    let loss = composed_loss(&mut g, &store);
    g.backward(loss, &mut analytic).unwrap();
    let f = |s: &ParamStore<f64>| {
        let mut g = Graph::new();
        let l = composed_loss(&mut g, s);
        g.value(l).item()
    };
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let name = &names[rng.gen_range(0..names.len())];
        let len = store.get(name).unwrap().len();
        let i = rng.gen_range(0..len);
        let n = super::central_difference(&store, name, i, 1e-5, &f);
        let a = analytic.grad(name).unwrap().data()[i];
        worst = worst.max(super::relative_error(a, n, 1e-6));
    }
    worst
}
