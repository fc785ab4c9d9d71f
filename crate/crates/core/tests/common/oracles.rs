//! Brute-force reference implementations and randomized comparisons.

use std::collections::HashMap;

use gidseg::autodiff::{Graph, Tensor};
use gidseg::hge::{build_graph, edgeconv_layer, pim_features};
use gidseg::io::{PointCloud, UNLABELED};
use gidseg::spatial::{broadcast_labels, knn, knn_graph, radius_neighbors, voxel_downsample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = std::result::Result<(), String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn points<const D: usize>(r: &mut ChaCha8Rng, n: usize, extent: f64) -> Vec<[f64; D]> {
    (0..n).map(|_| [0; D].map(|_| r.gen_range(-extent..extent))).collect()
}

/// Lattice points make exact distance ties common.
fn lattice_points(r: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
    (0..n).map(|_| [0; 3].map(|_| r.gen_range(-3i32..=3) as f64 * 0.5)).collect()
}

fn d2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    (0..D).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

/// Indices of `targets` sorted by (squared distance, index).
fn brute_sorted<const D: usize>(q: &[f64; D], targets: &[[f64; D]]) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = targets.iter().enumerate().map(|(i, t)| (d2(q, t), i)).collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-12)
}

pub fn voxelization(instances: u64) -> Check {
    for seed in 0..instances {
        let mut r = rng(seed);
        let n = r.gen_range(1..600);
        let res = r.gen_range(0.05..1.0);
        let pts: Vec<[f64; 4]> = (0..n)
            .map(|_| {
                let p = points::<3>(&mut r, 1, 3.0)[0];
                [p[0], p[1], p[2], r.gen_range(0.0..1.0)]
            })
            .collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let v = voxel_downsample(&cloud, res).unwrap();
        let mut cells: HashMap<[i64; 3], (Vec<f64>, usize)> = HashMap::new();
        for p in &pts {
            let key = [0, 1, 2].map(|a| (p[a] / res).floor() as i64);
            let e = cells.entry(key).or_insert((vec![0.0; 4], 0));
            for a in 0..4 {
                e.0[a] += p[a];
            }
            e.1 += 1;
        }
        if v.len() != cells.len() {
            return Err(format!("seed {seed}: {} voxels, oracle {}", v.len(), cells.len()));
        }
        for (i, key) in v.voxel_keys.iter().enumerate() {
            let (sum, count) = &cells[key];
            if v.source_indices[i].len() != *count {
                return Err(format!("seed {seed}: cell {key:?} member count differs"));
            }
            for a in 0..4 {
                if !rel_close(v.points[i][a], sum[a] / *count as f64, 1e-6) {
                    return Err(format!("seed {seed}: centroid of {key:?} differs"));
                }
            }
        }
    }
    Ok(())
}

pub fn knn_search(instances: u64) -> Check {
    for seed in 0..instances {
        let mut r = rng(1000 + seed);
        let targets = if seed % 3 == 0 {
            let n = r.gen_range(1..300);
            lattice_points(&mut r, n)
        } else {
            let n = r.gen_range(1..400);
            points::<3>(&mut r, n, 5.0)
        };
        let queries = points::<3>(&mut r, 40, 5.0);
        let k = r.gen_range(1..20);
        let got = knn(&queries, &targets, k).unwrap();
        for (q, list) in queries.iter().zip(&got.neighbors) {
            let want = brute_sorted(q, &targets);
            let want = &want[..k.min(targets.len())];
            if list.len() != want.len() {
                return Err(format!("seed {seed}: list length {} vs {}", list.len(), want.len()));
            }
            for (n, &(wd2, wi)) in list.iter().zip(want) {
                if n.index != wi || !rel_close(n.distance, wd2.sqrt(), 1e-12) {
                    return Err(format!("seed {seed}: got ({}, {}) want ({wi}, {})", n.index, n.distance, wd2.sqrt()));
                }
            }
        }
        if got.short != (k > targets.len()) {
            return Err(format!("seed {seed}: short flag wrong"));
        }
    }
    Ok(())
}

pub fn radius_search(instances: u64) -> Check {
    for seed in 0..instances {
        let mut r = rng(2000 + seed);
        let targets = if seed % 2 == 0 {
            lattice_points(&mut r, 200)
        } else {
            points::<3>(&mut r, 300, 3.0)
        };
        let queries = points::<3>(&mut r, 30, 3.0);
        // Half-integer radii hit lattice distances exactly.
        let radius = if seed % 2 == 0 { 0.5 * r.gen_range(1..4) as f64 } else { r.gen_range(0.1..1.5) };
        let got = radius_neighbors(&queries, &targets, radius).unwrap();
        for (q, list) in queries.iter().zip(&got) {
            let want: Vec<usize> = brute_sorted(q, &targets)
                .into_iter()
                .filter(|&(d, _)| d <= radius * radius)
                .map(|(_, i)| i)
                .collect();
            let have: Vec<usize> = list.iter().map(|n| n.index).collect();
            if have != want {
                return Err(format!("seed {seed}: radius lists differ"));
            }
        }
    }
    Ok(())
}

pub fn neighbor_graphs(instances: u64) -> Check {
    for seed in 0..instances {
        let mut r = rng(3000 + seed);
        let n = r.gen_range(2..120);
        let m = r.gen_range(1..25);
        let pts = if seed % 3 == 0 { lattice_points(&mut r, n) } else { points::<3>(&mut r, n, 4.0) };
        let brute = |pts: &[[f64; 3]]| -> Vec<Vec<usize>> {
            pts.iter()
                .enumerate()
                .map(|(i, p)| {
                    brute_sorted(p, pts)
                        .into_iter()
                        .filter(|&(_, j)| j != i)
                        .take(m)
                        .map(|(_, j)| j)
                        .collect()
                })
                .collect()
        };
        let want = brute(&pts);
        if knn_graph(&pts, m).unwrap() != want {
            return Err(format!("seed {seed}: coordinate graph differs"));
        }
        let features = Tensor::from_fn(n, 3, |i, c| pts[i][c]);
        if build_graph(&features, m).unwrap() != want {
            return Err(format!("seed {seed}: build_graph differs"));
        }
        // Wider feature spaces take the exhaustive path.
        let wide: Vec<[f64; 6]> = points::<6>(&mut r, n, 1.0);
        let want_wide: Vec<Vec<usize>> = wide
            .iter()
            .enumerate()
            .map(|(i, p)| brute_sorted(p, &wide).into_iter().filter(|&(_, j)| j != i).take(m).map(|(_, j)| j).collect())
            .collect();
        if build_graph(&Tensor::from_fn(n, 6, |i, c| wide[i][c]), m).unwrap() != want_wide {
            return Err(format!("seed {seed}: feature-space graph differs"));
        }
    }
    Ok(())
}

pub fn identity_descriptor(instances: u64) -> Check {
    let gammas = [1.0, 4.0, 16.0, 64.0];
    for seed in 0..instances {
        let mut r = rng(4000 + seed);
        let k = r.gen_range(1..17);
        let voxels: Vec<[f64; 4]> = points::<4>(&mut r, 30, 2.0);
        let n = r.gen_range(k..200);
        let dense: Vec<[f64; 4]> = points::<4>(&mut r, n, 2.0);
        let got = pim_features(&voxels, &dense, &gammas, k, false).unwrap();
        for (i, v) in voxels.iter().enumerate() {
            let q = [v[0], v[1], v[2]];
            let d3: Vec<[f64; 3]> = dense.iter().map(|p| [p[0], p[1], p[2]]).collect();
            let near = brute_sorted(&q, &d3);
            for (j, g) in gammas.iter().enumerate() {
                for (kk, &(dd, _)) in near.iter().take(k).enumerate() {
                    let want = (-g * dd).exp();
                    if !rel_close(got.get(i, j * k + kk), want, 1e-6) {
                        return Err(format!("seed {seed}: entry ({i}, {}) differs", j * k + kk));
                    }
                }
            }
        }
    }
    Ok(())
}

/// `max_j LeakyReLU(W·[x_i, x_j − x_i] + b)` with plain loops.
pub fn naive_edgeconv(x: &Tensor<f64>, edges: &[Vec<usize>], w: &Tensor<f64>, b: &Tensor<f64>, slope: f64) -> Tensor<f64> {
    let (n, c_in) = x.shape();
    let c_out = w.cols();
    Tensor::from_fn(n, c_out, |i, o| {
        let mut best = f64::NEG_INFINITY;
        for &j in &edges[i] {
            let mut acc = b.get(0, o);
            for c in 0..c_in {
                acc += w.get(c, o) * x.get(i, c) + w.get(c_in + c, o) * (x.get(j, c) - x.get(i, c));
            }
            let h = if acc > 0.0 { acc } else { slope * acc };
            best = best.max(h);
        }
        best
    })
}

pub fn edgeconv(instances: u64) -> Check {
    for seed in 0..instances {
        let mut r = rng(5000 + seed);
        let n = if seed == 0 { 12 } else { r.gen_range(2..40) };
        let c_in = r.gen_range(1..8);
        let c_out = r.gen_range(1..10);
        let m = r.gen_range(1..n.min(10));
        let x = Tensor::from_fn(n, c_in, |_, _| r.gen_range(-1.0..1.0));
        let w = Tensor::from_fn(2 * c_in, c_out, |_, _| r.gen_range(-1.0..1.0));
        let b = Tensor::from_fn(1, c_out, |_, _| r.gen_range(-0.5..0.5));
        let edges = build_graph(&x, m).unwrap();
        let mut g = Graph::new();
        let (xv, wv, bv) = (g.constant(x.clone()), g.constant(w.clone()), g.constant(b.clone()));
        let y = edgeconv_layer(&mut g, xv, &edges, wv, bv, 0.2).unwrap();
        let want = naive_edgeconv(&x, &edges, &w, &b, 0.2);
        for (a, e) in g.value(y).data().iter().zip(want.data()) {
            if (a - e).abs() > 1e-6 * e.abs().max(1.0) {
                return Err(format!("seed {seed}: {a} vs {e}"));
            }
        }
    }
    Ok(())
}

pub fn broadcast(instances: u64) -> Check {
    for seed in 0..instances {
        let mut r = rng(6000 + seed);
        let voxels = if seed % 2 == 0 { lattice_points(&mut r, 40) } else { points::<3>(&mut r, 60, 3.0) };
        let labels: Vec<u32> = (0..voxels.len())
            .map(|i| if i % 5 == 4 { UNLABELED } else { r.gen_range(0..4) })
            .collect();
        if labels.iter().all(|&l| l == UNLABELED) {
            continue;
        }
        let dense = points::<3>(&mut r, 150, 4.0);
        let radius = r.gen_range(0.2..1.0);
        let got = broadcast_labels(&voxels, &labels, &dense, radius).unwrap();
        for (q, &have) in dense.iter().zip(&got) {
            let best = brute_sorted(q, &voxels)
                .into_iter()
                .find(|&(_, i)| labels[i] != UNLABELED)
                .unwrap();
            if have != labels[best.1] {
                return Err(format!("seed {seed}: broadcast label differs"));
            }
        }
    }
    Ok(())
}
