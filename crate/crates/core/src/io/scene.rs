//! Synthetic labeled scenes built from analytic surface primitives.
//!
//! Points are drawn uniformly on each primitive's surface, `round(area ·
//! density)` per primitive, then jittered with isotropic Gaussian noise.
//! Planes are open rectangles; boxes omit their bottom face and poles
//! (vertical cylinders) omit their bottom disc, since both normally stand on
//! the ground.
//!
//! Overlaps: a point sampled on primitive `i` whose un-jittered position lies
//! inside the closed solid of a later primitive `j > i` takes the class of the
//! last such `j`. Planes have no solid. With a ground plane listed first, the
//! ground points under a box footprint therefore belong to the box.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{PointCloud, NUM_ATTRS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Horizontal rectangle `size[0] × size[1]` at height `center[2]`.
    Plane,
    /// Axis-aligned (up to yaw) box of dimensions `size`, centered at `center`.
    Box,
    /// Sphere of radius `size[0]`.
    Sphere,
    /// Vertical cylinder of radius `size[0]` and height `size[2]`, centered at `center`.
    Pole,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub center: [f64; 3],
    pub size: [f64; 3],
    /// Rotation about +z in radians.
    #[serde(default)]
    pub yaw: f64,
    pub class: u32,
    /// Points per square meter of surface.
    pub density: f64,
    /// Fixed intensity for every point; uniform in [0, 1] when absent.
    #[serde(default)]
    pub intensity: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    /// Side of the square working area, meters.
    pub extent: f64,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Primitive {
    fn surface_area(&self) -> f64 {
        let [a, b, c] = self.size;
        match self.shape {
            Shape::Plane => a * b,
            Shape::Box => a * b + 2.0 * (a * c + b * c),
            Shape::Sphere => 4.0 * PI * a * a,
            Shape::Pole => 2.0 * PI * a * c + PI * a * a,
        }
    }

    /// Area of the closed solid's full boundary, including faces that are not sampled.
    pub fn closed_surface_area(&self) -> f64 {
        let [a, b, _] = self.size;
        match self.shape {
            Shape::Plane | Shape::Sphere => self.surface_area(),
            Shape::Box => self.surface_area() + a * b,
            Shape::Pole => self.surface_area() + PI * a * a,
        }
    }

    /// Horizontal area covered by the solid at its base height.
    pub fn footprint_area(&self) -> f64 {
        let [a, b, _] = self.size;
        match self.shape {
            Shape::Plane | Shape::Sphere => 0.0,
            Shape::Box => a * b,
            Shape::Pole => PI * a * a,
        }
    }

    fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.center[2]]
    }

    fn to_world(&self, l: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        [
            self.center[0] + c * l[0] - s * l[1],
            self.center[1] + s * l[0] + c * l[1],
            self.center[2] + l[2],
        ]
    }

    /// Closed-solid containment. Relative slack absorbs rounding on the boundary.
    fn contains(&self, p: [f64; 3]) -> bool {
        const SLACK: f64 = 1e-9;
        let l = self.to_local(p);
        let [a, b, c] = self.size;
        match self.shape {
            Shape::Plane => false,
            Shape::Box => {
                l[0].abs() <= a / 2.0 + SLACK && l[1].abs() <= b / 2.0 + SLACK && l[2].abs() <= c / 2.0 + SLACK
            }
            Shape::Sphere => (l[0] * l[0] + l[1] * l[1] + l[2] * l[2]).sqrt() <= a + SLACK,
            Shape::Pole => (l[0] * l[0] + l[1] * l[1]).sqrt() <= a + SLACK && l[2].abs() <= c / 2.0 + SLACK,
        }
    }

    fn sample_surface(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let [a, b, c] = self.size;
        let local = match self.shape {
            Shape::Plane => [(rng.gen::<f64>() - 0.5) * a, (rng.gen::<f64>() - 0.5) * b, 0.0],
            Shape::Box => {
                // Top, ±x faces, ±y faces weighted by area.
                let areas = [a * b, b * c, b * c, a * c, a * c];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.gen::<f64>() * total;
                let mut face = 4;
                for (f, area) in areas.iter().enumerate() {
                    if pick < *area {
                        face = f;
                        break;
                    }
                    pick -= area;
                }
                let u = rng.gen::<f64>() - 0.5;
                let v = rng.gen::<f64>() - 0.5;
                match face {
                    0 => [u * a, v * b, c / 2.0],
                    1 => [a / 2.0, u * b, v * c],
                    2 => [-a / 2.0, u * b, v * c],
                    3 => [u * a, b / 2.0, v * c],
                    _ => [u * a, -b / 2.0, v * c],
                }
            }
            Shape::Sphere => loop {
                let g: [f64; 3] = [
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                ];
                let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if n > 1e-12 {
                    break [a * g[0] / n, a * g[1] / n, a * g[2] / n];
                }
            },
            Shape::Pole => {
                let lateral = 2.0 * PI * a * c;
                let top = PI * a * a;
                if rng.gen::<f64>() * (lateral + top) < lateral {
                    let t = rng.gen::<f64>() * 2.0 * PI;
                    [a * t.cos(), a * t.sin(), (rng.gen::<f64>() - 0.5) * c]
                } else {
                    let r = a * rng.gen::<f64>().sqrt();
                    let t = rng.gen::<f64>() * 2.0 * PI;
                    [r * t.cos(), r * t.sin(), c / 2.0]
                }
            }
        };
        self.to_world(local)
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent > 0.0) {
            return Err(Error::Argument(format!("scene extent must be > 0, got {}", self.extent)));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Argument("noise_sigma must be ≥ 0".into()));
        }
        if self.primitives.is_empty() {
            return Err(Error::Argument("scene has no primitives".into()));
        }
        for (i, p) in self.primitives.iter().enumerate() {
            if !(p.density > 0.0) {
                return Err(Error::Argument(format!("primitive {i}: density must be > 0")));
            }
            let needed = match p.shape {
                Shape::Plane => &p.size[..2],
                Shape::Box => &p.size[..],
                Shape::Sphere => &p.size[..1],
                Shape::Pole => &[p.size[0], p.size[2]][..],
            };
            if needed.iter().any(|&s| !(s > 0.0)) {
                return Err(Error::Argument(format!("primitive {i}: sizes must be > 0")));
            }
        }
        let classes = self.num_classes();
        let mut seen = vec![false; classes];
        for p in &self.primitives {
            seen[p.class as usize] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Argument(format!(
                "class ids must be contiguous from 0; class {missing} is unused"
            )));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.primitives.iter().map(|p| p.class as usize + 1).max().unwrap_or(0)
    }

    /// Fixed four-class layout: ground (0), two buildings (1), a tree crown (2), a pole (3).
    pub fn default_four_class(seed: u64) -> Self {
        let object = |shape, center, size, class, density| Primitive {
            shape,
            center,
            size,
            yaw: 0.0,
            class,
            density,
            intensity: None,
        };
        SceneSpec {
            extent: 40.0,
            primitives: vec![
                object(Shape::Plane, [0.0, 0.0, 0.0], [40.0, 40.0, 0.0], 0, 20.0),
                object(Shape::Box, [-10.0, -8.0, 2.5], [8.0, 6.0, 5.0], 1, 40.0),
                object(Shape::Box, [9.0, 10.0, 2.0], [5.0, 5.0, 4.0], 1, 40.0),
                object(Shape::Sphere, [8.0, -9.0, 3.0], [2.0, 0.0, 0.0], 2, 60.0),
                object(Shape::Pole, [-6.0, 9.0, 3.0], [0.15, 0.0, 6.0], 3, 400.0),
            ],
            noise_sigma: 0.01,
            seed,
        }
    }

    /// Randomized four-class layout used for the synthetic train/test suite.
    ///
    /// Ground plane, two buildings, two floating spheres (tree crowns) and
    /// two poles, placed on a coarse grid of non-overlapping slots.
    pub fn random_four_class(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce7e);
        let extent = 40.0;
        // 4×4 slots of 10 m; each object occupies one slot.
        let mut slots: Vec<usize> = (0..16).collect();
        for i in (1..slots.len()).rev() {
            let j = rng.gen_range(0..=i);
            slots.swap(i, j);
        }
        let mut next_slot = slots.into_iter();
        let mut slot_center = |rng: &mut ChaCha8Rng| {
            let s = next_slot.next().expect("enough slots");
            let cx = -15.0 + 10.0 * (s % 4) as f64 + rng.gen_range(-1.0..1.0);
            let cy = -15.0 + 10.0 * (s / 4) as f64 + rng.gen_range(-1.0..1.0);
            (cx, cy)
        };
        let mut primitives = vec![Primitive {
            shape: Shape::Plane,
            center: [0.0, 0.0, 0.0],
            size: [extent, extent, 0.0],
            yaw: 0.0,
            class: 0,
            density: 20.0,
            intensity: None,
        }];
        for _ in 0..2 {
            let (cx, cy) = slot_center(&mut rng);
            let (sx, sy, sz) = (rng.gen_range(4.0..7.0), rng.gen_range(4.0..7.0), rng.gen_range(3.0..6.0));
            primitives.push(Primitive {
                shape: Shape::Box,
                center: [cx, cy, sz / 2.0],
                size: [sx, sy, sz],
                yaw: rng.gen_range(0.0..PI),
                class: 1,
                density: 40.0,
                intensity: None,
            });
        }
        for _ in 0..2 {
            let (cx, cy) = slot_center(&mut rng);
            let r = rng.gen_range(1.2..2.2);
            primitives.push(Primitive {
                shape: Shape::Sphere,
                center: [cx, cy, r + rng.gen_range(0.0..1.5)],
                size: [r, 0.0, 0.0],
                yaw: 0.0,
                class: 2,
                density: 60.0,
                intensity: None,
            });
        }
        for _ in 0..2 {
            let (cx, cy) = slot_center(&mut rng);
            let h = rng.gen_range(4.0..7.0);
            primitives.push(Primitive {
                shape: Shape::Pole,
                center: [cx, cy, h / 2.0],
                size: [0.15, 0.0, h],
                yaw: 0.0,
                class: 3,
                density: 400.0,
                intensity: None,
            });
        }
        SceneSpec {
            extent,
            primitives,
            noise_sigma: 0.01,
            seed,
        }
    }
}

/// Samples a fully labeled cloud from `spec`. Deterministic in `spec.seed`.
pub fn generate_scene<T: Scalar>(spec: &SceneSpec) -> Result<PointCloud<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Argument(e.to_string()))?;
    let mut points: Vec<[T; NUM_ATTRS]> = Vec::new();
    let mut labels = Vec::new();
    for (i, prim) in spec.primitives.iter().enumerate() {
        let count = (prim.surface_area() * prim.density).round() as usize;
        let later = &spec.primitives[i + 1..];
        for _ in 0..count {
            let p = prim.sample_surface(&mut rng);
            let class = later
                .iter()
                .rev()
                .find(|q| q.contains(p))
                .map_or(prim.class, |q| q.class);
            let intensity = prim.intensity.unwrap_or_else(|| rng.gen::<f64>());
            let mut jitter = [0.0; 3];
            if spec.noise_sigma > 0.0 {
                jitter = [noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng)];
            }
            points.push([
                T::lit(p[0] + jitter[0]),
                T::lit(p[1] + jitter[1]),
                T::lit(p[2] + jitter[2]),
                T::lit(intensity),
            ]);
            labels.push(class);
        }
    }
    PointCloud::with_labels(points, labels, spec.num_classes())
}
