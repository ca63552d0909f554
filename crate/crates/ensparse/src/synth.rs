//! Procedural test material: piecewise-smooth scenes and labelled point sets.

use ensparse_core::{rng, DMatrix, ImagePlane};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn smoothstep(edge: f64, width: f64) -> f64 {
    1.0 / (1.0 + (-edge / width).exp())
}

/// Amplitude scale of the fine texture; each sinusoid of angular frequency
/// `f` gets amplitude `TEXTURE / f`.
pub const TEXTURE: f64 = 0.02;

/// Sinusoids summed into the texture layer.
pub const TEXTURE_WAVES: usize = 48;

/// A grayscale scene in `[0, 1]`: shaded background, soft-edged ellipses and
/// boxes, a patch of oriented grating and a faint `1/f` texture.
pub fn scene(width: usize, height: usize, seed: u64) -> ImagePlane {
    let mut r = rng::seeded(seed);
    let (w, h) = (width as f64, height as f64);
    let base = r.random_range(0.3..0.7);
    let (gx, gy) = (r.random_range(-0.3..0.3), r.random_range(-0.3..0.3));
    let mut layers: Vec<Box<dyn Fn(f64, f64) -> (f64, f64)>> = Vec::new();
    let shapes = r.random_range(5..10);
    for _ in 0..shapes {
        let (cx, cy) = (r.random_range(0.0..w), r.random_range(0.0..h));
        let (ax, ay) = (r.random_range(0.08..0.35) * w, r.random_range(0.08..0.35) * h);
        let theta: f64 = r.random_range(0.0..std::f64::consts::PI);
        let value = r.random_range(0.0..1.0);
        let soft = r.random_range(0.4..1.2);
        let boxy = r.random_bool(0.4);
        let (c, s) = (theta.cos(), theta.sin());
        layers.push(Box::new(move |x, y| {
            let (dx, dy) = (x - cx, y - cy);
            let (u, v) = ((c * dx + s * dy) / ax, (-s * dx + c * dy) / ay);
            let inside = if boxy {
                1.0 - u.abs().max(v.abs())
            } else {
                1.0 - (u * u + v * v).sqrt()
            };
            (value, smoothstep(inside * ax.min(ay), soft))
        }));
    }
    let (tcx, tcy, tr) = (r.random_range(0.2..0.8) * w, r.random_range(0.2..0.8) * h, r.random_range(0.15..0.3) * w.min(h));
    let freq = r.random_range(0.05..0.2) * std::f64::consts::TAU;
    let phi: f64 = r.random_range(0.0..std::f64::consts::PI);
    let (fx, fy) = (phi.cos() * freq, phi.sin() * freq);
    let amp = r.random_range(0.1..0.25);
    let waves: Vec<(f64, f64, f64, f64)> = (0..TEXTURE_WAVES)
        .map(|_| {
            let f = r.random_range(0.03..0.5) * std::f64::consts::TAU;
            let o: f64 = r.random_range(0.0..std::f64::consts::TAU);
            (f * o.cos(), f * o.sin(), r.random_range(0.0..std::f64::consts::TAU), TEXTURE / f)
        })
        .collect();
    ImagePlane::from_fn(width, height, |row, col| {
        let (x, y) = (col as f64, row as f64);
        let mut v = base + gx * (x / w - 0.5) + gy * (y / h - 0.5);
        for layer in &layers {
            let (value, a) = layer(x, y);
            v = v * (1.0 - a) + value * a;
        }
        let d = ((x - tcx).powi(2) + (y - tcy).powi(2)).sqrt();
        v += amp * (fx * x + fy * y).sin() * smoothstep(tr - d, 1.0);
        for (wx, wy, ph, a) in &waves {
            v += a * (wx * x + wy * y + ph).sin();
        }
        v
    })
    .expect("scene dimensions are positive")
    .clamped()
}

/// The three named desk test images.
pub fn test_images(size: usize) -> Vec<(String, ImagePlane)> {
    [("scene_a", 101), ("scene_b", 202), ("scene_c", 303)]
        .into_iter()
        .map(|(n, s)| (n.to_string(), scene(size, size, s)))
        .collect()
}

/// Training scenes, disjoint in seed from [`test_images`].
pub fn training_images(count: usize, size: usize, seed: u64) -> Vec<ImagePlane> {
    (0..count)
        .map(|i| scene(size, size, rng::split_seed(seed, 1000 + i as u64)))
        .collect()
}

/// A labelled point set drawn from a union of linear subspaces.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledData {
    /// One sample per column.
    pub samples: DMatrix<f64>,
    pub labels: Vec<usize>,
}

/// `per_class` samples from each of `classes` random `dim`-dimensional
/// subspaces of `R^m`, with Gaussian noise of standard deviation `noise`.
pub fn union_of_subspaces(m: usize, classes: usize, dim: usize, per_class: usize, noise: f64, seed: u64) -> LabelledData {
    let mut r = rng::seeded(seed);
    let mut gauss = || -> f64 { StandardNormal.sample(&mut r) };
    let bases: Vec<DMatrix<f64>> = (0..classes)
        .map(|_| DMatrix::from_fn(m, dim, |_, _| gauss()).qr().q())
        .collect();
    let t = classes * per_class;
    let mut samples = DMatrix::zeros(m, t);
    let mut labels = Vec::with_capacity(t);
    for (c, b) in bases.iter().enumerate() {
        for i in 0..per_class {
            let coef = DMatrix::from_fn(dim, 1, |_, _| gauss());
            let col = b * coef + DMatrix::from_fn(m, 1, |_, _| noise * gauss());
            samples.set_column(c * per_class + i, &col.column(0));
            labels.push(c);
        }
    }
    LabelledData { samples, labels }
}
