use ndarray::{Array1, Array2};
use rand::Rng;

/// Uniform(-s, s) initialization with s = 1/sqrt(fan_in).
pub fn uniform_fan_in<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> (Array2<f64>, Array1<f64>) {
    let s = 1.0 / (cols as f64).sqrt();
    let w = Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-s..s));
    let b = Array1::from_shape_fn(rows, |_| rng.gen_range(-s..s));
    (w, b)
}
