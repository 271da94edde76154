use ndarray::{concatenate, s, Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::init::uniform_fan_in;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Single GRU cell. Gate convention (recorded in checkpoints as
/// `gru-zrc-v1`):
///
/// ```text
/// z  = sigmoid(W_z [h; x] + b_z)
/// r  = sigmoid(W_r [h; x] + b_r)
/// c  = tanh(W_c [r*h; x] + b_c)
/// h' = (1 - z) * h + z * c
/// ```
///
/// h' is a convex combination of h and a tanh output, so hidden components
/// stay in (-1, 1) whenever they start there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GruParameters {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_c: Array2<f64>,
    pub b_c: Array1<f64>,
}

/// Forward intermediates for one step.
#[derive(Debug, Clone)]
pub struct GruCache {
    h: Array1<f64>,
    x: Array1<f64>,
    z: Array1<f64>,
    r: Array1<f64>,
    c: Array1<f64>,
    h_next: Array1<f64>,
}

impl GruCache {
    pub fn h_next(&self) -> &Array1<f64> {
        &self.h_next
    }
}

#[derive(Debug, Clone)]
pub struct GruGrads {
    pub w_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_c: Array2<f64>,
    pub b_c: Array1<f64>,
}

impl GruGrads {
    pub fn zeros_like(p: &GruParameters) -> Self {
        Self {
            w_z: Array2::zeros(p.w_z.dim()),
            b_z: Array1::zeros(p.b_z.len()),
            w_r: Array2::zeros(p.w_r.dim()),
            b_r: Array1::zeros(p.b_r.len()),
            w_c: Array2::zeros(p.w_c.dim()),
            b_c: Array1::zeros(p.b_c.len()),
        }
    }

    pub fn scale(&mut self, factor: f64) {
        self.w_z *= factor;
        self.b_z *= factor;
        self.w_r *= factor;
        self.b_r *= factor;
        self.w_c *= factor;
        self.b_c *= factor;
    }

    pub fn add(&mut self, other: &GruGrads) {
        self.w_z += &other.w_z;
        self.b_z += &other.b_z;
        self.w_r += &other.w_r;
        self.b_r += &other.b_r;
        self.w_c += &other.w_c;
        self.b_c += &other.b_c;
    }
}

impl GruParameters {
    pub fn new<R: Rng>(rng: &mut R, input_dim: usize, hidden_dim: usize) -> Self {
        let cat = hidden_dim + input_dim;
        let (w_z, b_z) = uniform_fan_in(rng, hidden_dim, cat);
        let (w_r, b_r) = uniform_fan_in(rng, hidden_dim, cat);
        let (w_c, b_c) = uniform_fan_in(rng, hidden_dim, cat);
        Self {
            input_dim,
            hidden_dim,
            w_z,
            b_z,
            w_r,
            b_r,
            w_c,
            b_c,
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let cat = self.hidden_dim + self.input_dim;
        for (name, w, b) in [
            ("z", &self.w_z, &self.b_z),
            ("r", &self.w_r, &self.b_r),
            ("c", &self.w_c, &self.b_c),
        ] {
            if w.dim() != (self.hidden_dim, cat) || b.len() != self.hidden_dim {
                return Err(Error::Shape(format!(
                    "gru gate {name}: got {:?}/{}, want ({}, {cat})/{}",
                    w.dim(),
                    b.len(),
                    self.hidden_dim,
                    self.hidden_dim
                )));
            }
        }
        Ok(())
    }

    pub fn step(&self, h: &Array1<f64>, x: &Array1<f64>) -> (Array1<f64>, GruCache) {
        assert_eq!(h.len(), self.hidden_dim, "hidden width mismatch");
        assert_eq!(x.len(), self.input_dim, "input width mismatch");
        let hx = concatenate![Axis(0), h.view(), x.view()];
        let z = (self.w_z.dot(&hx) + &self.b_z).mapv(sigmoid);
        let r = (self.w_r.dot(&hx) + &self.b_r).mapv(sigmoid);
        let rh = &r * h;
        let rhx = concatenate![Axis(0), rh.view(), x.view()];
        let c = (self.w_c.dot(&rhx) + &self.b_c).mapv(f64::tanh);
        let h_next = (1.0 - &z) * h + &z * &c;
        let cache = GruCache {
            h: h.clone(),
            x: x.clone(),
            z,
            r,
            c,
            h_next: h_next.clone(),
        };
        (h_next, cache)
    }

    /// Backward through one step. Returns (dL/dh, dL/dx) given dL/dh'.
    pub fn backward(
        &self,
        cache: &GruCache,
        d_h_next: &Array1<f64>,
        grads: &mut GruGrads,
    ) -> (Array1<f64>, Array1<f64>) {
        let nh = self.hidden_dim;
        let GruCache { h, x, z, r, c, .. } = cache;

        let d_c = d_h_next * z;
        let d_z = d_h_next * &(c - h);
        let mut d_h = d_h_next * &(1.0 - z);

        // c = tanh(a_c), a_c = W_c [r*h; x] + b_c
        let d_ac = &d_c * &c.mapv(|v| 1.0 - v * v);
        let rh = r * h;
        let rhx = concatenate![Axis(0), rh.view(), x.view()];
        outer_add(&mut grads.w_c, &d_ac, &rhx);
        grads.b_c += &d_ac;
        let d_rhx = self.w_c.t().dot(&d_ac);
        let d_rh = d_rhx.slice(s![..nh]).to_owned();
        let mut d_x = d_rhx.slice(s![nh..]).to_owned();
        let d_r = &d_rh * h;
        d_h += &(&d_rh * r);

        // z = sigmoid(a_z), a_z = W_z [h; x] + b_z
        let hx = concatenate![Axis(0), h.view(), x.view()];
        let d_az = &d_z * &(z * &(1.0 - z));
        outer_add(&mut grads.w_z, &d_az, &hx);
        grads.b_z += &d_az;
        let d_hx_z = self.w_z.t().dot(&d_az);
        d_h += &d_hx_z.slice(s![..nh]);
        d_x += &d_hx_z.slice(s![nh..]);

        // r = sigmoid(a_r), a_r = W_r [h; x] + b_r
        let d_ar = &d_r * &(r * &(1.0 - r));
        outer_add(&mut grads.w_r, &d_ar, &hx);
        grads.b_r += &d_ar;
        let d_hx_r = self.w_r.t().dot(&d_ar);
        d_h += &d_hx_r.slice(s![..nh]);
        d_x += &d_hx_r.slice(s![nh..]);

        (d_h, d_x)
    }

    pub fn param_count(&self) -> usize {
        self.w_z.len() + self.b_z.len() + self.w_r.len() + self.b_r.len() + self.w_c.len() + self.b_c.len()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend(self.w_z.iter());
        out.extend(self.b_z.iter());
        out.extend(self.w_r.iter());
        out.extend(self.b_r.iter());
        out.extend(self.w_c.iter());
        out.extend(self.b_c.iter());
    }

    pub fn unflatten_from(&mut self, data: &[f64], offset: &mut usize) {
        for v in self
            .w_z
            .iter_mut()
            .chain(self.b_z.iter_mut())
            .chain(self.w_r.iter_mut())
            .chain(self.b_r.iter_mut())
            .chain(self.w_c.iter_mut())
            .chain(self.b_c.iter_mut())
        {
            *v = data[*offset];
            *offset += 1;
        }
    }

    pub fn flatten_grads_into(grads: &GruGrads, out: &mut Vec<f64>) {
        out.extend(grads.w_z.iter());
        out.extend(grads.b_z.iter());
        out.extend(grads.w_r.iter());
        out.extend(grads.b_r.iter());
        out.extend(grads.w_c.iter());
        out.extend(grads.b_c.iter());
    }
}

fn outer_add(target: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    for (i, &c) in col.iter().enumerate() {
        if c != 0.0 {
            let mut r = target.row_mut(i);
            r.scaled_add(c, row);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn zero_parameters_halve_the_hidden_state() {
        let mut p = GruParameters::new(&mut ChaCha12Rng::seed_from_u64(0), 2, 3);
        for v in [&mut p.w_z, &mut p.w_r, &mut p.w_c] {
            v.fill(0.0);
        }
        for v in [&mut p.b_z, &mut p.b_r, &mut p.b_c] {
            v.fill(0.0);
        }
        let h = Array1::from(vec![0.8, -0.4, 0.2]);
        let x = Array1::from(vec![1.0, -2.0]);
        let (h_next, _) = p.step(&h, &x);
        // z = 0.5 and c = 0, so h' = 0.5 h.
        for (a, b) in h_next.iter().zip(h.iter()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
        // Zero hidden and zero input is a fixed point.
        let (h0, _) = p.step(&Array1::zeros(3), &Array1::zeros(2));
        assert!(h0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_state_stays_inside_unit_box() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..50 {
            let p = GruParameters::new(&mut rng, 3, 4);
            let mut h = Array1::from_shape_fn(4, |_| rng.gen_range(-0.999..0.999));
            for _ in 0..20 {
                let x = Array1::from_shape_fn(3, |_| rng.gen_range(-50.0..50.0));
                let (h_next, _) = p.step(&h, &x);
                assert!(h_next.iter().all(|v| v.abs() < 1.0));
                h = h_next;
            }
        }
    }

    #[test]
    fn bptt_gradients_match_finite_differences() {
        // Unroll three steps, loss = weighted sum of the final hidden state.
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let p = GruParameters::new(&mut rng, 2, 3);
        let xs: Vec<Array1<f64>> = (0..3)
            .map(|_| Array1::from_shape_fn(2, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        let weights = Array1::from_shape_fn(3, |_| rng.gen_range(-1.0..1.0));

        let loss = |p: &GruParameters| -> f64 {
            let mut h = Array1::zeros(3);
            for x in &xs {
                let (h2, _) = p.step(&h, x);
                h = h2;
            }
            h.dot(&weights)
        };

        let mut h = Array1::zeros(3);
        let mut caches = Vec::new();
        for x in &xs {
            let (h2, cache) = p.step(&h, x);
            caches.push(cache);
            h = h2;
        }
        let mut grads = GruGrads::zeros_like(&p);
        let mut d_h = weights.clone();
        for cache in caches.iter().rev() {
            let (dh, _dx) = p.backward(cache, &d_h, &mut grads);
            d_h = dh;
        }
        let mut analytic = Vec::new();
        GruParameters::flatten_grads_into(&grads, &mut analytic);

        let mut flat = Vec::new();
        p.flatten_into(&mut flat);
        let h_step = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..flat.len() {
            let mut fp = flat.clone();
            fp[i] += h_step;
            let mut plus = p.clone();
            let mut off = 0;
            plus.unflatten_from(&fp, &mut off);
            fp[i] -= 2.0 * h_step;
            let mut minus = p.clone();
            let mut off = 0;
            minus.unflatten_from(&fp, &mut off);
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h_step);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1.0);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "max relative error {worst}");
    }
}
