//! Continuous-discrete interfaces: ternary quantization autoencoders for
//! observations (OQ), actions (AQ), and GRU hidden states (HQ).
//!
//! Each interface is an encoder ending in a `tanh_star + quantize` stage and
//! a decoder reconstructing the input. Supervised training minimizes squared
//! reconstruction error with straight-through gradients; HQ training adds a
//! recursive term `eta * ||h - HQ(HQ(h))||^2` so that re-encoding a
//! reconstruction lands in the same code cell.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, DenseCache, DenseGrads, DenseNet, TernaryCode};

/// Which interface an autoencoder implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantKind {
    Observation,
    Action,
    Hidden,
}

impl std::fmt::Display for QuantKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            QuantKind::Observation => "OQ",
            QuantKind::Action => "AQ",
            QuantKind::Hidden => "HQ",
        };
        write!(f, "{s}")
    }
}

/// Quantization autoencoder: `encode` maps a continuous vector to a ternary
/// code, `decode` maps any code back to a continuous vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantAutoencoder {
    pub kind: QuantKind,
    pub encoder: DenseNet,
    pub decoder: DenseNet,
}

/// Cache pair for one autoencoder pass.
#[derive(Debug, Clone)]
pub struct AeCache {
    pub enc: DenseCache,
    pub dec: DenseCache,
}

#[derive(Debug, Clone)]
pub struct AeGrads {
    pub enc: DenseGrads,
    pub dec: DenseGrads,
}

impl AeGrads {
    pub fn zeros_like(ae: &QuantAutoencoder) -> Self {
        Self {
            enc: DenseGrads::zeros_like(&ae.encoder),
            dec: DenseGrads::zeros_like(&ae.decoder),
        }
    }

    pub fn scale(&mut self, f: f64) {
        self.enc.scale(f);
        self.dec.scale(f);
    }

    pub fn add(&mut self, other: &AeGrads) {
        self.enc.add(&other.enc);
        self.dec.add(&other.dec);
    }
}

impl QuantAutoencoder {
    /// Observation interface: 6 -> code. Two encoder linears (tanh,
    /// tanh_star+quantize) and three decoder linears.
    pub fn new_oq<R: Rng>(rng: &mut R, code_width: usize, hidden: usize) -> Self {
        Self::two_linear_encoder(rng, QuantKind::Observation, 6, code_width, hidden, Activation::Linear)
    }

    /// Action interface: 3 -> code, same five-linear layout as OQ. Decoded
    /// actions are clamped by the simulator, so the final layer is linear.
    pub fn new_aq<R: Rng>(rng: &mut R, code_width: usize, hidden: usize) -> Self {
        Self::two_linear_encoder(rng, QuantKind::Action, 3, code_width, hidden, Activation::Linear)
    }

    /// Hidden-state interface: H -> code with six linears total. The decoder
    /// ends in tanh so reconstructions stay inside the GRU range (-1, 1).
    pub fn new_hq<R: Rng>(rng: &mut R, state_width: usize, code_width: usize, hidden: usize) -> Self {
        let encoder = DenseNet::new(
            rng,
            state_width,
            &[
                (hidden, Activation::Tanh),
                (hidden, Activation::Tanh),
                (code_width, Activation::TanhStar),
            ],
        )
        .with_quantize_after(2)
        .expect("encoder ends in tanh_star");
        let decoder = DenseNet::new(
            rng,
            code_width,
            &[
                (hidden, Activation::Tanh),
                (hidden, Activation::Tanh),
                (state_width, Activation::Tanh),
            ],
        );
        Self {
            kind: QuantKind::Hidden,
            encoder,
            decoder,
        }
    }

    fn two_linear_encoder<R: Rng>(
        rng: &mut R,
        kind: QuantKind,
        io_width: usize,
        code_width: usize,
        hidden: usize,
        final_act: Activation,
    ) -> Self {
        let encoder = DenseNet::new(
            rng,
            io_width,
            &[(hidden, Activation::Tanh), (code_width, Activation::TanhStar)],
        )
        .with_quantize_after(1)
        .expect("encoder ends in tanh_star");
        let decoder = DenseNet::new(
            rng,
            code_width,
            &[
                (hidden, Activation::Tanh),
                (hidden, Activation::Tanh),
                (io_width, final_act),
            ],
        );
        Self {
            kind,
            encoder,
            decoder,
        }
    }

    pub fn io_width(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn code_width(&self) -> usize {
        self.encoder.out_dim()
    }

    /// Continuous-to-discrete interface.
    pub fn encode(&self, x: &Array1<f64>) -> TernaryCode {
        let (_, cache) = self.encoder.forward(x);
        cache.code.expect("encoder always quantizes")
    }

    /// Discrete-to-continuous interface; total on all 3^e codes.
    pub fn decode(&self, code: &TernaryCode) -> Array1<f64> {
        let (out, _) = self.decoder.forward(&code.to_f64());
        out
    }

    /// Encode then decode, returning both halves.
    pub fn roundtrip(&self, x: &Array1<f64>) -> (TernaryCode, Array1<f64>) {
        let (_, enc_cache) = self.encoder.forward(x);
        let code = enc_cache.code.expect("encoder always quantizes");
        let out = self.decode(&code);
        (code, out)
    }

    /// Full differentiable pass used in training.
    pub fn forward_train(&self, x: &Array1<f64>) -> (Array1<f64>, AeCache) {
        let (enc_out, enc) = self.encoder.forward(x);
        let (dec_out, dec) = self.decoder.forward(&enc_out);
        (dec_out, AeCache { enc, dec })
    }

    /// Backward through decoder and encoder (straight-through at the
    /// quantizer), returning dL/d input.
    pub fn backward_train(
        &self,
        cache: &AeCache,
        d_recon: &Array1<f64>,
        grads: &mut AeGrads,
    ) -> Array1<f64> {
        let d_code = self.decoder.backward(&cache.dec, d_recon, &mut grads.dec);
        self.encoder.backward(&cache.enc, &d_code, &mut grads.enc)
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        self.encoder.flatten_into(out);
        self.decoder.flatten_into(out);
    }

    pub fn unflatten_from(&mut self, data: &[f64], offset: &mut usize) {
        self.encoder.unflatten_from(data, offset);
        self.decoder.unflatten_from(data, offset);
    }

    pub fn flatten_grads_into(grads: &AeGrads, out: &mut Vec<f64>) {
        DenseNet::flatten_grads_into(&grads.enc, out);
        DenseNet::flatten_grads_into(&grads.dec, out);
    }

    fn check_dataset(&self, dataset: &[Array1<f64>]) -> Result<()> {
        if dataset.is_empty() {
            return Err(Error::Config(format!("{} training dataset is empty", self.kind)));
        }
        if let Some(bad) = dataset.iter().find(|x| x.len() != self.io_width()) {
            return Err(Error::Shape(format!(
                "{} expects width {}, dataset has a sample of width {}",
                self.kind,
                self.io_width(),
                bad.len()
            )));
        }
        Ok(())
    }
}

/// Knobs for supervised interface training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            epochs: 50,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantTrainReport {
    /// Mean squared error per component, one entry per epoch.
    pub epoch_mse: Vec<f64>,
    pub final_mse: f64,
    /// Set when the loss failed to decrease over ten consecutive epochs.
    pub stall_warning: Option<String>,
}

fn stall_warning(epoch_mse: &[f64]) -> Option<String> {
    // Ten consecutive epochs without improvement over the running best.
    let mut best = f64::INFINITY;
    let mut stalled = 0usize;
    for (i, &m) in epoch_mse.iter().enumerate() {
        if m < best {
            best = m;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled >= 10 {
                return Some(format!(
                    "loss did not decrease for 10 consecutive epochs (epoch {i}); curve: {:?}",
                    &epoch_mse[i.saturating_sub(10)..=i]
                ));
            }
        }
    }
    None
}

/// Supervised reconstruction training: minimizes mean ||x - AE(x)||^2 over
/// the dataset with straight-through gradients through the quantizer.
pub fn train_supervised(
    ae: &mut QuantAutoencoder,
    dataset: &[Array1<f64>],
    opts: &TrainOptions,
) -> Result<QuantTrainReport> {
    ae.check_dataset(dataset)?;
    let width = ae.io_width() as f64;
    let mut flat = Vec::with_capacity(ae.param_count());
    ae.flatten_into(&mut flat);
    let mut adam = Adam::new(opts.learning_rate, flat.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut epoch_mse = Vec::with_capacity(opts.epochs);

    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut sq_sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let mut grads = AeGrads::zeros_like(ae);
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let x = &dataset[idx];
                let (recon, cache) = ae.forward_train(x);
                let diff = &recon - x;
                sq_sum += diff.dot(&diff);
                let upstream = diff.mapv(|v| 2.0 * v * scale);
                ae.backward_train(&cache, &upstream, &mut grads);
            }
            let mut g = Vec::with_capacity(flat.len());
            QuantAutoencoder::flatten_grads_into(&grads, &mut g);
            flat.clear();
            ae.flatten_into(&mut flat);
            adam.step(&mut flat, &g);
            let mut off = 0;
            ae.unflatten_from(&flat, &mut off);
        }
        epoch_mse.push(sq_sum / (dataset.len() as f64 * width));
    }
    let final_mse = epoch_mse.last().copied().unwrap_or(f64::NAN);
    Ok(QuantTrainReport {
        stall_warning: stall_warning(&epoch_mse),
        epoch_mse,
        final_mse,
    })
}

/// Recursive-stability training for HQ: minimizes
/// `mean(||h - HQ(h)||^2 + eta * ||h - HQ(HQ(h))||^2)`.
pub fn train_hq_recursive(
    hq: &mut QuantAutoencoder,
    dataset: &[Array1<f64>],
    eta: f64,
    opts: &TrainOptions,
) -> Result<QuantTrainReport> {
    hq.check_dataset(dataset)?;
    let width = hq.io_width() as f64;
    let mut flat = Vec::with_capacity(hq.param_count());
    hq.flatten_into(&mut flat);
    let mut adam = Adam::new(opts.learning_rate, flat.len());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let mut epoch_mse = Vec::with_capacity(opts.epochs);

    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut sq_sum = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let mut grads = AeGrads::zeros_like(hq);
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let h = &dataset[idx];
                let (r1, cache1) = hq.forward_train(h);
                let (r2, cache2) = hq.forward_train(&r1);
                let d1 = &r1 - h;
                let d2 = &r2 - h;
                sq_sum += d1.dot(&d1);
                // Outer application first: gradients reach r1 through it.
                let up2 = d2.mapv(|v| 2.0 * eta * v * scale);
                let into_r1 = hq.backward_train(&cache2, &up2, &mut grads);
                let up1 = d1.mapv(|v| 2.0 * v * scale) + into_r1;
                hq.backward_train(&cache1, &up1, &mut grads);
            }
            let mut g = Vec::with_capacity(flat.len());
            QuantAutoencoder::flatten_grads_into(&grads, &mut g);
            flat.clear();
            hq.flatten_into(&mut flat);
            adam.step(&mut flat, &g);
            let mut off = 0;
            hq.unflatten_from(&flat, &mut off);
        }
        epoch_mse.push(sq_sum / (dataset.len() as f64 * width));
    }
    let final_mse = epoch_mse.last().copied().unwrap_or(f64::NAN);
    Ok(QuantTrainReport {
        stall_warning: stall_warning(&epoch_mse),
        epoch_mse,
        final_mse,
    })
}

/// Recursive-loss value for one sample, the quantity HQ training minimizes.
pub fn recursive_loss(hq: &QuantAutoencoder, h: &Array1<f64>, eta: f64) -> f64 {
    let (_, r1) = hq.roundtrip(h);
    let (_, r2) = hq.roundtrip(&r1);
    let d1 = &r1 - h;
    let d2 = &r2 - h;
    d1.dot(&d1) + eta * d2.dot(&d2)
}

/// Mean `||HQ(h) - HQ(HQ(h))||^2` over a set: how far reconstructions move
/// when pushed through the interface a second time.
pub fn recursive_stability_gap(hq: &QuantAutoencoder, dataset: &[Array1<f64>]) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for h in dataset {
        let (_, r1) = hq.roundtrip(h);
        let (_, r2) = hq.roundtrip(&r1);
        let d = &r2 - &r1;
        sum += d.dot(&d);
    }
    sum / dataset.len() as f64
}

/// Mean ||x - dec(enc(x))||^2 per component over a set.
pub fn reconstruction_mse(ae: &QuantAutoencoder, dataset: &[Array1<f64>]) -> f64 {
    if dataset.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for x in dataset {
        let (_, r) = ae.roundtrip(x);
        let d = &r - x;
        sum += d.dot(&d);
    }
    sum / (dataset.len() as f64 * ae.io_width() as f64)
}
