//! The reduced disturbance-observer network: a single-layer GRU actor-critic
//! whose hidden state carries the disturbance estimate, plus the optional
//! quantized interfaces (OQ on observations, AQ on actions, HQ on hidden
//! states) that turn the controller into a discrete-state machine.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{Activation, DenseGrads, DenseNet, GruGrads, GruParameters, TernaryCode};
use crate::quant::{AeGrads, QuantAutoencoder};
use crate::sim::{clamp_control, PlatformModel, Policy, PolicyOutput, Vec3, Vec6};

/// Gate and wiring convention tag written into checkpoints.
pub const CONVENTION: &str = "gru-zrc/obs-prev-action/tanh-box-v1";

/// Structural knobs for a fresh policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub hidden_width: usize,
    pub embed_width: usize,
    pub head_width: usize,
    /// Fixed divisors applied to the observation before the embedding net.
    pub obs_scale: Vec6,
    /// Normalized observations are clipped to [-obs_clip, obs_clip].
    pub obs_clip: f64,
    /// Feed the previous applied action to the GRU alongside the observation.
    pub include_prev_action: bool,
    /// Initial log standard deviation of the pre-squash exploration Gaussian.
    pub init_log_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden_width: 32,
            embed_width: 64,
            head_width: 64,
            obs_scale: [5.0, 5.0, 5.0, 2.5, 2.5, 2.5],
            obs_clip: 4.0,
            include_prev_action: true,
            init_log_std: -1.0,
        }
    }
}

/// All trainable state of the controller. The quantizer slots are `None` for
/// the continuous network; inserting them rewires the forward path.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub config: PolicyConfig,
    pub control_upper: Vec3,
    /// Input embedding: [normalized obs; normalized prev action] -> GRU input.
    pub embed: DenseNet,
    pub gru: GruParameters,
    /// Actor head, emits the pre-squash action mean.
    pub actor: DenseNet,
    /// Critic head, emits the value estimate.
    pub critic: DenseNet,
    /// Per-axis exploration log-std (training only).
    pub log_std: Array1<f64>,
    pub oq: Option<QuantAutoencoder>,
    pub aq: Option<QuantAutoencoder>,
    pub hq: Option<QuantAutoencoder>,
}

impl PolicyParameters {
    pub fn new<R: Rng>(rng: &mut R, config: PolicyConfig, model: &PlatformModel) -> Self {
        let input_dim = if config.include_prev_action { 9 } else { 6 };
        let embed = DenseNet::new(rng, input_dim, &[(config.embed_width, Activation::Tanh)]);
        let gru = GruParameters::new(rng, config.embed_width, config.hidden_width);
        let actor = DenseNet::new(
            rng,
            config.hidden_width,
            &[
                (config.head_width, Activation::Tanh),
                (3, Activation::Linear),
            ],
        );
        let critic = DenseNet::new(
            rng,
            config.hidden_width,
            &[
                (config.head_width, Activation::Tanh),
                (1, Activation::Linear),
            ],
        );
        let log_std = Array1::from_elem(3, config.init_log_std);
        Self {
            config,
            control_upper: model.control_upper,
            embed,
            gru,
            actor,
            critic,
            log_std,
            oq: None,
            aq: None,
            hq: None,
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.config.hidden_width
    }

    pub fn check_shapes(&self) -> Result<()> {
        self.embed.check_shapes()?;
        self.gru.check_shapes()?;
        self.actor.check_shapes()?;
        self.critic.check_shapes()?;
        Ok(())
    }

    /// Normalized, clipped network input from raw observation and previous
    /// applied action.
    pub fn net_input(&self, obs_used: &Vec6, prev_action: &Vec3) -> Array1<f64> {
        let c = self.config.obs_clip;
        let mut v = Vec::with_capacity(9);
        for i in 0..6 {
            v.push((obs_used[i] / self.config.obs_scale[i]).clamp(-c, c));
        }
        if self.config.include_prev_action {
            for i in 0..3 {
                v.push(prev_action[i] / self.control_upper[i]);
            }
        }
        Array1::from(v)
    }

    /// Squash a pre-activation vector into the control box.
    pub fn squash(&self, pre: &Array1<f64>) -> Vec3 {
        [
            self.control_upper[0] * pre[0].tanh(),
            self.control_upper[1] * pre[1].tanh(),
            self.control_upper[2] * pre[2].tanh(),
        ]
    }

    /// Hidden state carried into the first step of an episode: exactly zero
    /// for the continuous net, and the HQ reconstruction of the zero state's
    /// code once the hidden interface is active (so the start state obeys the
    /// same code -> memory map as every other state).
    pub fn initial_hidden(&self) -> Array1<f64> {
        let zeros = Array1::zeros(self.config.hidden_width);
        match &self.hq {
            Some(hq) => {
                let code = hq.encode(&zeros);
                hq.decode(&code)
            }
            None => zeros,
        }
    }

    /// Code of the start state, defined when HQ is active.
    pub fn initial_hidden_code(&self) -> Option<TernaryCode> {
        self.hq
            .as_ref()
            .map(|hq| hq.encode(&Array1::zeros(self.config.hidden_width)))
    }

    /// Output label of the start state: the action code the policy associates
    /// with the start memory. Defined when both HQ and AQ are active.
    pub fn initial_output_code(&self) -> Option<(TernaryCode, Vec3)> {
        let aq = match (&self.hq, &self.aq) {
            (Some(_), Some(aq)) => aq,
            _ => return None,
        };
        let h0 = self.initial_hidden();
        let (mu, _) = self.actor.forward(&h0);
        let action = self.squash(&mu);
        let code = aq.encode(&Array1::from(action.to_vec()));
        let decoded = aq.decode(&code);
        Some((code, [decoded[0], decoded[1], decoded[2]]))
    }

    /// Deterministic single-step forward: the evaluation and extraction path.
    /// The emitted action is inside the control box by construction
    /// (tanh scaling; the AQ reconstruction is clamped by the caller's
    /// simulator, and also here for the recorded output).
    pub fn forward_eval(&self, obs: &Vec6, prev_action: &Vec3, h: &Array1<f64>, model: &PlatformModel) -> EvalStep {
        let (obs_code, obs_used) = match &self.oq {
            Some(oq) => {
                let raw = Array1::from(obs.to_vec());
                let (code, rec) = oq.roundtrip(&raw);
                (Some(code), [rec[0], rec[1], rec[2], rec[3], rec[4], rec[5]])
            }
            None => (None, *obs),
        };
        let x = self.net_input(&obs_used, prev_action);
        let (e, _) = self.embed.forward(&x);
        let (h_raw, _) = self.gru.step(h, &e);
        let (hidden_code, h_out) = match &self.hq {
            Some(hq) => {
                let code = hq.encode(&h_raw);
                let rec = hq.decode(&code);
                (Some(code), rec)
            }
            None => (None, h_raw),
        };
        let (mu, _) = self.actor.forward(&h_out);
        let pre_aq = self.squash(&mu);
        let (action_code, action) = match &self.aq {
            Some(aq) => {
                let (code, dec) = aq.roundtrip(&Array1::from(pre_aq.to_vec()));
                (Some(code), clamp_control([dec[0], dec[1], dec[2]], model))
            }
            None => (None, pre_aq),
        };
        let (v, _) = self.critic.forward(&h_out);
        EvalStep {
            action,
            value: v[0],
            h_next: h_out,
            obs_code,
            action_code,
            hidden_code,
        }
    }

    /// Parameters updated by policy-gradient training, flattened in a fixed
    /// order. Quantizers join the vector only when present and not frozen;
    /// HQ is trained separately and never here.
    pub fn flatten_trainable(&self, freeze_quantizers: bool, out: &mut Vec<f64>) {
        self.embed.flatten_into(out);
        self.gru.flatten_into(out);
        self.actor.flatten_into(out);
        self.critic.flatten_into(out);
        out.extend(self.log_std.iter());
        if !freeze_quantizers {
            if let Some(oq) = &self.oq {
                oq.flatten_into(out);
            }
            if let Some(aq) = &self.aq {
                aq.flatten_into(out);
            }
        }
    }

    pub fn unflatten_trainable(&mut self, freeze_quantizers: bool, data: &[f64]) {
        let mut off = 0;
        self.embed.unflatten_from(data, &mut off);
        self.gru.unflatten_from(data, &mut off);
        self.actor.unflatten_from(data, &mut off);
        self.critic.unflatten_from(data, &mut off);
        for v in self.log_std.iter_mut() {
            *v = data[off];
            off += 1;
        }
        if !freeze_quantizers {
            if let Some(oq) = &mut self.oq {
                oq.unflatten_from(data, &mut off);
            }
            if let Some(aq) = &mut self.aq {
                aq.unflatten_from(data, &mut off);
            }
        }
        debug_assert_eq!(off, data.len());
    }
}

/// Result of one deterministic forward step.
#[derive(Debug, Clone)]
pub struct EvalStep {
    pub action: Vec3,
    pub value: f64,
    pub h_next: Array1<f64>,
    pub obs_code: Option<TernaryCode>,
    pub action_code: Option<TernaryCode>,
    pub hidden_code: Option<TernaryCode>,
}

/// Gradients for every trainable piece of the policy.
#[derive(Debug, Clone)]
pub struct PolicyGrads {
    pub embed: DenseGrads,
    pub gru: GruGrads,
    pub actor: DenseGrads,
    pub critic: DenseGrads,
    pub log_std: Array1<f64>,
    pub oq: Option<AeGrads>,
    pub aq: Option<AeGrads>,
}

impl PolicyGrads {
    pub fn zeros_like(p: &PolicyParameters, freeze_quantizers: bool) -> Self {
        Self {
            embed: DenseGrads::zeros_like(&p.embed),
            gru: GruGrads::zeros_like(&p.gru),
            actor: DenseGrads::zeros_like(&p.actor),
            critic: DenseGrads::zeros_like(&p.critic),
            log_std: Array1::zeros(3),
            oq: match (&p.oq, freeze_quantizers) {
                (Some(oq), false) => Some(AeGrads::zeros_like(oq)),
                _ => None,
            },
            aq: match (&p.aq, freeze_quantizers) {
                (Some(aq), false) => Some(AeGrads::zeros_like(aq)),
                _ => None,
            },
        }
    }

    pub fn add(&mut self, other: &PolicyGrads) {
        self.embed.add(&other.embed);
        self.gru.add(&other.gru);
        self.actor.add(&other.actor);
        self.critic.add(&other.critic);
        self.log_std += &other.log_std;
        if let (Some(a), Some(b)) = (&mut self.oq, &other.oq) {
            a.add(b);
        }
        if let (Some(a), Some(b)) = (&mut self.aq, &other.aq) {
            a.add(b);
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        DenseNet::flatten_grads_into(&self.embed, out);
        GruParameters::flatten_grads_into(&self.gru, out);
        DenseNet::flatten_grads_into(&self.actor, out);
        DenseNet::flatten_grads_into(&self.critic, out);
        out.extend(self.log_std.iter());
        if let Some(oq) = &self.oq {
            QuantAutoencoder::flatten_grads_into(oq, out);
        }
        if let Some(aq) = &self.aq {
            QuantAutoencoder::flatten_grads_into(aq, out);
        }
    }
}

/// Inference wrapper that drives episodes with the deterministic policy and
/// records hidden states and codes into the trajectory.
pub struct DobnetPolicy<'a> {
    params: &'a PolicyParameters,
    model: PlatformModel,
    h: Array1<f64>,
}

impl<'a> DobnetPolicy<'a> {
    pub fn new(params: &'a PolicyParameters, model: &PlatformModel) -> Self {
        Self {
            params,
            model: model.clone(),
            h: params.initial_hidden(),
        }
    }
}

impl Policy for DobnetPolicy<'_> {
    fn begin_episode(&mut self) {
        self.h = self.params.initial_hidden();
    }

    fn act(&mut self, observation: &Vec6, prev_action: &Vec3) -> PolicyOutput {
        let step = self
            .params
            .forward_eval(observation, prev_action, &self.h, &self.model);
        self.h = step.h_next.clone();
        PolicyOutput {
            action: step.action,
            hidden: Some(step.h_next.to_vec()),
            obs_code: step.obs_code,
            action_code: step.action_code,
            hidden_code: step.hidden_code,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn model() -> PlatformModel {
        PlatformModel::default_scaled()
    }

    fn fresh(seed: u64) -> PolicyParameters {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        PolicyParameters::new(&mut rng, PolicyConfig::default(), &model())
    }

    #[test]
    fn zero_weights_give_zero_action_and_value() {
        let mut p = fresh(0);
        for net in [&mut p.embed, &mut p.actor, &mut p.critic] {
            for l in &mut net.layers {
                l.w.fill(0.0);
                l.b.fill(0.0);
            }
        }
        for (w, b) in [
            (&mut p.gru.w_z, &mut p.gru.b_z),
            (&mut p.gru.w_r, &mut p.gru.b_r),
            (&mut p.gru.w_c, &mut p.gru.b_c),
        ] {
            w.fill(0.0);
            b.fill(0.0);
        }
        let h = p.initial_hidden();
        let step = p.forward_eval(&[1.0, 2.0, -1.0, 0.0, 0.5, 0.0], &[0.0; 3], &h, &model());
        assert_eq!(step.action, [0.0; 3]);
        assert_eq!(step.value, 0.0);
    }

    #[test]
    fn actions_always_land_in_the_control_box() {
        let p = fresh(42);
        let m = model();
        let mut h = p.initial_hidden();
        let mut prev = [0.0; 3];
        for t in 0..50 {
            let obs = [
                (t as f64 * 0.7).sin() * 30.0,
                -20.0,
                15.0,
                (t as f64).cos() * 4.0,
                0.0,
                -3.0,
            ];
            let step = p.forward_eval(&obs, &prev, &h, &m);
            for i in 0..3 {
                assert!(step.action[i] <= m.control_upper[i] + 1e-12);
                assert!(step.action[i] >= m.control_lower[i] - 1e-12);
            }
            h = step.h_next;
            prev = step.action;
        }
    }

    #[test]
    fn first_step_is_identical_across_episodes_with_equal_observation() {
        let p = fresh(7);
        let m = model();
        let obs = [0.3, -0.8, 1.2, 0.1, 0.0, -0.2];
        let a = p.forward_eval(&obs, &[0.0; 3], &p.initial_hidden(), &m);
        let b = p.forward_eval(&obs, &[0.0; 3], &p.initial_hidden(), &m);
        assert_eq!(a.action, b.action);
        assert_eq!(a.value, b.value);
        assert_eq!(a.h_next, b.h_next);
    }

    #[test]
    fn flatten_unflatten_roundtrip_preserves_parameters() {
        let mut p = fresh(9);
        let mut flat = Vec::new();
        p.flatten_trainable(false, &mut flat);
        let mut copy = p.clone();
        let mut perturbed = flat.clone();
        for v in &mut perturbed {
            *v += 0.125;
        }
        copy.unflatten_trainable(false, &mut perturbed.clone());
        let mut back = Vec::new();
        copy.flatten_trainable(false, &mut back);
        for (a, b) in back.iter().zip(&perturbed) {
            assert_eq!(a, b);
        }
        // And restoring the original vector restores the original parameters.
        p.unflatten_trainable(false, &flat);
        let mut again = Vec::new();
        p.flatten_trainable(false, &mut again);
        assert_eq!(flat, again);
    }

    #[test]
    fn quantized_path_emits_codes_and_consistent_start_state() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mut p = fresh(11);
        p.oq = Some(crate::quant::QuantAutoencoder::new_oq(&mut rng, 16, 32));
        p.aq = Some(crate::quant::QuantAutoencoder::new_aq(&mut rng, 4, 32));
        p.hq = Some(crate::quant::QuantAutoencoder::new_hq(
            &mut rng,
            p.config.hidden_width,
            8,
            32,
        ));
        let m = model();
        let h0 = p.initial_hidden();
        // The carried start memory is the reconstruction of its own code.
        let code0 = p.initial_hidden_code().unwrap();
        let rec = p.hq.as_ref().unwrap().decode(&code0);
        assert_eq!(h0, rec);
        let step = p.forward_eval(&[0.5, -0.5, 0.25, 0.0, 0.1, 0.0], &[0.0; 3], &h0, &m);
        assert!(step.obs_code.is_some());
        assert!(step.action_code.is_some());
        assert!(step.hidden_code.is_some());
        // Action equals the decoded-then-clamped action code.
        let dec = p.aq.as_ref().unwrap().decode(step.action_code.as_ref().unwrap());
        let expect = clamp_control([dec[0], dec[1], dec[2]], &m);
        assert_eq!(step.action, expect);
        assert!(p.initial_output_code().is_some());
    }
}
