//! Free-floating saturated platform under superposed sinusoidal forcing, and
//! scripted or policy-driven episode rollouts.
//!
//! The platform is a translationally free point mass. Per axis the external
//! force is `A * sin((pi / T) * t * dt + phi)` with amplitudes strictly above
//! the actuator bound, so no constant control can cancel it. One sampled
//! `(A, T, phi)` triple per axis defines one environment; it is held fixed
//! for the whole episode.

use std::f64::consts::PI;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TernaryCode;

pub type Vec3 = [f64; 3];
pub type Vec6 = [f64; 6];

pub fn norm6(x: &Vec6) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Position and velocity; the concatenated 6-vector is exactly the
/// observation exposed to the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformState {
    pub position: Vec3,
    pub velocity: Vec3,
}

impl PlatformState {
    pub fn zero() -> Self {
        Self {
            position: [0.0; 3],
            velocity: [0.0; 3],
        }
    }

    pub fn observation(&self) -> Vec6 {
        [
            self.position[0],
            self.position[1],
            self.position[2],
            self.velocity[0],
            self.velocity[1],
            self.velocity[2],
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.velocity).all(|v| v.is_finite())
    }
}

/// Point-mass platform with a box control constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformModel {
    pub mass: f64,
    pub dt: f64,
    pub control_upper: Vec3,
    pub control_lower: Vec3,
}

impl PlatformModel {
    pub fn new(mass: f64, dt: f64, control_upper: Vec3, control_lower: Vec3) -> Result<Self> {
        if mass <= 0.0 || dt <= 0.0 {
            return Err(Error::Config(format!(
                "mass and dt must be positive, got mass={mass}, dt={dt}"
            )));
        }
        for i in 0..3 {
            if !(control_lower[i] < 0.0 && 0.0 < control_upper[i]) {
                return Err(Error::Config(format!(
                    "control box must contain 0 componentwise, axis {i}: [{}, {}]",
                    control_lower[i], control_upper[i]
                )));
            }
        }
        Ok(Self {
            mass,
            dt,
            control_upper,
            control_lower,
        })
    }

    /// 1 kg platform, 0.05 s step, control box [-2, 2]^3 N.
    pub fn default_scaled() -> Self {
        Self {
            mass: 1.0,
            dt: 0.05,
            control_upper: [2.0; 3],
            control_lower: [-2.0; 3],
        }
    }
}

/// Componentwise clamp into the control box.
pub fn clamp_control(u_raw: Vec3, model: &PlatformModel) -> Vec3 {
    let mut u = [0.0; 3];
    for i in 0..3 {
        u[i] = u_raw[i].min(model.control_upper[i]).max(model.control_lower[i]);
    }
    u
}

/// Per-axis sinusoid parameters; one pattern = one environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbancePattern {
    pub amplitudes: Vec3,
    pub periods: Vec3,
    pub phases: Vec3,
    pub seed: u64,
}

impl DisturbancePattern {
    pub fn validate(&self) -> Result<()> {
        for i in 0..3 {
            if self.amplitudes[i] <= 0.0 || self.periods[i] <= 0.0 {
                return Err(Error::Config(format!(
                    "amplitudes and periods must be positive, axis {i}"
                )));
            }
            if !(-PI..PI).contains(&self.phases[i]) {
                return Err(Error::Config(format!(
                    "phase {} outside [-pi, pi) on axis {i}",
                    self.phases[i]
                )));
            }
        }
        Ok(())
    }
}

/// Sampling intervals for disturbance parameters, one `[low, high]` pair per
/// axis and quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceRanges {
    pub amplitude: [[f64; 2]; 3],
    pub period: [[f64; 2]; 3],
    pub phase: [[f64; 2]; 3],
}

impl DisturbanceRanges {
    /// Same interval on all three axes.
    pub fn uniform(amplitude: [f64; 2], period: [f64; 2], phase: [f64; 2]) -> Self {
        Self {
            amplitude: [amplitude; 3],
            period: [period; 3],
            phase: [phase; 3],
        }
    }

    /// A in [2.6, 3] N, T in [2, 4] s, phi in [-pi, pi).
    pub fn default_excessive() -> Self {
        Self::uniform([2.6, 3.0], [2.0, 4.0], [-PI, PI])
    }
}

/// Draws one pattern from `ranges`. Fails if any amplitude interval is not
/// strictly above the actuator bound on its axis: every sampled environment
/// must be able to overpower the platform.
pub fn sample_disturbance_pattern(
    seed: u64,
    ranges: &DisturbanceRanges,
    model: &PlatformModel,
) -> Result<DisturbancePattern> {
    for i in 0..3 {
        let [lo, hi] = ranges.amplitude[i];
        if !(lo > model.control_upper[i]) {
            return Err(Error::Config(format!(
                "amplitude range [{lo}, {hi}] on axis {i} does not exceed the control bound {}",
                model.control_upper[i]
            )));
        }
        if lo > hi || ranges.period[i][0] > ranges.period[i][1] {
            return Err(Error::Config(format!("inverted sampling interval on axis {i}")));
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut amplitudes = [0.0; 3];
    let mut periods = [0.0; 3];
    let mut phases = [0.0; 3];
    for i in 0..3 {
        amplitudes[i] = Uniform::new_inclusive(ranges.amplitude[i][0], ranges.amplitude[i][1]).sample(&mut rng);
    }
    for i in 0..3 {
        periods[i] = Uniform::new_inclusive(ranges.period[i][0], ranges.period[i][1]).sample(&mut rng);
    }
    for i in 0..3 {
        if !(ranges.phase[i][0] < ranges.phase[i][1]) {
            return Err(Error::Config(format!("bad phase interval on axis {i}")));
        }
        phases[i] = Uniform::new(ranges.phase[i][0], ranges.phase[i][1]).sample(&mut rng);
    }
    let pattern = DisturbancePattern {
        amplitudes,
        periods,
        phases,
        seed,
    };
    pattern.validate()?;
    Ok(pattern)
}

/// Disturbance force at step `t`: component i is
/// `A_i * sin((pi / T_i) * t * dt + phi_i)`.
pub fn disturbance_force(pattern: &DisturbancePattern, t: usize, dt: f64) -> Vec3 {
    let time = t as f64 * dt;
    let mut d = [0.0; 3];
    for i in 0..3 {
        d[i] = pattern.amplitudes[i] * ((PI / pattern.periods[i]) * time + pattern.phases[i]).sin();
    }
    d
}

/// Semi-implicit Euler step of `mass * qdd = u + d`:
/// `v' = v + dt (u + d) / mass`, `q' = q + dt v'`.
pub fn step_dynamics(
    state: &PlatformState,
    u: Vec3,
    d: Vec3,
    model: &PlatformModel,
) -> Result<PlatformState> {
    if !state.is_finite() || u.iter().chain(&d).any(|v| !v.is_finite()) {
        return Err(Error::SimulationFault(format!(
            "non-finite input to step_dynamics: state {state:?}, u {u:?}, d {d:?}"
        )));
    }
    let mut velocity = [0.0; 3];
    let mut position = [0.0; 3];
    for i in 0..3 {
        velocity[i] = state.velocity[i] + model.dt * (u[i] + d[i]) / model.mass;
        position[i] = state.position[i] + model.dt * velocity[i];
    }
    Ok(PlatformState { position, velocity })
}

/// Negated L2 norm of the 6-dim state: the reward is the additive inverse of
/// the tracking error.
pub fn reward(state: &PlatformState) -> f64 {
    -norm6(&state.observation())
}

/// One recorded control step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// State observed when the action was chosen.
    pub observation: Vec6,
    pub action: Vec3,
    pub prev_action: Vec3,
    /// Reward of the state the action produced.
    pub reward: f64,
    pub hidden: Option<Vec<f64>>,
    pub obs_code: Option<TernaryCode>,
    pub action_code: Option<TernaryCode>,
    pub hidden_code: Option<TernaryCode>,
}

/// One episode under one disturbance pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub pattern: DisturbancePattern,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, pair) in self.steps.windows(2).enumerate() {
            if pair[1].prev_action != pair[0].action {
                return Err(Error::DataIntegrity(format!(
                    "prev_action chain broken between steps {i} and {}",
                    i + 1
                )));
            }
        }
        if let Some(first) = self.steps.first() {
            if first.prev_action != [0.0; 3] {
                return Err(Error::DataIntegrity("prev_action of step 0 must be zero".into()));
            }
        }
        if self.steps.iter().any(|s| s.reward > 0.0) {
            return Err(Error::DataIntegrity("rewards must be non-positive".into()));
        }
        Ok(())
    }
}

/// Max tracking error over the late window, step indices 150..=200. The state
/// at index 200 is the one the final recorded step produced; its norm is the
/// negated final reward.
pub fn regulation_error(traj: &Trajectory) -> Result<f64> {
    const WINDOW_START: usize = 150;
    const WINDOW_END: usize = 200;
    if traj.steps.len() < 200 {
        return Err(Error::Config(format!(
            "regulation error needs at least 200 steps, trajectory has {}",
            traj.steps.len()
        )));
    }
    let mut max_err = f64::NEG_INFINITY;
    for t in WINDOW_START..=WINDOW_END {
        let eta = if t < traj.steps.len() {
            norm6(&traj.steps[t].observation)
        } else {
            -traj.steps[t - 1].reward
        };
        max_err = max_err.max(eta);
    }
    Ok(max_err)
}

/// What a policy returns for one step.
#[derive(Debug, Clone)]
pub struct PolicyOutput {
    pub action: Vec3,
    pub hidden: Option<Vec<f64>>,
    pub obs_code: Option<TernaryCode>,
    pub action_code: Option<TernaryCode>,
    pub hidden_code: Option<TernaryCode>,
}

impl PolicyOutput {
    pub fn plain(action: Vec3) -> Self {
        Self {
            action,
            hidden: None,
            obs_code: None,
            action_code: None,
            hidden_code: None,
        }
    }
}

/// A controller driven step by step through an episode. Implementations own
/// whatever memory they need; `begin_episode` resets it.
pub trait Policy {
    fn begin_episode(&mut self);
    fn act(&mut self, observation: &Vec6, prev_action: &Vec3) -> PolicyOutput;
}

/// Always outputs zero control; the do-nothing baseline.
#[derive(Debug, Clone, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn begin_episode(&mut self) {}

    fn act(&mut self, _observation: &Vec6, _prev_action: &Vec3) -> PolicyOutput {
        PolicyOutput::plain([0.0; 3])
    }
}

/// Ranges for the random initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialStateRanges {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

impl Default for InitialStateRanges {
    fn default() -> Self {
        Self {
            position: [-2.0, 2.0],
            velocity: [-0.5, 0.5],
        }
    }
}

pub fn sample_initial_state(seed: u64, ranges: &InitialStateRanges) -> PlatformState {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let pos = Uniform::new_inclusive(ranges.position[0], ranges.position[1]);
    let vel = Uniform::new_inclusive(ranges.velocity[0], ranges.velocity[1]);
    let mut position = [0.0; 3];
    let mut velocity = [0.0; 3];
    for p in &mut position {
        *p = pos.sample(&mut rng);
    }
    for v in &mut velocity {
        *v = vel.sample(&mut rng);
    }
    PlatformState { position, velocity }
}

/// Runs one episode of `steps` control steps. Actions are clamped before
/// they touch the dynamics; the recorded action is the applied one. Aborts
/// with a fault if the policy emits a non-finite action.
pub fn run_episode(
    policy: &mut dyn Policy,
    pattern: &DisturbancePattern,
    model: &PlatformModel,
    init: PlatformState,
    steps: usize,
) -> Result<Trajectory> {
    policy.begin_episode();
    let mut state = init;
    let mut prev_action = [0.0; 3];
    let mut records = Vec::with_capacity(steps);
    for t in 0..steps {
        let observation = state.observation();
        let out = policy.act(&observation, &prev_action);
        if out.action.iter().any(|v| !v.is_finite()) {
            return Err(Error::SimulationFault(format!(
                "policy emitted a non-finite action at step {t}: {:?}",
                out.action
            )));
        }
        let action = clamp_control(out.action, model);
        let d = disturbance_force(pattern, t, model.dt);
        let next = step_dynamics(&state, action, d, model)?;
        records.push(StepRecord {
            t,
            observation,
            action,
            prev_action,
            reward: reward(&next),
            hidden: out.hidden,
            obs_code: out.obs_code,
            action_code: out.action_code,
            hidden_code: out.hidden_code,
        });
        prev_action = action;
        state = next;
    }
    Ok(Trajectory {
        pattern: pattern.clone(),
        steps: records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> PlatformModel {
        PlatformModel::default_scaled()
    }

    #[test]
    fn pattern_sampling_is_deterministic_and_excessive() {
        let ranges = DisturbanceRanges::default_excessive();
        let a = sample_disturbance_pattern(42, &ranges, &model()).unwrap();
        let b = sample_disturbance_pattern(42, &ranges, &model()).unwrap();
        assert_eq!(a, b);
        for i in 0..3 {
            assert!(a.amplitudes[i] >= 2.6 && a.amplitudes[i] <= 3.0);
            assert!(a.amplitudes[i] > model().control_upper[i]);
            assert!(a.periods[i] >= 2.0 && a.periods[i] <= 4.0);
            assert!(a.phases[i] >= -PI && a.phases[i] < PI);
        }
        let c = sample_disturbance_pattern(43, &ranges, &model()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn weak_amplitude_range_is_a_configuration_error() {
        let ranges = DisturbanceRanges::uniform([1.0, 1.5], [2.0, 4.0], [-PI, PI]);
        let err = sample_disturbance_pattern(1, &ranges, &model()).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "got {err:?}");
    }

    #[test]
    fn disturbance_force_reference_points() {
        let pattern = DisturbancePattern {
            amplitudes: [3.0, 3.0, 3.0],
            periods: [2.0, 3.0, 4.0],
            phases: [0.0, 0.0, 0.0],
            seed: 0,
        };
        assert_eq!(disturbance_force(&pattern, 0, 0.05), [0.0, 0.0, 0.0]);
        // A=3, T=2, dt=1, t=1: 3 sin(pi/2) = 3 on the x axis.
        let d = disturbance_force(&pattern, 1, 1.0);
        assert!((d[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn disturbance_period_is_two_t_per_axis() {
        // With T = 2.5 s and dt = 0.05 s, one full period is 100 steps.
        let pattern = DisturbancePattern {
            amplitudes: [2.8, 2.8, 2.8],
            periods: [2.5, 2.5, 2.5],
            phases: [0.7, -1.1, 2.0],
            seed: 0,
        };
        let steps_per_period = (2.0 * 2.5 / 0.05) as usize;
        for t in 0..40 {
            let d0 = disturbance_force(&pattern, t, 0.05);
            for k in 1..=10 {
                let dk = disturbance_force(&pattern, t + k * steps_per_period, 0.05);
                for i in 0..3 {
                    assert!(
                        (d0[i] - dk[i]).abs() < 1e-12,
                        "axis {i} at t={t}, k={k}: {} vs {}",
                        d0[i],
                        dk[i]
                    );
                }
            }
        }
    }

    #[test]
    fn clamping_reference_points() {
        let m = model();
        assert_eq!(clamp_control([5.0, 0.0, -5.0], &m), [2.0, 0.0, -2.0]);
        assert_eq!(clamp_control([1.0, -1.0, 0.0], &m), [1.0, -1.0, 0.0]);
        assert_eq!(clamp_control([2.0, 2.0, 2.0], &m), [2.0, 2.0, 2.0]);
    }

    #[test]
    fn dynamics_hand_integration() {
        let m = model();
        let rest = PlatformState::zero();
        // Equilibrium.
        let s = step_dynamics(&rest, [0.0; 3], [0.0; 3], &m).unwrap();
        assert_eq!(s, rest);
        // One step under u = (2, 0, 0): v' = 0.1, q' = 0.005.
        let s = step_dynamics(&rest, [2.0, 0.0, 0.0], [0.0; 3], &m).unwrap();
        assert!((s.velocity[0] - 0.1).abs() < 1e-15);
        assert!((s.position[0] - 0.005).abs() < 1e-15);
        // Cancelling forces leave the velocity unchanged.
        let moving = PlatformState {
            position: [0.0; 3],
            velocity: [0.3, -0.2, 0.1],
        };
        let s = step_dynamics(&moving, [2.0, 0.0, 0.0], [-2.0, 0.0, 0.0], &m).unwrap();
        assert_eq!(s.velocity, moving.velocity);
    }

    #[test]
    fn non_finite_input_is_a_simulation_fault() {
        let m = model();
        let bad = PlatformState {
            position: [f64::NAN, 0.0, 0.0],
            velocity: [0.0; 3],
        };
        assert!(matches!(
            step_dynamics(&bad, [0.0; 3], [0.0; 3], &m),
            Err(Error::SimulationFault(_))
        ));
    }

    #[test]
    fn reward_reference_points() {
        assert_eq!(reward(&PlatformState::zero()), 0.0);
        let unit = PlatformState {
            position: [1.0, 0.0, 0.0],
            velocity: [0.0; 3],
        };
        assert_eq!(reward(&unit), -1.0);
        let pythagorean = PlatformState {
            position: [3.0, 4.0, 0.0],
            velocity: [0.0; 3],
        };
        assert_eq!(reward(&pythagorean), -5.0);
    }

    fn synthetic_trajectory(etas: &[f64]) -> Trajectory {
        // Builds a 200-step trajectory whose eta(t) sequence for t in 0..=200
        // is the given values: observation norms carry eta(0..=199) and the
        // final reward carries eta(200).
        assert_eq!(etas.len(), 201);
        let pattern = DisturbancePattern {
            amplitudes: [2.6; 3],
            periods: [2.0; 3],
            phases: [0.0; 3],
            seed: 0,
        };
        let steps = (0..200)
            .map(|t| StepRecord {
                t,
                observation: [etas[t], 0.0, 0.0, 0.0, 0.0, 0.0],
                action: [0.0; 3],
                prev_action: [0.0; 3],
                reward: -etas[t + 1],
                hidden: None,
                obs_code: None,
                action_code: None,
                hidden_code: None,
            })
            .collect();
        Trajectory { pattern, steps }
    }

    #[test]
    fn regulation_error_takes_the_window_max() {
        // Constant eta on the window.
        let traj = synthetic_trajectory(&vec![0.3; 201]);
        assert_eq!(regulation_error(&traj).unwrap(), 0.3);

        // Monotone ramp eta(t) = t / 1000 peaks at eta(200) = 0.2.
        let ramp: Vec<f64> = (0..=200).map(|t| t as f64 / 1000.0).collect();
        let traj = synthetic_trajectory(&ramp);
        assert!((regulation_error(&traj).unwrap() - 0.2).abs() < 1e-15);

        // A spike inside the window wins.
        let mut etas = vec![0.1; 201];
        etas[170] = 0.9;
        etas[190] = 0.2;
        let traj = synthetic_trajectory(&etas);
        assert_eq!(regulation_error(&traj).unwrap(), 0.9);

        // Values before the window are ignored.
        let mut etas = vec![0.1; 201];
        etas[10] = 5.0;
        let traj = synthetic_trajectory(&etas);
        assert_eq!(regulation_error(&traj).unwrap(), 0.1);
    }

    #[test]
    fn free_drift_grows_position_and_keeps_velocity() {
        let pattern = DisturbancePattern {
            amplitudes: [1e-300; 3],
            periods: [2.0; 3],
            phases: [0.0; 3],
            seed: 0,
        };
        let init = PlatformState {
            position: [0.0; 3],
            velocity: [0.4, 0.0, 0.0],
        };
        let mut policy = ZeroPolicy;
        let traj = run_episode(&mut policy, &pattern, &model(), init, 200).unwrap();
        traj.validate().unwrap();
        assert_eq!(traj.steps.len(), 200);
        // Velocity constant to machine precision under (near-)zero forcing.
        for s in &traj.steps {
            assert!((s.observation[3] - 0.4).abs() < 1e-12);
        }
        // Position drifts linearly, so the reward magnitude grows.
        assert!(traj.steps[199].reward < traj.steps[10].reward);
        let expected_final_x = 0.4 * 0.05 * 199.0;
        assert!((traj.steps[199].observation[0] - expected_final_x).abs() < 1e-9);
    }

    #[test]
    fn episodes_are_deterministic_given_seed() {
        let ranges = DisturbanceRanges::default_excessive();
        let pattern = sample_disturbance_pattern(7, &ranges, &model()).unwrap();
        let init = sample_initial_state(7, &InitialStateRanges::default());
        let mut policy = ZeroPolicy;
        let a = run_episode(&mut policy, &pattern, &model(), init, 200).unwrap();
        let b = run_episode(&mut policy, &pattern, &model(), init, 200).unwrap();
        assert_eq!(a, b);
        let ser_a = serde_json::to_vec(&a).unwrap();
        let ser_b = serde_json::to_vec(&b).unwrap();
        assert_eq!(ser_a, ser_b);
    }

    #[test]
    fn recorded_actions_stay_in_the_control_box() {
        struct Wild(u64);
        impl Policy for Wild {
            fn begin_episode(&mut self) {}
            fn act(&mut self, _o: &Vec6, _p: &Vec3) -> PolicyOutput {
                self.0 = self.0.wrapping_mul(6364136223846793005).wrapping_add(1);
                let v = ((self.0 >> 33) as f64 / (1u64 << 31) as f64 - 1.0) * 10.0;
                PolicyOutput::plain([v, -v, v * 0.5])
            }
        }
        let ranges = DisturbanceRanges::default_excessive();
        let m = model();
        let pattern = sample_disturbance_pattern(3, &ranges, &m).unwrap();
        let traj = run_episode(
            &mut Wild(1),
            &pattern,
            &m,
            PlatformState::zero(),
            200,
        )
        .unwrap();
        for s in &traj.steps {
            for i in 0..3 {
                assert!(s.action[i] <= m.control_upper[i] && s.action[i] >= m.control_lower[i]);
            }
        }
        // 10 s of simulated time at dt = 0.05 over 200 steps.
        assert!((m.dt * traj.steps.len() as f64 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_policy_action_aborts_the_episode() {
        struct NanPolicy;
        impl Policy for NanPolicy {
            fn begin_episode(&mut self) {}
            fn act(&mut self, _o: &Vec6, _p: &Vec3) -> PolicyOutput {
                PolicyOutput::plain([f64::NAN, 0.0, 0.0])
            }
        }
        let ranges = DisturbanceRanges::default_excessive();
        let pattern = sample_disturbance_pattern(3, &ranges, &model()).unwrap();
        let err = run_episode(
            &mut NanPolicy,
            &pattern,
            &model(),
            PlatformState::zero(),
            10,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SimulationFault(_)));
    }
}
