use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;

/// Ids below this belong to the train pool; test ids start here.
pub const TEST_POOL_BASE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvMode {
    Train,
    Test,
}

/// Rendered continuous-control plant: a damped pendulum drawn over a
/// background whose dynamics never see the action. Train and test
/// background pools are disjoint by id range.
#[derive(Debug, Clone, PartialEq)]
pub struct DistractorConfig {
    pub render_size: usize,
    /// Policy steps per episode.
    pub episode_len: usize,
    pub action_repeat: usize,
    pub train_pool: usize,
    pub test_pool: usize,
    /// Pin one background id (the fixed-background small variant).
    pub fixed_background: Option<u64>,
    /// None: continuous 1-dim torque in [-1, 1]. Some(k): k torque levels.
    pub discrete_actions: Option<usize>,
    pub dt: f64,
    pub gravity: f64,
    pub torque_scale: f64,
    pub damping: f64,
    pub max_speed: f64,
    /// Reset draws |angle| from U(reset_theta_min, reset_theta_max) with a
    /// random sign.
    pub reset_theta_min: f64,
    pub reset_theta_max: f64,
    /// Reset draws the angular velocity from U(-reset_omega_max, reset_omega_max).
    pub reset_omega_max: f64,
}

impl DistractorConfig {
    /// 28x28 rendering with moving backgrounds.
    pub fn desk() -> Self {
        DistractorConfig {
            render_size: 28,
            episode_len: 50,
            action_repeat: 2,
            train_pool: 8,
            test_pool: 8,
            fixed_background: None,
            discrete_actions: None,
            dt: 0.05,
            gravity: 4.0,
            torque_scale: 8.0,
            damping: 0.6,
            max_speed: 8.0,
            reset_theta_min: 0.0,
            reset_theta_max: std::f64::consts::PI,
            reset_omega_max: 1.0,
        }
    }

    /// 8x8 rendering with one fixed background (smoke-test variant).
    pub fn small_fixed() -> Self {
        DistractorConfig {
            render_size: 8,
            episode_len: 50,
            fixed_background: Some(0),
            ..DistractorConfig::desk()
        }
    }

    pub fn action_dim(&self) -> usize {
        1
    }

    pub fn validate(&self) -> Result<()> {
        if self.render_size < 4 {
            return Err(Error::contract("render size too small"));
        }
        if self.episode_len == 0 || self.action_repeat == 0 {
            return Err(Error::contract("episode_len and action_repeat must be positive"));
        }
        if self.train_pool == 0 || self.test_pool == 0 {
            return Err(Error::contract("background pools must be non-empty"));
        }
        if let Some(k) = self.discrete_actions {
            if k < 2 {
                return Err(Error::contract("need at least 2 discrete actions"));
            }
        }
        Ok(())
    }

    /// Torque for a discrete action index, evenly spaced in [-1, 1].
    pub fn discrete_torque(&self, index: usize) -> Result<f64> {
        let k = self
            .discrete_actions
            .ok_or_else(|| Error::contract("environment is continuous"))?;
        if index >= k {
            return Err(Error::contract(format!("action index {index} >= {k}")));
        }
        Ok(-1.0 + 2.0 * index as f64 / (k - 1) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PendulumState {
    /// Angle from upright, wrapped to (-pi, pi].
    theta: f64,
    omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct BackgroundState {
    id: u64,
    phase: u64,
}

pub struct DistractorControl {
    pub cfg: DistractorConfig,
    physics: PendulumState,
    background: BackgroundState,
    steps_taken: usize,
    done: bool,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

fn unit(hash: u64) -> f64 {
    (hash >> 11) as f64 / (1u64 << 53) as f64
}

/// Background intensity in [0, 0.55], a pure function of (id, phase, pixel).
fn background_pixel(id: u64, phase: u64, row: usize, col: usize, size: usize) -> f64 {
    let h = splitmix64(id);
    let t = phase as f64;
    if id % 2 == 0 {
        // Scrolling sinusoid grating.
        let fx = 0.25 + 0.45 * unit(splitmix64(h ^ 1));
        let fy = 0.25 + 0.45 * unit(splitmix64(h ^ 2));
        let speed = 0.08 + 0.22 * unit(splitmix64(h ^ 3));
        let phase0 = std::f64::consts::TAU * unit(splitmix64(h ^ 4));
        let v = (fx * col as f64 + fy * row as f64 + speed * t + phase0).sin();
        0.275 + 0.275 * v
    } else {
        // Drifting blob field.
        let mut acc: f64 = 0.0;
        for k in 0..3u64 {
            let hk = splitmix64(h ^ (10 + k));
            let cx0 = size as f64 * unit(splitmix64(hk ^ 1));
            let cy0 = size as f64 * unit(splitmix64(hk ^ 2));
            let vx = 0.3 * (unit(splitmix64(hk ^ 3)) - 0.5);
            let vy = 0.3 * (unit(splitmix64(hk ^ 4)) - 0.5);
            let sigma = 1.5 + 2.5 * unit(splitmix64(hk ^ 5));
            let cx = (cx0 + vx * t).rem_euclid(size as f64);
            let cy = (cy0 + vy * t).rem_euclid(size as f64);
            // Wrap-around distance on the torus.
            let dx = (col as f64 - cx).abs().min(size as f64 - (col as f64 - cx).abs());
            let dy = (row as f64 - cy).abs().min(size as f64 - (row as f64 - cy).abs());
            acc += (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
        }
        (0.55 * acc).min(0.55)
    }
}

impl DistractorControl {
    pub fn new(cfg: DistractorConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(DistractorControl {
            cfg,
            physics: PendulumState {
                theta: std::f64::consts::PI,
                omega: 0.0,
            },
            background: BackgroundState { id: 0, phase: 0 },
            steps_taken: 0,
            done: true,
        })
    }

    pub fn background_id(&self) -> u64 {
        self.background.id
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Initialize physics from the fixed distribution and draw a background
    /// from the pool matching `mode`; returns the first observation.
    pub fn reset(&mut self, mode: EnvMode, rng: &mut ChaCha8Rng) -> Tensor {
        let (lo, hi) = (self.cfg.reset_theta_min, self.cfg.reset_theta_max);
        let magnitude = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let omega_span = self.cfg.reset_omega_max;
        self.physics = PendulumState {
            theta: sign * magnitude,
            omega: if omega_span > 0.0 {
                rng.gen_range(-omega_span..omega_span)
            } else {
                0.0
            },
        };
        let id = match self.cfg.fixed_background {
            Some(id) => id,
            None => match mode {
                EnvMode::Train => rng.gen_range(0..self.cfg.train_pool as u64),
                EnvMode::Test => TEST_POOL_BASE + rng.gen_range(0..self.cfg.test_pool as u64),
            },
        };
        self.background = BackgroundState {
            id,
            phase: rng.gen_range(0..1024),
        };
        self.steps_taken = 0;
        self.done = false;
        self.render()
    }

    /// Advance one policy step (action_repeat physics substeps). The
    /// background advances by its own rule regardless of the action; the
    /// reward depends on physics alone.
    pub fn step(&mut self, action: &[f64]) -> Result<(Tensor, f64, bool)> {
        if self.done {
            return Err(Error::contract("step after episode end"));
        }
        if action.len() != 1 {
            return Err(Error::contract("action must be 1-dimensional"));
        }
        let torque = action[0].clamp(-1.0, 1.0);
        for _ in 0..self.cfg.action_repeat {
            let c = &self.cfg;
            let accel = c.gravity * self.physics.theta.sin() + c.torque_scale * torque
                - c.damping * self.physics.omega;
            self.physics.omega =
                (self.physics.omega + c.dt * accel).clamp(-c.max_speed, c.max_speed);
            self.physics.theta += c.dt * self.physics.omega;
            // Wrap to (-pi, pi].
            while self.physics.theta > std::f64::consts::PI {
                self.physics.theta -= std::f64::consts::TAU;
            }
            while self.physics.theta <= -std::f64::consts::PI {
                self.physics.theta += std::f64::consts::TAU;
            }
            self.background.phase = self.background.phase.wrapping_add(1);
        }
        let reward = self.physics.theta.cos();
        self.steps_taken += 1;
        self.done = self.steps_taken >= self.cfg.episode_len;
        Ok((self.render(), reward, self.done))
    }

    /// Step a discrete variant by action index.
    pub fn step_discrete(&mut self, index: usize) -> Result<(Tensor, f64, bool)> {
        let torque = self.cfg.discrete_torque(index)?;
        self.step(&[torque])
    }

    /// Background layer only.
    pub fn render_background(&self) -> Tensor {
        let size = self.cfg.render_size;
        let mut t = Tensor::zeros(&[size, size]);
        for r in 0..size {
            for c in 0..size {
                t.data_mut()[r * size + c] =
                    background_pixel(self.background.id, self.background.phase, r, c, size);
            }
        }
        t
    }

    /// Full observation: background with the pendulum drawn on top.
    /// Deterministic given (physics state, background state).
    pub fn render(&self) -> Tensor {
        let size = self.cfg.render_size;
        let mut frame = self.render_background();
        let center = (size as f64 - 1.0) / 2.0;
        let rod_len = 0.40 * size as f64;
        let (sin_t, cos_t) = self.physics.theta.sin_cos();
        // Rod sampled densely from pivot to tip; theta 0 points up.
        let samples = 4 * size;
        for k in 0..=samples {
            let frac = k as f64 / samples as f64;
            let x = center + frac * rod_len * sin_t;
            let y = center - frac * rod_len * cos_t;
            let (ri, ci) = (y.round() as isize, x.round() as isize);
            if ri >= 0 && ci >= 0 && (ri as usize) < size && (ci as usize) < size {
                frame.data_mut()[ri as usize * size + ci as usize] = 1.0;
            }
        }
        // Bob: a small bright block at the tip.
        let tip_x = center + rod_len * sin_t;
        let tip_y = center - rod_len * cos_t;
        let radius = (size as f64 / 14.0).max(1.0) as isize;
        for dr in -radius..=radius {
            for dc in -radius..=radius {
                let (ri, ci) = (tip_y.round() as isize + dr, tip_x.round() as isize + dc);
                if ri >= 0 && ci >= 0 && (ri as usize) < size && (ci as usize) < size {
                    frame.data_mut()[ri as usize * size + ci as usize] = 0.9;
                }
            }
        }
        frame
    }

    /// Physics state snapshot (tests and diagnostics).
    pub fn physics_state(&self) -> (f64, f64) {
        (self.physics.theta, self.physics.omega)
    }

    /// Force a specific physics/background state (tests).
    pub fn set_state(&mut self, theta: f64, omega: f64, background_id: u64, phase: u64) {
        self.physics = PendulumState { theta, omega };
        self.background = BackgroundState {
            id: background_id,
            phase,
        };
        self.steps_taken = 0;
        self.done = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn reset_pools_are_disjoint_by_id_range() {
        let mut env = DistractorControl::new(DistractorConfig::desk()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            env.reset(EnvMode::Train, &mut rng);
            assert!(env.background_id() < TEST_POOL_BASE);
            env.reset(EnvMode::Test, &mut rng);
            assert!(env.background_id() >= TEST_POOL_BASE);
        }
    }

    #[test]
    fn fixed_seed_reset_is_identical() {
        let cfg = DistractorConfig::desk();
        let mut a = DistractorControl::new(cfg.clone()).unwrap();
        let mut b = DistractorControl::new(cfg).unwrap();
        let o1 = a.reset(EnvMode::Train, &mut ChaCha8Rng::seed_from_u64(7));
        let o2 = b.reset(EnvMode::Train, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(o1.data(), o2.data());
        assert_eq!(o1.shape(), &[28, 28]);
    }

    #[test]
    fn rewards_do_not_depend_on_background() {
        let cfg = DistractorConfig::desk();
        let mut a = DistractorControl::new(cfg.clone()).unwrap();
        let mut b = DistractorControl::new(cfg).unwrap();
        a.set_state(1.0, 0.3, 2, 50);
        b.set_state(1.0, 0.3, TEST_POOL_BASE + 3, 999);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..30 {
            let u = rng.gen_range(-1.0..1.0);
            let (_, ra, _) = a.step(&[u]).unwrap();
            let (_, rb, _) = b.step(&[u]).unwrap();
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn zero_torque_at_rest_stays_near_rest() {
        // Hanging down (theta = pi) is an equilibrium of the integrator.
        let mut env = DistractorControl::new(DistractorConfig::desk()).unwrap();
        env.set_state(std::f64::consts::PI, 0.0, 0, 0);
        let (_, _, _) = env.step(&[0.0]).unwrap();
        let (theta, omega) = env.physics_state();
        // sin(pi) is ~1.2e-16, so one Euler step moves theta by < 1e-9.
        assert!((theta.abs() - std::f64::consts::PI).abs() < 1e-9);
        assert!(omega.abs() < 1e-9);
    }

    #[test]
    fn background_advances_identically_for_any_action() {
        let cfg = DistractorConfig::desk();
        let mut a = DistractorControl::new(cfg.clone()).unwrap();
        let mut b = DistractorControl::new(cfg).unwrap();
        a.set_state(0.5, 0.0, 4, 100);
        b.set_state(0.5, 0.0, 4, 100);
        a.step(&[1.0]).unwrap();
        b.step(&[-1.0]).unwrap();
        let bg_a = a.render_background();
        let bg_b = b.render_background();
        assert_eq!(bg_a.data(), bg_b.data());
    }

    #[test]
    fn render_is_deterministic_given_state() {
        let mut env = DistractorControl::new(DistractorConfig::desk()).unwrap();
        env.set_state(0.7, -0.2, 5, 42);
        let f1 = env.render();
        let f2 = env.render();
        assert_eq!(f1.data(), f2.data());
    }

    #[test]
    fn step_after_done_rejected() {
        let mut cfg = DistractorConfig::desk();
        cfg.episode_len = 2;
        let mut env = DistractorControl::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        env.reset(EnvMode::Train, &mut rng);
        env.step(&[0.1]).unwrap();
        let (_, _, done) = env.step(&[0.1]).unwrap();
        assert!(done);
        assert!(matches!(env.step(&[0.1]), Err(Error::Contract(_))));
    }

    #[test]
    fn discrete_torques_span_the_box() {
        let mut cfg = DistractorConfig::small_fixed();
        cfg.discrete_actions = Some(4);
        assert_eq!(cfg.discrete_torque(0).unwrap(), -1.0);
        assert_eq!(cfg.discrete_torque(3).unwrap(), 1.0);
        assert!((cfg.discrete_torque(1).unwrap() + 1.0 / 3.0).abs() < 1e-12);
        assert!(cfg.discrete_torque(4).is_err());
    }

    #[test]
    fn small_variant_renders_8x8() {
        let mut env = DistractorControl::new(DistractorConfig::small_fixed()).unwrap();
        let o = env.reset(EnvMode::Train, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(o.shape(), &[8, 8]);
        assert_eq!(env.background_id(), 0);
    }

    #[test]
    fn foreground_pixels_differ_across_angles() {
        let mut env = DistractorControl::new(DistractorConfig::small_fixed()).unwrap();
        env.set_state(0.0, 0.0, 0, 7);
        let up = env.render();
        env.set_state(std::f64::consts::PI, 0.0, 0, 7);
        let down = env.render();
        assert_ne!(up.data(), down.data());
    }
}
