//! Agent kinematics and the per-step energy/time reward.
//!
//! The agent is a 2D point mass with independently bounded acceleration on
//! each axis and a per-axis speed limit. Control noise is additive Gaussian
//! acceleration.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentState {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
}

impl AgentState {
    pub const fn new(px: f64, py: f64, vx: f64, vy: f64) -> Self {
        Self { px, py, vx, vy }
    }

    pub const fn at_rest(position: [f64; 2]) -> Self {
        Self::new(position[0], position[1], 0.0, 0.0)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.px, self.py]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.vx, self.vy]
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn distance_to(&self, point: [f64; 2]) -> f64 {
        (self.px - point[0]).hypot(self.py - point[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlAction {
    pub ax: f64,
    pub ay: f64,
}

impl ControlAction {
    pub const ZERO: ControlAction = ControlAction { ax: 0.0, ay: 0.0 };

    pub const fn new(ax: f64, ay: f64) -> Self {
        Self { ax, ay }
    }

    pub fn clamped(self, a_max: f64) -> Self {
        Self {
            ax: self.ax.clamp(-a_max, a_max),
            ay: self.ay.clamp(-a_max, a_max),
        }
    }
}

/// Per-axis speed and acceleration bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsLimits {
    pub v_max: f64,
    pub a_max: f64,
}

impl Default for DynamicsLimits {
    fn default() -> Self {
        Self {
            v_max: 20.0,
            a_max: 0.5,
        }
    }
}

impl DynamicsLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max > 0.0 && self.a_max > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "dynamics limits must be positive (v_max {}, a_max {})",
                self.v_max, self.a_max
            )));
        }
        Ok(())
    }
}

/// Exact double-integrator step on one axis. Returns (position, velocity).
#[inline]
pub fn integrate_axis(p: f64, v: f64, a: f64, dt: f64, v_max: f64) -> (f64, f64) {
    (p + v * dt + 0.5 * a * dt * dt, (v + a * dt).clamp(-v_max, v_max))
}

/// Advances the agent by `dt` seconds under acceleration `u + noise`.
///
/// The commanded acceleration is clamped to the actuator bound before the
/// noise is added; the resulting velocity is clamped to `v_max`.
pub fn step_dynamics(
    x: &AgentState,
    u: ControlAction,
    dt: f64,
    noise: [f64; 2],
    limits: &DynamicsLimits,
) -> AgentState {
    let u = u.clamped(limits.a_max);
    let (px, vx) = integrate_axis(x.px, x.vx, u.ax + noise[0], dt, limits.v_max);
    let (py, vy) = integrate_axis(x.py, x.vy, u.ay + noise[1], dt, limits.v_max);
    AgentState { px, py, vx, vy }
}

/// Draws one zero-mean Gaussian acceleration perturbation per axis.
///
/// Always consumes exactly two standard-normal draws so that streams stay
/// aligned regardless of the sigmas.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, sigma_ax: f64, sigma_ay: f64) -> [f64; 2] {
    let zx: f64 = rng.sample(StandardNormal);
    let zy: f64 = rng.sample(StandardNormal);
    [sigma_ax * zx, sigma_ay * zy]
}

/// Clamps the agent into the square workspace `[0, side]^2`, zeroing the
/// velocity component normal to any wall it touches.
pub fn clamp_to_workspace(x: &AgentState, side: f64) -> AgentState {
    let mut out = *x;
    if out.px < 0.0 || out.px > side {
        out.px = out.px.clamp(0.0, side);
        out.vx = 0.0;
    }
    if out.py < 0.0 || out.py > side {
        out.py = out.py.clamp(0.0, side);
        out.vy = 0.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardParams {
    /// Energy weight; `1 - alpha` weighs elapsed time.
    pub alpha: f64,
    /// Energy per metre flown.
    pub lambda_d: f64,
    /// Energy per hovering step.
    pub lambda_h: f64,
    /// Speeds below this count as hovering (m/s).
    pub hover_speed_eps: f64,
    /// Duration of one step (s).
    pub timestep: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            lambda_d: 0.01,
            lambda_h: 0.5,
            hover_speed_eps: 0.5,
            timestep: 5.0,
        }
    }
}

impl RewardParams {
    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.alpha)
            && self.lambda_d >= 0.0
            && self.lambda_h >= 0.0
            && self.hover_speed_eps > 0.0
            && self.timestep > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid reward parameters {self:?}")))
        }
    }

    /// Alpha-independent energy spent flying from `x_t` to `x_t1`.
    pub fn flight_energy(&self, x_t: &AgentState, x_t1: &AgentState) -> f64 {
        let distance = x_t.distance_to(x_t1.position());
        let hovering = x_t.speed() < self.hover_speed_eps;
        self.lambda_d * distance + if hovering { self.lambda_h } else { 0.0 }
    }
}

/// Single-step reward: the negated alpha-weighted sum of energy and time.
/// Riding costs only time.
pub fn reward(x_t: &AgentState, x_t1: &AgentState, riding: bool, params: &RewardParams) -> f64 {
    let energy = if riding {
        0.0
    } else {
        params.flight_energy(x_t, x_t1)
    };
    -(params.alpha * energy + (1.0 - params.alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const LIMITS: DynamicsLimits = DynamicsLimits {
        v_max: 20.0,
        a_max: 5.0,
    };

    #[test]
    fn zero_input_is_a_fixed_point() {
        let x = AgentState::default();
        let y = step_dynamics(&x, ControlAction::ZERO, 5.0, [0.0, 0.0], &LIMITS);
        assert_eq!(y, x);
    }

    #[test]
    fn unit_acceleration_for_one_second() {
        let y = step_dynamics(
            &AgentState::default(),
            ControlAction::new(1.0, 0.0),
            1.0,
            [0.0, 0.0],
            &LIMITS,
        );
        assert_eq!(y, AgentState::new(0.5, 0.0, 1.0, 0.0));
    }

    #[test]
    fn velocity_saturates() {
        let x = AgentState::new(0.0, 0.0, LIMITS.v_max, 0.0);
        let y = step_dynamics(&x, ControlAction::new(LIMITS.a_max, 0.0), 1.0, [0.0; 2], &LIMITS);
        assert_eq!(y.vx, LIMITS.v_max);
    }

    #[test]
    fn degenerate_noise_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(sample_noise(&mut rng, 0.0, 0.0), [0.0, 0.0]);
        }
    }

    #[test]
    fn noise_is_reproducible() {
        let mut a = ChaCha8Rng::seed_from_u64(17);
        let mut b = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            assert_eq!(sample_noise(&mut a, 1.0, 2.0), sample_noise(&mut b, 1.0, 2.0));
        }
    }

    #[test]
    fn noise_sample_mean_is_near_zero() {
        // 3 sigma / sqrt(n) = 0.0095 for n = 1e5, inside the 0.02 band.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let e = sample_noise(&mut rng, 1.0, 1.0);
            sum[0] += e[0];
            sum[1] += e[1];
        }
        for s in sum {
            assert!((s / n as f64).abs() < 0.02, "mean {}", s / n as f64);
        }
    }

    #[test]
    fn reward_examples() {
        let params = RewardParams {
            alpha: 0.0,
            lambda_d: 1.0,
            lambda_h: 1.0,
            hover_speed_eps: 0.5,
            timestep: 1.0,
        };
        let a = AgentState::new(0.0, 0.0, 3.0, 0.0);
        let b = AgentState::new(2.0, 0.0, 3.0, 0.0);
        assert_eq!(reward(&a, &b, false, &params), -1.0);

        let half = params.with_alpha(0.5);
        assert_eq!(reward(&a, &b, false, &half), -1.5);

        let energy_only = params.with_alpha(1.0);
        assert_eq!(reward(&a, &b, true, &energy_only), 0.0);
    }

    #[test]
    fn hover_uses_pre_step_velocity() {
        let params = RewardParams {
            alpha: 1.0,
            lambda_d: 0.0,
            lambda_h: 1.0,
            ..RewardParams::default()
        };
        let slow = AgentState::new(0.0, 0.0, 0.1, 0.0);
        let fast = AgentState::new(0.0, 0.0, 10.0, 0.0);
        assert_eq!(reward(&slow, &fast, false, &params), -1.0);
        assert_eq!(reward(&fast, &slow, false, &params), 0.0);
    }

    #[test]
    fn workspace_clamp_zeroes_normal_velocity() {
        let x = AgentState::new(-3.0, 50.0, -4.0, 2.0);
        let y = clamp_to_workspace(&x, 100.0);
        assert_eq!(y, AgentState::new(0.0, 50.0, 0.0, 2.0));
    }

    fn state() -> impl Strategy<Value = AgentState> {
        (-1e4..1e4f64, -1e4..1e4f64, -20.0..=20.0f64, -20.0..=20.0f64)
            .prop_map(|(px, py, vx, vy)| AgentState::new(px, py, vx, vy))
    }

    proptest! {
        #[test]
        fn velocity_bounds_hold(
            start in state(),
            actions in prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -3.0..3.0f64, -3.0..3.0f64), 1..50),
        ) {
            let mut x = start;
            for (ax, ay, nx, ny) in actions {
                x = step_dynamics(&x, ControlAction::new(ax, ay), 5.0, [nx, ny], &LIMITS);
                prop_assert!(x.vx.abs() <= LIMITS.v_max && x.vy.abs() <= LIMITS.v_max);
            }
        }

        #[test]
        fn noiseless_step_matches_closed_form(x in state(), ax in -5.0..5.0f64, ay in -5.0..5.0f64, dt in 0.1..10.0f64) {
            let y = step_dynamics(&x, ControlAction::new(ax, ay), dt, [0.0; 2], &LIMITS);
            prop_assert!((y.px - (x.px + x.vx * dt + 0.5 * ax * dt * dt)).abs() < 1e-12 * (1.0 + x.px.abs()));
            prop_assert!((y.py - (x.py + x.vy * dt + 0.5 * ay * dt * dt)).abs() < 1e-12 * (1.0 + x.py.abs()));
            prop_assert!((y.vx - (x.vx + ax * dt).clamp(-20.0, 20.0)).abs() < 1e-12);
        }

        #[test]
        fn reward_is_a_cost(a in state(), b in state(), riding: bool, alpha in 0.0..=1.0f64) {
            let params = RewardParams::default().with_alpha(alpha);
            prop_assert!(reward(&a, &b, riding, &params) <= 0.0);
        }

        #[test]
        fn reward_non_increasing_in_distance(a in state(), d1 in 0.0..5e3f64, d2 in 0.0..5e3f64, alpha in 0.01..=1.0f64) {
            let params = RewardParams::default().with_alpha(alpha);
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let b_near = AgentState { px: a.px + near, ..a };
            let b_far = AgentState { px: a.px + far, ..a };
            prop_assert!(reward(&a, &b_far, false, &params) <= reward(&a, &b_near, false, &params));
        }
    }
}
