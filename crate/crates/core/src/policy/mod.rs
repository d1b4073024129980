//! The three macro-actions: constrained flight to a vehicle waypoint,
//! riding, and unconstrained flight to the goal.

use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsLimits, RewardParams};
use crate::error::{Error, Result};
use crate::mdp::{
    build_grid, finite_horizon_vi, infinite_horizon_vi, Convergence, DiscreteActionSet, DoubleIntegratorModel,
    FactoredBackup, InterpGrid, QuantileTable, SuccessRegion,
};
use crate::transit::BoardThresholds;

mod bundle;
mod cf;
mod ride;
mod uf;

pub use bundle::{read_bundle, write_bundle, BUNDLE_MAGIC, BUNDLE_VERSION};
pub use cf::{cf_action, AbortParams, CfDecision, CfPolicy, CfState};
pub use ride::{ride_action, RideDecision};
pub use uf::{uf_action, UfPolicy};

/// Resolution and solver settings for the offline policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub cf_position_limit: f64,
    pub cf_position_knots: usize,
    pub uf_position_limit: f64,
    pub uf_position_knots: usize,
    pub velocity_knots: usize,
    pub actions_per_axis: usize,
    /// Number of constrained-flight horizons `K`.
    pub horizons: usize,
    pub horizon_dt: f64,
    /// Control noise standard deviation as a fraction of `a_max`.
    pub noise_fraction: f64,
    pub eta_samples: usize,
    pub beyond_eps: f64,
    pub uf_eps: f64,
    pub max_sweeps: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            cf_position_limit: 2_000.0,
            cf_position_knots: 25,
            uf_position_limit: 14_200.0,
            uf_position_knots: 33,
            velocity_knots: 15,
            actions_per_axis: 3,
            horizons: 60,
            horizon_dt: 5.0,
            noise_fraction: 0.1,
            eta_samples: 100,
            beyond_eps: 1e-4,
            uf_eps: 1e-4,
            max_sweeps: 10_000,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizons < 1 || self.eta_samples < 1 || !(self.horizon_dt > 0.0) {
            return Err(Error::InvalidConfig("horizons, horizon_dt and eta_samples must be positive".into()));
        }
        if !(self.noise_fraction >= 0.0) {
            return Err(Error::InvalidConfig("noise fraction must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sigma(&self, limits: &DynamicsLimits) -> f64 {
        self.noise_fraction * limits.a_max
    }

    /// Grid over `(px, vx, py, vy)` relative to the target.
    pub fn cf_grid(&self, limits: &DynamicsLimits) -> Result<InterpGrid> {
        let (p, v) = (self.cf_position_limit, limits.v_max);
        let (np, nv) = (self.cf_position_knots, self.velocity_knots);
        build_grid(&[p, v, p, v], &[np, nv, np, nv])
    }

    pub fn uf_grid(&self, limits: &DynamicsLimits) -> Result<InterpGrid> {
        let (p, v) = (self.uf_position_limit, limits.v_max);
        let (np, nv) = (self.uf_position_knots, self.velocity_knots);
        build_grid(&[p, v, p, v], &[np, nv, np, nv])
    }
}

/// Encodes an agent relative to a target as a `(px, vx, py, vy)` query.
pub fn relative_query(position: [f64; 2], velocity: [f64; 2], target: [f64; 2]) -> [f64; 4] {
    [position[0] - target[0], velocity[0], position[1] - target[1], velocity[1]]
}

/// Penalty for ending a constrained flight outside the success set.
///
/// `K` times the spread between the best and worst single-step rewards over
/// the state/action box, plus one. The largest displacement in a step comes
/// from full speed plus full acceleration and the largest sigma-point noise on
/// both axes; hovering adds `lambda_h`.
pub fn terminal_penalty(
    reward: &RewardParams,
    horizons: usize,
    actions: &DiscreteActionSet,
    limits: &DynamicsLimits,
    sigma: f64,
    dt: f64,
) -> f64 {
    let accel = actions.max_level() + 3f64.sqrt() * sigma;
    let axis_disp = limits.v_max * dt + 0.5 * accel * dt * dt;
    let max_disp = std::f64::consts::SQRT_2 * axis_disp;
    let best = -(1.0 - reward.alpha);
    let worst = -(reward.alpha * (reward.lambda_d * max_disp + reward.lambda_h) + (1.0 - reward.alpha));
    horizons as f64 * (best - worst) + 1.0
}

/// Solved policies for one reward weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub alpha: f64,
    pub cf: CfPolicy,
    pub uf: UfPolicy,
}

fn model(
    config: &PolicyConfig,
    actions: &DiscreteActionSet,
    reward: &RewardParams,
    limits: &DynamicsLimits,
    absorbing: Option<SuccessRegion>,
) -> DoubleIntegratorModel {
    DoubleIntegratorModel {
        axes: 2,
        actions: actions.clone(),
        limits: *limits,
        dt: config.horizon_dt,
        sigma: config.sigma(limits),
        reward: *reward,
        absorbing,
    }
}

pub fn success_region(thresholds: &BoardThresholds) -> SuccessRegion {
    SuccessRegion {
        position_tol: thresholds.board_dist,
        speed_tol: thresholds.board_speed,
    }
}

/// Solves the constrained-flight stack and the unconstrained-flight policy.
pub fn build_policies(
    config: &PolicyConfig,
    reward: &RewardParams,
    limits: &DynamicsLimits,
    thresholds: &BoardThresholds,
) -> Result<PolicyBundle> {
    config.validate()?;
    reward.validate()?;
    limits.validate()?;
    let actions = DiscreteActionSet::grid(limits.a_max, config.actions_per_axis)?;
    let success = success_region(thresholds);

    let cf_grid = config.cf_grid(limits)?;
    let cf_model = model(config, &actions, reward, limits, None);
    let phi = terminal_penalty(reward, config.horizons, &actions, limits, config.sigma(limits), config.horizon_dt);
    let terminal: Vec<f64> = (0..cf_grid.len())
        .map(|s| {
            let p = cf_grid.point_vec(s);
            if success.contains(&[p[0], p[2]], &[p[1], p[3]]) {
                0.0
            } else {
                -phi
            }
        })
        .collect();
    let backup = FactoredBackup::new(&cf_model, &cf_grid);
    let beyond = Convergence {
        eps: config.beyond_eps,
        max_sweeps: config.max_sweeps,
    };
    let stack = finite_horizon_vi(&backup, &cf_grid, &terminal, config.horizons, config.horizon_dt, beyond)?;
    drop(backup);

    let uf_grid = config.uf_grid(limits)?;
    let uf_model = model(config, &actions, reward, limits, Some(success));
    let uf_backup = FactoredBackup::new(&uf_model, &uf_grid);
    let solution = infinite_horizon_vi(
        &uf_backup,
        Convergence {
            eps: config.uf_eps,
            max_sweeps: config.max_sweeps,
        },
    )?;

    Ok(PolicyBundle {
        alpha: reward.alpha,
        cf: CfPolicy {
            stack,
            actions: actions.clone(),
            phi,
            success,
            quantiles: QuantileTable::new(config.eta_samples),
        },
        uf: UfPolicy::new(uf_grid, actions, solution.q.iter().map(|&q| q as f32).collect())?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn penalty_of_time_only_reward_is_the_margin() {
        let actions = DiscreteActionSet::grid(0.5, 3).unwrap();
        let r = RewardParams::default().with_alpha(0.0);
        assert_eq!(terminal_penalty(&r, 60, &actions, &DynamicsLimits::default(), 0.05, 5.0), 1.0);
    }

    #[test]
    fn single_horizon_penalty_exceeds_step_gap() {
        let actions = DiscreteActionSet::grid(0.5, 3).unwrap();
        let limits = DynamicsLimits::default();
        let r = RewardParams::default().with_alpha(1.0);
        let phi = terminal_penalty(&r, 1, &actions, &limits, 0.05, 5.0);
        let max_disp = std::f64::consts::SQRT_2 * (20.0 * 5.0 + 0.5 * (0.5 + 3f64.sqrt() * 0.05) * 25.0);
        let gap = r.lambda_d * max_disp + r.lambda_h;
        assert!((phi - (gap + 1.0)).abs() < 1e-12);
    }
}
