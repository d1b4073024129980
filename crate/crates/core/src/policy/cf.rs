use crate::dynamics::{AgentState, ControlAction};
use crate::error::{Error, Result};
use crate::mdp::vi::argmax;
use crate::mdp::{combine_partial_control, DiscreteActionSet, EtaHistory, QStack, QuantileTable, SuccessRegion, TerminationDistribution};

use super::relative_query;

/// Constrained-flight policy: the horizon stack plus what is needed to turn
/// a live ETA estimate into a termination distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct CfPolicy {
    pub stack: QStack,
    pub actions: DiscreteActionSet,
    pub phi: f64,
    pub success: SuccessRegion,
    pub quantiles: QuantileTable,
}

/// Agent relative to the target waypoint (`s_c`, as `(px, vx, py, vy)`)
/// and the time left until the waypoint ETA (`s_u`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfState {
    pub s_c: [f64; 4],
    pub s_u: f64,
}

impl CfState {
    pub fn new(agent: &AgentState, target: [f64; 2], eta: f64, now: f64) -> Self {
        Self {
            s_c: relative_query(agent.position(), agent.velocity(), target),
            s_u: eta - now,
        }
    }

    pub fn in_success_set(&self, region: &SuccessRegion) -> bool {
        region.contains(&[self.s_c[0], self.s_c[2]], &[self.s_c[1], self.s_c[3]])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbortParams {
    pub beta: f64,
}

impl AbortParams {
    pub fn new(beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidConfig(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(Self { beta })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CfDecision {
    Control { action: usize, control: ControlAction, value: f64 },
    Abort,
}

impl CfPolicy {
    pub fn horizons(&self) -> usize {
        self.stack.k()
    }

    pub fn horizon_dt(&self) -> f64 {
        self.stack.horizon_dt
    }

    /// Horizon index used by the abort test, `round(s_u / dt)` clamped to `[1, K]`.
    pub fn abort_horizon(&self, s_u: f64) -> usize {
        let k = (s_u / self.horizon_dt()).round();
        if k >= self.horizons() as f64 {
            self.horizons()
        } else {
            (k as usize).max(1)
        }
    }

    pub fn distribution(&self, s_u: f64, sigma: f64) -> TerminationDistribution {
        self.quantiles.distribution(s_u, sigma, self.horizons(), self.horizon_dt())
    }

    /// `V_k(s_c) < beta * worst(k)` at the rounded horizon.
    pub fn should_abort(&self, s: &CfState, beta: f64) -> bool {
        let k = self.abort_horizon(s.s_u);
        self.stack.value(k, &s.s_c) < beta * self.stack.worst(k)
    }

    /// Best action and value of the termination-weighted mixture.
    pub fn mixture(&self, s: &CfState, sigma: f64) -> (usize, f64) {
        combine_partial_control(&self.stack, &self.distribution(s.s_u, sigma), &s.s_c)
    }

    /// Greedy action at a single horizon.
    pub fn greedy_at(&self, k: usize, s_c: &[f64; 4]) -> (usize, f64) {
        argmax(&self.stack.q_values(k, s_c))
    }
}

/// One constrained-flight decision: abort if the rendezvous looks too risky
/// at this `beta`, otherwise the partial-control action.
pub fn cf_action(s: &CfState, policy: &CfPolicy, history: &EtaHistory, abort: &AbortParams) -> CfDecision {
    if policy.should_abort(s, abort.beta) {
        return CfDecision::Abort;
    }
    let (action, value) = policy.mixture(s, history.sigma());
    CfDecision::Control {
        action,
        control: policy.actions.get(action),
        value,
    }
}
