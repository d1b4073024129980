//! Receding-horizon baseline: graph search over nominal distance and time
//! weights, with flights driven by repeated short-horizon trajectory
//! optimization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{step_dynamics, AgentState, ControlAction, DynamicsLimits, RewardParams};
use crate::error::{Error, Result};
use crate::executor::{run_episode, Controller, EpisodeConfig, EpisodeMetrics, EpisodeTrace, FlightCommand};
use crate::mdp::{DiscreteActionSet, EtaHistory, SuccessRegion};
use crate::planner::{EdgeKind, EdgeWeights};
use crate::policy::{success_region, terminal_penalty};
use crate::transit::{dist, DreamrState, ScenarioSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RhcParams {
    /// Steps optimized for unconstrained flight.
    pub uf_horizon: usize,
    /// Cap on constrained-flight steps.
    pub max_horizon: usize,
    /// Piecewise-constant control blocks the optimizer searches over; longer
    /// horizons hold each block for several steps.
    pub max_blocks: usize,
    pub population: usize,
    pub elite_fraction: f64,
    pub iterations: usize,
}

impl Default for RhcParams {
    fn default() -> Self {
        Self {
            uf_horizon: 12,
            max_horizon: 60,
            max_blocks: 12,
            population: 64,
            elite_fraction: 0.1,
            iterations: 5,
        }
    }
}

impl RhcParams {
    pub fn validate(&self) -> Result<()> {
        if self.uf_horizon < 1 || self.max_horizon < 1 || self.max_blocks < 1 {
            return Err(Error::InvalidConfig("RHC horizons and block count must be at least 1".into()));
        }
        if self.population * self.iterations < 10 {
            return Err(Error::InvalidConfig("RHC sample budget must be at least 10".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::InvalidConfig("elite fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).floor() as usize).clamp(1, self.population)
    }

    fn budget(&self) -> usize {
        self.population * self.iterations
    }
}

/// Nominal weight of an edge: distance energy plus elapsed time.
///
/// A constrained flight or ride is charged for its time gap; an unconstrained
/// flight for the straight-line time at `v_max`.
pub fn nominal_edge_weight(kind: EdgeKind, distance: f64, gap: f64, alpha: f64, lambda_d: f64, v_max: f64) -> f64 {
    match kind {
        EdgeKind::ConstrainedFlight => alpha * lambda_d * distance + (1.0 - alpha) * gap.max(0.0),
        EdgeKind::Ride => (1.0 - alpha) * gap.max(0.0),
        EdgeKind::UnconstrainedFlight => alpha * lambda_d * distance + (1.0 - alpha) * distance / v_max,
    }
}

/// Nominal weights in per-epoch cost units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NominalWeights {
    pub alpha: f64,
    pub lambda_d: f64,
    pub v_max: f64,
    pub epoch_dt: f64,
}

impl EdgeWeights for NominalWeights {
    fn constrained_flight(&self, start: &AgentState, target: [f64; 2], s_u: f64, _sigma: f64) -> Option<f64> {
        let d = dist(start.position(), target);
        Some(nominal_edge_weight(
            EdgeKind::ConstrainedFlight,
            d,
            s_u / self.epoch_dt,
            self.alpha,
            self.lambda_d,
            self.v_max * self.epoch_dt,
        ))
    }

    fn unconstrained_flight(&self, start: &AgentState, goal: [f64; 2]) -> f64 {
        let d = dist(start.position(), goal);
        nominal_edge_weight(EdgeKind::UnconstrainedFlight, d, 0.0, self.alpha, self.lambda_d, self.v_max * self.epoch_dt)
    }
}

/// Target of one trajectory optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhcTarget {
    pub position: [f64; 2],
    pub steps: usize,
    pub region: SuccessRegion,
    /// The set must be reached at the last step rather than eventually.
    pub deadline: bool,
}

/// Everything the rollout cost needs besides the sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhcModel {
    pub reward: RewardParams,
    pub limits: DynamicsLimits,
    pub dt: f64,
    /// Penalty for ending outside the target set.
    pub phi: f64,
}

impl RhcModel {
    fn inside(&self, x: &AgentState, target: &RhcTarget) -> bool {
        let rel = [x.px - target.position[0], x.py - target.position[1]];
        target.region.contains(&rel, &x.velocity())
    }

    /// Noise-free rollout cost of `controls` from `x0`.
    ///
    /// Each step pays the alpha-weighted flight energy plus `1 - alpha` while
    /// outside the target set. Ending outside costs `phi` plus a measure of
    /// the miss: the nominal cost still to go for an open-ended target, or
    /// the epochs needed to close the gap and shed excess speed for a
    /// deadline.
    pub fn rollout_cost(&self, x0: &AgentState, target: &RhcTarget, controls: &[ControlAction]) -> f64 {
        let alpha = self.reward.alpha;
        let mut x = *x0;
        let mut cost = 0.0;
        for &u in controls {
            let next = step_dynamics(&x, u, self.dt, [0.0; 2], &self.limits);
            cost += alpha * self.reward.flight_energy(&x, &next);
            if !self.inside(&next, target) {
                cost += 1.0 - alpha;
            }
            x = next;
        }
        if !self.inside(&x, target) {
            cost += self.phi;
            cost += if target.deadline {
                self.miss_epochs(&x, target) + alpha * self.reward.lambda_d * x.distance_to(target.position)
            } else {
                self.cost_to_go(&x, target.position)
            };
        }
        cost
    }

    /// Epochs of full-speed flight to close the position gap plus epochs of
    /// full braking to shed the excess speed.
    pub fn miss_epochs(&self, x: &AgentState, target: &RhcTarget) -> f64 {
        let gap = (x.distance_to(target.position) - target.region.position_tol).max(0.0);
        let excess = (x.speed() - target.region.speed_tol).max(0.0);
        gap / (self.limits.v_max * self.dt) + excess / (self.limits.a_max * self.dt)
    }

    /// Nominal cost of braking to rest at full deceleration and then flying
    /// straight from the stopping point to `goal`.
    pub fn cost_to_go(&self, x: &AgentState, goal: [f64; 2]) -> f64 {
        let a = self.limits.a_max;
        let speed = x.speed();
        let reach = speed / (2.0 * a);
        let stop = [x.px + x.vx * reach, x.py + x.vy * reach];
        let braking_epochs = speed / a / self.dt;
        (1.0 - self.reward.alpha) * braking_epochs
            + nominal_edge_weight(
                EdgeKind::UnconstrainedFlight,
                dist(stop, goal),
                0.0,
                self.reward.alpha,
                self.reward.lambda_d,
                self.limits.v_max * self.dt,
            )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhcSolution {
    pub controls: Vec<ControlAction>,
    pub cost: f64,
}

/// Holds block `i` of `blocks` for its share of the `n` steps.
fn expand(blocks: &[ControlAction], n: usize, out: &mut Vec<ControlAction>) {
    out.clear();
    out.extend((0..n).map(|step| blocks[step * blocks.len() / n]));
}

/// Minimizes the rollout cost over bounded piecewise-constant control
/// sequences of at most `max_blocks` pieces.
///
/// When the `{-a, 0, a}` per-axis block choices fit in the sample budget they
/// are enumerated exhaustively; otherwise a cross-entropy search runs with the
/// zero sequence seeded in the first population and the incumbent carried
/// into every later one.
pub fn rhc_plan<R: Rng + ?Sized>(
    x: &AgentState,
    target: &RhcTarget,
    params: &RhcParams,
    model: &RhcModel,
    rng: &mut R,
) -> RhcSolution {
    let n = target.steps.max(1);
    let b = n.min(params.max_blocks.max(1));
    let a = model.limits.a_max;
    let mut seq = Vec::with_capacity(n);
    let mut cost_of = |blocks: &[ControlAction]| {
        expand(blocks, n, &mut seq);
        model.rollout_cost(x, target, &seq)
    };
    let zero = vec![ControlAction::ZERO; b];
    let mut best = (cost_of(&zero), zero);

    let joint = 9usize.checked_pow(b as u32);
    if joint.is_some_and(|j| j <= params.budget()) {
        let actions = DiscreteActionSet::grid(a, 3).expect("three levels are valid");
        let mut digits = vec![0usize; b];
        let mut blocks = vec![ControlAction::ZERO; b];
        loop {
            for (s, &d) in blocks.iter_mut().zip(&digits) {
                *s = actions.get(d);
            }
            let c = cost_of(&blocks);
            if c < best.0 {
                best = (c, blocks.clone());
            }
            let mut i = 0;
            while i < b {
                digits[i] += 1;
                if digits[i] < 9 {
                    break;
                }
                digits[i] = 0;
                i += 1;
            }
            if i == b {
                break;
            }
        }
    } else {
        let elites = params.elite_count();
        let mut mean = vec![[0.0f64; 2]; b];
        let mut spread = vec![[a; 2]; b];
        let mut population: Vec<(f64, Vec<ControlAction>)> = Vec::with_capacity(params.population);
        for _ in 0..params.iterations {
            population.clear();
            population.push(best.clone());
            while population.len() < params.population {
                let blocks: Vec<ControlAction> = mean
                    .iter()
                    .zip(&spread)
                    .map(|(m, s)| {
                        let zx: f64 = rng.sample(StandardNormal);
                        let zy: f64 = rng.sample(StandardNormal);
                        ControlAction::new(m[0] + s[0] * zx, m[1] + s[1] * zy).clamped(a)
                    })
                    .collect();
                population.push((cost_of(&blocks), blocks));
            }
            population.sort_by(|p, q| p.0.total_cmp(&q.0));
            if population[0].0 < best.0 {
                best = population[0].clone();
            }
            let top = &population[..elites];
            for block in 0..b {
                for axis in 0..2 {
                    let pick = |u: &ControlAction| if axis == 0 { u.ax } else { u.ay };
                    let m = top.iter().map(|(_, s)| pick(&s[block])).sum::<f64>() / elites as f64;
                    let var = top.iter().map(|(_, s)| (pick(&s[block]) - m).powi(2)).sum::<f64>() / elites as f64;
                    mean[block][axis] = m;
                    spread[block][axis] = var.sqrt().max(1e-3 * a);
                }
            }
        }
    }
    let mut controls = Vec::with_capacity(n);
    expand(&best.1, n, &mut controls);
    RhcSolution { controls, cost: best.0 }
}

/// RHC flight control with nominal graph weights.
pub struct RhcController {
    params: RhcParams,
    model: RhcModel,
    region: SuccessRegion,
    weights: NominalWeights,
    rng: ChaCha8Rng,
}

impl RhcController {
    /// `seed` is the episode seed; the optimizer draws from its stream 2.
    pub fn new(config: &EpisodeConfig, params: RhcParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let actions = DiscreteActionSet::grid(config.limits.a_max, 3)?;
        let dt = config.scenario.epoch_dt;
        let phi = terminal_penalty(&config.reward, params.max_horizon, &actions, &config.limits, config.noise_sigma, dt);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        Ok(Self {
            params,
            model: RhcModel {
                reward: config.reward,
                limits: config.limits,
                dt,
                phi,
            },
            region: success_region(&config.thresholds),
            weights: NominalWeights {
                alpha: config.reward.alpha,
                lambda_d: config.reward.lambda_d,
                v_max: config.limits.v_max,
                epoch_dt: dt,
            },
            rng,
        })
    }

    fn first_action(&mut self, agent: &AgentState, position: [f64; 2], steps: usize, deadline: bool) -> ControlAction {
        let target = RhcTarget {
            position,
            steps,
            region: self.region,
            deadline,
        };
        rhc_plan(agent, &target, &self.params, &self.model, &mut self.rng).controls[0]
    }
}

impl Controller for RhcController {
    fn weights(&self) -> Option<&dyn EdgeWeights> {
        Some(&self.weights)
    }

    fn constrained_flight(&mut self, agent: &AgentState, target: [f64; 2], s_u: f64, _: &EtaHistory) -> FlightCommand {
        let steps = ((s_u / self.model.dt).ceil().max(1.0) as usize).min(self.params.max_horizon);
        FlightCommand::Control(self.first_action(agent, target, steps, true))
    }

    fn unconstrained_flight(&mut self, agent: &AgentState, goal: [f64; 2]) -> ControlAction {
        self.first_action(agent, goal, self.params.uf_horizon, false)
    }

    fn board_only_when_ready(&self) -> bool {
        true
    }
}

/// Runs one RHC episode on the same loop as the hierarchical planner.
pub fn run_episode_rhc(
    source: &mut dyn ScenarioSource,
    initial: DreamrState,
    goal: [f64; 2],
    config: &EpisodeConfig,
    params: RhcParams,
    seed: u64,
    record_trace: bool,
) -> Result<(EpisodeMetrics, EpisodeTrace)> {
    let mut controller = RhcController::new(config, params, seed)?;
    run_episode(source, initial, goal, &mut controller, config, seed, record_trace)
}
