//! Closed-loop episode driver: interleaves global replanning with the local
//! macro-action policies while the transit network streams in.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{clamp_to_workspace, reward, sample_noise, step_dynamics, AgentState, ControlAction, DynamicsLimits, RewardParams};
use crate::error::Result;
use crate::mdp::EtaHistory;
use crate::planner::{
    astar_implicit, EdgeKind, EdgeWeights, EtaBook, GraphVertex, PlannerConfig, RideFanout, RoutePlan, TransitEdge,
    ValueWeights, VertexKind,
};
use crate::policy::{cf_action, ride_action, uf_action, AbortParams, CfDecision, CfState, PolicyBundle, RideDecision};
use crate::transit::log::LogRecorder;
use crate::transit::{apply_interaction, AgentAction, BoardThresholds, DreamrState, InteractionContext, ScenarioConfig, ScenarioSource, VehicleId};

/// Settings shared by every planner for one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub scenario: ScenarioConfig,
    pub limits: DynamicsLimits,
    pub reward: RewardParams,
    pub thresholds: BoardThresholds,
    pub noise_sigma: f64,
    /// Epochs between periodic replans.
    pub replan_interval: u32,
    pub ride_fanout: RideFanout,
    pub cf_max_distance: f64,
    pub cf_max_gap: f64,
}

impl EpisodeConfig {
    pub fn planner_config(&self) -> PlannerConfig {
        PlannerConfig {
            alpha: self.reward.alpha,
            lambda_d: self.reward.lambda_d,
            v_max: self.limits.v_max,
            max_car_speed: self.scenario.max_car_speed,
            epoch_dt: self.scenario.epoch_dt,
            window: self.scenario.arrival_window(),
            board_dist: self.thresholds.board_dist,
            cf_max_distance: self.cf_max_distance,
            cf_max_gap: self.cf_max_gap,
            ride_fanout: self.ride_fanout,
            workspace_side: self.scenario.workspace_side,
        }
    }

    fn interaction(&self) -> InteractionContext {
        InteractionContext {
            thresholds: self.thresholds,
            limits: self.limits,
            dt: self.scenario.epoch_dt,
            workspace_side: self.scenario.workspace_side,
        }
    }

    fn at_goal(&self, state: &DreamrState, goal: [f64; 2]) -> bool {
        state.riding_on.is_none()
            && state.agent.distance_to(goal) <= self.thresholds.board_dist
            && state.agent.speed() <= self.thresholds.board_speed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Flight,
    Ride,
}

impl Mode {
    fn of(state: &DreamrState) -> Self {
        if state.riding_on.is_some() {
            Mode::Ride
        } else {
            Mode::Flight
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            Mode::Flight => "FLIGHT",
            Mode::Ride => "RIDE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutorState {
    pub mode: Mode,
    pub plan: RoutePlan,
    /// Epoch of the last plan.
    pub last_plan: u32,
    pub plan_flag: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlightCommand {
    Control(ControlAction),
    Abort,
}

/// What a planner contributes to the shared episode loop.
pub trait Controller {
    /// Edge weights for the graph search; `None` flies straight to the goal.
    fn weights(&self) -> Option<&dyn EdgeWeights>;
    fn constrained_flight(&mut self, agent: &AgentState, target: [f64; 2], s_u: f64, history: &EtaHistory) -> FlightCommand;
    fn unconstrained_flight(&mut self, agent: &AgentState, goal: [f64; 2]) -> ControlAction;
    /// Attempt BOARD only when its preconditions already hold, replanning otherwise.
    fn board_only_when_ready(&self) -> bool {
        false
    }
}

/// Hierarchical hybrid planning: value-function edge weights and the
/// offline macro-action policies.
pub struct HhpController<'a> {
    policies: &'a PolicyBundle,
    abort: AbortParams,
    weights: ValueWeights<'a>,
}

impl<'a> HhpController<'a> {
    pub fn new(policies: &'a PolicyBundle, beta: f64) -> Result<Self> {
        Ok(Self {
            policies,
            abort: AbortParams::new(beta)?,
            weights: ValueWeights { policies, beta },
        })
    }
}

impl Controller for HhpController<'_> {
    fn weights(&self) -> Option<&dyn EdgeWeights> {
        Some(&self.weights)
    }

    fn constrained_flight(&mut self, agent: &AgentState, target: [f64; 2], s_u: f64, history: &EtaHistory) -> FlightCommand {
        let s = CfState {
            s_c: crate::policy::relative_query(agent.position(), agent.velocity(), target),
            s_u,
        };
        match cf_action(&s, &self.policies.cf, history, &self.abort) {
            CfDecision::Control { control, .. } => FlightCommand::Control(control),
            CfDecision::Abort => FlightCommand::Abort,
        }
    }

    fn unconstrained_flight(&mut self, agent: &AgentState, goal: [f64; 2]) -> ControlAction {
        uf_action(agent, goal, &self.policies.uf)
    }
}

/// Flies straight to the goal with the unconstrained-flight policy.
pub struct DirectController<'a> {
    pub policies: &'a PolicyBundle,
}

impl Controller for DirectController<'_> {
    fn weights(&self) -> Option<&dyn EdgeWeights> {
        None
    }

    fn constrained_flight(&mut self, _: &AgentState, _: [f64; 2], _: f64, _: &EtaHistory) -> FlightCommand {
        FlightCommand::Abort
    }

    fn unconstrained_flight(&mut self, agent: &AgentState, goal: [f64; 2]) -> ControlAction {
        uf_action(agent, goal, &self.policies.uf)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    /// Alpha-independent energy: metres flown times `lambda_d` plus hover steps times `lambda_h`.
    pub energy: f64,
    /// Seconds until the goal was reached, or the episode length on failure.
    pub time_to_goal: f64,
    pub success: bool,
    pub hop_attempts: u32,
    pub hop_successes: u32,
    pub aborts: u32,
    pub replans: u32,
    pub flight_distance: f64,
    pub ride_epochs: u32,
    pub total_reward: f64,
    pub search_time: Duration,
    pub scenario_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TraceAction {
    Control(ControlAction),
    Board(VehicleId),
    Alight,
    Noop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub epoch: u32,
    /// Agent state at the start of the epoch.
    pub agent: AgentState,
    pub action: TraceAction,
    pub reward: f64,
    pub mode: Mode,
    pub riding: bool,
    pub edge: String,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeTrace {
    pub records: Vec<TraceRecord>,
}

impl EpisodeTrace {
    /// One `field:value` line per epoch.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let action = match r.action {
                TraceAction::Control(u) => format!("control:{},{}", u.ax, u.ay),
                TraceAction::Board(v) => format!("board:{v}"),
                TraceAction::Alight => "alight".to_string(),
                TraceAction::Noop => "noop".to_string(),
            };
            let a = &r.agent;
            let _ = writeln!(
                out,
                "epoch:{} px:{} py:{} vx:{} vy:{} action:{} reward:{} mode:{} edge:{}",
                r.epoch,
                a.px,
                a.py,
                a.vx,
                a.vy,
                action,
                r.reward,
                r.mode.code(),
                if r.edge.is_empty() { "-" } else { &r.edge }
            );
        }
        out
    }
}

/// Energy of a trace recomputed from its steps; riding steps are free.
pub fn energy_accumulator(trace: &EpisodeTrace) -> f64 {
    trace.records.iter().filter(|r| !r.riding).map(|r| r.energy).sum()
}

fn edge_label(e: &TransitEdge) -> String {
    match (e.target.vehicle, e.target.seq) {
        (Some(v), Some(s)) => format!("{}({v}:{s})", e.kind.code()),
        _ => e.kind.code().to_string(),
    }
}

fn target_alive(state: &DreamrState, target: &GraphVertex) -> bool {
    match (target.kind, target.vehicle, target.seq) {
        (VertexKind::Waypoint, Some(v), Some(s)) => state.routes.get(&v).is_some_and(|r| r.waypoint(s).is_some()),
        _ => true,
    }
}

/// Agent action chosen for an epoch, before simulation.
enum Dispatch {
    Act(AgentAction),
    Alight,
    Board(VehicleId),
    Abort,
}

struct Loop<'c, C: Controller + ?Sized> {
    config: &'c EpisodeConfig,
    goal: [f64; 2],
    controller: &'c mut C,
    etas: EtaBook,
    exec: ExecutorState,
    metrics: EpisodeMetrics,
}

impl<C: Controller + ?Sized> Loop<'_, C> {
    fn replan(&mut self, state: &DreamrState) -> Result<()> {
        let plan = match self.controller.weights() {
            Some(weights) => {
                let started = Instant::now();
                let (plan, _) = astar_implicit(state, self.goal, &self.etas, self.config.planner_config(), weights)?;
                self.metrics.search_time += started.elapsed();
                plan
            }
            None => direct_plan(state, self.goal),
        };
        self.exec.plan = plan;
        self.exec.last_plan = state.epoch;
        self.exec.plan_flag = false;
        self.metrics.replans += 1;
        Ok(())
    }

    fn dispatch(&mut self, state: &DreamrState) -> Dispatch {
        let Some(edge) = self.exec.plan.first().copied() else {
            return Dispatch::Act(AgentAction::Control(ControlAction::ZERO));
        };
        let window = self.config.scenario.arrival_window();
        match (self.exec.mode, edge.kind) {
            (Mode::Ride, EdgeKind::Ride) => match ride_action(state, edge.target.seq.unwrap_or(u32::MAX), window) {
                RideDecision::Alight => Dispatch::Alight,
                RideDecision::Noop => Dispatch::Act(AgentAction::Noop),
            },
            (Mode::Ride, _) => Dispatch::Act(AgentAction::Noop),
            (Mode::Flight, EdgeKind::ConstrainedFlight) => {
                let (Some(vid), Some(seq)) = (edge.target.vehicle, edge.target.seq) else {
                    return Dispatch::Abort;
                };
                let Some(w) = state.routes.get(&vid).and_then(|r| r.waypoint(seq)) else {
                    return Dispatch::Abort;
                };
                let s_u = w.eta - state.time;
                if s_u < window {
                    return Dispatch::Board(vid);
                }
                let history = self.etas.get(&(vid, seq)).copied().unwrap_or_default();
                match self.controller.constrained_flight(&state.agent, w.position, s_u, &history) {
                    FlightCommand::Control(u) => Dispatch::Act(AgentAction::Control(u)),
                    FlightCommand::Abort => Dispatch::Abort,
                }
            }
            (Mode::Flight, _) => Dispatch::Act(AgentAction::Control(
                self.controller.unconstrained_flight(&state.agent, self.goal),
            )),
        }
    }

    fn observe_etas(&mut self, state: &DreamrState) {
        for (&vid, route) in &state.routes {
            for w in &route.remaining {
                self.etas.entry((vid, w.seq)).or_default().observe(w.eta);
            }
        }
    }
}

fn direct_plan(state: &DreamrState, goal: [f64; 2]) -> RoutePlan {
    let source = GraphVertex {
        kind: VertexKind::Source,
        position: state.agent.position(),
        time: state.time,
        vehicle: None,
        seq: None,
    };
    let target = GraphVertex {
        kind: VertexKind::Goal,
        position: goal,
        time: f64::INFINITY,
        vehicle: None,
        seq: None,
    };
    RoutePlan {
        edges: vec![TransitEdge {
            kind: EdgeKind::UnconstrainedFlight,
            source,
            target,
            weight: 0.0,
        }],
        cost: 0.0,
    }
}

/// Runs one episode to success or timeout.
///
/// Agent noise comes from stream 1 of `seed`, one pair of draws per epoch.
pub fn run_episode<C: Controller + ?Sized>(
    source: &mut dyn ScenarioSource,
    initial: DreamrState,
    goal: [f64; 2],
    controller: &mut C,
    config: &EpisodeConfig,
    seed: u64,
    record_trace: bool,
) -> Result<(EpisodeMetrics, EpisodeTrace)> {
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
    noise_rng.set_stream(1);
    let mut state = initial;
    let mut recorder = LogRecorder::hash_only(&config.scenario, goal, state.fleet.initial_count);
    let ctx = config.interaction();
    let dt = config.scenario.epoch_dt;
    let sigma = config.noise_sigma;

    let mut lp = Loop {
        config,
        goal,
        controller,
        etas: EtaBook::new(),
        exec: ExecutorState {
            mode: Mode::of(&state),
            plan: RoutePlan::default(),
            last_plan: 0,
            plan_flag: true,
        },
        metrics: EpisodeMetrics::default(),
    };
    let mut trace = EpisodeTrace::default();

    for _ in 0..config.scenario.epochs {
        recorder.record(&state)?;
        lp.observe_etas(&state);
        if config.at_goal(&state, goal) {
            lp.metrics.success = true;
            lp.metrics.time_to_goal = state.time;
            break;
        }
        let noise = sample_noise(&mut noise_rng, sigma, sigma);
        let agent_before = state.agent;

        let mode = Mode::of(&state);
        if mode != lp.exec.mode {
            lp.exec.mode = mode;
            lp.exec.plan_flag = true;
        }
        if lp.exec.plan.first().is_some_and(|e| !target_alive(&state, &e.target)) {
            lp.exec.plan_flag = true;
        }
        if state.epoch.saturating_sub(lp.exec.last_plan) >= config.replan_interval {
            lp.exec.plan_flag = true;
        }

        let action;
        let mut aborts_this_epoch = 0;
        let mut alighted = false;
        let mut arrived = false;
        loop {
            if lp.exec.plan_flag {
                lp.replan(&state)?;
            }
            match lp.dispatch(&state) {
                Dispatch::Abort => {
                    lp.metrics.aborts += 1;
                    aborts_this_epoch += 1;
                    lp.exec.plan_flag = true;
                    if aborts_this_epoch >= 2 {
                        action = TraceAction::Control(ControlAction::ZERO);
                        break;
                    }
                }
                Dispatch::Alight if !alighted => {
                    let (next, _) = apply_interaction(&state, AgentAction::Alight, &ctx, [0.0; 2]);
                    state = next;
                    alighted = true;
                    lp.exec.mode = Mode::Flight;
                    lp.exec.plan_flag = true;
                    if config.at_goal(&state, goal) {
                        action = TraceAction::Alight;
                        arrived = true;
                        break;
                    }
                }
                Dispatch::Alight => {
                    action = TraceAction::Noop;
                    break;
                }
                Dispatch::Board(vid) => {
                    let ready = state
                        .routes
                        .get(&vid)
                        .is_some_and(|r| crate::transit::board_precondition(&state.agent, r, &config.thresholds));
                    if lp.controller.board_only_when_ready() && !ready {
                        lp.metrics.hop_attempts += 1;
                        lp.exec.plan_flag = true;
                        lp.replan(&state)?;
                        // keep flying under the new plan unless it boards again
                        match lp.dispatch(&state) {
                            Dispatch::Act(a) => {
                                action = trace_action(a);
                            }
                            _ => action = TraceAction::Control(ControlAction::ZERO),
                        }
                        break;
                    }
                    lp.metrics.hop_attempts += 1;
                    let (next, ok) = apply_interaction(&state, AgentAction::Board(vid), &ctx, [0.0; 2]);
                    lp.exec.plan_flag = true;
                    if ok {
                        lp.metrics.hop_successes += 1;
                        state = next;
                        lp.exec.mode = Mode::Ride;
                        action = TraceAction::Board(vid);
                    } else {
                        action = TraceAction::Control(ControlAction::ZERO);
                    }
                    break;
                }
                Dispatch::Act(a) => {
                    action = trace_action(a);
                    break;
                }
            }
        }

        if arrived {
            lp.metrics.success = true;
            lp.metrics.time_to_goal = state.time;
            if record_trace {
                trace.records.push(TraceRecord {
                    epoch: state.epoch,
                    agent: agent_before,
                    action,
                    reward: 0.0,
                    mode: Mode::Flight,
                    riding: false,
                    edge: lp.exec.plan.first().map(edge_label).unwrap_or_default(),
                    energy: 0.0,
                });
            }
            break;
        }

        // simulate the agent for this epoch
        let riding = state.riding_on.is_some();
        let step_energy;
        if riding {
            step_energy = 0.0;
            lp.metrics.ride_epochs += 1;
        } else {
            let u = match action {
                TraceAction::Control(u) => u,
                _ => ControlAction::ZERO,
            };
            let start = state.agent;
            let moved = step_dynamics(&start, u, dt, noise, &config.limits);
            state.agent = clamp_to_workspace(&moved, config.scenario.workspace_side);
            step_energy = config.reward.flight_energy(&start, &state.agent);
            lp.metrics.flight_distance += start.distance_to(state.agent.position());
        }
        lp.metrics.energy += step_energy;
        let r = reward(&agent_before, &state.agent, riding, &config.reward);
        lp.metrics.total_reward += r;
        if record_trace {
            trace.records.push(TraceRecord {
                epoch: state.epoch,
                agent: agent_before,
                action,
                reward: r,
                mode: Mode::of(&state),
                riding,
                edge: lp.exec.plan.first().map(edge_label).unwrap_or_default(),
                energy: step_energy,
            });
        }

        source.advance(&mut state)?;
    }
    if !lp.metrics.success {
        if config.at_goal(&state, goal) {
            lp.metrics.success = true;
            lp.metrics.time_to_goal = state.time;
        } else {
            lp.metrics.time_to_goal = config.scenario.epochs as f64 * dt;
        }
    }
    // the log covers the whole horizon so paired runs hash the same stream
    while state.epoch + 1 < config.scenario.epochs {
        source.advance(&mut state)?;
        recorder.record(&state)?;
    }
    lp.metrics.scenario_hash = recorder.finish()?;
    Ok((lp.metrics, trace))
}

fn trace_action(a: AgentAction) -> TraceAction {
    match a {
        AgentAction::Control(u) => TraceAction::Control(u),
        AgentAction::Board(v) => TraceAction::Board(v),
        AgentAction::Alight => TraceAction::Alight,
        AgentAction::Noop => TraceAction::Noop,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transit::{advance_epoch, dist, Fleet, LiveScenario, VehicleRoute, Waypoint};

    /// Deterministic source over hand-made routes: no perturbation, no spawns.
    struct Scripted {
        config: ScenarioConfig,
        rng: ChaCha8Rng,
    }

    impl ScenarioSource for Scripted {
        fn advance(&mut self, state: &mut DreamrState) -> Result<()> {
            advance_epoch(state, &self.config, &mut self.rng)
        }
    }

    /// Straight-line weights; flights are flown by a damped spring.
    struct Mock {
        abort_cf: bool,
        cf_calls: u32,
    }

    struct MockWeights;

    impl EdgeWeights for MockWeights {
        fn constrained_flight(&self, start: &AgentState, target: [f64; 2], _: f64, _: f64) -> Option<f64> {
            Some(0.001 * dist(start.position(), target))
        }

        fn unconstrained_flight(&self, start: &AgentState, goal: [f64; 2]) -> f64 {
            0.03 * dist(start.position(), goal)
        }
    }

    fn spring(agent: &AgentState, target: [f64; 2]) -> ControlAction {
        ControlAction::new(
            0.01 * (target[0] - agent.px) - 0.3 * agent.vx,
            0.01 * (target[1] - agent.py) - 0.3 * agent.vy,
        )
        .clamped(0.5)
    }

    impl Controller for Mock {
        fn weights(&self) -> Option<&dyn EdgeWeights> {
            Some(&MockWeights)
        }

        fn constrained_flight(&mut self, agent: &AgentState, target: [f64; 2], _: f64, _: &EtaHistory) -> FlightCommand {
            self.cf_calls += 1;
            if self.abort_cf {
                FlightCommand::Abort
            } else {
                FlightCommand::Control(spring(agent, target))
            }
        }

        fn unconstrained_flight(&mut self, agent: &AgentState, goal: [f64; 2]) -> ControlAction {
            spring(agent, goal)
        }
    }

    struct Idle;

    impl Controller for Idle {
        fn weights(&self) -> Option<&dyn EdgeWeights> {
            None
        }

        fn constrained_flight(&mut self, _: &AgentState, _: [f64; 2], _: f64, _: &EtaHistory) -> FlightCommand {
            FlightCommand::Abort
        }

        fn unconstrained_flight(&mut self, _: &AgentState, _: [f64; 2]) -> ControlAction {
            ControlAction::ZERO
        }
    }

    fn config(alpha: f64) -> EpisodeConfig {
        EpisodeConfig {
            scenario: ScenarioConfig {
                perturb_probability: 0.0,
                epochs: 120,
                ..ScenarioConfig::default()
            },
            limits: DynamicsLimits::default(),
            reward: RewardParams::default().with_alpha(alpha),
            thresholds: BoardThresholds::default(),
            noise_sigma: 0.0,
            replan_interval: 3,
            ride_fanout: RideFanout::All,
            cf_max_distance: 2000.0,
            cf_max_gap: 300.0,
        }
    }

    fn scripted(routes: Vec<VehicleRoute>, agent: [f64; 2], cfg: &EpisodeConfig) -> (Scripted, DreamrState) {
        let state = DreamrState {
            agent: AgentState::at_rest(agent),
            routes: routes.into_iter().map(|r| (r.vehicle_id, r)).collect(),
            riding_on: None,
            epoch: 0,
            time: 0.0,
            fleet: Fleet {
                initial_count: 0,
                next_id: 50,
            },
        };
        let source = Scripted {
            config: cfg.scenario,
            rng: ChaCha8Rng::seed_from_u64(0),
        };
        (source, state)
    }

    fn bus() -> VehicleRoute {
        VehicleRoute {
            vehicle_id: 1,
            current_position: [1000.0, 1000.0],
            anchor_position: [1000.0, 1000.0],
            anchor_time: 0.0,
            remaining: vec![
                Waypoint {
                    seq: 0,
                    position: [1000.0, 1000.0],
                    eta: 20.0,
                },
                Waypoint {
                    seq: 1,
                    position: [3000.0, 1000.0],
                    eta: 60.0,
                },
                Waypoint {
                    seq: 2,
                    position: [5000.0, 1000.0],
                    eta: 100.0,
                },
            ],
        }
    }

    #[test]
    fn rides_the_bus_to_the_goal() {
        let cfg = config(1.0);
        let (mut source, state) = scripted(vec![bus()], [1000.0, 1000.0], &cfg);
        let mut c = Mock {
            abort_cf: false,
            cf_calls: 0,
        };
        let (m, trace) = run_episode(&mut source, state, [5010.0, 1000.0], &mut c, &cfg, 1, true).unwrap();
        assert!(m.success);
        assert_eq!(m.time_to_goal, 100.0);
        assert_eq!((m.hop_attempts, m.hop_successes, m.aborts), (1, 1, 0));
        assert_eq!(m.ride_epochs, 16);
        assert_eq!(trace.records[4].action, TraceAction::Board(1));
        assert!(trace.records[..4].iter().all(|r| r.edge == "CF(1:0)"));
        assert!(trace.records[5..20].iter().all(|r| r.riding && r.action == TraceAction::Noop));
        assert_eq!(trace.records.len(), 21);
        assert_eq!(trace.records[20].action, TraceAction::Alight);
        assert_eq!(m.energy, energy_accumulator(&trace));
        assert_eq!(m.flight_distance, 0.0);
    }

    #[test]
    fn empty_network_flies_with_the_unconstrained_policy() {
        let cfg = config(0.5);
        let (mut source, state) = scripted(vec![], [0.0, 0.0], &cfg);
        let mut c = Mock {
            abort_cf: false,
            cf_calls: 0,
        };
        let (m, trace) = run_episode(&mut source, state, [300.0, 0.0], &mut c, &cfg, 5, true).unwrap();
        assert!(m.success);
        assert_eq!(c.cf_calls, 0);
        assert_eq!(m.hop_attempts, 0);
        assert!(trace.records.iter().all(|r| r.edge == "UF"));
        let steps = trace.records.len() as f64;
        assert_eq!(m.time_to_goal, steps * 5.0);
        assert!((m.energy - energy_accumulator(&trace)).abs() < 1e-12);
        assert!(m.flight_distance >= 280.0);
    }

    #[test]
    fn timeout_is_charged_the_full_episode() {
        let cfg = config(0.5);
        let (mut source, state) = scripted(vec![], [0.0, 0.0], &cfg);
        let (m, trace) = run_episode(&mut source, state, [3000.0, 0.0], &mut Idle, &cfg, 5, true).unwrap();
        assert!(!m.success);
        assert_eq!(m.time_to_goal, 600.0);
        assert_eq!(trace.records.len(), 120);
        // hovering in place every epoch
        assert!((m.energy - 120.0 * 0.5).abs() < 1e-9);
    }

    #[test]
    fn replans_at_least_every_interval() {
        let cfg = config(0.5);
        let (mut source, state) = scripted(vec![], [0.0, 0.0], &cfg);
        let (m, _) = run_episode(&mut source, state, [3000.0, 0.0], &mut Idle, &cfg, 5, false).unwrap();
        assert_eq!(m.replans, 40);
    }

    #[test]
    fn repeated_aborts_coast() {
        let cfg = config(1.0);
        let (mut source, state) = scripted(vec![bus()], [1000.0, 1000.0], &cfg);
        let mut c = Mock {
            abort_cf: true,
            cf_calls: 0,
        };
        let (m, trace) = run_episode(&mut source, state, [5010.0, 1000.0], &mut c, &cfg, 2, true).unwrap();
        // the controller is not consulted once the waypoint is due
        assert_eq!(m.aborts, 8);
        assert_eq!(m.hop_attempts, 1);
        assert!(trace.records[..4].iter().all(|r| r.action == TraceAction::Control(ControlAction::ZERO)));
    }

    #[test]
    fn runs_repeat_exactly() {
        let mut cfg = config(0.5);
        cfg.noise_sigma = 0.05;
        cfg.scenario = ScenarioConfig {
            initial_cars: [60, 60],
            epochs: 60,
            ..ScenarioConfig::default()
        };
        let run = |seed: u64, idle: bool| {
            let (mut source, state, goal) = LiveScenario::new(cfg.scenario, seed).unwrap();
            if idle {
                run_episode(&mut source, state, goal, &mut Idle, &cfg, seed, true).unwrap()
            } else {
                let mut c = Mock {
                    abort_cf: false,
                    cf_calls: 0,
                };
                run_episode(&mut source, state, goal, &mut c, &cfg, seed, true).unwrap()
            }
        };
        let (a, ta) = run(11, false);
        let (b, tb) = run(11, false);
        assert_eq!(ta, tb);
        assert_eq!((a.energy, a.replans, &a.scenario_hash), (b.energy, b.replans, &b.scenario_hash));
        // a different controller sees the same vehicle stream
        let (idle, _) = run(11, true);
        assert_eq!(idle.scenario_hash, a.scenario_hash);
        assert_ne!(run(12, true).0.scenario_hash, a.scenario_hash);
    }

    #[test]
    fn trace_text_has_one_line_per_epoch() {
        let cfg = config(0.5);
        let (mut source, state) = scripted(vec![bus()], [1000.0, 1000.0], &cfg);
        let mut c = Mock {
            abort_cf: false,
            cf_calls: 0,
        };
        let (_, trace) = run_episode(&mut source, state, [5010.0, 1000.0], &mut c, &cfg, 1, true).unwrap();
        let text = trace.to_text();
        assert_eq!(text.lines().count(), trace.records.len());
        assert!(text.lines().nth(4).unwrap().contains("action:board:1"));
        assert!(text.lines().next().unwrap().starts_with("epoch:0 px:1000 py:1000"));
    }
}
