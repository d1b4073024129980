//! Global layer: implicit time-dependent graph over vehicle waypoints and
//! A* search for the cheapest sequence of flights and rides to the goal.
//!
//! Search nodes are the source (the agent now), each waypoint twice (just
//! boarded after a constrained flight, or just alighted after a ride), and
//! the goal. Node ids are `0` for the source, `1 + 2i` / `2 + 2i` for
//! boarded / alighted at waypoint `i`, and `1 + 2n` for the goal.
//!
//! Costs are in per-epoch reward units: one epoch of elapsed time costs
//! `1 - alpha`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::{Duration, Instant};

use ordered_float::OrderedFloat;
use serde::{Deserialize, Serialize};

use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::mdp::EtaHistory;
use crate::policy::{relative_query, CfState, PolicyBundle};
use crate::transit::{dist, DreamrState, VehicleId};

/// Observed ETA statistics per `(vehicle, waypoint seq)`.
pub type EtaBook = HashMap<(VehicleId, u32), EtaHistory>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    ConstrainedFlight,
    Ride,
    UnconstrainedFlight,
}

impl EdgeKind {
    pub fn code(self) -> &'static str {
        match self {
            EdgeKind::ConstrainedFlight => "CF",
            EdgeKind::Ride => "RIDE",
            EdgeKind::UnconstrainedFlight => "UF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexKind {
    Source,
    Waypoint,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphVertex {
    pub kind: VertexKind,
    pub position: [f64; 2],
    /// Absolute time in seconds; infinite for the goal.
    pub time: f64,
    pub vehicle: Option<VehicleId>,
    pub seq: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitEdge {
    pub kind: EdgeKind,
    pub source: GraphVertex,
    pub target: GraphVertex,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RoutePlan {
    pub edges: Vec<TransitEdge>,
    pub cost: f64,
}

impl RoutePlan {
    pub fn first(&self) -> Option<&TransitEdge> {
        self.edges.first()
    }

    /// Compact description, e.g. `CF(3:4) RIDE(3:9) UF`.
    pub fn signature(&self) -> String {
        self.edges
            .iter()
            .map(|e| match (e.target.vehicle, e.target.seq) {
                (Some(v), Some(s)) => format!("{}({v}:{s})", e.kind.code()),
                _ => e.kind.code().to_string(),
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RideFanout {
    /// Ride edges to every later waypoint of the vehicle.
    All,
    /// Ride edges to the next waypoint only.
    Adjacent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub alpha: f64,
    pub lambda_d: f64,
    pub v_max: f64,
    pub max_car_speed: f64,
    pub epoch_dt: f64,
    /// Half-epoch arrival window.
    pub window: f64,
    pub board_dist: f64,
    /// Longest constrained flight considered (the extent of its value grid).
    pub cf_max_distance: f64,
    /// Longest constrained-flight time gap considered (`K` horizons).
    pub cf_max_gap: f64,
    pub ride_fanout: RideFanout,
    pub workspace_side: f64,
}

/// Weights of flight edges. `None` screens a constrained flight out.
pub trait EdgeWeights {
    fn constrained_flight(&self, start: &AgentState, target: [f64; 2], s_u: f64, sigma: f64) -> Option<f64>;
    fn unconstrained_flight(&self, start: &AgentState, goal: [f64; 2]) -> f64;
}

/// Negated macro-action values, with the abort test as an edge screen.
pub struct ValueWeights<'a> {
    pub policies: &'a PolicyBundle,
    pub beta: f64,
}

impl EdgeWeights for ValueWeights<'_> {
    fn constrained_flight(&self, start: &AgentState, target: [f64; 2], s_u: f64, sigma: f64) -> Option<f64> {
        let s = CfState {
            s_c: relative_query(start.position(), start.velocity(), target),
            s_u,
        };
        if self.policies.cf.should_abort(&s, self.beta) {
            return None;
        }
        Some((-self.policies.cf.mixture(&s, sigma).1).max(0.0))
    }

    fn unconstrained_flight(&self, start: &AgentState, goal: [f64; 2]) -> f64 {
        (-self.policies.uf.value(start, goal)).max(0.0)
    }
}

/// Elapsed-time cost of riding between two ETAs.
pub fn ride_edge_cost(tau_from: f64, tau_to: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * (tau_to - tau_from)
}

/// Time-weighted straight-line travel at the fastest vehicle speed.
pub fn heuristic(position: [f64; 2], goal: [f64; 2], alpha: f64, max_car_speed: f64) -> f64 {
    (1.0 - alpha) * dist(position, goal) / max_car_speed
}

#[derive(Debug, Clone, Copy)]
struct WaypointNode {
    vehicle: VehicleId,
    seq: u32,
    position: [f64; 2],
    eta: f64,
    sigma: f64,
    /// Index one past the last waypoint of the same vehicle.
    route_end: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SearchStats {
    pub vertices: usize,
    pub expanded: usize,
    pub evaluated: usize,
    pub max_frontier: usize,
    pub setup: Duration,
    pub search: Duration,
}

/// Buckets waypoints on a square grid, each bucket sorted by ETA.
struct SpatialIndex {
    cell: f64,
    cols: usize,
    buckets: Vec<Vec<u32>>,
}

impl SpatialIndex {
    fn build(nodes: &[WaypointNode], cell: f64, side: f64) -> Self {
        let cols = ((side / cell).ceil() as usize).max(1);
        let mut buckets = vec![Vec::new(); cols * cols];
        for (i, w) in nodes.iter().enumerate() {
            let (cx, cy) = Self::cell_of(w.position, cell, cols);
            buckets[cy * cols + cx].push(i as u32);
        }
        for b in &mut buckets {
            b.sort_by(|&a, &b| {
                let (wa, wb) = (&nodes[a as usize], &nodes[b as usize]);
                wa.eta.total_cmp(&wb.eta).then(a.cmp(&b))
            });
        }
        Self { cell, cols, buckets }
    }

    fn cell_of(p: [f64; 2], cell: f64, cols: usize) -> (usize, usize) {
        let c = |x: f64| ((x / cell).floor().max(0.0) as usize).min(cols - 1);
        (c(p[0]), c(p[1]))
    }

    /// Waypoints within `radius` cells of `p` whose ETA lies in `[t0, t1]`.
    fn query(&self, nodes: &[WaypointNode], p: [f64; 2], radius: f64, t0: f64, t1: f64, out: &mut Vec<u32>) {
        out.clear();
        let c = |x: f64| ((x / self.cell).floor().max(0.0) as usize).min(self.cols - 1);
        let (x0, x1) = (c(p[0] - radius), c(p[0] + radius));
        let (y0, y1) = (c(p[1] - radius), c(p[1] + radius));
        for cy in y0..=y1 {
            for cx in x0..=x1 {
                let b = &self.buckets[cy * self.cols + cx];
                let start = b.partition_point(|&i| nodes[i as usize].eta < t0);
                for &i in &b[start..] {
                    if nodes[i as usize].eta > t1 {
                        break;
                    }
                    out.push(i);
                }
            }
        }
        out.sort_unstable();
    }
}

/// The graph of one planning instant: vertex table, spatial index and the
/// bookkeeping the successor function needs.
pub struct TransitGraph<'a> {
    state: &'a DreamrState,
    goal: [f64; 2],
    config: PlannerConfig,
    nodes: Vec<WaypointNode>,
    index: SpatialIndex,
    /// Speed used by the heuristic; at least the fastest segment of any
    /// current route, so ride edges never undercut it.
    heuristic_speed: f64,
    /// Waypoint range of the vehicle being ridden, if any.
    riding: Option<(u32, u32)>,
    pub setup_time: Duration,
}

pub type NodeId = u32;
pub const SOURCE: NodeId = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NodeRole {
    Source,
    Boarded(u32),
    Alighted(u32),
    Goal,
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct Entry {
    f: OrderedFloat<f64>,
    node: NodeId,
    /// Source node of a not yet evaluated constrained flight.
    lazy_from: Option<NodeId>,
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; smallest f, then lowest ids, pop first.
        other
            .f
            .cmp(&self.f)
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.lazy_from.cmp(&self.lazy_from))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A successor before its weight is known.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    to: NodeId,
    kind: EdgeKind,
    /// Cheap bound that the final weight never undercuts.
    lower: f64,
}

impl<'a> TransitGraph<'a> {
    pub fn build(state: &'a DreamrState, goal: [f64; 2], etas: &EtaBook, config: PlannerConfig) -> Self {
        let started = Instant::now();
        let mut nodes = Vec::with_capacity(state.waypoint_count());
        let mut heuristic_speed = config.max_car_speed;
        let mut riding = None;
        for (&vid, route) in &state.routes {
            let begin = nodes.len() as u32;
            let end = begin + route.remaining.len() as u32;
            for (j, w) in route.remaining.iter().enumerate() {
                if j > 0 {
                    let prev = &route.remaining[j - 1];
                    let speed = dist(prev.position, w.position) / (w.eta - prev.eta);
                    heuristic_speed = heuristic_speed.max(speed);
                }
                nodes.push(WaypointNode {
                    vehicle: vid,
                    seq: w.seq,
                    position: w.position,
                    eta: w.eta,
                    sigma: etas.get(&(vid, w.seq)).map_or(EtaHistory::SIGMA_FLOOR, EtaHistory::sigma),
                    route_end: end,
                });
            }
            if state.riding_on == Some(vid) {
                riding = Some((begin, end));
            }
        }
        let index = SpatialIndex::build(&nodes, config.cf_max_distance.max(1.0), config.workspace_side);
        Self {
            state,
            goal,
            config,
            nodes,
            index,
            heuristic_speed,
            riding,
            setup_time: started.elapsed(),
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.nodes.len() + 2
    }

    pub fn goal_node(&self) -> NodeId {
        1 + 2 * self.nodes.len() as NodeId
    }

    fn role(&self, id: NodeId) -> NodeRole {
        if id == SOURCE {
            NodeRole::Source
        } else if id == self.goal_node() {
            NodeRole::Goal
        } else if id % 2 == 1 {
            NodeRole::Boarded((id - 1) / 2)
        } else {
            NodeRole::Alighted((id - 2) / 2)
        }
    }

    pub fn vertex(&self, id: NodeId) -> GraphVertex {
        match self.role(id) {
            NodeRole::Source => GraphVertex {
                kind: VertexKind::Source,
                position: self.state.agent.position(),
                time: self.state.time,
                vehicle: None,
                seq: None,
            },
            NodeRole::Goal => GraphVertex {
                kind: VertexKind::Goal,
                position: self.goal,
                time: f64::INFINITY,
                vehicle: None,
                seq: None,
            },
            NodeRole::Boarded(i) | NodeRole::Alighted(i) => {
                let w = &self.nodes[i as usize];
                GraphVertex {
                    kind: VertexKind::Waypoint,
                    position: w.position,
                    time: w.eta,
                    vehicle: Some(w.vehicle),
                    seq: Some(w.seq),
                }
            }
        }
    }

    pub fn heuristic(&self, id: NodeId) -> f64 {
        let p = self.vertex(id).position;
        heuristic(p, self.goal, self.config.alpha, self.heuristic_speed * self.config.epoch_dt)
    }

    /// Agent state assumed at the start of a flight from `id`.
    fn flight_start(&self, id: NodeId) -> AgentState {
        match self.role(id) {
            NodeRole::Source => self.state.agent,
            _ => AgentState::at_rest(self.vertex(id).position),
        }
    }

    fn flight_lower_bound(&self, from: NodeId, to: NodeId, d: f64, seconds: f64) -> f64 {
        let c = &self.config;
        let energy = c.alpha * c.lambda_d * (d - c.board_dist).max(0.0);
        let time = (1.0 - c.alpha) * seconds.max(0.0) / c.epoch_dt;
        (energy + time).max(self.heuristic(from) - self.heuristic(to)).max(0.0)
    }

    fn candidates(&self, from: NodeId, scratch: &mut Vec<u32>, out: &mut Vec<Candidate>) {
        out.clear();
        let c = &self.config;
        let role = self.role(from);
        let flying_source = role == NodeRole::Source && self.state.riding_on.is_none();
        let goal = self.goal_node();

        // constrained flights to other vehicles
        if flying_source || matches!(role, NodeRole::Alighted(_)) {
            let v = self.vertex(from);
            let (t0, own_vehicle, slack) = match role {
                NodeRole::Alighted(i) => (v.time, Some(self.nodes[i as usize].vehicle), 0.0),
                _ => (self.state.time - c.window, None, c.window),
            };
            self.index.query(
                &self.nodes,
                v.position,
                c.cf_max_distance,
                t0,
                v.time + c.cf_max_gap,
                scratch,
            );
            for &i in scratch.iter() {
                let w = &self.nodes[i as usize];
                if Some(w.vehicle) == own_vehicle {
                    continue;
                }
                let d = dist(v.position, w.position);
                let gap = w.eta - v.time;
                if d > c.cf_max_distance || d > c.v_max * (gap + slack) {
                    continue;
                }
                let to = 1 + 2 * i;
                out.push(Candidate {
                    to,
                    kind: EdgeKind::ConstrainedFlight,
                    lower: self.flight_lower_bound(from, to, d, gap),
                });
            }
        }

        // rides along the current vehicle
        let ride_range = match role {
            NodeRole::Boarded(i) => Some((i + 1, self.nodes[i as usize].route_end)),
            NodeRole::Source => self.riding,
            _ => None,
        };
        if let Some((begin, end)) = ride_range {
            let end = match c.ride_fanout {
                RideFanout::All => end,
                RideFanout::Adjacent => end.min(begin + 1),
            };
            let t_from = self.vertex(from).time;
            for i in begin..end {
                let to = 2 + 2 * i;
                let w = ride_edge_cost(t_from, self.nodes[i as usize].eta, c.alpha).max(0.0) / c.epoch_dt;
                let lower = w.max(self.heuristic(from) - self.heuristic(to));
                out.push(Candidate {
                    to,
                    kind: EdgeKind::Ride,
                    lower,
                });
            }
        }

        // the goal is a neighbour of every node the agent can fly from
        if role != NodeRole::Goal && !(role == NodeRole::Source && self.state.riding_on.is_some()) {
            let v = self.vertex(from);
            let d = dist(v.position, self.goal);
            let seconds = (d - c.board_dist).max(0.0) / c.v_max;
            out.push(Candidate {
                to: goal,
                kind: EdgeKind::UnconstrainedFlight,
                lower: self.flight_lower_bound(from, goal, d, seconds),
            });
        }
    }

    /// Final weight of a candidate edge, or `None` if it is screened out.
    fn evaluate(&self, from: NodeId, cand: &Candidate, weights: &dyn EdgeWeights) -> Option<f64> {
        match cand.kind {
            EdgeKind::Ride => Some(cand.lower),
            EdgeKind::UnconstrainedFlight => {
                let w = weights.unconstrained_flight(&self.flight_start(from), self.goal);
                Some(w.max(cand.lower))
            }
            EdgeKind::ConstrainedFlight => {
                let target = &self.nodes[((cand.to - 1) / 2) as usize];
                let s_u = target.eta - self.vertex(from).time;
                let w = weights.constrained_flight(&self.flight_start(from), target.position, s_u, target.sigma)?;
                Some(w.max(cand.lower))
            }
        }
    }

    /// Every outgoing edge of a node with its weight.
    pub fn successors(&self, from: NodeId, weights: &dyn EdgeWeights) -> Vec<(NodeId, TransitEdge)> {
        let mut scratch = Vec::new();
        let mut cands = Vec::new();
        self.candidates(from, &mut scratch, &mut cands);
        cands
            .iter()
            .filter_map(|c| {
                let w = self.evaluate(from, c, weights)?;
                Some((c.to, self.edge(from, c.to, c.kind, w)))
            })
            .collect()
    }

    fn edge(&self, from: NodeId, to: NodeId, kind: EdgeKind, weight: f64) -> TransitEdge {
        TransitEdge {
            kind,
            source: self.vertex(from),
            target: self.vertex(to),
            weight,
        }
    }

    /// A* from the source to the goal. Constrained flights enter the open
    /// list under their lower bound and are only evaluated when popped.
    pub fn search(&self, weights: &dyn EdgeWeights) -> Result<(RoutePlan, SearchStats)> {
        let started = Instant::now();
        let n = self.vertex_count() * 2;
        let goal = self.goal_node();
        let mut g = vec![f64::INFINITY; n];
        let mut parent: Vec<Option<(NodeId, EdgeKind, f64)>> = vec![None; n];
        let mut closed = vec![false; n];
        let mut open = BinaryHeap::new();
        let mut stats = SearchStats {
            vertices: self.vertex_count(),
            setup: self.setup_time,
            ..SearchStats::default()
        };
        let mut scratch = Vec::new();
        let mut cands = Vec::new();
        let mut lazy: HashMap<(NodeId, NodeId), Candidate> = HashMap::new();

        g[SOURCE as usize] = 0.0;
        open.push(Entry {
            f: OrderedFloat(self.heuristic(SOURCE)),
            node: SOURCE,
            lazy_from: None,
        });

        while let Some(entry) = open.pop() {
            stats.max_frontier = stats.max_frontier.max(open.len() + 1);
            let v = entry.node;
            if closed[v as usize] {
                continue;
            }
            if let Some(u) = entry.lazy_from {
                let cand = lazy.remove(&(u, v)).expect("lazy edge recorded");
                stats.evaluated += 1;
                if let Some(w) = self.evaluate(u, &cand, weights) {
                    let ng = g[u as usize] + w;
                    if ng < g[v as usize] {
                        g[v as usize] = ng;
                        parent[v as usize] = Some((u, cand.kind, w));
                        open.push(Entry {
                            f: OrderedFloat(ng + self.heuristic(v)),
                            node: v,
                            lazy_from: None,
                        });
                    }
                }
                continue;
            }
            if entry.f.0 > g[v as usize] + self.heuristic(v) {
                continue;
            }
            closed[v as usize] = true;
            stats.expanded += 1;
            if v == goal {
                stats.search = started.elapsed();
                return Ok((self.reconstruct(&parent, goal, g[goal as usize]), stats));
            }
            let gv = g[v as usize];
            self.candidates(v, &mut scratch, &mut cands);
            for cand in &cands {
                let to = cand.to;
                if closed[to as usize] || gv + cand.lower >= g[to as usize] {
                    continue;
                }
                if cand.kind == EdgeKind::ConstrainedFlight {
                    lazy.insert((v, to), *cand);
                    open.push(Entry {
                        f: OrderedFloat(gv + cand.lower + self.heuristic(to)),
                        node: to,
                        lazy_from: Some(v),
                    });
                    continue;
                }
                stats.evaluated += 1;
                if let Some(w) = self.evaluate(v, cand, weights) {
                    let ng = gv + w;
                    if ng < g[to as usize] {
                        g[to as usize] = ng;
                        parent[to as usize] = Some((v, cand.kind, w));
                        open.push(Entry {
                            f: OrderedFloat(ng + self.heuristic(to)),
                            node: to,
                            lazy_from: None,
                        });
                    }
                }
            }
        }
        Err(Error::NoPath)
    }

    fn reconstruct(&self, parent: &[Option<(NodeId, EdgeKind, f64)>], goal: NodeId, cost: f64) -> RoutePlan {
        let mut edges = Vec::new();
        let mut v = goal;
        while let Some((u, kind, w)) = parent[v as usize] {
            edges.push(self.edge(u, v, kind, w));
            v = u;
        }
        edges.reverse();
        RoutePlan { edges, cost }
    }
}

/// Builds the graph for `state` and searches it.
pub fn astar_implicit(
    state: &DreamrState,
    goal: [f64; 2],
    etas: &EtaBook,
    config: PlannerConfig,
    weights: &dyn EdgeWeights,
) -> Result<(RoutePlan, SearchStats)> {
    TransitGraph::build(state, goal, etas, config).search(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transit::{Fleet, VehicleRoute, Waypoint};
    use proptest::prelude::*;

    /// Flight weights that only depend on geometry and time gap.
    struct Linear;

    impl EdgeWeights for Linear {
        fn constrained_flight(&self, start: &AgentState, target: [f64; 2], s_u: f64, _: f64) -> Option<f64> {
            if s_u > 250.0 {
                return None;
            }
            Some(0.02 * dist(start.position(), target) + 0.1 * s_u.max(0.0))
        }

        fn unconstrained_flight(&self, start: &AgentState, goal: [f64; 2]) -> f64 {
            0.03 * dist(start.position(), goal)
        }
    }

    fn config(alpha: f64) -> PlannerConfig {
        PlannerConfig {
            alpha,
            lambda_d: 0.01,
            v_max: 20.0,
            max_car_speed: 50.0,
            epoch_dt: 5.0,
            window: 2.5,
            board_dist: 20.0,
            cf_max_distance: 2000.0,
            cf_max_gap: 300.0,
            ride_fanout: RideFanout::All,
            workspace_side: 10_000.0,
        }
    }

    fn route(id: VehicleId, points: &[([f64; 2], f64)]) -> VehicleRoute {
        VehicleRoute {
            vehicle_id: id,
            current_position: points[0].0,
            anchor_position: points[0].0,
            anchor_time: 0.0,
            remaining: points
                .iter()
                .enumerate()
                .map(|(i, &(position, eta))| Waypoint {
                    seq: i as u32,
                    position,
                    eta,
                })
                .collect(),
        }
    }

    fn state(agent: [f64; 2], routes: Vec<VehicleRoute>) -> DreamrState {
        DreamrState {
            agent: AgentState::at_rest(agent),
            routes: routes.into_iter().map(|r| (r.vehicle_id, r)).collect(),
            riding_on: None,
            epoch: 0,
            time: 0.0,
            fleet: Fleet {
                initial_count: 1,
                next_id: 100,
            },
        }
    }

    /// Cheapest source-to-goal cost over every path the successor function allows.
    fn brute_force(graph: &TransitGraph, weights: &dyn EdgeWeights) -> f64 {
        fn walk(graph: &TransitGraph, weights: &dyn EdgeWeights, v: NodeId, g: f64, best: &mut f64, depth: usize) {
            if v == graph.goal_node() {
                *best = best.min(g);
                return;
            }
            assert!(depth < 64, "cycle in the transit graph");
            for (to, e) in graph.successors(v, weights) {
                walk(graph, weights, to, g + e.weight, best, depth + 1);
            }
        }
        let mut best = f64::INFINITY;
        walk(graph, weights, SOURCE, 0.0, &mut best, 0);
        best
    }

    #[test]
    fn empty_network_flies_directly() {
        let s = state([100.0, 100.0], vec![]);
        let (plan, _) = astar_implicit(&s, [900.0, 900.0], &EtaBook::new(), config(0.5), &Linear).unwrap();
        assert_eq!(plan.edges.len(), 1);
        assert_eq!(plan.edges[0].kind, EdgeKind::UnconstrainedFlight);
        assert_eq!(plan.edges[0].target.kind, VertexKind::Goal);
        assert_eq!(plan.edges[0].target.time, f64::INFINITY);
    }

    #[test]
    fn boarding_first_of_three_waypoints_offers_two_rides() {
        let s = state(
            [0.0, 0.0],
            vec![route(7, &[([100.0, 0.0], 50.0), ([600.0, 0.0], 80.0), ([1100.0, 0.0], 110.0)])],
        );
        let graph = TransitGraph::build(&s, [5000.0, 0.0], &EtaBook::new(), config(0.5));
        let rides: Vec<_> = graph
            .successors(1, &Linear)
            .into_iter()
            .filter(|(_, e)| e.kind == EdgeKind::Ride)
            .collect();
        assert_eq!(rides.len(), 2);
        assert!(rides.iter().all(|(_, e)| e.target.vehicle == Some(7) && e.target.time > e.source.time));

        let mut cfg = config(0.5);
        cfg.ride_fanout = RideFanout::Adjacent;
        let graph = TransitGraph::build(&s, [5000.0, 0.0], &EtaBook::new(), cfg);
        let rides = graph.successors(1, &Linear).into_iter().filter(|(_, e)| e.kind == EdgeKind::Ride).count();
        assert_eq!(rides, 1);
    }

    #[test]
    fn unreachable_waypoint_gets_no_flight() {
        // 1500 m in 30 s needs 50 m/s, more than the agent can fly
        let s = state([0.0, 0.0], vec![route(1, &[([1500.0, 0.0], 30.0), ([1000.0, 0.0], 60.0)])]);
        let graph = TransitGraph::build(&s, [5000.0, 0.0], &EtaBook::new(), config(0.5));
        let cf = graph
            .successors(SOURCE, &Linear)
            .into_iter()
            .filter(|(_, e)| e.kind == EdgeKind::ConstrainedFlight)
            .count();
        assert_eq!(cf, 1);
        let target = graph.successors(SOURCE, &Linear)[0].1.target;
        assert_eq!(target.seq, Some(1));
    }

    #[test]
    fn every_expansion_has_one_goal_edge() {
        let s = state(
            [0.0, 0.0],
            vec![
                route(1, &[([100.0, 0.0], 50.0), ([600.0, 0.0], 80.0)]),
                route(2, &[([700.0, 100.0], 120.0), ([900.0, 900.0], 160.0)]),
            ],
        );
        let graph = TransitGraph::build(&s, [3000.0, 3000.0], &EtaBook::new(), config(0.5));
        for v in 0..graph.goal_node() {
            let uf = graph
                .successors(v, &Linear)
                .into_iter()
                .filter(|(to, e)| e.kind == EdgeKind::UnconstrainedFlight && *to == graph.goal_node())
                .count();
            assert_eq!(uf, 1, "node {v}");
        }
        assert!(graph.successors(graph.goal_node(), &Linear).is_empty());
    }

    #[test]
    fn ride_cost_examples() {
        assert_eq!(ride_edge_cost(100.0, 160.0, 1.0), 0.0);
        assert_eq!(ride_edge_cost(20.0, 30.0, 0.5), 5.0);
        assert_eq!(ride_edge_cost(20.0, 30.0, 0.0), 10.0);
    }

    #[test]
    fn heuristic_examples() {
        assert_eq!(heuristic([3.0, 4.0], [3.0, 4.0], 0.3, 50.0), 0.0);
        assert_eq!(heuristic([0.0, 0.0], [9000.0, 0.0], 1.0, 50.0), 0.0);
        assert_eq!(heuristic([0.0, 0.0], [3000.0, 4000.0], 0.0, 50.0), 100.0);
    }

    #[test]
    fn screened_flights_are_dropped() {
        let s = state([0.0, 0.0], vec![route(1, &[([100.0, 0.0], 280.0)])]);
        let graph = TransitGraph::build(&s, [5000.0, 0.0], &EtaBook::new(), config(0.5));
        let kinds: Vec<_> = graph.successors(SOURCE, &Linear).into_iter().map(|(_, e)| e.kind).collect();
        assert_eq!(kinds, vec![EdgeKind::UnconstrainedFlight]);
    }

    #[test]
    fn riding_source_only_rides() {
        let mut s = state(
            [100.0, 0.0],
            vec![
                route(1, &[([600.0, 0.0], 20.0), ([1100.0, 0.0], 40.0)]),
                route(2, &[([200.0, 0.0], 30.0)]),
            ],
        );
        s.riding_on = Some(1);
        let graph = TransitGraph::build(&s, [5000.0, 0.0], &EtaBook::new(), config(0.5));
        let succ = graph.successors(SOURCE, &Linear);
        assert_eq!(succ.len(), 2);
        assert!(succ.iter().all(|(_, e)| e.kind == EdgeKind::Ride && e.target.vehicle == Some(1)));
    }

    #[test]
    fn energy_only_prefers_a_ride_toward_the_goal() {
        let s = state(
            [0.0, 0.0],
            vec![route(1, &[([200.0, 0.0], 40.0), ([2000.0, 0.0], 100.0), ([4000.0, 0.0], 160.0)])],
        );
        let goal = [4100.0, 0.0];
        let graph = TransitGraph::build(&s, goal, &EtaBook::new(), config(1.0));
        let (plan, _) = graph.search(&Linear).unwrap();
        let kinds: Vec<_> = plan.edges.iter().map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![EdgeKind::ConstrainedFlight, EdgeKind::Ride, EdgeKind::UnconstrainedFlight]
        );
        assert_eq!(plan.cost, brute_force(&graph, &Linear));
        assert_eq!(plan.signature(), "CF(1:0) RIDE(1:2) UF");
    }

    #[test]
    fn plan_cost_is_the_sum_of_its_edges() {
        let s = state(
            [0.0, 0.0],
            vec![
                route(1, &[([200.0, 0.0], 40.0), ([2000.0, 0.0], 100.0)]),
                route(2, &[([2100.0, 300.0], 150.0), ([3500.0, 300.0], 200.0)]),
            ],
        );
        let (plan, _) = astar_implicit(&s, [3600.0, 400.0], &EtaBook::new(), config(0.5), &Linear).unwrap();
        let sum = plan.edges.iter().fold(0.0, |acc, e| acc + e.weight);
        assert_eq!(plan.cost, sum);
        for pair in plan.edges.windows(2) {
            assert!(pair[0].target.time <= pair[1].target.time);
            assert_eq!(pair[0].target.position, pair[1].source.position);
        }
    }

    fn arb_state() -> impl Strategy<Value = (DreamrState, [f64; 2], f64)> {
        let waypoint = (0.0..3000.0f64, 0.0..3000.0f64, 1.0..80.0f64);
        let vehicle = prop::collection::vec(waypoint, 1..=3);
        (
            prop::collection::vec(vehicle, 0..=3),
            (0.0..3000.0f64, 0.0..3000.0f64),
            (0.0..3000.0f64, 0.0..3000.0f64),
            0.0..=1.0f64,
            any::<bool>(),
        )
            .prop_map(|(vehicles, agent, goal, alpha, ride)| {
                let mut routes = Vec::new();
                let mut total = 0;
                for (i, wps) in vehicles.into_iter().enumerate() {
                    let keep = wps.len().min(8 - total);
                    if keep == 0 {
                        break;
                    }
                    total += keep;
                    let mut eta = 0.0;
                    let points: Vec<_> = wps[..keep]
                        .iter()
                        .map(|&(x, y, gap)| {
                            eta += gap;
                            ([x, y], eta)
                        })
                        .collect();
                    routes.push(route(i as VehicleId + 1, &points));
                }
                let mut s = state([agent.0, agent.1], routes);
                if ride && !s.routes.is_empty() {
                    s.riding_on = Some(1);
                }
                (s, [goal.0, goal.1], alpha)
            })
    }

    proptest! {
        #[test]
        fn search_matches_exhaustive_enumeration((s, goal, alpha) in arb_state()) {
            let graph = TransitGraph::build(&s, goal, &EtaBook::new(), config(alpha));
            let (plan, stats) = graph.search(&Linear).unwrap();
            prop_assert_eq!(plan.cost, brute_force(&graph, &Linear));
            prop_assert!(stats.expanded <= graph.goal_node() as usize + 1);
        }

        #[test]
        fn heuristic_never_overestimates((s, goal, alpha) in arb_state()) {
            let graph = TransitGraph::build(&s, goal, &EtaBook::new(), config(alpha));
            let (plan, _) = graph.search(&Linear).unwrap();
            let mut remaining = plan.cost;
            for e in &plan.edges {
                let h = heuristic(e.source.position, goal, alpha, graph.heuristic_speed * 5.0);
                prop_assert!(h <= remaining + 1e-9);
                remaining -= e.weight;
            }
        }

        #[test]
        fn repeated_searches_agree((s, goal, alpha) in arb_state()) {
            let before = s.clone();
            let a = astar_implicit(&s, goal, &EtaBook::new(), config(alpha), &Linear).unwrap().0;
            let b = astar_implicit(&s, goal, &EtaBook::new(), config(alpha), &Linear).unwrap().0;
            prop_assert_eq!(a, b);
            prop_assert_eq!(s, before);
        }
    }
}
