//! Bellman backup operators over an interpolation grid.
//!
//! A backup maps a value table `V` over grid points to action values
//! `Q[s * A + a] = R(s, a) + E[V(s')]`, where `V(s')` is interpolated at the
//! continuous successor. Absorbing states keep value zero under every action.

use rayon::prelude::*;

use super::actions::DiscreteActionSet;
use super::grid::InterpGrid;
use crate::dynamics::{integrate_axis, DynamicsLimits, RewardParams};

pub trait Backup: Sync {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn apply(&self, v: &[f64], q: &mut [f64]);
    fn is_absorbing(&self, s: usize) -> bool;
}

/// Deterministic quadrature of a zero-mean Gaussian: `(weight, offset)`.
/// Three points match the mean and variance; a zero sigma gives one point.
pub fn sigma_points(sigma: f64) -> Vec<(f64, f64)> {
    if sigma == 0.0 {
        vec![(1.0, 0.0)]
    } else {
        let d = 3f64.sqrt() * sigma;
        vec![(2.0 / 3.0, 0.0), (1.0 / 6.0, -d), (1.0 / 6.0, d)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    pub prob: f64,
    pub reward: f64,
}

/// A continuous-state model whose successors are evaluated on a grid.
pub trait ControlledModel: Sync {
    fn num_actions(&self) -> usize;
    /// Calls `emit(outcome, next_state)` for each weighted successor.
    fn outcomes(&self, state: &[f64], action: usize, emit: &mut dyn FnMut(Outcome, &[f64]));
    fn is_absorbing(&self, _state: &[f64]) -> bool {
        false
    }
}

/// Region around the origin where the agent counts as arrived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessRegion {
    pub position_tol: f64,
    pub speed_tol: f64,
}

impl SuccessRegion {
    pub fn contains(&self, pos: &[f64], vel: &[f64]) -> bool {
        norm(pos) <= self.position_tol && norm(vel) <= self.speed_tol
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Double integrator relative to a fixed target, with one or two axes.
///
/// Grid axis order is `(p, v)` per physical axis: `(px, vx)` in 1D and
/// `(px, vx, py, vy)` in 2D.
#[derive(Debug, Clone)]
pub struct DoubleIntegratorModel {
    pub axes: usize,
    pub actions: DiscreteActionSet,
    pub limits: DynamicsLimits,
    pub dt: f64,
    pub sigma: f64,
    pub reward: RewardParams,
    /// States inside this region are absorbing with zero cost.
    pub absorbing: Option<SuccessRegion>,
}

impl DoubleIntegratorModel {
    fn level_count(&self) -> usize {
        self.actions.levels().len()
    }

    fn split_state(&self, state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (0..self.axes).map(|i| (state[2 * i], state[2 * i + 1])).unzip()
    }

    fn axis_levels(&self, action: usize) -> Vec<f64> {
        let l = self.level_count();
        let levels = self.actions.levels();
        if self.axes == 1 {
            vec![levels[action]]
        } else {
            vec![levels[action / l], levels[action % l]]
        }
    }

    fn step_reward(&self, speed_before: f64, disp: f64) -> f64 {
        let r = &self.reward;
        let hover = if speed_before < r.hover_speed_eps { r.lambda_h } else { 0.0 };
        -(r.alpha * (r.lambda_d * disp + hover) + (1.0 - r.alpha))
    }
}

impl ControlledModel for DoubleIntegratorModel {
    fn num_actions(&self) -> usize {
        if self.axes == 1 {
            self.level_count()
        } else {
            self.actions.len()
        }
    }

    fn outcomes(&self, state: &[f64], action: usize, emit: &mut dyn FnMut(Outcome, &[f64])) {
        let (pos, vel) = self.split_state(state);
        let acc = self.axis_levels(action);
        let speed = norm(&vel);
        let pts = sigma_points(self.sigma);
        let mut next = vec![0.0; 2 * self.axes];
        let mut combos = vec![0usize; self.axes];
        loop {
            let mut prob = 1.0;
            let mut disp2 = 0.0;
            for i in 0..self.axes {
                let (w, n) = pts[combos[i]];
                prob *= w;
                let (p, v) = integrate_axis(pos[i], vel[i], acc[i] + n, self.dt, self.limits.v_max);
                disp2 += (p - pos[i]) * (p - pos[i]);
                next[2 * i] = p;
                next[2 * i + 1] = v;
            }
            let reward = self.step_reward(speed, disp2.sqrt());
            emit(Outcome { prob, reward }, &next);
            // odometer over noise combinations
            let mut i = 0;
            loop {
                if i == self.axes {
                    return;
                }
                combos[i] += 1;
                if combos[i] < pts.len() {
                    break;
                }
                combos[i] = 0;
                i += 1;
            }
        }
    }

    fn is_absorbing(&self, state: &[f64]) -> bool {
        self.absorbing.is_some_and(|region| {
            let (pos, vel) = self.split_state(state);
            region.contains(&pos, &vel)
        })
    }
}

/// Explicit sparse transition rows for every (state, action).
pub struct TabularBackup {
    actions: usize,
    reward: Vec<f64>,
    rows: Vec<Vec<(u32, f64)>>,
    absorbing: Vec<bool>,
}

impl TabularBackup {
    pub fn new(model: &dyn ControlledModel, grid: &InterpGrid) -> Self {
        let na = model.num_actions();
        let n = grid.len();
        let mut reward = vec![0.0; n * na];
        let mut rows = vec![Vec::new(); n * na];
        let mut absorbing = vec![false; n];
        let mut state = vec![0.0; grid.dims()];
        for s in 0..n {
            grid.point(s, &mut state);
            absorbing[s] = model.is_absorbing(&state);
            if absorbing[s] {
                continue;
            }
            for a in 0..na {
                let row = &mut rows[s * na + a];
                let r = &mut reward[s * na + a];
                model.outcomes(&state, a, &mut |o, next| {
                    *r += o.prob * o.reward;
                    for (i, w) in grid.stencil(next).iter() {
                        if w != 0.0 {
                            row.push((i as u32, o.prob * w));
                        }
                    }
                });
                merge_sparse(row);
            }
        }
        Self {
            actions: na,
            reward,
            rows,
            absorbing,
        }
    }

    pub fn transition(&self, s: usize, a: usize) -> &[(u32, f64)] {
        &self.rows[s * self.actions + a]
    }

    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.actions + a]
    }
}

fn merge_sparse(row: &mut Vec<(u32, f64)>) {
    row.sort_by_key(|e| e.0);
    row.dedup_by(|b, a| {
        if a.0 == b.0 {
            a.1 += b.1;
            true
        } else {
            false
        }
    });
}

impl Backup for TabularBackup {
    fn num_states(&self) -> usize {
        self.absorbing.len()
    }

    fn num_actions(&self) -> usize {
        self.actions
    }

    fn apply(&self, v: &[f64], q: &mut [f64]) {
        let na = self.actions;
        q.par_chunks_mut(na).enumerate().for_each(|(s, qs)| {
            if self.absorbing[s] {
                qs.fill(0.0);
                return;
            }
            for (a, out) in qs.iter_mut().enumerate() {
                let i = s * na + a;
                *out = self.reward[i] + self.rows[i].iter().map(|&(j, p)| p * v[j as usize]).sum::<f64>();
            }
        });
    }

    fn is_absorbing(&self, s: usize) -> bool {
        self.absorbing[s]
    }
}

/// Backup for the two-axis double integrator that exploits separability.
///
/// Each axis evolves independently given its own acceleration level and
/// noise, and multilinear weights factor over axes, so the expectation
/// `E[V(x', y')]` is a double contraction of per-axis sparse transitions
/// against `V` laid out as `V[x_sub * Ny + y_sub]`.
pub struct FactoredBackup {
    nx: usize,
    ny: usize,
    levels: usize,
    tx: Vec<Vec<(u32, f64)>>,
    ty: Vec<Vec<(u32, f64)>>,
    reward: Vec<f64>,
    absorbing: Vec<bool>,
}

struct AxisTransitions {
    /// `[sub * L + level]` sparse distribution over the axis sub-grid.
    rows: Vec<Vec<(u32, f64)>>,
    /// `[(sub * L + level) * P + noise]` displacement along the axis.
    disp: Vec<f64>,
}

fn axis_transitions(model: &DoubleIntegratorModel, p_knots: &[f64], v_knots: &[f64]) -> AxisTransitions {
    let levels = model.actions.levels();
    let pts = sigma_points(model.sigma);
    let sub = InterpGrid::from_axes(vec![p_knots.to_vec(), v_knots.to_vec()]).expect("valid axis grid");
    let mut rows = Vec::with_capacity(sub.len() * levels.len());
    let mut disp = Vec::with_capacity(sub.len() * levels.len() * pts.len());
    for i in 0..sub.len() {
        let (p, v) = (p_knots[i / v_knots.len()], v_knots[i % v_knots.len()]);
        for &a in levels {
            let mut row = Vec::new();
            for &(w, n) in &pts {
                let (p1, v1) = integrate_axis(p, v, a + n, model.dt, model.limits.v_max);
                disp.push(p1 - p);
                for (j, wj) in sub.stencil(&[p1, v1]).iter() {
                    if wj != 0.0 {
                        row.push((j as u32, w * wj));
                    }
                }
            }
            merge_sparse(&mut row);
            rows.push(row);
        }
    }
    AxisTransitions { rows, disp }
}

impl FactoredBackup {
    /// `grid` must have axes `(px, vx, py, vy)`.
    pub fn new(model: &DoubleIntegratorModel, grid: &InterpGrid) -> Self {
        assert_eq!(model.axes, 2, "factored backup needs a two-axis model");
        assert_eq!(grid.dims(), 4, "factored backup needs a (px, vx, py, vy) grid");
        let x = axis_transitions(model, grid.axis(0), grid.axis(1));
        let y = axis_transitions(model, grid.axis(2), grid.axis(3));
        let nx = grid.axis(0).len() * grid.axis(1).len();
        let ny = grid.axis(2).len() * grid.axis(3).len();
        let levels = model.actions.levels().len();
        let na = levels * levels;
        let pts = sigma_points(model.sigma);
        let np = pts.len();

        let mut reward = vec![0.0; nx * ny * na];
        let mut absorbing = vec![false; nx * ny];
        reward.par_chunks_mut(na).zip(absorbing.par_iter_mut()).enumerate().for_each(|(s, (rs, ab))| {
            let mut state = [0.0; 4];
            grid.point(s, &mut state);
            *ab = model.is_absorbing(&state);
            if *ab {
                return;
            }
            let speed = state[1].hypot(state[3]);
            let (xs, ys) = (s / ny, s % ny);
            for lx in 0..levels {
                for ly in 0..levels {
                    let dx = &x.disp[(xs * levels + lx) * np..][..np];
                    let dy = &y.disp[(ys * levels + ly) * np..][..np];
                    let mut r = 0.0;
                    for (i, &(wi, _)) in pts.iter().enumerate() {
                        for (j, &(wj, _)) in pts.iter().enumerate() {
                            r += wi * wj * model.step_reward(speed, dx[i].hypot(dy[j]));
                        }
                    }
                    rs[lx * levels + ly] = r;
                }
            }
        });
        Self {
            nx,
            ny,
            levels,
            tx: x.rows,
            ty: y.rows,
            reward,
            absorbing,
        }
    }
}

impl Backup for FactoredBackup {
    fn num_states(&self) -> usize {
        self.nx * self.ny
    }

    fn num_actions(&self) -> usize {
        self.levels * self.levels
    }

    fn apply(&self, v: &[f64], q: &mut [f64]) {
        let (nx, ny, l) = (self.nx, self.ny, self.levels);
        // u[(ys * L + ly) * nx + cx] = sum_cy Ty[ys, ly](cy) * V[cx * ny + cy]
        let mut u = vec![0.0; ny * l * nx];
        u.par_chunks_mut(nx).enumerate().for_each(|(yl, ucol)| {
            let row = &self.ty[yl];
            for (cx, out) in ucol.iter_mut().enumerate() {
                let vrow = &v[cx * ny..(cx + 1) * ny];
                *out = row.iter().map(|&(cy, p)| p * vrow[cy as usize]).sum();
            }
        });
        let na = l * l;
        q.par_chunks_mut(ny * na).enumerate().for_each(|(xs, qx)| {
            for ys in 0..ny {
                let s = xs * ny + ys;
                let qs = &mut qx[ys * na..(ys + 1) * na];
                if self.absorbing[s] {
                    qs.fill(0.0);
                    continue;
                }
                for lx in 0..l {
                    let row = &self.tx[xs * l + lx];
                    for ly in 0..l {
                        let ucol = &u[(ys * l + ly) * nx..][..nx];
                        let e: f64 = row.iter().map(|&(cx, p)| p * ucol[cx as usize]).sum();
                        qs[lx * l + ly] = self.reward[s * na + lx * l + ly] + e;
                    }
                }
            }
        });
    }

    fn is_absorbing(&self, s: usize) -> bool {
        self.absorbing[s]
    }
}
