use super::backup::Backup;
use super::grid::InterpGrid;
use super::termination::TerminationDistribution;
use crate::error::{Error, Result};

/// Stopping rule for an iterative solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Convergence {
    pub eps: f64,
    pub max_sweeps: usize,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            max_sweeps: 10_000,
        }
    }
}

/// Horizon-indexed action values `Q_0..Q_K` plus the out-of-horizon table.
///
/// Tables are stored as `f32` in `[state * A + action]` layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QStack {
    pub grid: InterpGrid,
    pub num_actions: usize,
    pub horizon_dt: f64,
    tables: Vec<Vec<f32>>,
    worst: Vec<f64>,
}

impl QStack {
    pub fn from_parts(grid: InterpGrid, num_actions: usize, horizon_dt: f64, tables: Vec<Vec<f32>>) -> Result<Self> {
        if tables.len() < 3 {
            return Err(Error::InvalidGrid("a stack needs Q_0, at least one horizon and Q_beyond".into()));
        }
        if tables.iter().any(|t| t.len() != grid.len() * num_actions) {
            return Err(Error::InvalidGrid("table size does not match grid and action count".into()));
        }
        let worst = tables
            .iter()
            .map(|t| t.iter().fold(f64::INFINITY, |m, &q| m.min(q as f64)))
            .collect();
        Ok(Self {
            grid,
            num_actions,
            horizon_dt,
            tables,
            worst,
        })
    }

    /// Largest in-horizon index `K`.
    pub fn k(&self) -> usize {
        self.tables.len() - 2
    }

    /// Table index of the out-of-horizon values.
    pub fn beyond(&self) -> usize {
        self.tables.len() - 1
    }

    pub fn table(&self, k: usize) -> &[f32] {
        &self.tables[k]
    }

    pub fn tables(&self) -> &[Vec<f32>] {
        &self.tables
    }

    /// `min_{s,a} Q_k(s, a)`.
    pub fn worst(&self, k: usize) -> f64 {
        self.worst[k]
    }

    /// Interpolated `Q_k(query, a)` for every action, accumulated into `out`
    /// with weight `scale`.
    pub fn accumulate(&self, k: usize, query: &[f64], scale: f64, out: &mut [f64]) {
        let na = self.num_actions;
        let t = &self.tables[k];
        for (i, w) in self.grid.stencil(query).iter() {
            if w == 0.0 {
                continue;
            }
            let row = &t[i * na..(i + 1) * na];
            for (o, &q) in out.iter_mut().zip(row) {
                *o += scale * w * q as f64;
            }
        }
    }

    pub fn q_values(&self, k: usize, query: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_actions];
        self.accumulate(k, query, 1.0, &mut out);
        out
    }

    /// `V_k(query) = max_a Q_k(query, a)`.
    pub fn value(&self, k: usize, query: &[f64]) -> f64 {
        argmax(&self.q_values(k, query)).1
    }
}

/// First index attaining the maximum.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

fn greedy_values(q: &[f64], na: usize, v: &mut [f64]) {
    for (s, out) in v.iter_mut().enumerate() {
        *out = argmax(&q[s * na..(s + 1) * na]).1;
    }
}

fn to_f32(q: &[f64]) -> Vec<f32> {
    q.iter().map(|&x| x as f32).collect()
}

/// Backward induction `Q_k = R + E[V_{k-1}]` from `V_0 = terminal`, then the
/// out-of-horizon table by relative value iteration on the same stage cost.
///
/// `Q_0(s, a)` equals the terminal value for every action. The stationary
/// out-of-horizon solve subtracts the per-sweep level drift and is shifted so
/// that its best value matches the best `V_K`.
pub fn finite_horizon_vi(
    backup: &dyn Backup,
    grid: &InterpGrid,
    terminal: &[f64],
    k: usize,
    horizon_dt: f64,
    beyond: Convergence,
) -> Result<QStack> {
    let n = backup.num_states();
    let na = backup.num_actions();
    if k < 1 {
        return Err(Error::InvalidConfig("the horizon count must be at least 1".into()));
    }
    if terminal.len() != n || grid.len() != n {
        return Err(Error::InvalidGrid("terminal values do not match the grid".into()));
    }
    let mut tables = Vec::with_capacity(k + 2);
    tables.push(terminal.iter().flat_map(|&t| std::iter::repeat_n(t as f32, na)).collect());

    let mut v = terminal.to_vec();
    let mut q = vec![0.0; n * na];
    for _ in 1..=k {
        backup.apply(&v, &mut q);
        greedy_values(&q, na, &mut v);
        tables.push(to_f32(&q));
    }

    let v_k = v.clone();
    let anchor = v_k.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut h = v_k;
    let mut next = vec![0.0; n];
    for _ in 0..beyond.max_sweeps {
        backup.apply(&h, &mut q);
        greedy_values(&q, na, &mut next);
        let top = next.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let shift = anchor - top;
        next.iter_mut().for_each(|x| *x += shift);
        q.iter_mut().for_each(|x| *x += shift);
        let residual = next.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut h, &mut next);
        if residual < beyond.eps {
            break;
        }
    }
    tables.push(to_f32(&q));
    QStack::from_parts(grid.clone(), na, horizon_dt, tables)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteSolution {
    pub values: Vec<f64>,
    pub q: Vec<f64>,
    pub policy: Vec<usize>,
    /// Max-norm change of the value table after each sweep.
    pub residuals: Vec<f64>,
}

/// Undiscounted value iteration from `V = 0` until the max-norm change drops
/// below `eps`.
pub fn infinite_horizon_vi(backup: &dyn Backup, convergence: Convergence) -> Result<InfiniteSolution> {
    if !(convergence.eps > 0.0) {
        return Err(Error::InvalidConfig("convergence eps must be positive".into()));
    }
    let n = backup.num_states();
    let na = backup.num_actions();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut q = vec![0.0; n * na];
    let mut residuals = Vec::new();
    loop {
        if residuals.len() == convergence.max_sweeps {
            return Err(Error::NonConvergence {
                sweeps: residuals.len(),
                residual: residuals.last().copied().unwrap_or(f64::INFINITY),
            });
        }
        backup.apply(&v, &mut q);
        greedy_values(&q, na, &mut next);
        let residual = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        residuals.push(residual);
        std::mem::swap(&mut v, &mut next);
        if residual < convergence.eps {
            break;
        }
    }
    let policy = (0..n).map(|s| argmax(&q[s * na..(s + 1) * na]).0).collect();
    Ok(InfiniteSolution {
        values: v,
        q,
        policy,
        residuals,
    })
}

/// Best action under the termination-weighted mixture of horizon tables,
/// and the mixture value of that action.
pub fn combine_partial_control(stack: &QStack, d: &TerminationDistribution, s_c: &[f64]) -> (usize, f64) {
    let mut mix = vec![0.0; stack.num_actions];
    for (k, &mass) in d.masses().iter().enumerate() {
        if mass > 0.0 {
            stack.accumulate(k, s_c, mass, &mut mix);
        }
    }
    if d.overflow() > 0.0 {
        stack.accumulate(stack.beyond(), s_c, d.overflow(), &mut mix);
    }
    argmax(&mix)
}
