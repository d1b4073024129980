use crate::dynamics::{AgentState, ControlAction};
use crate::error::{Error, Result};
use crate::mdp::vi::argmax;
use crate::mdp::{DiscreteActionSet, InterpGrid};

use super::relative_query;

/// Stationary goal-reaching policy, greedy over interpolated action values.
#[derive(Debug, Clone, PartialEq)]
pub struct UfPolicy {
    pub grid: InterpGrid,
    pub actions: DiscreteActionSet,
    q: Vec<f32>,
}

impl UfPolicy {
    pub fn new(grid: InterpGrid, actions: DiscreteActionSet, q: Vec<f32>) -> Result<Self> {
        if q.len() != grid.len() * actions.len() {
            return Err(Error::InvalidGrid("action-value table does not match the grid".into()));
        }
        Ok(Self { grid, actions, q })
    }

    pub fn table(&self) -> &[f32] {
        &self.q
    }

    pub fn q_values(&self, query: &[f64; 4]) -> Vec<f64> {
        let na = self.actions.len();
        let mut out = vec![0.0; na];
        for (i, w) in self.grid.stencil(query).iter() {
            if w == 0.0 {
                continue;
            }
            for (o, &q) in out.iter_mut().zip(&self.q[i * na..(i + 1) * na]) {
                *o += w * q as f64;
            }
        }
        out
    }

    /// Greedy action index and its value at a goal-relative query.
    pub fn greedy(&self, query: &[f64; 4]) -> (usize, f64) {
        argmax(&self.q_values(query))
    }

    pub fn value(&self, agent: &AgentState, goal: [f64; 2]) -> f64 {
        self.greedy(&relative_query(agent.position(), agent.velocity(), goal)).1
    }
}

pub fn uf_action(agent: &AgentState, goal: [f64; 2], policy: &UfPolicy) -> ControlAction {
    let (a, _) = policy.greedy(&relative_query(agent.position(), agent.velocity(), goal));
    policy.actions.get(a)
}
