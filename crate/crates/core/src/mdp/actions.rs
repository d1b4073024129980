use serde::{Deserialize, Serialize};

use crate::dynamics::ControlAction;
use crate::error::{Error, Result};

/// Product grid of per-axis acceleration levels.
///
/// Levels are ordered `0, -l1, +l1, -l2, +l2, ...` by magnitude, and the
/// joint action index is `ix * L + iy`, so index 0 is always the zero action
/// and ties in an argmax resolve towards it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteActionSet {
    levels: Vec<f64>,
    actions: Vec<ControlAction>,
}

impl DiscreteActionSet {
    /// `per_axis` levels evenly spaced over `[-a_max, a_max]` (3 or 5 in practice).
    pub fn grid(a_max: f64, per_axis: usize) -> Result<Self> {
        if per_axis < 3 || per_axis % 2 == 0 {
            return Err(Error::InvalidConfig(format!(
                "actions per axis must be odd and at least 3, got {per_axis}"
            )));
        }
        let half = per_axis / 2;
        let mut levels = vec![0.0];
        for m in 1..=half {
            let a = a_max * m as f64 / half as f64;
            levels.push(-a);
            levels.push(a);
        }
        Ok(Self::from_levels(levels))
    }

    pub fn from_levels(levels: Vec<f64>) -> Self {
        let actions = levels
            .iter()
            .flat_map(|&ax| levels.iter().map(move |&ay| ControlAction::new(ax, ay)))
            .collect();
        Self { levels, actions }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, i: usize) -> ControlAction {
        self.actions[i]
    }

    pub fn actions(&self) -> &[ControlAction] {
        &self.actions
    }

    /// Split a joint index into per-axis level indices.
    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.levels.len(), i % self.levels.len())
    }

    pub fn max_level(&self) -> f64 {
        self.levels.iter().fold(0.0f64, |m, l| m.max(l.abs()))
    }
}
