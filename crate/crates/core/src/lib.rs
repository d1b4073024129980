//! Hierarchical hybrid planning for dynamic multimodal routing: an agent
//! with double-integrator dynamics reaches a goal by flying and by riding
//! transit vehicles whose schedules keep shifting.

pub mod dynamics;
pub mod error;
pub mod executor;
pub mod experiment;
pub mod mdp;
pub mod planner;
pub mod policy;
pub mod rhc;
pub mod transit;

pub use error::{Error, Result};
