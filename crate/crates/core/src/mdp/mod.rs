//! Approximate dynamic programming on cubic-scale interpolation grids.

pub mod actions;
pub mod backup;
pub mod grid;
pub mod serialize;
pub mod termination;
pub mod vi;

pub use actions::DiscreteActionSet;
pub use backup::{Backup, ControlledModel, DoubleIntegratorModel, FactoredBackup, SuccessRegion, TabularBackup};
pub use grid::{build_grid, InterpGrid};
pub use termination::{termination_distribution, EtaHistory, QuantileTable, TerminationDistribution};
pub use vi::{combine_partial_control, finite_horizon_vi, infinite_horizon_vi, Convergence, InfiniteSolution, QStack};
