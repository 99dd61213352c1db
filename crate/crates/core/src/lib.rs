//! Minimum-state bisimulation of hybrid dynamical systems.
//!
//! A model file describes a hybrid automaton whose invariants and guards are
//! unions of polytopes. Guard surfaces are sampled on a grid, and the grid is
//! refined by sets of output behaviors until the partition stops changing.
//! The resulting quotient is a finite bisimulation of the sampled system.

pub mod constraint;
pub mod engine;
pub mod export;
pub mod expr;
pub mod flow;
pub mod mapped;
pub mod model;
pub mod polytope;
pub mod transition;
pub mod validate;
