//! Test-only helpers: brute-force oracles that share no search code with the
//! planner, and seeded generators for random instances.

pub mod criteria;
pub mod gen;
pub mod grid;
pub mod statespace;
pub mod table;

pub use grid::{GridAction, GridInstance, GridQuery};
