//! Decision stack for a mechanical weeding rover: weed maps, a typed-STRIPS
//! planner, contrastive plan challenges, the trust-level session machine and a
//! seeded field simulator.

pub mod field;
pub mod pddl;
pub mod rational;
pub mod planner;
pub mod explain;
pub mod sim;
pub mod autonomy;
