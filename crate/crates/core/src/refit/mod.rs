//! Retrofitting of user-selected word sets.
//!
//! Two modes share one objective: target mode moves a single word toward a
//! pinned set, set mode pulls every selected word toward every other one.
//! Both are anchored to the words' original vectors.

mod exact;
mod solver;
mod spec;

pub use exact::{exact_solve, EXACT_SOLVE_LIMIT};
pub use solver::{edge_energy, point_update, objective, refit, sweep, Assignment, RefitOutcome};
pub use spec::{build_spec, AttractSpec, BetaScheme, Edge, Mode, RefitParams};
