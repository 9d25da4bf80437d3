//! Reference localizers: particle-swarm search over the likelihood and a
//! matched-filter pipeline with a dictionary angle scan.

mod ml;
mod pso;

pub use ml::{ml_localize, ml_localize_with, MlOptions};
pub use pso::{pso_localize, pso_search, PsoConfig, PsoOutcome};
