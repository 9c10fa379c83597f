//! Iteration loops driven by comparison oracles.
//!
//! [`run_basic`] is the exact sparse-estimator scheme with the step size,
//! radius and query count fixed by a [`TheoremSchedule`]. [`run_practical`]
//! and friends implement the scoped normalize-and-clip scheme with the
//! negative-fraction step size and skip rule.

mod basic;
mod practical;
mod schedule;
mod trajectory;

pub use basic::{run_basic, BasicOptions};
pub use practical::{
    run_practical, run_practical_on_pairs, run_practical_with, step_practical, PracticalConfig, PracticalState,
};
pub use schedule::{schedule_from_theorem, TheoremSchedule};
pub use trajectory::{Diagnose, Diagnostics, IterationRecord, Trajectory};
