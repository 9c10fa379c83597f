//! Zeroth-order optimization from pairwise comparisons: 1-bit sparse
//! gradient estimation, the theory-driven and practical descent schemes, a
//! toy autoregressive policy with DPO, and a synthetic benchmark harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod experiment;
pub mod optimizer;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod scalar;
pub mod sparse_grad;
pub mod vector;

pub use error::{Error, Result};
pub use optimizer::{
    run_basic, run_practical, run_practical_on_pairs, run_practical_with, schedule_from_theorem, step_practical,
    BasicOptions, Diagnose, Diagnostics, IterationRecord, PracticalConfig, PracticalState, TheoremSchedule,
    Trajectory,
};
pub use oracle::{
    compare_function, compare_preference, measure_bits, BitMeasurementBatch, ComparisonOracle, FunctionOracle,
    LikelihoodModel, Objective, PreferenceOracle, Sign,
};
pub use policy::{PreferencePair, ToyPolicy};
pub use rng::RngState;
pub use scalar::Scalar;
pub use sparse_grad::{estimate_normalized_clip, solve_1bge_exact, EstimateMethod, GradientEstimate};
pub use vector::{embed_perturbation, sample_unit_sphere, ParamVector, ScopeMask, UnitVector};

pub type ParamVectorF64 = ParamVector<f64>;
pub type ParamVectorF32 = ParamVector<f32>;
pub type UnitVectorF64 = UnitVector<f64>;
pub type UnitVectorF32 = UnitVector<f32>;
pub type BitMeasurementBatchF64 = BitMeasurementBatch<f64>;
pub type GradientEstimateF64 = GradientEstimate<f64>;
pub type GradientEstimateF32 = GradientEstimate<f32>;
pub type TrajectoryF64 = Trajectory<f64>;
pub type TrajectoryF32 = Trajectory<f32>;
pub type PracticalConfigF64 = PracticalConfig<f64>;
pub type TheoremScheduleF64 = TheoremSchedule<f64>;
pub type ToyPolicyF64 = ToyPolicy<f64>;
pub type ToyPolicyF32 = ToyPolicy<f32>;
pub type SyntheticObjectiveF64 = bench::SyntheticObjective<f64>;
