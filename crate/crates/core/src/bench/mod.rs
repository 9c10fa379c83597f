//! Synthetic objectives and empirical checks of the convergence theory.

mod checks;
mod objective;

pub use checks::{
    calibrate_query_constant, check_estimator_error, check_sign_agreement, recovery_queries, sign_agreement_at_radius, sweep_convergence,
    CalibrationRow, EstimatorErrorReport, ScalingReport, SweepCell, SweepConfig, SweepRow,
};
pub use objective::{
    empirical_smoothness, make_nonconvex_sparse, make_sparse_quadratic, ObjectiveKind, SyntheticObjective,
};
