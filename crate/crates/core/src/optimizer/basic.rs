use crate::error::{Error, Result};
use crate::oracle::{measure_bits, ComparisonOracle};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::sparse_grad::solve_1bge_exact;
use crate::vector::ParamVector;

use super::schedule::TheoremSchedule;
use super::trajectory::{Diagnose, IterationRecord, Trajectory};

#[derive(Debug, Clone, Copy, Default)]
pub struct BasicOptions<T> {
    /// Stop as soon as an iterate's gradient norm drops below this value.
    /// Requires diagnostics.
    pub stop_below: Option<T>,
    pub keep_snapshots: bool,
}

/// Runs the basic scheme for `schedule.iterations` iterations:
/// measure `m` bits at radius `r`, solve the exact sparse estimator, and
/// step `theta <- theta - eta * g`. Degenerate measurements leave `theta`
/// unchanged and are flagged.
pub fn run_basic<T: Scalar, O: ComparisonOracle<T> + ?Sized>(
    oracle: &O,
    theta0: &ParamVector<T>,
    schedule: &TheoremSchedule<T>,
    rng: &RngState,
    diagnostics: Option<&dyn Diagnose<T>>,
    options: BasicOptions<T>,
) -> Result<Trajectory<T>> {
    if schedule.sparsity > theta0.scope_dim() {
        return Err(Error::Precondition(format!(
            "sparsity {} exceeds perturbable dimension {}",
            schedule.sparsity,
            theta0.scope_dim()
        )));
    }
    let mut theta = theta0.clone();
    let mut traj = Trajectory::start(&theta);
    let mut cumulative = 0usize;

    for t in 1..=schedule.iterations {
        let diag = diagnostics.map(|d| d.diagnose(theta.values()));
        if let (Some(target), Some(d)) = (options.stop_below, diag) {
            if d.grad_norm < target {
                break;
            }
        }
        let batch = measure_bits(oracle, &theta, schedule.radius, schedule.queries, rng, t)
            .map_err(|e| e.at_iteration(t))?;
        cumulative += batch.oracle_calls;

        let (step, degenerate) = match solve_1bge_exact(&batch, schedule.sparsity) {
            Ok(g) => {
                theta
                    .add_scoped(-schedule.step_size, &g.direction)
                    .map_err(|e| e.at_iteration(t))?;
                (schedule.step_size, false)
            }
            Err(Error::DegenerateMeasurement) => (T::zero(), true),
            Err(e) => return Err(e.at_iteration(t)),
        };

        traj.records.push(IterationRecord {
            iteration: t,
            calls: batch.oracle_calls,
            oracle_calls: cumulative,
            negative_fraction: batch.negative_fraction(),
            step,
            skipped: degenerate,
            degenerate,
            theta_hash: theta.content_hash(),
            snapshot: options.keep_snapshots.then(|| theta.values().to_vec()),
            objective: diag.map(|d| d.value),
            grad_norm: diag.map(|d| d.grad_norm),
        });
    }

    traj.final_diagnostics = diagnostics.map(|d| d.diagnose(theta.values()));
    traj.final_theta = theta;
    Ok(traj)
}
