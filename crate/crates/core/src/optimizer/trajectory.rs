use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::vector::ParamVector;

/// Objective value and gradient norm of a synthetic objective at a point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Diagnostics<T: Scalar> {
    pub value: T,
    pub grad_norm: T,
}

/// Ground-truth access for synthetic benchmarks. Real oracles have none.
pub trait Diagnose<T: Scalar>: Sync {
    fn diagnose(&self, theta: &[T]) -> Diagnostics<T>;
}

/// Telemetry of iteration `iteration` (1-based).
///
/// `objective`/`grad_norm` describe the iterate *entering* the iteration;
/// `theta_hash` describes the iterate leaving it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct IterationRecord<T: Scalar> {
    pub iteration: usize,
    /// Queries issued in this iteration.
    pub calls: usize,
    /// Cumulative queries through this iteration.
    pub oracle_calls: usize,
    pub negative_fraction: T,
    pub step: T,
    pub skipped: bool,
    /// The aggregated measurements were zero; the iteration was skipped.
    pub degenerate: bool,
    pub theta_hash: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Vec<T>>,
    pub objective: Option<T>,
    pub grad_norm: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Trajectory<T: Scalar> {
    pub initial_hash: u64,
    pub records: Vec<IterationRecord<T>>,
    pub final_theta: ParamVector<T>,
    pub final_diagnostics: Option<Diagnostics<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub(crate) fn start(theta: &ParamVector<T>) -> Self {
        Self {
            initial_hash: theta.content_hash(),
            records: Vec::new(),
            final_theta: theta.clone(),
            final_diagnostics: None,
        }
    }

    pub fn total_oracle_calls(&self) -> usize {
        self.records.last().map_or(0, |r| r.oracle_calls)
    }

    pub fn skipped_count(&self) -> usize {
        self.records.iter().filter(|r| r.skipped).count()
    }

    /// Smallest gradient norm over all iterates including the final one.
    /// Only available when diagnostics were recorded.
    pub fn best_grad_norm(&self) -> Option<T> {
        self.records
            .iter()
            .filter_map(|r| r.grad_norm)
            .chain(self.final_diagnostics.map(|d| d.grad_norm))
            .reduce(T::min)
    }

    /// Oracle calls spent before the first iterate with gradient norm below
    /// `target`, or `None` if no recorded iterate reaches it.
    pub fn calls_to_reach(&self, target: T) -> Option<usize> {
        for r in &self.records {
            if r.grad_norm.is_some_and(|g| g < target) {
                return Some(r.oracle_calls - r.calls);
            }
        }
        self.final_diagnostics
            .filter(|d| d.grad_norm < target)
            .map(|_| self.total_oracle_calls())
    }

    /// Hash of the iterate preceding record `i`.
    pub fn hash_before(&self, i: usize) -> u64 {
        if i == 0 {
            self.initial_hash
        } else {
            self.records[i - 1].theta_hash
        }
    }
}
