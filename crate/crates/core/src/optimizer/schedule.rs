use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Parameters of the basic scheme derived from the convergence guarantee.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TheoremSchedule<T: Scalar> {
    pub epsilon: T,
    pub failure_prob: T,
    pub smoothness: T,
    pub initial_gap: T,
    pub sparsity: usize,
    pub dim: usize,
    pub c_m: T,
    /// `ceil(10 l D / eps^2)`
    pub iterations: usize,
    /// `sqrt(2 D / (l T))`
    pub step_size: T,
    /// `eps / (40 l sqrt(d))`
    pub radius: T,
    /// `ceil(c_m (s ln(2d/s) + ln(l D / (Lambda eps^2))))`, at least 1
    pub queries: usize,
}

/// Guards `ceil` against values a few ulps above an integer.
fn ceil_tolerant(x: f64) -> f64 {
    (x * (1.0 - 4.0 * f64::EPSILON)).ceil()
}

pub fn schedule_from_theorem<T: Scalar>(
    epsilon: T,
    failure_prob: T,
    smoothness: T,
    initial_gap: T,
    sparsity: usize,
    dim: usize,
    c_m: T,
) -> Result<TheoremSchedule<T>> {
    let unit = |name: &str, v: T| {
        if v > T::zero() && v < T::one() {
            Ok(())
        } else {
            Err(Error::InvalidSchedule(format!("{name} = {v} must lie in (0, 1)")))
        }
    };
    let positive = |name: &str, v: T| {
        if v > T::zero() && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidSchedule(format!("{name} = {v} must be positive")))
        }
    };
    unit("epsilon", epsilon)?;
    unit("failure_prob", failure_prob)?;
    positive("smoothness", smoothness)?;
    positive("initial_gap", initial_gap)?;
    positive("c_m", c_m)?;
    if sparsity == 0 || sparsity > dim {
        return Err(Error::InvalidSchedule(format!(
            "sparsity {sparsity} must satisfy 1 <= s <= d = {dim}"
        )));
    }

    let (eps, lam, ell, gap, cm) = (
        epsilon.as_f64(),
        failure_prob.as_f64(),
        smoothness.as_f64(),
        initial_gap.as_f64(),
        c_m.as_f64(),
    );
    let (s, d) = (sparsity as f64, dim as f64);
    let iterations = ceil_tolerant(10.0 * ell * gap / (eps * eps)).max(1.0);
    let step_size = (2.0 * gap / (ell * iterations)).sqrt();
    let radius = eps / (40.0 * ell * d.sqrt());
    let queries = ceil_tolerant(cm * (s * (2.0 * d / s).ln() + (ell * gap / (lam * eps * eps)).ln())).max(1.0);
    if !(iterations.is_finite() && iterations < usize::MAX as f64 && queries.is_finite() && queries < usize::MAX as f64) {
        return Err(Error::InvalidSchedule("derived T or m overflows".into()));
    }

    Ok(TheoremSchedule {
        epsilon,
        failure_prob,
        smoothness,
        initial_gap,
        sparsity,
        dim,
        c_m,
        iterations: iterations as usize,
        step_size: T::lit(step_size),
        radius: T::lit(radius),
        queries: queries as usize,
    })
}

impl<T: Scalar> TheoremSchedule<T> {
    /// Worst-case number of oracle calls, `m * T`.
    pub fn call_budget(&self) -> usize {
        self.queries.saturating_mul(self.iterations)
    }
}
