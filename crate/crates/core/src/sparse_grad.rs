//! Gradient-direction recovery from sign measurements.
//!
//! Two estimators share the aggregated measurement `c = sum_i y_i z_i`:
//!
//! * [`solve_1bge_exact`] maximizes `c^T g` over `{ |g|_1 <= sqrt(s), |g|_2 <= 1 }`.
//!   The maximizer is a normalized soft-threshold `S_tau(c) / |S_tau(c)|_2`
//!   where `tau` is the smallest threshold whose l1/l2 ratio is at most
//!   `sqrt(s)`. The ratio is monotone in `tau`, so the active breakpoint
//!   interval is found by a scan over sorted magnitudes and `tau` is refined
//!   by bisection inside it.
//! * [`estimate_normalized_clip`] normalizes `c` and zeroes entries below a
//!   magnitude threshold, without re-normalizing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::BitMeasurementBatch;
use crate::scalar::{norm1, norm2, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Exact1bge,
    NormalizedClip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct GradientEstimate<T: Scalar> {
    pub direction: Vec<T>,
    pub l1_norm: T,
    pub l2_norm: T,
    pub nonzero_count: usize,
    pub method: EstimateMethod,
}

impl<T: Scalar> GradientEstimate<T> {
    fn new(direction: Vec<T>, method: EstimateMethod) -> Self {
        Self {
            l1_norm: norm1(&direction),
            l2_norm: norm2(&direction),
            nonzero_count: direction.iter().filter(|x| !x.is_zero()).count(),
            direction,
            method,
        }
    }
}

/// Exact sparse 1-bit gradient estimate with sparsity level `s`.
pub fn solve_1bge_exact<T: Scalar>(batch: &BitMeasurementBatch<T>, s: usize) -> Result<GradientEstimate<T>> {
    if batch.is_empty() {
        return Err(Error::InvalidBatch("empty measurement batch".into()));
    }
    let g = maximize_linear_over_l1_l2(&batch.signed_sum(), s)?;
    Ok(GradientEstimate::new(g, EstimateMethod::Exact1bge))
}

/// `argmax c^T g` subject to `|g|_1 <= sqrt(s)` and `|g|_2 <= 1`.
pub fn maximize_linear_over_l1_l2<T: Scalar>(c: &[T], s: usize) -> Result<Vec<T>> {
    if s == 0 {
        return Err(Error::Precondition("sparsity level must be at least 1".into()));
    }
    let n2 = norm2(c);
    if !(n2 > T::zero()) {
        return Err(Error::DegenerateMeasurement);
    }
    let root_s = T::lit(s as f64).sqrt();
    if norm1(c) <= root_s * n2 {
        return Ok(c.iter().map(|&x| x / n2).collect());
    }

    let mut mags: Vec<T> = c.iter().map(|x| x.abs()).filter(|x| !x.is_zero()).collect();
    mags.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite magnitudes"));

    // Top group of ties: the ratio is constant sqrt(t) on its interval.
    let top = mags[0];
    let tied = mags.iter().take_while(|&&a| a == top).count();
    if tied > s {
        let w = root_s / T::lit(tied as f64);
        return Ok(c
            .iter()
            .map(|&x| if x.abs() == top { w * x.signum() } else { T::zero() })
            .collect());
    }

    // Prefix sums over sorted magnitudes.
    let mut sum1 = T::zero();
    let mut sum2 = T::zero();
    let mut tau = T::zero();
    let mut found = false;
    for j in 1..=mags.len() {
        let a = mags[j - 1];
        sum1 += a;
        sum2 += a * a;
        let upper = a;
        let lower = if j < mags.len() { mags[j] } else { T::zero() };
        if lower == upper {
            continue;
        }
        let jt = T::lit(j as f64);
        let ratio = |t: T| {
            let num = sum1 - jt * t;
            let den = (sum2 - T::lit(2.0) * t * sum1 + jt * t * t).max(T::zero()).sqrt();
            num / den
        };
        if ratio(lower) > root_s {
            let (mut lo, mut hi) = (lower, upper);
            for _ in 0..200 {
                let mid = (lo + hi) / T::lit(2.0);
                if mid <= lo || mid >= hi {
                    break;
                }
                if ratio(mid) > root_s {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            tau = hi;
            found = true;
            break;
        }
    }
    debug_assert!(found, "ratio at tau = 0 exceeds sqrt(s), so a crossing exists");

    let shrunk: Vec<T> = c
        .iter()
        .map(|&x| x.signum() * (x.abs() - tau).max(T::zero()))
        .collect();
    let n = norm2(&shrunk);
    if !(n > T::zero()) {
        return Err(Error::DegenerateMeasurement);
    }
    Ok(shrunk.into_iter().map(|x| x / n).collect())
}

/// Normalized aggregate with entries below `lambda_g` zeroed.
pub fn estimate_normalized_clip<T: Scalar>(
    batch: &BitMeasurementBatch<T>,
    lambda_g: T,
) -> Result<GradientEstimate<T>> {
    if batch.is_empty() {
        return Err(Error::InvalidBatch("empty measurement batch".into()));
    }
    let c = batch.signed_sum();
    let n = norm2(&c);
    if !(n > T::zero()) {
        return Err(Error::DegenerateMeasurement);
    }
    let g: Vec<T> = c.into_iter().map(|x| x / n).collect();
    Ok(GradientEstimate::new(clip_small_entries(&g, lambda_g), EstimateMethod::NormalizedClip))
}

/// Zeroes every entry with magnitude strictly below `lambda_g`.
pub fn clip_small_entries<T: Scalar>(v: &[T], lambda_g: T) -> Vec<T> {
    v.iter()
        .map(|&x| if x.abs() >= lambda_g { x } else { T::zero() })
        .collect()
}
