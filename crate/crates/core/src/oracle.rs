//! Comparison oracles and batched 1-bit measurement collection.
//!
//! An oracle sees two parameter points and reveals a single bit: `Minus`
//! when the second point is strictly better, `Plus` otherwise. Oracles take
//! full parameter vectors; perturbation scopes are handled by the caller.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::PreferencePair;
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::vector::{embed_perturbation, sample_unit_sphere, ParamVector, UnitVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    /// The queried point improves on the base point.
    Minus,
    Plus,
}

impl Sign {
    pub fn value(self) -> i8 {
        match self {
            Sign::Minus => -1,
            Sign::Plus => 1,
        }
    }

    pub fn as_scalar<T: Scalar>(self) -> T {
        match self {
            Sign::Minus => -T::one(),
            Sign::Plus => T::one(),
        }
    }

    /// Sign of `x`, mapping zero to `Plus`.
    pub fn of<T: Scalar>(x: T) -> Self {
        if x < T::zero() {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }
}

pub trait ComparisonOracle<T: Scalar>: Sync {
    fn compare(&self, theta: &ParamVector<T>, theta_prime: &ParamVector<T>) -> Result<Sign>;
}

impl<T: Scalar, O: ComparisonOracle<T> + ?Sized> ComparisonOracle<T> for &O {
    fn compare(&self, theta: &ParamVector<T>, theta_prime: &ParamVector<T>) -> Result<Sign> {
        (**self).compare(theta, theta_prime)
    }
}

/// A real-valued function that can be evaluated but is hidden behind an oracle.
pub trait Objective<T: Scalar>: Sync {
    fn value(&self, theta: &[T]) -> T;
}

impl<T: Scalar, F: Fn(&[T]) -> T + Sync> Objective<T> for F {
    fn value(&self, theta: &[T]) -> T {
        self(theta)
    }
}

/// Function-value comparison: `Minus` iff `f(theta_prime) < f(theta)`.
pub fn compare_function<T: Scalar, F: Objective<T> + ?Sized>(
    objective: &F,
    theta: &ParamVector<T>,
    theta_prime: &ParamVector<T>,
) -> Result<Sign> {
    if theta.dim() != theta_prime.dim() {
        return Err(Error::Shape {
            expected: theta.dim(),
            got: theta_prime.dim(),
        });
    }
    let a = objective.value(theta.values());
    let b = objective.value(theta_prime.values());
    if a.is_nan() || b.is_nan() {
        return Err(Error::OracleFailure("objective evaluated to NaN".into()));
    }
    Ok(if b < a { Sign::Minus } else { Sign::Plus })
}

#[derive(Debug, Clone, Copy)]
pub struct FunctionOracle<F>(pub F);

impl<T: Scalar, F: Objective<T>> ComparisonOracle<T> for FunctionOracle<F> {
    fn compare(&self, theta: &ParamVector<T>, theta_prime: &ParamVector<T>) -> Result<Sign> {
        compare_function(&self.0, theta, theta_prime)
    }
}

/// Sequence likelihoods of a parametrized policy, evaluated at arbitrary
/// parameter vectors.
pub trait LikelihoodModel<T: Scalar>: Sync {
    /// `log pi_params(response | prompt)`.
    fn log_likelihood_at(&self, params: &[T], prompt: &[usize], response: &[usize]) -> Result<T>;
}

/// Preference comparison: `Minus` iff, for every pair in the batch, the
/// second point strictly raises the preferred response's likelihood and
/// strictly lowers the dispreferred one's.
pub fn compare_preference<T: Scalar, M: LikelihoodModel<T> + ?Sized>(
    model: &M,
    theta: &ParamVector<T>,
    theta_prime: &ParamVector<T>,
    batch: &[PreferencePair],
) -> Result<Sign> {
    if batch.is_empty() {
        return Err(Error::InvalidBatch("preference batch is empty".into()));
    }
    for pair in batch {
        let lp = |params: &ParamVector<T>, y: &[usize]| model.log_likelihood_at(params.values(), &pair.prompt, y);
        let pos_before = lp(theta, &pair.preferred)?;
        let pos_after = lp(theta_prime, &pair.preferred)?;
        if !(pos_after > pos_before) {
            return Ok(Sign::Plus);
        }
        let neg_before = lp(theta, &pair.dispreferred)?;
        let neg_after = lp(theta_prime, &pair.dispreferred)?;
        if !(neg_after < neg_before) {
            return Ok(Sign::Plus);
        }
    }
    Ok(Sign::Minus)
}

/// Preference oracle bound to a model and a nonempty batch of pairs.
#[derive(Debug, Clone, Copy)]
pub struct PreferenceOracle<'a, M> {
    model: &'a M,
    batch: &'a [PreferencePair],
}

impl<'a, M> PreferenceOracle<'a, M> {
    pub fn new(model: &'a M, batch: &'a [PreferencePair]) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::InvalidBatch("preference batch is empty".into()));
        }
        Ok(Self { model, batch })
    }

    pub fn batch(&self) -> &'a [PreferencePair] {
        self.batch
    }
}

impl<T: Scalar, M: LikelihoodModel<T>> ComparisonOracle<T> for PreferenceOracle<'_, M> {
    fn compare(&self, theta: &ParamVector<T>, theta_prime: &ParamVector<T>) -> Result<Sign> {
        compare_preference(self.model, theta, theta_prime, self.batch)
    }
}

/// `m` perturbation directions with the oracle's answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BitMeasurementBatch<T: Scalar> {
    pub directions: Vec<UnitVector<T>>,
    pub signs: Vec<Sign>,
    pub radius: T,
    pub iteration: usize,
    pub oracle_calls: usize,
}

impl<T: Scalar> BitMeasurementBatch<T> {
    /// Assembles a batch from precomputed measurements (used by tests and
    /// synthetic recovery experiments).
    pub fn from_parts(directions: Vec<UnitVector<T>>, signs: Vec<Sign>, radius: T, iteration: usize) -> Result<Self> {
        if directions.is_empty() || directions.len() != signs.len() {
            return Err(Error::InvalidBatch(format!(
                "{} directions vs {} signs",
                directions.len(),
                signs.len()
            )));
        }
        let k = directions[0].dim();
        if let Some(d) = directions.iter().find(|d| d.dim() != k) {
            return Err(Error::Shape { expected: k, got: d.dim() });
        }
        if !(radius > T::zero()) {
            return Err(Error::InvalidRadius(radius.as_f64()));
        }
        let oracle_calls = signs.len();
        Ok(Self {
            directions,
            signs,
            radius,
            iteration,
            oracle_calls,
        })
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.directions.first().map_or(0, UnitVector::dim)
    }

    pub fn negative_count(&self) -> usize {
        self.signs.iter().filter(|&&s| s == Sign::Minus).count()
    }

    /// Fraction of queries answered `Minus`.
    pub fn negative_fraction(&self) -> T {
        T::lit(self.negative_count() as f64 / self.len() as f64)
    }

    /// `sum_i y_i z_i`, accumulated in ascending index order.
    pub fn signed_sum(&self) -> Vec<T> {
        let mut c = vec![T::zero(); self.dim()];
        for (z, s) in self.directions.iter().zip(&self.signs) {
            let y = s.as_scalar::<T>();
            for (ci, &zi) in c.iter_mut().zip(z.values()) {
                *ci += y * zi;
            }
        }
        c
    }
}

/// Queries `oracle(theta, theta + radius * z_i)` for `m` fresh sphere
/// directions in the scoped subspace. Direction `i` comes from substream
/// `(iteration, i)`, so the result is independent of evaluation order.
pub fn measure_bits<T: Scalar, O: ComparisonOracle<T> + ?Sized>(
    oracle: &O,
    theta: &ParamVector<T>,
    radius: T,
    m: usize,
    rng: &RngState,
    iteration: usize,
) -> Result<BitMeasurementBatch<T>> {
    if m == 0 {
        return Err(Error::InvalidBatch("m must be at least 1".into()));
    }
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::InvalidRadius(radius.as_f64()));
    }
    let k = theta.scope_dim();
    let results: Vec<(UnitVector<T>, Sign)> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.substream(iteration as u64, i as u64);
            let z = sample_unit_sphere::<T, _>(k, &mut r)?;
            let probe = embed_perturbation(theta, z.values(), radius)?;
            let y = oracle.compare(theta, &probe)?;
            Ok((z, y))
        })
        .collect::<Result<_>>()?;
    let (directions, signs) = results.into_iter().unzip();
    Ok(BitMeasurementBatch {
        directions,
        signs,
        radius,
        iteration,
        oracle_calls: m,
    })
}
