//! Margin-based preference loss against a frozen reference policy.
//!
//! For a pair with policy/reference log-likelihood gap
//! `h = (log pi(y+) - log ref(y+)) - (log pi(y-) - log ref(y-))`
//! the loss is `-log sigmoid(beta * h)`, averaged over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::LikelihoodModel;
use crate::scalar::{axpy, sigmoid, softplus, Scalar};

use super::data::PreferencePair;
use super::model::ToyPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DpoConfig<T: Scalar> {
    pub beta: T,
    pub learning_rate: T,
    pub epochs: usize,
}

impl<T: Scalar> Default for DpoConfig<T> {
    fn default() -> Self {
        Self {
            beta: T::lit(0.1),
            learning_rate: T::lit(0.5),
            epochs: 200,
        }
    }
}

fn check_beta<T: Scalar>(beta: T) -> Result<()> {
    if beta > T::zero() && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            field: "beta".into(),
            value: beta.to_string(),
            bounds: "(0, inf)".into(),
        })
    }
}

/// Per-pair implicit reward margin `h`.
pub fn dpo_margin<T: Scalar>(policy: &ToyPolicy<T>, reference: &ToyPolicy<T>, pair: &PreferencePair) -> Result<T> {
    let lp = |p: &ToyPolicy<T>, y: &[usize]| p.log_likelihood(&pair.prompt, y);
    Ok((lp(policy, &pair.preferred)? - lp(reference, &pair.preferred)?)
        - (lp(policy, &pair.dispreferred)? - lp(reference, &pair.dispreferred)?))
}

pub fn dpo_loss<T: Scalar>(
    policy: &ToyPolicy<T>,
    reference: &ToyPolicy<T>,
    batch: &[PreferencePair],
    beta: T,
) -> Result<T> {
    check_beta(beta)?;
    if batch.is_empty() {
        return Err(Error::InvalidBatch("empty DPO batch".into()));
    }
    let mut total = T::zero();
    for pair in batch {
        total += softplus(-beta * dpo_margin(policy, reference, pair)?);
    }
    Ok(total / T::lit(batch.len() as f64))
}

/// Reference log-likelihoods `(preferred, dispreferred)` for each pair.
fn reference_terms<T: Scalar>(reference: &ToyPolicy<T>, batch: &[PreferencePair]) -> Result<Vec<(T, T)>> {
    batch
        .iter()
        .map(|p| {
            Ok((
                reference.log_likelihood(&p.prompt, &p.preferred)?,
                reference.log_likelihood(&p.prompt, &p.dispreferred)?,
            ))
        })
        .collect()
}

fn loss_and_grad<T: Scalar>(
    policy: &ToyPolicy<T>,
    ref_terms: &[(T, T)],
    batch: &[PreferencePair],
    beta: T,
) -> Result<(T, Vec<T>)> {
    let w = policy.weights();
    let mut grad = vec![T::zero(); w.len()];
    let mut loss = T::zero();
    for (pair, &(rp, rn)) in batch.iter().zip(ref_terms) {
        let (lp, gp) = policy.log_likelihood_grad_at(w, &pair.prompt, &pair.preferred)?;
        let (ln, gn) = policy.log_likelihood_grad_at(w, &pair.prompt, &pair.dispreferred)?;
        let h = (lp - rp) - (ln - rn);
        loss += softplus(-beta * h);
        let coeff = -sigmoid(-beta * h) * beta;
        axpy(coeff, &gp, &mut grad);
        axpy(-coeff, &gn, &mut grad);
    }
    let inv = T::one() / T::lit(batch.len() as f64);
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok((loss * inv, grad))
}

/// Analytic gradient of [`dpo_loss`] with respect to the policy weights.
pub fn dpo_grad<T: Scalar>(
    policy: &ToyPolicy<T>,
    reference: &ToyPolicy<T>,
    batch: &[PreferencePair],
    beta: T,
) -> Result<Vec<T>> {
    check_beta(beta)?;
    if batch.is_empty() {
        return Err(Error::InvalidBatch("empty DPO batch".into()));
    }
    let refs = reference_terms(reference, batch)?;
    Ok(loss_and_grad(policy, &refs, batch, beta)?.1)
}

/// Result of [`train_dpo`]. `losses[e]` is the loss before epoch `e`; the
/// last entry is the loss of the returned policy.
#[derive(Debug, Clone, PartialEq)]
pub struct DpoOutcome<T: Scalar> {
    pub policy: ToyPolicy<T>,
    pub losses: Vec<T>,
}

/// Full-batch gradient descent on the DPO loss.
pub fn train_dpo<T: Scalar>(
    policy: &ToyPolicy<T>,
    reference: &ToyPolicy<T>,
    dataset: &[PreferencePair],
    config: &DpoConfig<T>,
) -> Result<DpoOutcome<T>> {
    check_beta(config.beta)?;
    if dataset.is_empty() {
        return Err(Error::InvalidBatch("empty DPO dataset".into()));
    }
    let refs = reference_terms(reference, dataset)?;
    let mut current = policy.clone();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, grad) = loss_and_grad(&current, &refs, dataset, config.beta)?;
        losses.push(loss);
        let mut w = current.weights().to_vec();
        axpy(-config.learning_rate, &grad, &mut w);
        current = current.with_weights(w)?;
    }
    losses.push(dpo_loss(&current, reference, dataset, config.beta)?);
    Ok(DpoOutcome { policy: current, losses })
}

impl<T: Scalar> ToyPolicy<T> {
    /// Log-likelihoods `(preferred, dispreferred)` of a pair.
    pub fn pair_log_likelihoods(&self, pair: &PreferencePair) -> Result<(T, T)> {
        Ok((
            self.log_likelihood_at(self.weights(), &pair.prompt, &pair.preferred)?,
            self.log_likelihood_at(self.weights(), &pair.prompt, &pair.dispreferred)?,
        ))
    }
}
