//! Split, then DPO on the clean pairs, then comparison-oracle fine-tuning
//! on the noisy pairs starting from the DPO result.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::optimizer::{run_practical_on_pairs, PracticalConfig, Trajectory};
use crate::scalar::Scalar;
use crate::vector::{ParamVector, ScopeMask};

use super::data::{split_by_margin, PreferencePair, SplitDataset};
use super::dpo::{train_dpo, DpoConfig};
use super::model::ToyPolicy;
use super::report::{likelihood_report, LikelihoodReport};

/// Which parameters the comparison stage perturbs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationScope {
    #[default]
    OutputLayer,
    All,
    Indices(ScopeMask),
}

impl PerturbationScope {
    pub fn resolve<T: Scalar>(&self, policy: &ToyPolicy<T>) -> Result<ParamVector<T>> {
        let theta = ParamVector::new(policy.weights().to_vec())?;
        match self {
            PerturbationScope::OutputLayer => policy.output_layer_params(),
            PerturbationScope::All => Ok(theta),
            PerturbationScope::Indices(m) => theta.with_scope(m.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PipelineConfig<T: Scalar> {
    /// Noisy/clean margin threshold.
    pub delta: f64,
    pub dpo: DpoConfig<T>,
    /// Comparison-stage settings; `iterations` and `scope` are derived.
    pub compo: PracticalConfig<T>,
    /// Passes over the noisy pairs.
    pub compo_epochs: usize,
    pub scope: PerturbationScope,
}

impl<T: Scalar> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            delta: 3.0,
            dpo: DpoConfig::default(),
            compo: PracticalConfig::default(),
            compo_epochs: 1,
            scope: PerturbationScope::OutputLayer,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome<T: Scalar> {
    pub split: SplitDataset,
    pub dpo_clean: ToyPolicy<T>,
    pub dpo_losses: Vec<T>,
    pub final_policy: ToyPolicy<T>,
    pub trajectory: Option<Trajectory<T>>,
    /// Noisy-pair likelihoods under the DPO policy and the final policy.
    pub likelihoods: LikelihoodReport,
    pub warnings: Vec<String>,
}

pub fn run_pipeline<T: Scalar>(
    reference: &ToyPolicy<T>,
    dataset: &[PreferencePair],
    config: &PipelineConfig<T>,
) -> Result<PipelineOutcome<T>> {
    for p in dataset {
        p.validate(reference.shape().vocab)?;
    }
    let split = split_by_margin(reference, reference.weights(), dataset, config.delta)?;
    let mut warnings = Vec::new();

    let (dpo_clean, dpo_losses) = if split.clean.is_empty() {
        warnings.push("no clean pairs: DPO stage skipped, starting from the reference policy".to_string());
        (reference.clone(), Vec::new())
    } else {
        let out = train_dpo(reference, reference, &split.clean, &config.dpo)?;
        (out.policy, out.losses)
    };

    let (final_policy, trajectory) = if split.noisy.is_empty() || config.compo_epochs == 0 {
        warnings.push("no noisy pairs or zero epochs: comparison stage skipped".to_string());
        (dpo_clean.clone(), None)
    } else {
        let theta0 = config.scope.resolve(&dpo_clean)?;
        let batch = config.compo.batch_size.clamp(1, split.noisy.len());
        let compo = PracticalConfig {
            iterations: config.compo_epochs * split.noisy.len().div_ceil(batch),
            scope: None,
            ..config.compo.clone()
        };
        let traj = run_practical_on_pairs(&dpo_clean, &theta0, &split.noisy, &compo)?;
        let policy = dpo_clean.with_weights(traj.final_theta.values().to_vec())?;
        (policy, Some(traj))
    };
    for w in &warnings {
        warn!("{w}");
    }

    let likelihoods = likelihood_report(&dpo_clean, &final_policy, &split.noisy)?;
    Ok(PipelineOutcome {
        split,
        dpo_clean,
        dpo_losses,
        final_policy,
        trajectory,
        likelihoods,
        warnings,
    })
}
