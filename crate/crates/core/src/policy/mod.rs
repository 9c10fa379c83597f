//! Toy preference-alignment stack: policy, margin loss, data split and the
//! split / DPO / comparison-tuning pipeline.

mod data;
mod dpo;
mod model;
mod pipeline;
mod report;

pub use data::{
    classify_margin, read_jsonl, split_by_margin, synthesize_pairs, write_jsonl, PreferencePair, SplitDataset,
    SplitRow, Subset, SyntheticSpec,
};
pub use dpo::{dpo_grad, dpo_loss, dpo_margin, train_dpo, DpoConfig, DpoOutcome};
pub use model::{PolicyShape, ToyPolicy};
pub use pipeline::{run_pipeline, PerturbationScope, PipelineConfig, PipelineOutcome};
pub use report::{likelihood_report, LikelihoodReport, LikelihoodRow};
