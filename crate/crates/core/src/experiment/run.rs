//! Dispatch of a [`RunConfig`] to the optimizer, pipeline or benchmark
//! modules, with artifacts written to the output directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::bench::{
    check_estimator_error, check_sign_agreement, make_nonconvex_sparse, make_sparse_quadratic, recovery_queries,
    sweep_convergence, ScalingReport, SweepConfig, SweepRow, SyntheticObjective,
};
use crate::error::{Error, Result};
use crate::optimizer::{
    run_basic, run_practical, schedule_from_theorem, BasicOptions, TheoremSchedule, Trajectory,
};
use crate::oracle::FunctionOracle;
use crate::policy::{
    read_jsonl, run_pipeline, synthesize_pairs, write_jsonl, DpoConfig, PipelineConfig, SyntheticSpec, ToyPolicy,
};
use crate::rng::RngState;
use crate::vector::ParamVector;

use super::config::{Mode, ObjectiveFamily, RunConfig};
use super::export::{write_csv, write_json, LossCurve, Tabular};

/// One named pass/fail assertion of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: Mode,
    pub config_hash: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Every file written by the run, excluding the manifest itself.
    pub artifacts: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub checks: Vec<CheckResult>,
    /// All checks passed (vacuously true for non-benchmark modes).
    pub pass: bool,
}

impl RunManifest {
    pub const FILE_NAME: &'static str = "manifest.json";
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Artifacts {
    fn csv<R: Tabular + ?Sized>(&mut self, name: &str, report: &R) -> Result<()> {
        let p = self.dir.join(name);
        write_csv(report, &p)?;
        self.written.push(p);
        Ok(())
    }

    fn json<R: Serialize + ?Sized>(&mut self, name: &str, value: &R) -> Result<()> {
        let p = self.dir.join(name);
        write_json(value, &p)?;
        self.written.push(p);
        Ok(())
    }
}

/// Runs one experiment and writes its artifacts plus `manifest.json`.
pub fn run_experiment(config: &RunConfig) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let dir = config.resolved_output_dir();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut out = Artifacts {
        dir: dir.clone(),
        written: Vec::new(),
    };
    out.json("config.json", config)?;
    info!("running {} with seed {} into {}", config.mode.name(), config.seed, dir.display());

    let checks = match config.mode {
        Mode::Basic => run_basic_mode(config, &mut out)?,
        Mode::Practical => run_practical_mode(config, &mut out)?,
        Mode::Pipeline => run_pipeline_mode(config, &mut out)?,
        Mode::BenchLemma => bench_lemma(config, &mut out)?,
        Mode::BenchProposition => bench_proposition(config, &mut out)?,
        Mode::BenchSweep => bench_sweep(config, &mut out)?,
    };
    for c in &checks {
        info!("{}: {} ({})", c.name, if c.pass { "pass" } else { "FAIL" }, c.detail);
    }
    let manifest = RunManifest {
        mode: config.mode,
        config_hash: config.hash(),
        seed: config.seed,
        output_dir: dir.clone(),
        artifacts: out.written,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        pass: checks.iter().all(|c| c.pass),
        checks,
    };
    write_json(&manifest, &dir.join(RunManifest::FILE_NAME))?;
    Ok(manifest)
}

fn objective(config: &RunConfig) -> Result<SyntheticObjective<f64>> {
    match config.objective {
        ObjectiveFamily::SparseQuadratic => make_sparse_quadratic(config.dim, config.sparsity, config.seed),
        ObjectiveFamily::NonconvexSparse => {
            make_nonconvex_sparse(config.dim, config.sparsity, config.alpha, config.seed)
        }
    }
}

fn initial_point(config: &RunConfig, obj: &SyntheticObjective<f64>) -> Result<ParamVector<f64>> {
    let mut theta = vec![0.0; obj.dim];
    for &j in &obj.support {
        theta[j] = config.init_value;
    }
    ParamVector::new(theta)
}

#[derive(Serialize)]
struct OptimizerSummary<'a> {
    schedule: Option<&'a TheoremSchedule<f64>>,
    iterations: usize,
    oracle_calls: usize,
    skipped: usize,
    initial_value: f64,
    final_value: Option<f64>,
    final_grad_norm: Option<f64>,
    best_grad_norm: Option<f64>,
    calls_to_reach_epsilon: Option<usize>,
}

fn summarize<'a>(
    traj: &Trajectory<f64>,
    obj: &SyntheticObjective<f64>,
    theta0: &ParamVector<f64>,
    epsilon: f64,
    schedule: Option<&'a TheoremSchedule<f64>>,
) -> OptimizerSummary<'a> {
    OptimizerSummary {
        schedule,
        iterations: traj.records.len(),
        oracle_calls: traj.total_oracle_calls(),
        skipped: traj.skipped_count(),
        initial_value: obj.evaluate(theta0.values()),
        final_value: traj.final_diagnostics.map(|d| d.value),
        final_grad_norm: traj.final_diagnostics.map(|d| d.grad_norm),
        best_grad_norm: traj.best_grad_norm(),
        calls_to_reach_epsilon: traj.calls_to_reach(epsilon),
    }
}

fn run_basic_mode(config: &RunConfig, out: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let obj = objective(config)?;
    let theta0 = initial_point(config, &obj)?;
    let smoothness = config.smoothness.unwrap_or(obj.smoothness);
    let gap = match config.initial_gap.or_else(|| obj.initial_gap(theta0.values())) {
        Some(g) if g > 0.0 => g,
        _ => return Err(Error::Precondition("initial gap is zero; set initial_gap".into())),
    };
    let schedule = schedule_from_theorem(
        config.epsilon,
        config.failure_prob,
        smoothness,
        gap,
        config.sparsity,
        config.dim,
        config.c_m,
    )?;
    let rng = RngState::new(config.seed);
    let traj = run_basic(
        &FunctionOracle(obj.clone()),
        &theta0,
        &schedule,
        &rng,
        Some(&obj),
        BasicOptions::default(),
    )?;
    out.csv("trajectory.csv", &traj)?;
    out.json("summary.json", &summarize(&traj, &obj, &theta0, config.epsilon, Some(&schedule)))?;
    Ok(Vec::new())
}

fn run_practical_mode(config: &RunConfig, out: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let obj = objective(config)?;
    let theta0 = initial_point(config, &obj)?;
    let traj = run_practical(&FunctionOracle(obj.clone()), &theta0, &config.practical(), Some(&obj))?;
    out.csv("trajectory.csv", &traj)?;
    out.json("summary.json", &summarize(&traj, &obj, &theta0, config.epsilon, None))?;
    Ok(Vec::new())
}

/// The reference policy of a pipeline run: loaded from
/// `config.reference_policy`, else Gaussian from the seed.
pub fn load_reference(config: &RunConfig) -> Result<ToyPolicy<f64>> {
    match &config.reference_policy {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        }
        None => ToyPolicy::random(config.policy_shape, config.seed, config.reference_scale),
    }
}

/// Toy preference data labelled by a hidden policy derived from the seed.
pub fn synthesize_dataset(config: &RunConfig, reference: &ToyPolicy<f64>) -> Result<Vec<crate::policy::PreferencePair>> {
    let target_seed = RngState::new(config.seed).fork(0x7a29).seed;
    let target = ToyPolicy::random(*reference.shape(), target_seed, config.reference_scale)?;
    let spec = SyntheticSpec {
        n_clean: config.n_clean,
        n_noisy: config.n_noisy,
        delta: config.delta,
        ..SyntheticSpec::default()
    };
    synthesize_pairs(reference, &target, &spec, config.seed)
}

#[derive(Serialize)]
struct PipelineSummary {
    pairs: usize,
    clean: usize,
    noisy: usize,
    dpo_initial_loss: Option<f64>,
    dpo_final_loss: Option<f64>,
    compo_iterations: usize,
    compo_skipped: usize,
    compo_oracle_calls: usize,
    aligned_noisy_pairs: usize,
    mean_noisy_margin_before: f64,
    mean_noisy_margin_after: f64,
    warnings: Vec<String>,
}

fn run_pipeline_mode(config: &RunConfig, out: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let reference = load_reference(config)?;
    let dataset = match &config.dataset {
        Some(p) => read_jsonl(p)?,
        None => {
            let d = synthesize_dataset(config, &reference)?;
            let p = out.dir.join("dataset.jsonl");
            write_jsonl(&p, &d)?;
            out.written.push(p);
            d
        }
    };
    let pc = PipelineConfig {
        delta: config.delta,
        dpo: DpoConfig {
            beta: config.beta,
            learning_rate: config.dpo_learning_rate,
            epochs: config.dpo_epochs,
        },
        compo: config.practical(),
        compo_epochs: config.compo_epochs,
        scope: config.perturb.clone(),
    };
    let outcome = run_pipeline(&reference, &dataset, &pc)?;
    out.csv("split.csv", &outcome.split)?;
    out.csv("dpo_losses.csv", &LossCurve(&outcome.dpo_losses))?;
    out.json("dpo_clean_policy.json", &outcome.dpo_clean)?;
    let traj = outcome.trajectory.clone().unwrap_or_else(|| Trajectory {
        initial_hash: 0,
        records: Vec::new(),
        final_theta: ParamVector::new(outcome.final_policy.weights().to_vec()).expect("finite weights"),
        final_diagnostics: None,
    });
    out.csv("trajectory.csv", &traj)?;
    out.csv("likelihoods.csv", &outcome.likelihoods)?;
    out.json("final_policy.json", &outcome.final_policy)?;
    out.json(
        "summary.json",
        &PipelineSummary {
            pairs: dataset.len(),
            clean: outcome.split.clean.len(),
            noisy: outcome.split.noisy.len(),
            dpo_initial_loss: outcome.dpo_losses.first().copied(),
            dpo_final_loss: outcome.dpo_losses.last().copied(),
            compo_iterations: traj.records.len(),
            compo_skipped: traj.skipped_count(),
            compo_oracle_calls: traj.total_oracle_calls(),
            aligned_noisy_pairs: outcome.likelihoods.aligned_count(),
            mean_noisy_margin_before: outcome.likelihoods.mean_margin_before(),
            mean_noisy_margin_after: outcome.likelihoods.mean_margin_after(),
            warnings: outcome.warnings.clone(),
        },
    )?;
    Ok(Vec::new())
}

/// Result of the sign-agreement benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub dim: usize,
    pub sparsity: usize,
    pub epsilon: f64,
    pub smoothness: f64,
    pub radius: f64,
    pub grad_norm: f64,
    pub samples: usize,
    pub agreement: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Tabular for LemmaReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "dim",
            "sparsity",
            "epsilon",
            "smoothness",
            "radius",
            "grad_norm",
            "samples",
            "agreement",
            "threshold",
            "pass",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        vec![vec![
            self.dim.to_string(),
            self.sparsity.to_string(),
            self.epsilon.to_string(),
            self.smoothness.to_string(),
            self.radius.to_string(),
            self.grad_norm.to_string(),
            self.samples.to_string(),
            self.agreement.to_string(),
            self.threshold.to_string(),
            self.pass.to_string(),
        ]]
    }
}

/// Sign agreement on a sparse quadratic at a point with unit gradient norm.
pub fn lemma_report(config: &RunConfig) -> Result<LemmaReport> {
    let obj = make_sparse_quadratic::<f64>(config.lemma_dim, config.lemma_sparsity, config.seed)?;
    let theta = obj.point_with_grad_norm(1.0, config.seed)?;
    let agreement = check_sign_agreement(
        &obj,
        &theta,
        config.lemma_epsilon,
        config.lemma_samples,
        &RngState::new(config.seed),
    )?;
    Ok(LemmaReport {
        dim: obj.dim,
        sparsity: obj.sparsity(),
        epsilon: config.lemma_epsilon,
        smoothness: obj.smoothness,
        radius: config.lemma_epsilon / (40.0 * obj.smoothness * (obj.dim as f64).sqrt()),
        grad_norm: obj.grad_norm(&theta),
        samples: config.lemma_samples,
        agreement,
        threshold: config.lemma_threshold,
        pass: agreement >= config.lemma_threshold,
    })
}

fn bench_lemma(config: &RunConfig, out: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let r = lemma_report(config)?;
    out.csv("lemma.csv", &r)?;
    let checks = vec![CheckResult {
        name: "sign-agreement".into(),
        pass: r.pass,
        detail: format!("agreement {} vs threshold {}", r.agreement, r.threshold),
    }];
    out.json("summary.json", &(&r, &checks))?;
    Ok(checks)
}

#[derive(Serialize)]
struct PropositionSummary<'a> {
    queries: usize,
    tau: f64,
    within: usize,
    min_within: usize,
    mean_error: f64,
    max_error: f64,
    checks: &'a [CheckResult],
}

fn bench_proposition(config: &RunConfig, out: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let m = recovery_queries(config.prop_dim, config.prop_sparsity, config.prop_query_factor);
    let report = check_estimator_error::<f64>(
        config.prop_dim,
        config.prop_sparsity,
        1.0 - config.prop_keep_prob,
        m,
        config.prop_trials,
        &RngState::new(config.seed),
    )?;
    out.csv("proposition.csv", &report)?;
    let within = report.within(config.prop_tau);
    let checks = vec![CheckResult {
        name: "one-bit-recovery".into(),
        pass: within >= config.prop_min_within,
        detail: format!(
            "{within}/{} trials within {} (need {})",
            config.prop_trials, config.prop_tau, config.prop_min_within
        ),
    }];
    out.json(
        "summary.json",
        &PropositionSummary {
            queries: m,
            tau: config.prop_tau,
            within,
            min_within: config.prop_min_within,
            mean_error: report.mean(),
            max_error: report.max(),
            checks: &checks,
        },
    )?;
    Ok(checks)
}

pub fn sweep_config(config: &RunConfig) -> SweepConfig {
    SweepConfig {
        dims: config.sweep_dims.clone(),
        sparsity: config.sparsity,
        epsilon: config.epsilon,
        failure_prob: config.failure_prob,
        c_m: config.c_m,
        seeds: (0..config.sweep_seeds as u64).map(|k| config.seed + k).collect(),
        init_value: config.init_value,
    }
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    rows: &'a [SweepRow],
    ratios: &'a [Option<f64>],
    max_ratio: Option<f64>,
    checks: &'a [CheckResult],
}

fn bench_sweep(config: &RunConfig, out: &mut Artifacts) -> Result<Vec<CheckResult>> {
    let report: ScalingReport = sweep_convergence::<f64>(&sweep_config(config))?;
    out.csv("sweep.csv", &report)?;
    let censored: usize = report.rows.iter().map(|r| r.censored).sum();
    let max_ratio = report.max_ratio();
    let checks = vec![
        CheckResult {
            name: "sweep-convergence".into(),
            pass: censored == 0,
            detail: format!("{censored} censored cells"),
        },
        CheckResult {
            name: "sweep-dimension-ratio".into(),
            pass: max_ratio.is_some_and(|r| r <= config.sweep_max_ratio),
            detail: format!("max ratio {max_ratio:?} vs bound {}", config.sweep_max_ratio),
        },
    ];
    out.json(
        "summary.json",
        &SweepSummary {
            rows: &report.rows,
            ratios: &report.ratios,
            max_ratio,
            checks: &checks,
        },
    )?;
    Ok(checks)
}

/// Reads a manifest back from an output directory.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<RunManifest> {
    let p = dir.as_ref().join(RunManifest::FILE_NAME);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn in_tmp(mode: Mode) -> (tempfile::TempDir, RunConfig) {
        let dir = tempfile::tempdir().unwrap();
        let mut c = RunConfig::new(mode, 5);
        c.output_dir = Some(dir.path().to_path_buf());
        (dir, c)
    }

    #[test]
    fn practical_mode_writes_listed_artifacts() {
        let (_d, mut c) = in_tmp(Mode::Practical);
        c.dim = 30;
        c.iterations = 5;
        c.queries = 50;
        let m = run_experiment(&c).unwrap();
        assert!(m.pass);
        for a in &m.artifacts {
            assert!(std::fs::metadata(a).unwrap().len() > 0, "{a:?}");
        }
        let traj = std::fs::read_to_string(c.output_dir.unwrap().join("trajectory.csv")).unwrap();
        assert_eq!(traj.lines().count(), 6);
    }

    #[test]
    fn bench_lemma_small() {
        let (_d, mut c) = in_tmp(Mode::BenchLemma);
        c.lemma_samples = 2000;
        let m = run_experiment(&c).unwrap();
        assert_eq!(m.checks.len(), 1);
        assert!(m.pass);
        assert_eq!(read_manifest(c.output_dir.unwrap()).unwrap().config_hash, m.config_hash);
    }

    #[test]
    fn failing_check_marks_manifest() {
        let (_d, mut c) = in_tmp(Mode::BenchProposition);
        c.prop_dim = 50;
        c.prop_query_factor = 0.5;
        c.prop_trials = 5;
        c.prop_min_within = 5;
        c.prop_tau = 0.01;
        let m = run_experiment(&c).unwrap();
        assert!(!m.pass);
    }
}
