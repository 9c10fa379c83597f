//! Run configuration: JSON layout, presets and layered defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::optimizer::PracticalConfig;
use crate::policy::{PerturbationScope, PolicyShape};
use crate::vector::ScopeMask;

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "ZOCMP_OUT";

/// Fields without defaults.
pub const REQUIRED_FIELDS: [&str; 2] = ["mode", "seed"];

pub const PRESETS: [&str; 3] = ["mistral-7b", "llama-3-8b", "gemma-2-9b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Basic,
    Practical,
    Pipeline,
    BenchLemma,
    BenchProposition,
    BenchSweep,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Basic => "basic",
            Mode::Practical => "practical",
            Mode::Pipeline => "pipeline",
            Mode::BenchLemma => "bench-lemma",
            Mode::BenchProposition => "bench-proposition",
            Mode::BenchSweep => "bench-sweep",
        }
    }

    pub fn is_bench(self) -> bool {
        matches!(self, Mode::BenchLemma | Mode::BenchProposition | Mode::BenchSweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveFamily {
    SparseQuadratic,
    NonconvexSparse,
}

/// Everything needed to reproduce one run. Serialized as a flat JSON object;
/// every field except `mode` and `seed` has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub preset: Option<String>,
    pub output_dir: Option<PathBuf>,

    // Synthetic objective (basic, practical).
    pub objective: ObjectiveFamily,
    pub dim: usize,
    pub sparsity: usize,
    /// Curvature weight of the nonconvex family.
    pub alpha: f64,
    /// Starting value on every support coordinate.
    pub init_value: f64,

    // Theory-driven schedule.
    pub epsilon: f64,
    pub failure_prob: f64,
    /// Overrides the objective's smoothness constant.
    pub smoothness: Option<f64>,
    /// Overrides the computed initial gap.
    pub initial_gap: Option<f64>,
    pub c_m: f64,

    // Practical scheme.
    pub gamma: f64,
    pub radius: f64,
    pub queries: usize,
    pub lambda_g: f64,
    pub skip_threshold: f64,
    pub iterations: usize,
    pub batch_size: usize,
    /// Zero-based coordinates perturbed in practical mode; all when absent.
    pub scope: Option<ScopeMask>,

    // Pipeline.
    /// JSON-lines preference pairs; synthesized from the seed when absent.
    pub dataset: Option<PathBuf>,
    /// Stored reference policy; random from the seed when absent.
    pub reference_policy: Option<PathBuf>,
    pub policy_shape: PolicyShape,
    pub reference_scale: f64,
    pub n_clean: usize,
    pub n_noisy: usize,
    pub delta: f64,
    pub beta: f64,
    pub dpo_learning_rate: f64,
    pub dpo_epochs: usize,
    pub compo_epochs: usize,
    pub perturb: PerturbationScope,

    // Benchmarks.
    pub lemma_dim: usize,
    pub lemma_sparsity: usize,
    pub lemma_epsilon: f64,
    pub lemma_samples: usize,
    pub lemma_threshold: f64,
    pub prop_dim: usize,
    pub prop_sparsity: usize,
    pub prop_keep_prob: f64,
    pub prop_query_factor: f64,
    pub prop_trials: usize,
    pub prop_tau: f64,
    pub prop_min_within: usize,
    pub sweep_dims: Vec<usize>,
    pub sweep_seeds: usize,
    pub sweep_max_ratio: f64,
}

impl RunConfig {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            mode,
            seed,
            preset: None,
            output_dir: None,
            objective: ObjectiveFamily::SparseQuadratic,
            dim: 200,
            sparsity: 5,
            alpha: 3.0,
            init_value: 1.0,
            epsilon: 0.1,
            failure_prob: 0.1,
            smoothness: None,
            initial_gap: None,
            c_m: 1.0,
            gamma: 1.0,
            radius: 1e-3,
            queries: 400,
            lambda_g: 0.0,
            skip_threshold: 0.2,
            iterations: 200,
            batch_size: 1,
            scope: None,
            dataset: None,
            reference_policy: None,
            policy_shape: PolicyShape::default(),
            reference_scale: 0.5,
            n_clean: 50,
            n_noisy: 10,
            delta: 3.0,
            beta: 0.1,
            dpo_learning_rate: 0.5,
            dpo_epochs: 200,
            compo_epochs: 1,
            perturb: PerturbationScope::OutputLayer,
            lemma_dim: 100,
            lemma_sparsity: 5,
            lemma_epsilon: 1.0,
            lemma_samples: 100_000,
            lemma_threshold: 0.69,
            prop_dim: 500,
            prop_sparsity: 5,
            prop_keep_prob: 0.8,
            prop_query_factor: 40.0,
            prop_trials: 100,
            prop_tau: 0.5,
            prop_min_within: 95,
            sweep_dims: vec![200, 400, 800],
            sweep_seeds: 5,
            sweep_max_ratio: 2.0,
        }
    }

    pub fn practical(&self) -> PracticalConfig<f64> {
        PracticalConfig {
            gamma: self.gamma,
            radius: self.radius,
            queries: self.queries,
            lambda_g: self.lambda_g,
            skip_threshold: self.skip_threshold,
            iterations: self.iterations,
            scope: self.scope.clone(),
            seed: self.seed,
            batch_size: self.batch_size,
            keep_snapshots: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, field: &str, value: impl ToString, bounds: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::OutOfRange {
                    field: field.into(),
                    value: value.to_string(),
                    bounds: bounds.into(),
                })
            }
        }
        let pos = |x: f64| x > 0.0 && x.is_finite();
        check(self.dim >= 1, "dim", self.dim, "[1, inf)")?;
        check((1..=self.dim).contains(&self.sparsity), "sparsity", self.sparsity, "[1, dim]")?;
        check(self.alpha >= 0.0 && self.alpha.is_finite(), "alpha", self.alpha, "[0, inf)")?;
        check(self.init_value.is_finite(), "init_value", self.init_value, "finite")?;
        check(pos(self.epsilon), "epsilon", self.epsilon, "(0, inf)")?;
        check(self.failure_prob > 0.0 && self.failure_prob < 1.0, "failure_prob", self.failure_prob, "(0, 1)")?;
        if let Some(l) = self.smoothness {
            check(pos(l), "smoothness", l, "(0, inf)")?;
        }
        if let Some(g) = self.initial_gap {
            check(pos(g), "initial_gap", g, "(0, inf)")?;
        }
        check(pos(self.c_m), "c_m", self.c_m, "(0, inf)")?;
        self.practical().validate()?;
        check(pos(self.reference_scale), "reference_scale", self.reference_scale, "(0, inf)")?;
        self.policy_shape
            .validate()
            .map_err(|_| Error::OutOfRange {
                field: "policy_shape".into(),
                value: format!("{:?}", self.policy_shape),
                bounds: "vocab >= 2, other sizes >= 1".into(),
            })?;
        check(pos(self.delta), "delta", self.delta, "(0, inf)")?;
        check(pos(self.beta), "beta", self.beta, "(0, inf)")?;
        check(pos(self.dpo_learning_rate), "dpo_learning_rate", self.dpo_learning_rate, "(0, inf)")?;
        check(self.lemma_dim >= 1, "lemma_dim", self.lemma_dim, "[1, inf)")?;
        check(
            (1..=self.lemma_dim).contains(&self.lemma_sparsity),
            "lemma_sparsity",
            self.lemma_sparsity,
            "[1, lemma_dim]",
        )?;
        check(pos(self.lemma_epsilon), "lemma_epsilon", self.lemma_epsilon, "(0, inf)")?;
        check(self.lemma_samples >= 1, "lemma_samples", self.lemma_samples, "[1, inf)")?;
        check((0.0..=1.0).contains(&self.lemma_threshold), "lemma_threshold", self.lemma_threshold, "[0, 1]")?;
        check(self.prop_dim >= 1, "prop_dim", self.prop_dim, "[1, inf)")?;
        check(
            (1..=self.prop_dim).contains(&self.prop_sparsity),
            "prop_sparsity",
            self.prop_sparsity,
            "[1, prop_dim]",
        )?;
        check(
            self.prop_keep_prob > 0.5 && self.prop_keep_prob <= 1.0,
            "prop_keep_prob",
            self.prop_keep_prob,
            "(0.5, 1]",
        )?;
        check(pos(self.prop_query_factor), "prop_query_factor", self.prop_query_factor, "(0, inf)")?;
        check(self.prop_trials >= 1, "prop_trials", self.prop_trials, "[1, inf)")?;
        check(pos(self.prop_tau), "prop_tau", self.prop_tau, "(0, inf)")?;
        check(
            self.prop_min_within <= self.prop_trials,
            "prop_min_within",
            self.prop_min_within,
            "[0, prop_trials]",
        )?;
        check(
            !self.sweep_dims.is_empty() && self.sweep_dims.iter().all(|&d| d >= self.sparsity),
            "sweep_dims",
            format!("{:?}", self.sweep_dims),
            "nonempty, each >= sparsity",
        )?;
        check(self.sweep_seeds >= 1, "sweep_seeds", self.sweep_seeds, "[1, inf)")?;
        check(pos(self.sweep_max_ratio), "sweep_max_ratio", self.sweep_max_ratio, "(0, inf)")?;
        Ok(())
    }

    /// SHA-256 of the compact JSON encoding, hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Output directory: the configured one, else `$ZOCMP_OUT`, else
    /// `zocmp-out`.
    pub fn resolved_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("zocmp-out"))
    }
}

/// Field values a preset sets.
pub fn preset_values(name: &str) -> Result<Map<String, Value>> {
    let p: PracticalConfig<f64> = match name {
        "mistral-7b" => PracticalConfig::mistral_7b(),
        "llama-3-8b" | "gemma-2-9b" => PracticalConfig::llama_3_8b(),
        _ => return Err(Error::UnknownPreset(name.into())),
    };
    let mut m = Map::new();
    m.insert("radius".into(), p.radius.into());
    m.insert("queries".into(), p.queries.into());
    m.insert("lambda_g".into(), p.lambda_g.into());
    m.insert("skip_threshold".into(), p.skip_threshold.into());
    m.insert("delta".into(), 3.0.into());
    Ok(m)
}

/// Where a resolved field value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Default,
    Preset,
    File,
    CommandLine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub provenance: BTreeMap<String, Source>,
}

/// Command-line values, applied last.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    fn to_map(&self) -> Map<String, Value> {
        let mut m = Map::new();
        if let Some(mode) = self.mode {
            m.insert("mode".into(), mode.name().into());
        }
        if let Some(seed) = self.seed {
            m.insert("seed".into(), seed.into());
        }
        if let Some(p) = &self.preset {
            m.insert("preset".into(), p.clone().into());
        }
        if let Some(o) = &self.output_dir {
            m.insert("output_dir".into(), o.to_string_lossy().into_owned().into());
        }
        m
    }
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<LoadedConfig> {
    parse_config_with(path, &Overrides::default())
}

/// Reads a JSON config and resolves it: defaults, then the preset, then the
/// file, then `overrides`. An empty file counts as `{}`.
pub fn parse_config_with(path: impl AsRef<Path>, overrides: &Overrides) -> Result<LoadedConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file = if text.trim().is_empty() {
        Map::new()
    } else {
        match serde_json::from_str(&text)? {
            Value::Object(m) => m,
            _ => return Err(Error::Config(format!("{} is not a JSON object", path.display()))),
        }
    };
    resolve_config(file, overrides)
}

pub fn resolve_config(file: Map<String, Value>, overrides: &Overrides) -> Result<LoadedConfig> {
    let cli = overrides.to_map();
    let mut merged = match serde_json::to_value(RunConfig::new(Mode::Basic, 0))? {
        Value::Object(m) => m,
        _ => unreachable!("RunConfig serializes to an object"),
    };
    for f in REQUIRED_FIELDS {
        merged.remove(f);
    }
    let mut provenance: BTreeMap<String, Source> = merged.keys().map(|k| (k.clone(), Source::Default)).collect();

    let preset = match cli.get("preset").or_else(|| file.get("preset")) {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(preset_values(s)?),
        Some(v) => return Err(Error::Config(format!("preset must be a string, got {v}"))),
    };
    let layers = [
        (preset.unwrap_or_default(), Source::Preset),
        (file, Source::File),
        (cli, Source::CommandLine),
    ];
    for (layer, source) in layers {
        for (k, v) in layer {
            provenance.insert(k.clone(), source);
            merged.insert(k, v);
        }
    }

    let missing: Vec<String> = REQUIRED_FIELDS
        .iter()
        .filter(|f| !merged.contains_key(**f))
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingFields(missing));
    }
    let config: RunConfig = serde_json::from_value(Value::Object(merged))?;
    config.validate()?;
    Ok(LoadedConfig { config, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(json: &str) -> Result<LoadedConfig> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, json).unwrap();
        parse_config(&p)
    }

    #[test]
    fn empty_file_lists_required_fields() {
        match load("") {
            Err(Error::MissingFields(f)) => assert_eq!(f, vec!["mode", "seed"]),
            other => panic!("{other:?}"),
        }
        match load(r#"{"mode": "basic"}"#) {
            Err(Error::MissingFields(f)) => assert_eq!(f, vec!["seed"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn mistral_preset() {
        let c = load(r#"{"mode": "practical", "seed": 1, "preset": "mistral-7b"}"#).unwrap();
        assert_eq!(c.config.radius, 0.0005);
        assert_eq!(c.config.queries, 1600);
        assert_eq!(c.config.lambda_g, 0.00022);
        assert_eq!(c.config.skip_threshold, 0.2);
        assert_eq!(c.config.delta, 3.0);
        assert_eq!(c.provenance["radius"], Source::Preset);
        assert_eq!(c.provenance["gamma"], Source::Default);
        assert_eq!(c.provenance["seed"], Source::File);
    }

    #[test]
    fn llama_preset() {
        let c = load(r#"{"mode": "practical", "seed": 1, "preset": "llama-3-8b"}"#).unwrap();
        assert_eq!(c.config.radius, 0.00075);
        assert_eq!(c.config.queries, 1800);
        assert_eq!(c.config.lambda_g, 0.00008);
        assert_eq!(c.config.skip_threshold, 0.2);
    }

    #[test]
    fn file_overrides_preset_and_cli_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"mode": "practical", "seed": 1, "preset": "mistral-7b", "queries": 10}"#).unwrap();
        let o = Overrides {
            seed: Some(9),
            ..Overrides::default()
        };
        let c = parse_config_with(&p, &o).unwrap();
        assert_eq!(c.config.queries, 10);
        assert_eq!(c.config.seed, 9);
        assert_eq!(c.provenance["seed"], Source::CommandLine);
    }

    #[test]
    fn range_errors_name_field_and_bounds() {
        match load(r#"{"mode": "basic", "seed": 0, "skip_threshold": 1.5}"#) {
            Err(Error::OutOfRange { field, bounds, .. }) => {
                assert_eq!(field, "skip_threshold");
                assert_eq!(bounds, "[0, 1)");
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            load(r#"{"mode": "basic", "seed": 0, "sparsity": 0}"#),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn unknown_preset_and_fields_rejected() {
        assert!(matches!(
            load(r#"{"mode": "basic", "seed": 0, "preset": "gpt"}"#),
            Err(Error::UnknownPreset(_))
        ));
        assert!(load(r#"{"mode": "basic", "seed": 0, "bogus": 1}"#).is_err());
    }

    #[test]
    fn round_trip_through_export() {
        let mut c = RunConfig::new(Mode::Pipeline, 3);
        c.scope = Some(ScopeMask::new(vec![0, 4]).unwrap());
        c.perturb = PerturbationScope::All;
        c.smoothness = Some(2.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, serde_json::to_string_pretty(&c).unwrap()).unwrap();
        assert_eq!(parse_config(&p).unwrap().config, c);
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::new(Mode::Basic, 1);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
