use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{measure_bits, ComparisonOracle, LikelihoodModel, PreferenceOracle};
use crate::policy::PreferencePair;
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::sparse_grad::estimate_normalized_clip;
use crate::vector::{ParamVector, ScopeMask};

use super::trajectory::{Diagnose, IterationRecord, Trajectory};

/// Settings of the practical scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PracticalConfig<T: Scalar> {
    /// Step-size scale `gamma > 0`.
    pub gamma: T,
    pub radius: T,
    /// Queries per iteration `m`.
    pub queries: usize,
    /// Entries of the normalized estimate below this magnitude are zeroed.
    pub lambda_g: T,
    /// Skip threshold: a step is taken only if the negative fraction exceeds it.
    pub skip_threshold: T,
    pub iterations: usize,
    /// Overrides the scope of the initial parameters when set.
    pub scope: Option<ScopeMask>,
    pub seed: u64,
    /// Preference pairs bound to the oracle per iteration.
    pub batch_size: usize,
    pub keep_snapshots: bool,
}

impl<T: Scalar> Default for PracticalConfig<T> {
    fn default() -> Self {
        Self {
            gamma: T::one(),
            radius: T::lit(1e-3),
            queries: 400,
            lambda_g: T::zero(),
            skip_threshold: T::lit(0.2),
            iterations: 1,
            scope: None,
            seed: 0,
            batch_size: 1,
            keep_snapshots: false,
        }
    }
}

impl<T: Scalar> PracticalConfig<T> {
    /// Operating point used for 7B-parameter Mistral models.
    pub fn mistral_7b() -> Self {
        Self {
            radius: T::lit(0.0005),
            queries: 1600,
            lambda_g: T::lit(0.00022),
            skip_threshold: T::lit(0.2),
            ..Self::default()
        }
    }

    /// Operating point used for Llama-3-8B and Gemma-2-9B models.
    pub fn llama_3_8b() -> Self {
        Self {
            radius: T::lit(0.00075),
            queries: 1800,
            lambda_g: T::lit(0.00008),
            skip_threshold: T::lit(0.2),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let range = |field: &str, value: String, bounds: &str| Error::OutOfRange {
            field: field.into(),
            value,
            bounds: bounds.into(),
        };
        if !(self.gamma > T::zero() && self.gamma.is_finite()) {
            return Err(range("gamma", self.gamma.to_string(), "(0, inf)"));
        }
        if !(self.radius > T::zero() && self.radius.is_finite()) {
            return Err(range("radius", self.radius.to_string(), "(0, inf)"));
        }
        if self.queries == 0 {
            return Err(range("queries", "0".into(), "[1, inf)"));
        }
        if !(self.lambda_g >= T::zero() && self.lambda_g.is_finite()) {
            return Err(range("lambda_g", self.lambda_g.to_string(), "[0, inf)"));
        }
        if !(self.skip_threshold >= T::zero() && self.skip_threshold < T::one()) {
            return Err(range("skip_threshold", self.skip_threshold.to_string(), "[0, 1)"));
        }
        if self.iterations == 0 {
            return Err(range("iterations", "0".into(), "[1, inf)"));
        }
        if self.batch_size == 0 {
            return Err(range("batch_size", "0".into(), "[1, inf)"));
        }
        Ok(())
    }
}

/// Mutable state threaded through [`step_practical`].
#[derive(Debug, Clone, PartialEq)]
pub struct PracticalState<T: Scalar> {
    pub theta: ParamVector<T>,
    /// Number of completed iterations.
    pub iteration: usize,
    pub oracle_calls: usize,
}

impl<T: Scalar> PracticalState<T> {
    pub fn new(theta: ParamVector<T>) -> Self {
        Self {
            theta,
            iteration: 0,
            oracle_calls: 0,
        }
    }
}

/// One iteration of the practical scheme. The scoped coordinates move by
/// `-gamma * rho * g` where `rho` is the fraction of `Minus` answers, but only
/// when `rho > skip_threshold`; otherwise `theta` is left bitwise unchanged.
pub fn step_practical<T: Scalar, O: ComparisonOracle<T> + ?Sized>(
    state: &mut PracticalState<T>,
    oracle: &O,
    config: &PracticalConfig<T>,
    rng: &RngState,
    diagnostics: Option<&dyn Diagnose<T>>,
) -> Result<IterationRecord<T>> {
    let t = state.iteration + 1;
    let diag = diagnostics.map(|d| d.diagnose(state.theta.values()));
    let batch = measure_bits(oracle, &state.theta, config.radius, config.queries, rng, t)
        .map_err(|e| e.at_iteration(t))?;
    state.oracle_calls += batch.oracle_calls;
    let rho = batch.negative_fraction();

    let (step, skipped, degenerate) = if rho > config.skip_threshold {
        match estimate_normalized_clip(&batch, config.lambda_g) {
            Ok(g) => {
                let step = config.gamma * rho;
                state.theta.add_scoped(-step, &g.direction).map_err(|e| e.at_iteration(t))?;
                (step, false, false)
            }
            Err(Error::DegenerateMeasurement) => (T::zero(), true, true),
            Err(e) => return Err(e.at_iteration(t)),
        }
    } else {
        (T::zero(), true, false)
    };
    state.iteration = t;

    Ok(IterationRecord {
        iteration: t,
        calls: batch.oracle_calls,
        oracle_calls: state.oracle_calls,
        negative_fraction: rho,
        step,
        skipped,
        degenerate,
        theta_hash: state.theta.content_hash(),
        snapshot: config.keep_snapshots.then(|| state.theta.values().to_vec()),
        objective: diag.map(|d| d.value),
        grad_norm: diag.map(|d| d.grad_norm),
    })
}

/// Runs `config.iterations` practical steps, asking `oracle_for` for the
/// oracle of each (zero-based) iteration.
pub fn run_practical_with<T, O, F>(
    theta0: &ParamVector<T>,
    config: &PracticalConfig<T>,
    mut oracle_for: F,
    diagnostics: Option<&dyn Diagnose<T>>,
) -> Result<Trajectory<T>>
where
    T: Scalar,
    O: ComparisonOracle<T>,
    F: FnMut(usize) -> Result<O>,
{
    config.validate()?;
    let theta = match &config.scope {
        Some(mask) => theta0.clone().with_scope(mask.clone())?,
        None => theta0.clone(),
    };
    let rng = RngState::new(config.seed);
    let mut traj = Trajectory::start(&theta);
    let mut state = PracticalState::new(theta);
    for i in 0..config.iterations {
        let oracle = oracle_for(i).map_err(|e| e.at_iteration(i + 1))?;
        let rec = step_practical(&mut state, &oracle, config, &rng, diagnostics)?;
        traj.records.push(rec);
    }
    traj.final_diagnostics = diagnostics.map(|d| d.diagnose(state.theta.values()));
    traj.final_theta = state.theta;
    Ok(traj)
}

/// Practical scheme against a single fixed oracle.
pub fn run_practical<T: Scalar, O: ComparisonOracle<T> + ?Sized>(
    oracle: &O,
    theta0: &ParamVector<T>,
    config: &PracticalConfig<T>,
    diagnostics: Option<&dyn Diagnose<T>>,
) -> Result<Trajectory<T>> {
    run_practical_with(theta0, config, |_| Ok(oracle), diagnostics)
}

/// Practical scheme over preference pairs: iteration `i` binds the oracle
/// to the `i`-th batch of `config.batch_size` pairs, cycling round-robin.
/// One pass over `pairs` is one epoch.
pub fn run_practical_on_pairs<T: Scalar, M: LikelihoodModel<T>>(
    model: &M,
    theta0: &ParamVector<T>,
    pairs: &[PreferencePair],
    config: &PracticalConfig<T>,
) -> Result<Trajectory<T>> {
    if pairs.is_empty() {
        return Err(Error::InvalidBatch("no preference pairs".into()));
    }
    let n = pairs.len();
    let b = config.batch_size.min(n);
    let batches: Vec<Vec<PreferencePair>> = (0..n.div_ceil(b))
        .map(|k| pairs[k * b..((k + 1) * b).min(n)].to_vec())
        .collect();
    run_practical_with(
        theta0,
        config,
        |i| PreferenceOracle::new(model, &batches[i % batches.len()]),
        None,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{FunctionOracle, Sign};
    use crate::scalar::dot;

    /// Oracle answering from a fixed script indexed by the perturbation's
    /// first coordinate order; used to pin the negative count exactly.
    struct Scripted {
        minus: usize,
        m: usize,
        counter: std::sync::atomic::AtomicUsize,
    }

    impl ComparisonOracle<f64> for Scripted {
        fn compare(&self, _: &ParamVector<f64>, _: &ParamVector<f64>) -> Result<Sign> {
            let k = self.counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst) % self.m;
            Ok(if k < self.minus { Sign::Minus } else { Sign::Plus })
        }
    }

    fn scripted(minus: usize, m: usize) -> Scripted {
        Scripted {
            minus,
            m,
            counter: Default::default(),
        }
    }

    fn cfg(m: usize, lambda: f64, gamma: f64) -> PracticalConfig<f64> {
        PracticalConfig {
            gamma,
            queries: m,
            skip_threshold: lambda,
            radius: 0.1,
            ..Default::default()
        }
    }

    #[test]
    fn skip_when_fraction_at_or_below_threshold() {
        let theta = ParamVector::new(vec![0.3, -0.7, 1.1]).unwrap();
        let mut st = PracticalState::new(theta.clone());
        let rec = step_practical(&mut st, &scripted(1, 10), &cfg(10, 0.2, 1.0), &RngState::new(0), None).unwrap();
        assert!(rec.skipped);
        assert_eq!(rec.negative_fraction, 0.1);
        assert_eq!(st.theta, theta);

        let mut st = PracticalState::new(theta.clone());
        let rec = step_practical(&mut st, &scripted(2, 10), &cfg(10, 0.2, 1.0), &RngState::new(0), None).unwrap();
        assert!(rec.skipped, "boundary rho == lambda skips");
        assert_eq!(st.theta.values(), theta.values());
    }

    #[test]
    fn step_scales_with_negative_fraction() {
        let theta = ParamVector::new(vec![0.3, -0.7, 1.1]).unwrap();
        let mut st = PracticalState::new(theta.clone());
        let rec = step_practical(&mut st, &scripted(3, 10), &cfg(10, 0.2, 1.0), &RngState::new(0), None).unwrap();
        assert!(!rec.skipped);
        assert!((rec.step - 0.3).abs() < 1e-15);
        assert_eq!(rec.oracle_calls, 10);

        let mut st = PracticalState::new(theta);
        let rec = step_practical(&mut st, &scripted(7, 7), &cfg(7, 0.0, 2.5), &RngState::new(0), None).unwrap();
        assert_eq!(rec.step, 2.5);
    }

    #[test]
    fn skipped_single_iteration_returns_theta0() {
        let theta = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let mut c = cfg(10, 0.5, 1.0);
        c.iterations = 1;
        let traj = run_practical(&scripted(0, 10), &theta, &c, None).unwrap();
        assert_eq!(traj.final_theta, theta);
        assert_eq!(traj.records[0].theta_hash, traj.initial_hash);
    }

    #[test]
    fn masked_run_keeps_other_coordinates() {
        let f = |t: &[f64]| 0.5 * dot(t, t);
        let theta = ParamVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let mut c = cfg(50, 0.1, 0.5);
        c.iterations = 20;
        c.scope = Some(ScopeMask::new(vec![1, 3]).unwrap());
        let traj = run_practical(&FunctionOracle(f), &theta, &c, None).unwrap();
        let out = traj.final_theta.values();
        assert_eq!(out[0].to_bits(), 1f64.to_bits());
        assert_eq!(out[2].to_bits(), 3f64.to_bits());
        assert!(f(out) < f(theta.values()));
    }

    #[test]
    fn invalid_configs_rejected() {
        let theta = ParamVector::new(vec![1.0]).unwrap();
        let o = scripted(0, 1);
        for bad in [
            PracticalConfig { gamma: 0.0, ..Default::default() },
            PracticalConfig { radius: -1.0, ..Default::default() },
            PracticalConfig { queries: 0, ..Default::default() },
            PracticalConfig { skip_threshold: 1.0, ..Default::default() },
            PracticalConfig { lambda_g: -0.1, ..Default::default() },
            PracticalConfig { iterations: 0, ..Default::default() },
        ] {
            assert!(matches!(run_practical(&o, &theta, &bad, None), Err(Error::OutOfRange { .. })));
        }
    }

    #[test]
    fn presets_carry_reported_operating_points() {
        let m: PracticalConfig<f64> = PracticalConfig::mistral_7b();
        assert_eq!((m.radius, m.queries, m.lambda_g, m.skip_threshold), (0.0005, 1600, 0.00022, 0.2));
        let l: PracticalConfig<f64> = PracticalConfig::llama_3_8b();
        assert_eq!((l.radius, l.queries, l.lambda_g, l.skip_threshold), (0.00075, 1800, 0.00008, 0.2));
    }
}
