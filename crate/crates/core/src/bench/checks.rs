//! Monte-Carlo validation of the sign-agreement bound, 1-bit recovery and
//! oracle-complexity scaling.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{run_basic, schedule_from_theorem, BasicOptions};
use crate::oracle::{compare_function, BitMeasurementBatch, FunctionOracle, Sign};
use crate::rng::RngState;
use crate::scalar::{dot, norm2, Scalar};
use crate::sparse_grad::solve_1bge_exact;
use crate::vector::{embed_perturbation, sample_unit_sphere, ParamVector, UnitVector};

use super::objective::{make_sparse_quadratic, SyntheticObjective};

/// Fraction of sphere directions `z` for which the comparison bit
/// `sign(f(theta + r z) - f(theta))` equals `sign(z^T grad f(theta))`,
/// with `r = epsilon / (40 l sqrt(d))`. Requires `|grad f(theta)| > epsilon / 2`.
pub fn check_sign_agreement<T: Scalar>(
    objective: &SyntheticObjective<T>,
    theta: &[T],
    epsilon: T,
    n_samples: usize,
    rng: &RngState,
) -> Result<f64> {
    let g = objective.grad_norm(theta);
    if !(g > epsilon / T::lit(2.0)) {
        return Err(Error::Precondition(format!(
            "gradient norm {g} must exceed epsilon / 2 = {}",
            epsilon / T::lit(2.0)
        )));
    }
    let radius = epsilon / (T::lit(40.0) * objective.smoothness * T::lit(objective.dim as f64).sqrt());
    sign_agreement_at_radius(objective, theta, radius, n_samples, rng)
}

/// Sign agreement at an explicit radius. Direction `i` comes from substream
/// `(0, i)`, so sweeps over `radius` use common random numbers.
pub fn sign_agreement_at_radius<T: Scalar>(
    objective: &SyntheticObjective<T>,
    theta: &[T],
    radius: T,
    n_samples: usize,
    rng: &RngState,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::Precondition("n_samples must be positive".into()));
    }
    let base = ParamVector::new(theta.to_vec())?;
    let grad = objective.gradient(theta);
    let agree = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let z = sample_unit_sphere::<T, _>(objective.dim, &mut rng.substream(0, i as u64))?;
            let probe = embed_perturbation(&base, z.values(), radius)?;
            let y = compare_function(objective, &base, &probe)?;
            Ok::<usize, Error>(usize::from(y == Sign::of(dot(z.values(), &grad))))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(agree as f64 / n_samples as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorErrorReport {
    pub dim: usize,
    pub sparsity: usize,
    pub flip_prob: f64,
    pub queries: usize,
    /// `|g_hat - g_bar|_2` per trial.
    pub errors: Vec<f64>,
}

impl EstimatorErrorReport {
    pub fn within(&self, tau: f64) -> usize {
        self.errors.iter().filter(|&&e| e <= tau).count()
    }

    pub fn mean(&self) -> f64 {
        self.errors.iter().sum::<f64>() / self.errors.len().max(1) as f64
    }

    pub fn max(&self) -> f64 {
        self.errors.iter().copied().fold(0.0, f64::max)
    }
}

/// `m = ceil(factor * s * ln(2d / s))`.
pub fn recovery_queries(d: usize, s: usize, factor: f64) -> usize {
    (factor * s as f64 * (2.0 * d as f64 / s as f64).ln()).ceil() as usize
}

/// Plants a random `s`-sparse unit vector, observes `m` sign measurements
/// each flipped with probability `flip_prob`, solves the exact estimator and
/// records the recovery error. Trial `k` uses `rng.fork(k)`.
pub fn check_estimator_error<T: Scalar>(
    d: usize,
    s: usize,
    flip_prob: f64,
    m: usize,
    trials: usize,
    rng: &RngState,
) -> Result<EstimatorErrorReport> {
    if !(0.0..0.5).contains(&flip_prob) {
        return Err(Error::Precondition(format!(
            "flip probability {flip_prob} must lie in [0, 1/2)"
        )));
    }
    if s == 0 || s > d || m == 0 || trials == 0 {
        return Err(Error::Precondition("need 1 <= s <= d, m >= 1, trials >= 1".into()));
    }
    let errors = (0..trials)
        .into_par_iter()
        .map(|k| {
            let trial = rng.fork(k as u64);
            let planted = plant_sparse_unit::<T>(d, s, &trial)?;
            let mut dirs = Vec::with_capacity(m);
            let mut signs = Vec::with_capacity(m);
            for i in 0..m {
                let mut r = trial.substream(1, i as u64);
                let z: UnitVector<T> = sample_unit_sphere(d, &mut r)?;
                let clean = Sign::of(dot(z.values(), &planted));
                let flipped = r.random::<f64>() < flip_prob;
                signs.push(match (clean, flipped) {
                    (s, false) => s,
                    (Sign::Plus, true) => Sign::Minus,
                    (Sign::Minus, true) => Sign::Plus,
                });
                dirs.push(z);
            }
            let batch = BitMeasurementBatch::from_parts(dirs, signs, T::one(), 0)?;
            let est = solve_1bge_exact(&batch, s)?;
            let diff: Vec<T> = est.direction.iter().zip(&planted).map(|(&a, &b)| a - b).collect();
            Ok(norm2(&diff).as_f64())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(EstimatorErrorReport {
        dim: d,
        sparsity: s,
        flip_prob,
        queries: m,
        errors,
    })
}

/// Random unit vector with `s` nonzeros; retried until `|g|_1 <= sqrt(s)`.
fn plant_sparse_unit<T: Scalar>(d: usize, s: usize, rng: &RngState) -> Result<Vec<T>> {
    let bound = (s as f64).sqrt() + 1e-12;
    for attempt in 0..64 {
        let mut r = rng.substream(0, attempt);
        let support = sample(&mut r, d, s).into_vec();
        let vals: Vec<f64> = (0..s).map(|_| r.sample(StandardNormal)).collect();
        let n = vals.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            continue;
        }
        let mut g = vec![T::zero(); d];
        for (&j, &v) in support.iter().zip(&vals) {
            g[j] = T::lit(v / n);
        }
        if g.iter().map(|x| x.abs().as_f64()).sum::<f64>() <= bound {
            return Ok(g);
        }
    }
    Err(Error::Precondition("could not plant a feasible sparse vector".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    pub sparsity: usize,
    pub epsilon: f64,
    pub failure_prob: f64,
    pub c_m: f64,
    pub seeds: Vec<u64>,
    /// Initial iterate: this value on every support coordinate.
    pub init_value: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            dims: vec![200, 400, 800],
            sparsity: 5,
            epsilon: 0.1,
            failure_prob: 0.1,
            c_m: 1.0,
            seeds: (0..5).collect(),
            init_value: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub dim: usize,
    pub seed: u64,
    pub converged: bool,
    /// Calls spent before the first iterate with gradient norm below
    /// epsilon; the full budget when censored.
    pub oracle_calls: usize,
    pub iterations: usize,
    pub queries_per_iteration: usize,
    pub iteration_budget: usize,
    pub best_grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dim: usize,
    pub converged: usize,
    pub censored: usize,
    /// Mean over converged cells; `None` when every cell is censored.
    pub mean_oracle_calls: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub config: SweepConfig,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
    /// `mean_calls[i + 1] / mean_calls[i]` for consecutive grid points.
    pub ratios: Vec<Option<f64>>,
}

impl ScalingReport {
    /// Largest consecutive ratio; `None` if any ratio is undefined.
    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios
            .iter()
            .copied()
            .try_fold(f64::NEG_INFINITY, |acc, r| r.map(|r| acc.max(r)))
    }

    pub fn all_converged(&self) -> bool {
        self.cells.iter().all(|c| c.converged)
    }
}

/// Runs the basic scheme on sparse quadratics for every `(d, seed)` until the
/// gradient norm first drops below epsilon, and tabulates the oracle calls.
pub fn sweep_convergence<T: Scalar>(config: &SweepConfig) -> Result<ScalingReport> {
    if config.dims.is_empty() || config.seeds.is_empty() {
        return Err(Error::Precondition("sweep grid is empty".into()));
    }
    let jobs: Vec<(usize, u64)> = config
        .dims
        .iter()
        .flat_map(|&d| config.seeds.iter().map(move |&s| (d, s)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(d, seed)| sweep_cell::<T>(config, d, seed))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<SweepRow> = config
        .dims
        .iter()
        .map(|&d| {
            let mine: Vec<&SweepCell> = cells.iter().filter(|c| c.dim == d).collect();
            let ok: Vec<&&SweepCell> = mine.iter().filter(|c| c.converged).collect();
            let mean = (!ok.is_empty())
                .then(|| ok.iter().map(|c| c.oracle_calls as f64).sum::<f64>() / ok.len() as f64);
            SweepRow {
                dim: d,
                converged: ok.len(),
                censored: mine.len() - ok.len(),
                mean_oracle_calls: mean,
            }
        })
        .collect();
    let ratios = rows
        .windows(2)
        .map(|w| Some(w[1].mean_oracle_calls? / w[0].mean_oracle_calls?))
        .collect();
    Ok(ScalingReport {
        config: config.clone(),
        cells,
        rows,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub c_m: f64,
    pub censored: usize,
    pub max_ratio: Option<f64>,
    pub pass: bool,
}

/// Reruns the sweep for each candidate query constant and marks those that
/// converge everywhere with consecutive ratios at most `max_ratio`.
pub fn calibrate_query_constant<T: Scalar>(
    base: &SweepConfig,
    candidates: &[f64],
    max_ratio: f64,
) -> Result<Vec<CalibrationRow>> {
    candidates
        .iter()
        .map(|&c_m| {
            let report = sweep_convergence::<T>(&SweepConfig { c_m, ..base.clone() })?;
            let censored = report.rows.iter().map(|r| r.censored).sum();
            let worst = report.max_ratio();
            Ok(CalibrationRow {
                c_m,
                censored,
                max_ratio: worst,
                pass: censored == 0 && worst.is_some_and(|r| r <= max_ratio),
            })
        })
        .collect()
}

fn sweep_cell<T: Scalar>(config: &SweepConfig, d: usize, seed: u64) -> Result<SweepCell> {
    let obj = make_sparse_quadratic::<T>(d, config.sparsity, seed)?;
    let mut theta = vec![T::zero(); d];
    for &j in &obj.support {
        theta[j] = T::lit(config.init_value);
    }
    let gap = obj.initial_gap(&theta).unwrap_or_else(T::one);
    let schedule = schedule_from_theorem(
        T::lit(config.epsilon),
        T::lit(config.failure_prob),
        obj.smoothness,
        gap,
        config.sparsity,
        d,
        T::lit(config.c_m),
    )?;
    let theta0 = ParamVector::new(theta)?;
    let eps = T::lit(config.epsilon);
    let opts = BasicOptions {
        stop_below: Some(eps),
        keep_snapshots: false,
    };
    let rng = RngState::new(seed).fork(d as u64);
    let traj = run_basic(&FunctionOracle(|t: &[T]| obj.evaluate(t)), &theta0, &schedule, &rng, Some(&obj), opts)?;
    let reached = traj.calls_to_reach(eps);
    Ok(SweepCell {
        dim: d,
        seed,
        converged: reached.is_some(),
        oracle_calls: reached.unwrap_or(traj.total_oracle_calls()),
        iterations: traj.records.len(),
        queries_per_iteration: schedule.queries,
        iteration_budget: schedule.iterations,
        best_grad_norm: traj.best_grad_norm().map(Scalar::as_f64),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_objective_agrees_exactly() {
        let obj = SyntheticObjective::linear(20, vec![2, 7, 11], vec![1.0, -0.5, 2.0], 1.0).unwrap();
        let theta = vec![0.1; 20];
        let a = check_sign_agreement(&obj, &theta, 0.5, 5000, &RngState::new(4)).unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn precondition_on_gradient_norm() {
        let obj: SyntheticObjective<f64> = make_sparse_quadratic(10, 2, 0).unwrap();
        let r = check_sign_agreement(&obj, &[0.0; 10], 0.5, 10, &RngState::new(0));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn agreement_increases_as_radius_shrinks() {
        let obj: SyntheticObjective<f64> = make_sparse_quadratic(100, 5, 3).unwrap();
        let theta = obj.point_with_grad_norm(1.0, 1).unwrap();
        let rng = RngState::new(8);
        let fr: Vec<f64> = [10.0, 1.0, 0.1]
            .iter()
            .map(|&r| sign_agreement_at_radius(&obj, &theta, r, 20_000, &rng).unwrap())
            .collect();
        assert!(fr[0] <= fr[1] && fr[1] <= fr[2], "{fr:?}");
        assert!(fr[0] < fr[2]);
    }

    #[test]
    fn axis_measurements_recover_axis() {
        let dirs = vec![
            UnitVector::normalize(vec![1.0, 0.0, 0.0]).unwrap(),
            UnitVector::normalize(vec![-1.0, 0.0, 0.0]).unwrap(),
            UnitVector::normalize(vec![1.0, 0.0, 0.0]).unwrap(),
        ];
        let signs = vec![Sign::Plus, Sign::Minus, Sign::Plus];
        let b = BitMeasurementBatch::from_parts(dirs, signs, 1.0, 0).unwrap();
        assert_eq!(solve_1bge_exact(&b, 1).unwrap().direction, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn noiseless_error_shrinks_with_more_queries() {
        let rng = RngState::new(21);
        let means: Vec<f64> = [50, 200, 800]
            .iter()
            .map(|&m| check_estimator_error::<f64>(40, 3, 0.0, m, 20, &rng).unwrap().mean())
            .collect();
        assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
        assert!(means[2] < 0.2);
    }

    #[test]
    fn rejects_bad_flip_probability() {
        assert!(check_estimator_error::<f64>(10, 2, 0.5, 10, 1, &RngState::new(0)).is_err());
    }

    #[test]
    fn calibration_marks_small_grid() {
        let base = SweepConfig {
            dims: vec![20, 40],
            sparsity: 2,
            epsilon: 0.2,
            seeds: vec![0, 1],
            ..SweepConfig::default()
        };
        let rows = calibrate_query_constant::<f64>(&base, &[1.0, 2.0], 2.0).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.censored == 0), "{rows:?}");
    }

    #[test]
    fn recovery_query_count() {
        // 40 * 5 * ln(200) = 1059.66
        assert_eq!(recovery_queries(500, 5, 40.0), 1060);
    }
}
