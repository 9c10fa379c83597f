//! Synthetic objectives with known smoothness and gradient support.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{Diagnose, Diagnostics};
use crate::oracle::Objective;
use crate::rng::RngState;
use crate::scalar::{norm2, Scalar};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", rename_all = "snake_case", tag = "kind")]
pub enum ObjectiveKind<T: Scalar> {
    /// `1/2 sum_j a_j theta_j^2` over the support.
    SparseQuadratic { coeffs: Vec<T> },
    /// `sum_j (theta_j^2 + alpha cos theta_j)` over the support.
    NonconvexSparse { alpha: T },
    /// `sum_j w_j theta_j` over the support.
    Linear { weights: Vec<T> },
}

/// Smooth objective whose gradient is supported on a fixed index set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SyntheticObjective<T: Scalar> {
    pub dim: usize,
    pub support: Vec<usize>,
    pub kind: ObjectiveKind<T>,
    /// Gradient Lipschitz constant.
    pub smoothness: T,
}

fn check_sizes(d: usize, s: usize) -> Result<()> {
    if s == 0 || s > d {
        return Err(Error::Precondition(format!("need 1 <= s <= d, got s = {s}, d = {d}")));
    }
    Ok(())
}

fn random_support(d: usize, s: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx = sample(rng, d, s).into_vec();
    idx.sort_unstable();
    idx
}

/// Quadratic with `s` random support coordinates and curvatures in `[0.5, 1]`.
pub fn make_sparse_quadratic<T: Scalar>(d: usize, s: usize, seed: u64) -> Result<SyntheticObjective<T>> {
    check_sizes(d, s)?;
    let mut rng = RngState::new(seed).fork(0x0b1e).substream(0, 0);
    let support = random_support(d, s, &mut rng);
    let coeffs: Vec<T> = (0..s).map(|_| T::lit(rng.random_range(0.5..=1.0))).collect();
    SyntheticObjective::quadratic(d, support, coeffs)
}

/// Quadratic-plus-cosine family; smoothness `2 + alpha`. The Hessian
/// `2 - alpha cos theta_j` has negative regions once `alpha > 2`.
pub fn make_nonconvex_sparse<T: Scalar>(d: usize, s: usize, alpha: T, seed: u64) -> Result<SyntheticObjective<T>> {
    check_sizes(d, s)?;
    if !(alpha >= T::zero() && alpha.is_finite()) {
        return Err(Error::Precondition(format!("alpha = {alpha} must be nonnegative")));
    }
    let mut rng = RngState::new(seed).fork(0x0c05).substream(0, 0);
    let support = random_support(d, s, &mut rng);
    Ok(SyntheticObjective {
        dim: d,
        support,
        kind: ObjectiveKind::NonconvexSparse { alpha },
        smoothness: T::lit(2.0) + alpha,
    })
}

impl<T: Scalar> SyntheticObjective<T> {
    pub fn quadratic(d: usize, support: Vec<usize>, coeffs: Vec<T>) -> Result<Self> {
        check_sizes(d, support.len())?;
        if coeffs.len() != support.len() {
            return Err(Error::Shape {
                expected: support.len(),
                got: coeffs.len(),
            });
        }
        let smoothness = coeffs.iter().map(|a| a.abs()).fold(T::zero(), T::max);
        Ok(Self {
            dim: d,
            support,
            kind: ObjectiveKind::SparseQuadratic { coeffs },
            smoothness,
        })
    }

    /// Linear function; any positive `smoothness` is a valid bound.
    pub fn linear(d: usize, support: Vec<usize>, weights: Vec<T>, smoothness: T) -> Result<Self> {
        check_sizes(d, support.len())?;
        if weights.len() != support.len() {
            return Err(Error::Shape {
                expected: support.len(),
                got: weights.len(),
            });
        }
        Ok(Self {
            dim: d,
            support,
            kind: ObjectiveKind::Linear { weights },
            smoothness,
        })
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn evaluate(&self, theta: &[T]) -> T {
        let it = self.support.iter().map(|&j| theta[j]);
        match &self.kind {
            ObjectiveKind::SparseQuadratic { coeffs } => {
                T::lit(0.5) * it.zip(coeffs).map(|(t, &a)| a * t * t).sum::<T>()
            }
            ObjectiveKind::NonconvexSparse { alpha } => it.map(|t| t * t + *alpha * t.cos()).sum(),
            ObjectiveKind::Linear { weights } => it.zip(weights).map(|(t, &w)| w * t).sum(),
        }
    }

    pub fn gradient(&self, theta: &[T]) -> Vec<T> {
        let mut g = vec![T::zero(); self.dim];
        for (k, &j) in self.support.iter().enumerate() {
            let t = theta[j];
            g[j] = match &self.kind {
                ObjectiveKind::SparseQuadratic { coeffs } => coeffs[k] * t,
                ObjectiveKind::NonconvexSparse { alpha } => T::lit(2.0) * t - *alpha * t.sin(),
                ObjectiveKind::Linear { weights } => weights[k],
            };
        }
        g
    }

    pub fn grad_norm(&self, theta: &[T]) -> T {
        norm2(&self.gradient(theta))
    }

    /// `inf f`, or `None` when unbounded below.
    pub fn infimum(&self) -> Option<T> {
        match &self.kind {
            ObjectiveKind::SparseQuadratic { coeffs } => {
                if coeffs.iter().all(|&a| a >= T::zero()) {
                    Some(T::zero())
                } else {
                    None
                }
            }
            ObjectiveKind::NonconvexSparse { alpha } => {
                let per = min_quadratic_plus_cosine(alpha.as_f64());
                Some(T::lit(per * self.sparsity() as f64))
            }
            ObjectiveKind::Linear { .. } => None,
        }
    }

    /// `f(theta0) - inf f`.
    pub fn initial_gap(&self, theta0: &[T]) -> Option<T> {
        self.infimum().map(|inf| self.evaluate(theta0) - inf)
    }

    /// Point supported on the objective's support where `|grad f| = target`,
    /// with gradient direction drawn at random. Quadratics only.
    pub fn point_with_grad_norm(&self, target: T, seed: u64) -> Result<Vec<T>> {
        let ObjectiveKind::SparseQuadratic { coeffs } = &self.kind else {
            return Err(Error::Precondition("point_with_grad_norm needs a quadratic".into()));
        };
        let mut rng = RngState::new(seed).fork(0x9017).substream(0, 0);
        let u: Vec<f64> = (0..coeffs.len()).map(|_| rng.sample(StandardNormal)).collect();
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut theta = vec![T::zero(); self.dim];
        for ((&j, &a), &uj) in self.support.iter().zip(coeffs).zip(&u) {
            theta[j] = target * T::lit(uj / n) / a;
        }
        Ok(theta)
    }
}

/// `min_t t^2 + alpha cos t`, by a coarse scan refined with golden-section search.
fn min_quadratic_plus_cosine(alpha: f64) -> f64 {
    let g = |t: f64| t * t + alpha * t.cos();
    let hi = alpha / 2.0 + 1.0;
    let n = 4096;
    let best = (0..=n)
        .map(|i| hi * i as f64 / n as f64)
        .min_by(|&a, &b| g(a).total_cmp(&g(b)))
        .unwrap_or(0.0);
    let h = hi / n as f64;
    let (mut a, mut b) = ((best - h).max(0.0), best + h);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    g(0.5 * (a + b)).min(g(best))
}

impl<T: Scalar> Objective<T> for SyntheticObjective<T> {
    fn value(&self, theta: &[T]) -> T {
        self.evaluate(theta)
    }
}

impl<T: Scalar> Diagnose<T> for SyntheticObjective<T> {
    fn diagnose(&self, theta: &[T]) -> Diagnostics<T> {
        Diagnostics {
            value: self.evaluate(theta),
            grad_norm: self.grad_norm(theta),
        }
    }
}

/// Largest `|grad f(a) - grad f(b)| / |a - b|` over `n_pairs` random pairs
/// drawn from a Gaussian of scale `spread`.
pub fn empirical_smoothness<T: Scalar>(obj: &SyntheticObjective<T>, n_pairs: usize, spread: f64, seed: u64) -> T {
    let rng = RngState::new(seed).fork(0x5a0f);
    (0..n_pairs)
        .map(|i| {
            let mut r = rng.substream(0, i as u64);
            let mut draw = || -> Vec<T> { (0..obj.dim).map(|_| T::lit(spread * r.sample::<f64, _>(StandardNormal))).collect() };
            let (a, b) = (draw(), draw());
            let ga = obj.gradient(&a);
            let gb = obj.gradient(&b);
            let num: Vec<T> = ga.iter().zip(&gb).map(|(&x, &y)| x - y).collect();
            let den: Vec<T> = a.iter().zip(&b).map(|(&x, &y)| x - y).collect();
            norm2(&num) / norm2(&den)
        })
        .fold(T::zero(), T::max)
}
