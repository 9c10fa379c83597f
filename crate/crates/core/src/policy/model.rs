//! Toy auto-regressive policy.
//!
//! A token at position `k` is predicted from a fixed random feature vector
//! of the prompt and prefix,
//!
//! ```text
//! phi(x, y_<k) = mean_i P[x_i] + Q[y_{k-1} or BOS] + R[min(k, L-1)]
//! h            = tanh(W_h phi)
//! logits       = W_o h + b_o
//! ```
//!
//! `W_h` is the trainable hidden layer; `(W_o, b_o)` is the output layer and
//! is the default perturbation scope for comparison-based fine-tuning.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::LikelihoodModel;
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::vector::{ParamVector, ScopeMask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub vocab: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Positions at or beyond `max_len - 1` share one positional feature.
    pub max_len: usize,
    /// Seed of the fixed feature tables.
    pub feature_seed: u64,
}

impl Default for PolicyShape {
    fn default() -> Self {
        Self {
            vocab: 32,
            embed_dim: 8,
            hidden_dim: 8,
            max_len: 8,
            feature_seed: 0,
        }
    }
}

impl PolicyShape {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return Err(Error::Precondition(format!("vocabulary size {} < 2", self.vocab)));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.max_len == 0 {
            return Err(Error::Precondition("policy dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn hidden_len(&self) -> usize {
        self.hidden_dim * self.embed_dim
    }

    pub fn param_count(&self) -> usize {
        self.hidden_len() + self.vocab * self.hidden_dim + self.vocab
    }

    /// Index range of the output layer `(W_o, b_o)` in the flat parameters.
    pub fn output_layer(&self) -> std::ops::Range<usize> {
        self.hidden_len()..self.param_count()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct FeatureTables<T> {
    prompt: Vec<T>,
    prev: Vec<T>,
    pos: Vec<T>,
}

impl<T: Scalar> FeatureTables<T> {
    fn generate(shape: &PolicyShape) -> Self {
        let e = shape.embed_dim;
        let scale = 1.0 / (e as f64).sqrt();
        let rng = RngState::new(shape.feature_seed).fork(0xfea7);
        let table = |which: u64, rows: usize| -> Vec<T> {
            let mut r = rng.substream(which, 0);
            (0..rows * e)
                .map(|_| T::lit(scale * r.sample::<f64, _>(StandardNormal)))
                .collect()
        };
        Self {
            prompt: table(0, shape.vocab),
            prev: table(1, shape.vocab + 1),
            pos: table(2, shape.max_len),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct StoredPolicy<T: Scalar> {
    shape: PolicyShape,
    weights: Vec<T>,
}

/// Linear-softmax policy over a small vocabulary with fixed random features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", try_from = "StoredPolicy<T>", into = "StoredPolicy<T>")]
pub struct ToyPolicy<T: Scalar> {
    shape: PolicyShape,
    features: FeatureTables<T>,
    weights: Vec<T>,
}

impl<T: Scalar> TryFrom<StoredPolicy<T>> for ToyPolicy<T> {
    type Error = Error;
    fn try_from(s: StoredPolicy<T>) -> Result<Self> {
        Self::from_weights(s.shape, s.weights)
    }
}

impl<T: Scalar> From<ToyPolicy<T>> for StoredPolicy<T> {
    fn from(p: ToyPolicy<T>) -> Self {
        Self {
            shape: p.shape,
            weights: p.weights,
        }
    }
}

/// Per-position activations kept for back-propagation.
struct Forward<T> {
    phi: Vec<T>,
    hidden: Vec<T>,
    log_probs: Vec<T>,
}

impl<T: Scalar> ToyPolicy<T> {
    pub fn from_weights(shape: PolicyShape, weights: Vec<T>) -> Result<Self> {
        shape.validate()?;
        if weights.len() != shape.param_count() {
            return Err(Error::Shape {
                expected: shape.param_count(),
                got: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            features: FeatureTables::generate(&shape),
            shape,
            weights,
        })
    }

    /// All-zero weights: the uniform policy.
    pub fn uniform(shape: PolicyShape) -> Result<Self> {
        Self::from_weights(shape, vec![T::zero(); shape.param_count()])
    }

    /// Gaussian weights with standard deviation `scale`.
    pub fn random(shape: PolicyShape, seed: u64, scale: f64) -> Result<Self> {
        let mut r = RngState::new(seed).fork(0x3e16).substream(0, 0);
        let w = (0..shape.param_count())
            .map(|_| T::lit(scale * r.sample::<f64, _>(StandardNormal)))
            .collect();
        Self::from_weights(shape, w)
    }

    pub fn shape(&self) -> &PolicyShape {
        &self.shape
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn with_weights(&self, weights: Vec<T>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(Error::Shape {
                expected: self.weights.len(),
                got: weights.len(),
            });
        }
        Ok(Self {
            shape: self.shape,
            features: self.features.clone(),
            weights,
        })
    }

    /// Parameters as a vector scoped to the output layer.
    pub fn output_layer_params(&self) -> Result<ParamVector<T>> {
        let r = self.shape.output_layer();
        ParamVector::new(self.weights.clone())?.with_scope(ScopeMask::range(r.start, r.end)?)
    }

    pub fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.shape.vocab) {
            Some(&token) => Err(Error::Vocabulary {
                token,
                vocab: self.shape.vocab,
            }),
            None => Ok(()),
        }
    }

    fn features(&self, prompt: &[usize], prefix: &[usize]) -> Vec<T> {
        let e = self.shape.embed_dim;
        let mut phi = vec![T::zero(); e];
        if !prompt.is_empty() {
            let inv = T::one() / T::lit(prompt.len() as f64);
            for &tok in prompt {
                for (p, &w) in phi.iter_mut().zip(&self.features.prompt[tok * e..(tok + 1) * e]) {
                    *p += inv * w;
                }
            }
        }
        let prev = prefix.last().copied().unwrap_or(self.shape.vocab);
        let pos = prefix.len().min(self.shape.max_len - 1);
        for (i, p) in phi.iter_mut().enumerate() {
            *p += self.features.prev[prev * e + i] + self.features.pos[pos * e + i];
        }
        phi
    }

    fn forward(&self, params: &[T], prompt: &[usize], prefix: &[usize]) -> Forward<T> {
        let (e, hd, v) = (self.shape.embed_dim, self.shape.hidden_dim, self.shape.vocab);
        let (w_h, rest) = params.split_at(hd * e);
        let (w_o, b_o) = rest.split_at(v * hd);
        let phi = self.features(prompt, prefix);
        let hidden: Vec<T> = (0..hd)
            .map(|j| {
                let row = &w_h[j * e..(j + 1) * e];
                row.iter().zip(&phi).map(|(&a, &b)| a * b).sum::<T>().tanh()
            })
            .collect();
        let logits: Vec<T> = (0..v)
            .map(|u| {
                let row = &w_o[u * hd..(u + 1) * hd];
                b_o[u] + row.iter().zip(&hidden).map(|(&a, &b)| a * b).sum::<T>()
            })
            .collect();
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln();
        let log_probs = logits.into_iter().map(|l| (l - lse).min(T::zero())).collect();
        Forward { phi, hidden, log_probs }
    }

    /// Next-token distribution after `prefix` under `params`.
    pub fn next_token_probs_at(&self, params: &[T], prompt: &[usize], prefix: &[usize]) -> Result<Vec<T>> {
        self.check_params(params)?;
        self.check_tokens(prompt)?;
        self.check_tokens(prefix)?;
        Ok(self
            .forward(params, prompt, prefix)
            .log_probs
            .into_iter()
            .map(T::exp)
            .collect())
    }

    fn check_params(&self, params: &[T]) -> Result<()> {
        if params.len() != self.shape.param_count() {
            return Err(Error::Shape {
                expected: self.shape.param_count(),
                got: params.len(),
            });
        }
        Ok(())
    }

    /// `sum_k log pi(y_k | x, y_<k)` under this policy's own weights.
    pub fn log_likelihood(&self, prompt: &[usize], response: &[usize]) -> Result<T> {
        self.log_likelihood_at(&self.weights, prompt, response)
    }

    /// Log-likelihood and its gradient with respect to all parameters.
    pub fn log_likelihood_grad_at(&self, params: &[T], prompt: &[usize], response: &[usize]) -> Result<(T, Vec<T>)> {
        self.check_params(params)?;
        self.check_tokens(prompt)?;
        self.check_tokens(response)?;
        let (e, hd, v) = (self.shape.embed_dim, self.shape.hidden_dim, self.shape.vocab);
        let w_o = &params[hd * e..hd * e + v * hd];
        let mut grad = vec![T::zero(); params.len()];
        let mut total = T::zero();
        for k in 0..response.len() {
            let fw = self.forward(params, prompt, &response[..k]);
            let target = response[k];
            total += fw.log_probs[target];
            // d logp / d logits = onehot - softmax
            let delta: Vec<T> = fw
                .log_probs
                .iter()
                .enumerate()
                .map(|(u, &lp)| if u == target { T::one() - lp.exp() } else { -lp.exp() })
                .collect();
            let (g_h, rest) = grad.split_at_mut(hd * e);
            let (g_wo, g_bo) = rest.split_at_mut(v * hd);
            let mut back = vec![T::zero(); hd];
            for u in 0..v {
                g_bo[u] += delta[u];
                for j in 0..hd {
                    g_wo[u * hd + j] += delta[u] * fw.hidden[j];
                    back[j] += w_o[u * hd + j] * delta[u];
                }
            }
            for j in 0..hd {
                let pre = back[j] * (T::one() - fw.hidden[j] * fw.hidden[j]);
                for i in 0..e {
                    g_h[j * e + i] += pre * fw.phi[i];
                }
            }
        }
        Ok((total, grad))
    }
}

impl<T: Scalar> LikelihoodModel<T> for ToyPolicy<T> {
    fn log_likelihood_at(&self, params: &[T], prompt: &[usize], response: &[usize]) -> Result<T> {
        self.check_params(params)?;
        self.check_tokens(prompt)?;
        self.check_tokens(response)?;
        Ok((0..response.len())
            .map(|k| self.forward(params, prompt, &response[..k]).log_probs[response[k]])
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn shape(v: usize) -> PolicyShape {
        PolicyShape {
            vocab: v,
            embed_dim: 4,
            hidden_dim: 3,
            max_len: 4,
            feature_seed: 9,
        }
    }

    #[test]
    fn uniform_policy_log_likelihood() {
        let p: ToyPolicy<f64> = ToyPolicy::uniform(shape(4)).unwrap();
        let ll = p.log_likelihood(&[0, 1], &[2, 3]).unwrap();
        assert_abs_diff_eq!(ll, 2.0 * (0.25f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(ll, -2.7726, epsilon = 1e-4);
    }

    #[test]
    fn saturated_logits_give_near_zero() {
        let sh = shape(2);
        let mut w = vec![0.0; sh.param_count()];
        let b = sh.output_layer().end - 2;
        w[b] = 50.0;
        w[b + 1] = -50.0;
        let p = ToyPolicy::from_weights(sh, w).unwrap();
        let ll: f64 = p.log_likelihood(&[1], &[0]).unwrap();
        assert!(ll <= 0.0 && ll > -1e-40);
    }

    #[test]
    fn sequence_distribution_sums_to_one() {
        let p: ToyPolicy<f64> = ToyPolicy::random(shape(3), 4, 0.8).unwrap();
        let x = [2, 0];
        let mut total = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                total += p.log_likelihood(&x, &[a, b]).unwrap().exp();
            }
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn next_token_probs_normalized() {
        let p: ToyPolicy<f64> = ToyPolicy::random(shape(5), 1, 2.0).unwrap();
        for prefix in [&[][..], &[1], &[4, 4, 0, 1, 2, 3]] {
            let probs = p.next_token_probs_at(p.weights(), &[3], prefix).unwrap();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn out_of_vocabulary_rejected() {
        let p: ToyPolicy<f64> = ToyPolicy::uniform(shape(3)).unwrap();
        assert!(matches!(p.log_likelihood(&[0], &[3]), Err(Error::Vocabulary { token: 3, vocab: 3 })));
        assert!(p.log_likelihood(&[5], &[0]).is_err());
    }

    #[test]
    fn serde_round_trip_regenerates_features() {
        let p: ToyPolicy<f64> = ToyPolicy::random(shape(4), 3, 0.5).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: ToyPolicy<f64> = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p: ToyPolicy<f64> = ToyPolicy::random(shape(4), 7, 0.7).unwrap();
        let (x, y) = ([1, 3], [0, 2, 2]);
        let (_, g) = p.log_likelihood_grad_at(p.weights(), &x, &y).unwrap();
        let h = 1e-6;
        for i in 0..p.weights().len() {
            let mut w = p.weights().to_vec();
            w[i] += h;
            let up = p.log_likelihood_at(&w, &x, &y).unwrap();
            w[i] -= 2.0 * h;
            let dn = p.log_likelihood_at(&w, &x, &y).unwrap();
            assert_abs_diff_eq!(g[i], (up - dn) / (2.0 * h), epsilon = 1e-7);
        }
    }

    #[test]
    fn output_layer_scope() {
        let sh = shape(4);
        let p: ToyPolicy<f64> = ToyPolicy::uniform(sh).unwrap();
        let pv = p.output_layer_params().unwrap();
        assert_eq!(pv.scope_dim(), 4 * 3 + 4);
        assert_eq!(pv.scope().unwrap().indices()[0], 12);
    }
}
