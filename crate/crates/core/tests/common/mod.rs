#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;
use rand::Rng;
use proptest::test_runner::TestCaseError;
use zocmp::oracle::{BitMeasurementBatch, ComparisonOracle, FunctionOracle, LikelihoodModel, Sign};
use zocmp::policy::{dpo_loss, split_by_margin, PreferencePair, Subset, ToyPolicy};
use zocmp::sparse_grad::clip_small_entries;
use zocmp::{
    run_practical, sample_unit_sphere, step_practical, ParamVector, PracticalConfig, PracticalState, Result, RngState,
    ScopeMask, UnitVector,
};

/// `max c^T g` subject to `|g|_1 <= sqrt(s)`, `|g|_2 <= 1`, computed as the
/// dual value `min_{mu >= 0} |S_mu(c)|_2 + mu sqrt(s)` by golden-section
/// search over the (convex) dual function.
pub fn dual_value(c: &[f64], s: usize) -> f64 {
    let rs = (s as f64).sqrt();
    let phi = |mu: f64| {
        let shrunk: f64 = c
            .iter()
            .map(|x| (x.abs() - mu).max(0.0))
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt();
        shrunk + mu * rs
    };
    let (mut a, mut b) = (0.0, c.iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let x1 = b - ratio * (b - a);
        let x2 = a + ratio * (b - a);
        if phi(x1) <= phi(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    phi(0.5 * (a + b)).min(phi(0.0))
}

/// Random instance: `k`-dimensional sphere directions with random signs, or
/// signed axis directions (which produce tied magnitudes).
pub fn solver_instance(seed: u64) -> (BitMeasurementBatch<f64>, usize) {
    let mut r = RngState::new(seed).substream(0, 0);
    let k = r.random_range(1..=6);
    let s = r.random_range(1..=3);
    let m = r.random_range(1..=24);
    let axis = r.random_bool(0.3);
    let mut dirs = Vec::with_capacity(m);
    let mut signs = Vec::with_capacity(m);
    for _ in 0..m {
        let z: UnitVector<f64> = if axis {
            let mut e = vec![0.0; k];
            e[r.random_range(0..k)] = if r.random_bool(0.5) { 1.0 } else { -1.0 };
            UnitVector::normalize(e).unwrap()
        } else {
            sample_unit_sphere(k, &mut r).unwrap()
        };
        dirs.push(z);
        signs.push(if r.random_bool(0.5) { Sign::Plus } else { Sign::Minus });
    }
    (BitMeasurementBatch::from_parts(dirs, signs, 1.0, 1).unwrap(), s)
}

/// Central-difference gradient of the DPO loss in the policy weights.
pub fn dpo_grad_fd(
    policy: &ToyPolicy<f64>,
    reference: &ToyPolicy<f64>,
    batch: &[PreferencePair],
    beta: f64,
    h: f64,
) -> Vec<f64> {
    let w = policy.weights().to_vec();
    (0..w.len())
        .map(|i| {
            let mut up = w.clone();
            let mut down = w.clone();
            up[i] += h;
            down[i] -= h;
            let fu = dpo_loss(&policy.with_weights(up).unwrap(), reference, batch, beta).unwrap();
            let fd = dpo_loss(&policy.with_weights(down).unwrap(), reference, batch, beta).unwrap();
            (fu - fd) / (2.0 * h)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / scale.max(1e-300)
}

/// Answers `Minus` to exactly `minus` of every `m` queries.
pub struct Counted {
    pub minus: usize,
    pub m: usize,
    pub seen: AtomicUsize,
}

impl ComparisonOracle<f64> for Counted {
    fn compare(&self, _: &ParamVector<f64>, _: &ParamVector<f64>) -> Result<Sign> {
        let k = self.seen.fetch_add(1, Ordering::SeqCst) % self.m;
        Ok(if k < self.minus { Sign::Minus } else { Sign::Plus })
    }
}

/// Log-likelihood equals minus the first response token, so margins are
/// exact integers.
pub struct IntegerModel;

impl LikelihoodModel<f64> for IntegerModel {
    fn log_likelihood_at(&self, _: &[f64], _: &[usize], response: &[usize]) -> Result<f64> {
        Ok(-(response[0] as f64))
    }
}

pub fn bits(theta: &[f64]) -> Vec<u64> {
    theta.iter().map(|x| x.to_bits()).collect()
}

pub fn vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..max_len)
}

pub fn skip_strategy() -> impl Strategy<Value = (usize, f64, u8, f64, Vec<f64>, u64)> {
    (1usize..40, 0.0f64..1.0, 0u8..3, 0.0f64..0.99, vector(12), any::<u64>())
}

/// One practical step answering exactly `floor(m * frac)` minus bits. If the
/// negative fraction is at most the threshold, the iterate is bitwise
/// unchanged; otherwise a step of size `rho` is taken.
pub fn skip_rule(
    (m, frac, lambda_kind, lambda_raw, theta, seed): (usize, f64, u8, f64, Vec<f64>, u64),
) -> std::result::Result<(), TestCaseError> {
    let minus = ((m as f64) * frac).floor() as usize;
    let rho = minus as f64 / m as f64;
    let lambda = match lambda_kind {
        0 if rho < 1.0 => rho,
        _ => lambda_raw,
    };
    let config = PracticalConfig {
        queries: m,
        skip_threshold: lambda,
        seed,
        ..PracticalConfig::default()
    };
    let oracle = Counted {
        minus,
        m,
        seen: AtomicUsize::new(0),
    };
    let mut state = PracticalState::new(ParamVector::new(theta.clone()).unwrap());
    let rec = step_practical(&mut state, &oracle, &config, &RngState::new(seed), None).unwrap();
    prop_assert_eq!(rec.negative_fraction, rho);
    prop_assert_eq!(rec.oracle_calls, m);
    if rho <= lambda || rec.degenerate {
        prop_assert!(rec.skipped);
        prop_assert_eq!(rec.step, 0.0);
        prop_assert_eq!(bits(state.theta.values()), bits(&theta));
    } else {
        prop_assert!(!rec.skipped);
        prop_assert_eq!(rec.step, rho);
    }
    Ok(())
}

pub fn clip_strategy() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (vector(30), 0.0f64..5.0)
}

/// No surviving entry is below the threshold; survivors are unchanged.
pub fn clip_semantics((v, lambda): (Vec<f64>, f64)) -> std::result::Result<(), TestCaseError> {
    let c = clip_small_entries(&v, lambda);
    prop_assert_eq!(c.len(), v.len());
    for (&a, &b) in v.iter().zip(&c) {
        if b != 0.0 {
            prop_assert!(b.abs() >= lambda);
            prop_assert_eq!(a.to_bits(), b.to_bits());
        } else {
            prop_assert!(a.abs() < lambda || a == 0.0);
        }
    }
    Ok(())
}

pub fn mask_strategy() -> impl Strategy<Value = (usize, Vec<bool>, Vec<f64>, usize, u64)> {
    (
        2usize..16,
        prop::collection::vec(any::<bool>(), 16),
        prop::collection::vec(-3.0f64..3.0, 16),
        1usize..4,
        any::<u64>(),
    )
}

/// Coordinates outside the scope stay bitwise constant over a whole run.
pub fn mask_safety(
    (d, mask_bits, weights, iterations, seed): (usize, Vec<bool>, Vec<f64>, usize, u64),
) -> std::result::Result<(), TestCaseError> {
    let mut idx: Vec<usize> = (0..d).filter(|&i| mask_bits[i]).collect();
    if idx.is_empty() {
        idx.push(0);
    }
    let mask = ScopeMask::new(idx).unwrap();
    let w = weights[..d].to_vec();
    let f = move |t: &[f64]| t.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let theta0: Vec<f64> = (0..d).map(|i| i as f64 * 0.37 - 1.0).collect();
    let config = PracticalConfig {
        queries: 20,
        iterations,
        lambda_g: 0.05,
        skip_threshold: 0.1,
        scope: Some(mask.clone()),
        seed,
        ..PracticalConfig::default()
    };
    let traj = run_practical(&FunctionOracle(f), &ParamVector::new(theta0.clone()).unwrap(), &config, None).unwrap();
    let out = traj.final_theta.values();
    for i in 0..d {
        if !mask.contains(i) {
            prop_assert_eq!(out[i].to_bits(), theta0[i].to_bits());
        }
    }
    prop_assert_eq!(traj.total_oracle_calls(), 20 * iterations);
    Ok(())
}

pub fn split_strategy() -> impl Strategy<Value = (Vec<(usize, usize)>, u32)> {
    (prop::collection::vec((0usize..12, 0usize..12), 1..40), 1u32..6)
}

/// The split is disjoint and exhaustive, order-preserving, and a margin of
/// exactly `delta` is noisy.
pub fn split_partition((tokens, delta): (Vec<(usize, usize)>, u32)) -> std::result::Result<(), TestCaseError> {
    let pairs: Vec<PreferencePair> = tokens
        .iter()
        .map(|&(a, b)| PreferencePair::new(vec![0], vec![a], vec![b]))
        .collect();
    let delta = delta as f64;
    let split = split_by_margin(&IntegerModel, &[], &pairs, delta).unwrap();
    prop_assert_eq!(split.clean.len() + split.noisy.len(), pairs.len());
    prop_assert_eq!(split.rows.len(), pairs.len());
    let same = |a: &PreferencePair, b: &PreferencePair| {
        a.prompt == b.prompt && a.preferred == b.preferred && a.dispreferred == b.dispreferred
    };
    let (mut clean, mut noisy) = (0, 0);
    for (i, row) in split.rows.iter().enumerate() {
        prop_assert_eq!(row.index, i);
        let margin = tokens[i].1 as f64 - tokens[i].0 as f64;
        prop_assert_eq!(row.margin, margin);
        let expected = if margin.abs() <= delta { Subset::Noisy } else { Subset::Clean };
        prop_assert_eq!(row.subset, expected);
        let bucket = match row.subset {
            Subset::Clean => {
                clean += 1;
                &split.clean[clean - 1]
            }
            Subset::Noisy => {
                noisy += 1;
                &split.noisy[noisy - 1]
            }
        };
        prop_assert!(same(bucket, &pairs[i]));
        prop_assert_eq!(bucket.ref_margin, Some(margin));
    }
    Ok(())
}
