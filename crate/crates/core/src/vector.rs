//! Parameter vectors, perturbation scopes and unit-sphere sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::scalar::{norm2, Scalar};

/// Zero-based, strictly increasing set of perturbable coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct ScopeMask(Vec<usize>);

impl ScopeMask {
    /// Builds a mask from arbitrary indices. Indices are sorted; duplicates
    /// and empty masks are rejected.
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InvalidMask("mask is empty".into()));
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidMask(format!("duplicate index {}", w[0])));
        }
        Ok(Self(indices))
    }

    /// Contiguous block `start..end`.
    pub fn range(start: usize, end: usize) -> Result<Self> {
        Self::new((start..end).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.binary_search(&i).is_ok()
    }
}

impl TryFrom<Vec<usize>> for ScopeMask {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ScopeMask> for Vec<usize> {
    fn from(m: ScopeMask) -> Self {
        m.0
    }
}

/// Dense parameter vector with an optional perturbation scope.
///
/// Without a mask every coordinate is perturbable. All entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ParamVector<T: Scalar> {
    values: Vec<T>,
    scope: Option<ScopeMask>,
}

impl<T: Scalar> ParamVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { values, scope: None })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![T::zero(); dim])
    }

    pub fn with_scope(mut self, scope: ScopeMask) -> Result<Self> {
        if let Some(&last) = scope.indices().last() {
            if last >= self.values.len() {
                return Err(Error::InvalidMask(format!(
                    "index {last} out of range for dimension {}",
                    self.values.len()
                )));
            }
        }
        self.scope = Some(scope);
        Ok(self)
    }

    pub fn without_scope(mut self) -> Self {
        self.scope = None;
        self
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn scope(&self) -> Option<&ScopeMask> {
        self.scope.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Number of perturbable coordinates (d° under a mask, d otherwise).
    pub fn scope_dim(&self) -> usize {
        self.scope.as_ref().map_or(self.values.len(), ScopeMask::len)
    }

    pub fn scoped_values(&self) -> Vec<T> {
        match &self.scope {
            Some(m) => m.indices().iter().map(|&i| self.values[i]).collect(),
            None => self.values.clone(),
        }
    }

    /// Adds `alpha * direction` to the scoped coordinates in place.
    pub fn add_scoped(&mut self, alpha: T, direction: &[T]) -> Result<()> {
        if direction.len() != self.scope_dim() {
            return Err(Error::Shape {
                expected: self.scope_dim(),
                got: direction.len(),
            });
        }
        match &self.scope {
            Some(m) => {
                for (&i, &z) in m.indices().iter().zip(direction) {
                    self.values[i] += alpha * z;
                }
            }
            None => {
                for (v, &z) in self.values.iter_mut().zip(direction) {
                    *v += alpha * z;
                }
            }
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(())
    }

    /// Content hash over the bit patterns of the values (scope excluded).
    pub fn content_hash(&self) -> u64 {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.as_f64().to_bits().to_le_bytes());
        }
        let out = h.finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&out[..8]);
        u64::from_le_bytes(b)
    }
}

/// A vector on the Euclidean unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct UnitVector<T: Scalar>(Vec<T>);

impl<T: Scalar> UnitVector<T> {
    /// Normalizes `v`; fails for the zero vector.
    pub fn normalize(v: Vec<T>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::InvalidDimension(0));
        }
        let n = norm2(&v);
        if !(n > T::zero()) || !n.is_finite() {
            return Err(Error::DegenerateMeasurement);
        }
        Ok(Self(v.into_iter().map(|x| x / n).collect()))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl<T: Scalar> AsRef<[T]> for UnitVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// Uniform sample from the unit sphere in `dim` dimensions: independent
/// standard normals divided by their norm.
pub fn sample_unit_sphere<T: Scalar, R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<UnitVector<T>> {
    if dim == 0 {
        return Err(Error::InvalidDimension(0));
    }
    if dim == 1 {
        let s = if rng.random::<bool>() { T::one() } else { -T::one() };
        return Ok(UnitVector(vec![s]));
    }
    loop {
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.0 {
            let v: Vec<T> = g.iter().map(|&x| T::lit(x / n)).collect();
            // One more pass in the target precision keeps f32 within tolerance.
            return UnitVector::normalize(v);
        }
    }
}

/// Returns `theta` with `theta[S] += radius * z`; coordinates outside the
/// scope are copied bit for bit.
pub fn embed_perturbation<T: Scalar>(theta: &ParamVector<T>, z: &[T], radius: T) -> Result<ParamVector<T>> {
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(Error::InvalidRadius(radius.as_f64()));
    }
    let mut out = theta.clone();
    out.add_scoped(radius, z)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    #[test]
    fn one_dimensional_sphere_is_plus_minus_one() {
        let rng = RngState::new(5);
        let mut seen = [false; 2];
        for i in 0..64 {
            let v: UnitVector<f64> = sample_unit_sphere(1, &mut rng.substream(0, i)).unwrap();
            assert!(v.values() == [1.0] || v.values() == [-1.0]);
            seen[(v.values()[0] > 0.0) as usize] = true;
        }
        assert!(seen[0] && seen[1]);
    }

    #[test]
    fn zero_dimension_rejected() {
        let mut r = RngState::new(0).substream(0, 0);
        assert!(matches!(sample_unit_sphere::<f64, _>(0, &mut r), Err(Error::InvalidDimension(0))));
    }

    #[test]
    fn ten_thousand_draws_are_unit_norm() {
        let rng = RngState::new(11);
        for i in 0..10_000u64 {
            let dim = 1 + (i as usize % 37);
            let v: UnitVector<f64> = sample_unit_sphere(dim, &mut rng.substream(1, i)).unwrap();
            assert!((norm2(v.values()) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn f32_draws_are_unit_norm_to_f32_tolerance() {
        let rng = RngState::new(12);
        for i in 0..1000u64 {
            let v: UnitVector<f32> = sample_unit_sphere(50, &mut rng.substream(0, i)).unwrap();
            assert!((norm2(v.values()) - 1.0).abs() <= f32::UNIT_NORM_TOL);
        }
    }

    #[test]
    fn coordinate_means_vanish_in_three_dimensions() {
        // Rotational symmetry: each coordinate has mean 0, sd 1/sqrt(3).
        let rng = RngState::new(2024);
        let n = 100_000u64;
        let mut sum = [0.0f64; 3];
        for i in 0..n {
            let v: UnitVector<f64> = sample_unit_sphere(3, &mut rng.substream(0, i)).unwrap();
            for (s, x) in sum.iter_mut().zip(v.values()) {
                *s += x;
            }
        }
        for s in sum {
            assert!((s / n as f64).abs() < 0.01, "mean {}", s / n as f64);
        }
    }

    #[test]
    fn embed_examples() {
        let theta = ParamVector::new(vec![1.0, 2.0, 3.0])
            .unwrap()
            .with_scope(ScopeMask::new(vec![2]).unwrap())
            .unwrap();
        let out = embed_perturbation(&theta, &[1.0], 0.5).unwrap();
        assert_eq!(out.values(), &[1.0, 2.0, 3.5]);

        let theta = ParamVector::new(vec![1.0, 2.0]).unwrap();
        let out = embed_perturbation(&theta, &[0.0, 1.0], 0.1).unwrap();
        assert_eq!(out.values(), &[1.0, 2.1]);

        assert!(matches!(embed_perturbation(&theta, &[0.0, 1.0], 0.0), Err(Error::InvalidRadius(_))));
        assert!(matches!(embed_perturbation(&theta, &[1.0], 0.1), Err(Error::Shape { expected: 2, got: 1 })));
    }

    #[test]
    fn param_vector_validation() {
        assert!(matches!(ParamVector::new(vec![1.0, f64::NAN]), Err(Error::NonFinite(1))));
        assert!(ParamVector::<f64>::new(vec![]).is_err());
        let p = ParamVector::new(vec![0.0f64; 3]).unwrap();
        assert!(p.clone().with_scope(ScopeMask::new(vec![3]).unwrap()).is_err());
        assert!(ScopeMask::new(vec![1, 1]).is_err());
        assert_eq!(ScopeMask::new(vec![2, 0]).unwrap().indices(), &[0, 2]);
    }

    #[test]
    fn scope_mask_serde_validates() {
        let ok: ScopeMask = serde_json::from_str("[3,1]").unwrap();
        assert_eq!(ok.indices(), &[1, 3]);
        assert!(serde_json::from_str::<ScopeMask>("[1,1]").is_err());
    }

    #[test]
    fn content_hash_tracks_values() {
        let a = ParamVector::new(vec![1.0f64, 2.0]).unwrap();
        let mut b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        b.add_scoped(1e-12, &[1.0, 0.0]).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
