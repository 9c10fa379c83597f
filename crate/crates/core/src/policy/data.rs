//! Preference pairs, JSON-lines I/O, margin-based splitting and a synthetic
//! dataset generator.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::LikelihoodModel;
use crate::rng::RngState;
use crate::scalar::Scalar;

use super::model::ToyPolicy;

/// A prompt with a preferred and a dispreferred response.
///
/// On disk one pair is one JSON object per line:
/// `{"prompt": [..], "preferred": [..], "dispreferred": [..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: Vec<usize>,
    pub preferred: Vec<usize>,
    pub dispreferred: Vec<usize>,
    /// `log pi_ref(preferred | prompt) - log pi_ref(dispreferred | prompt)`,
    /// filled by [`split_by_margin`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_margin: Option<f64>,
}

impl PreferencePair {
    pub fn new(prompt: Vec<usize>, preferred: Vec<usize>, dispreferred: Vec<usize>) -> Self {
        Self {
            prompt,
            preferred,
            dispreferred,
            ref_margin: None,
        }
    }

    pub fn validate(&self, vocab: usize) -> Result<()> {
        if self.prompt.is_empty() || self.preferred.is_empty() || self.dispreferred.is_empty() {
            return Err(Error::InvalidBatch("preference pair has an empty sequence".into()));
        }
        let all = self.prompt.iter().chain(&self.preferred).chain(&self.dispreferred);
        match all.copied().find(|&t| t >= vocab) {
            Some(token) => Err(Error::Vocabulary { token, vocab }),
            None => Ok(()),
        }
    }
}

pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<PreferencePair>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        pairs.push(serde_json::from_str(&line)?);
    }
    Ok(pairs)
}

pub fn write_jsonl(path: impl AsRef<Path>, pairs: &[PreferencePair]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Clean,
    Noisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub index: usize,
    pub ref_logp_preferred: f64,
    pub ref_logp_dispreferred: f64,
    pub margin: f64,
    pub subset: Subset,
}

/// Partition of a dataset into clean and noisy pairs, with the margin of
/// every pair recorded in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub delta: f64,
    pub clean: Vec<PreferencePair>,
    pub noisy: Vec<PreferencePair>,
    pub rows: Vec<SplitRow>,
}

/// A pair is noisy iff `|log pi_ref(y+|x) - log pi_ref(y-|x)| <= delta`.
pub fn split_by_margin<T: Scalar, M: LikelihoodModel<T> + ?Sized>(
    reference: &M,
    ref_params: &[T],
    dataset: &[PreferencePair],
    delta: f64,
) -> Result<SplitDataset> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::OutOfRange {
            field: "delta".into(),
            value: delta.to_string(),
            bounds: "(0, inf)".into(),
        });
    }
    let mut out = SplitDataset {
        delta,
        clean: Vec::new(),
        noisy: Vec::new(),
        rows: Vec::with_capacity(dataset.len()),
    };
    for (index, pair) in dataset.iter().enumerate() {
        let lp = reference.log_likelihood_at(ref_params, &pair.prompt, &pair.preferred)?.as_f64();
        let ln = reference.log_likelihood_at(ref_params, &pair.prompt, &pair.dispreferred)?.as_f64();
        let margin = lp - ln;
        let subset = classify_margin(margin, delta);
        let mut p = pair.clone();
        p.ref_margin = Some(margin);
        match subset {
            Subset::Clean => out.clean.push(p),
            Subset::Noisy => out.noisy.push(p),
        }
        out.rows.push(SplitRow {
            index,
            ref_logp_preferred: lp,
            ref_logp_dispreferred: ln,
            margin,
            subset,
        });
    }
    Ok(out)
}

/// Boundary inclusive: `|margin| == delta` is noisy.
pub fn classify_margin(margin: f64, delta: f64) -> Subset {
    if margin.abs() <= delta {
        Subset::Noisy
    } else {
        Subset::Clean
    }
}

/// Settings of [`synthesize_pairs`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_clean: usize,
    pub n_noisy: usize,
    pub delta: f64,
    pub prompt_len: usize,
    pub response_len: usize,
    pub max_attempts: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_clean: 50,
            n_noisy: 10,
            delta: 3.0,
            prompt_len: 3,
            response_len: 4,
            max_attempts: 200_000,
        }
    }
}

/// Random pairs labelled by a hidden `target` policy (the response it finds
/// more likely is preferred) and accepted until the requested number of
/// clean and noisy pairs under `reference` is reached.
pub fn synthesize_pairs<T: Scalar>(
    reference: &ToyPolicy<T>,
    target: &ToyPolicy<T>,
    spec: &SyntheticSpec,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    let vocab = reference.shape().vocab;
    if target.shape().vocab != vocab {
        return Err(Error::DatasetGeneration("reference and target vocabularies differ".into()));
    }
    if spec.prompt_len == 0 || spec.response_len == 0 {
        return Err(Error::DatasetGeneration("sequence lengths must be positive".into()));
    }
    let mut rng = RngState::new(seed).fork(0xda7a).substream(0, 0);
    let (mut clean, mut noisy) = (0, 0);
    let mut out = Vec::with_capacity(spec.n_clean + spec.n_noisy);
    for _ in 0..spec.max_attempts {
        if clean == spec.n_clean && noisy == spec.n_noisy {
            return Ok(out);
        }
        let mut seq = |n: usize| (0..n).map(|_| rng.random_range(0..vocab)).collect::<Vec<_>>();
        let prompt = seq(spec.prompt_len);
        let a = seq(spec.response_len);
        let b = seq(spec.response_len);
        if a == b {
            continue;
        }
        let (ta, tb) = (target.log_likelihood(&prompt, &a)?, target.log_likelihood(&prompt, &b)?);
        if ta == tb {
            continue;
        }
        let (preferred, dispreferred) = if ta > tb { (a, b) } else { (b, a) };
        let margin = (reference.log_likelihood(&prompt, &preferred)? - reference.log_likelihood(&prompt, &dispreferred)?).as_f64();
        let slot = match classify_margin(margin, spec.delta) {
            Subset::Clean if clean < spec.n_clean => &mut clean,
            Subset::Noisy if noisy < spec.n_noisy => &mut noisy,
            _ => continue,
        };
        *slot += 1;
        out.push(PreferencePair::new(prompt, preferred, dispreferred));
    }
    if clean == spec.n_clean && noisy == spec.n_noisy {
        return Ok(out);
    }
    Err(Error::DatasetGeneration(format!(
        "reached {clean}/{} clean and {noisy}/{} noisy pairs after {} attempts",
        spec.n_clean, spec.n_noisy, spec.max_attempts
    )))
}
