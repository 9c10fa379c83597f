use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::Scalar;

use super::data::PreferencePair;
use super::model::ToyPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodRow {
    pub index: usize,
    pub before_preferred: f64,
    pub before_dispreferred: f64,
    pub after_preferred: f64,
    pub after_dispreferred: f64,
    pub delta_preferred: f64,
    pub delta_dispreferred: f64,
    /// Preferred likelihood went up and dispreferred went down.
    pub aligned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LikelihoodReport {
    pub rows: Vec<LikelihoodRow>,
}

impl LikelihoodReport {
    pub fn aligned_count(&self) -> usize {
        self.rows.iter().filter(|r| r.aligned).count()
    }

    pub fn mean_margin_before(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.before_preferred - r.before_dispreferred))
    }

    pub fn mean_margin_after(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.after_preferred - r.after_dispreferred))
    }
}

fn mean(it: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = it.len();
    if n == 0 {
        return 0.0;
    }
    it.sum::<f64>() / n as f64
}

/// Per-pair log-likelihoods before and after an update.
pub fn likelihood_report<T: Scalar>(
    before: &ToyPolicy<T>,
    after: &ToyPolicy<T>,
    pairs: &[PreferencePair],
) -> Result<LikelihoodReport> {
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(index, pair)| {
            let (bp, bn) = before.pair_log_likelihoods(pair)?;
            let (ap, an) = after.pair_log_likelihoods(pair)?;
            let (bp, bn, ap, an) = (bp.as_f64(), bn.as_f64(), ap.as_f64(), an.as_f64());
            Ok(LikelihoodRow {
                index,
                before_preferred: bp,
                before_dispreferred: bn,
                after_preferred: ap,
                after_dispreferred: an,
                delta_preferred: ap - bp,
                delta_dispreferred: an - bn,
                aligned: ap > bp && an < bn,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LikelihoodReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::PolicyShape;

    #[test]
    fn unchanged_policy_has_zero_deltas() {
        let p: ToyPolicy<f64> = ToyPolicy::random(PolicyShape::default(), 3, 0.5).unwrap();
        let pairs = vec![PreferencePair::new(vec![1], vec![2, 3], vec![4])];
        let r = likelihood_report(&p, &p, &pairs).unwrap();
        assert_eq!(r.rows[0].delta_preferred, 0.0);
        assert_eq!(r.rows[0].delta_dispreferred, 0.0);
        assert!(!r.rows[0].aligned);
        assert_eq!(r.mean_margin_before(), r.mean_margin_after());
    }
}
