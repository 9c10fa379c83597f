//! CSV and JSON export of trajectories and reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::bench::{EstimatorErrorReport, ScalingReport};
use crate::error::{Error, Result};
use crate::optimizer::Trajectory;
use crate::policy::{LikelihoodReport, SplitDataset, Subset};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

/// A report with a fixed CSV schema.
pub trait Tabular {
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl<T: Scalar> Tabular for Trajectory<T> {
    fn header(&self) -> Vec<&'static str> {
        vec!["iter", "oracle_calls", "neg_fraction", "step", "skipped", "f", "grad_norm"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.records
            .iter()
            .map(|r| {
                vec![
                    r.iteration.to_string(),
                    r.oracle_calls.to_string(),
                    r.negative_fraction.to_string(),
                    r.step.to_string(),
                    r.skipped.to_string(),
                    opt(r.objective),
                    opt(r.grad_norm),
                ]
            })
            .collect()
    }
}

impl Tabular for SplitDataset {
    fn header(&self) -> Vec<&'static str> {
        vec!["index", "ref_logp_preferred", "ref_logp_dispreferred", "margin", "subset"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                let subset = match r.subset {
                    Subset::Clean => "clean",
                    Subset::Noisy => "noisy",
                };
                vec![
                    r.index.to_string(),
                    r.ref_logp_preferred.to_string(),
                    r.ref_logp_dispreferred.to_string(),
                    r.margin.to_string(),
                    subset.to_string(),
                ]
            })
            .collect()
    }
}

impl Tabular for LikelihoodReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "index",
            "before_preferred",
            "before_dispreferred",
            "after_preferred",
            "after_dispreferred",
            "delta_preferred",
            "delta_dispreferred",
            "aligned",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.index.to_string(),
                    r.before_preferred.to_string(),
                    r.before_dispreferred.to_string(),
                    r.after_preferred.to_string(),
                    r.after_dispreferred.to_string(),
                    r.delta_preferred.to_string(),
                    r.delta_dispreferred.to_string(),
                    r.aligned.to_string(),
                ]
            })
            .collect()
    }
}

impl Tabular for EstimatorErrorReport {
    fn header(&self) -> Vec<&'static str> {
        vec!["trial", "dim", "sparsity", "flip_prob", "queries", "error"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.errors
            .iter()
            .enumerate()
            .map(|(k, e)| {
                vec![
                    k.to_string(),
                    self.dim.to_string(),
                    self.sparsity.to_string(),
                    self.flip_prob.to_string(),
                    self.queries.to_string(),
                    e.to_string(),
                ]
            })
            .collect()
    }
}

impl Tabular for ScalingReport {
    fn header(&self) -> Vec<&'static str> {
        vec![
            "dim",
            "seed",
            "converged",
            "oracle_calls",
            "iterations",
            "queries_per_iteration",
            "iteration_budget",
            "best_grad_norm",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.cells
            .iter()
            .map(|c| {
                vec![
                    c.dim.to_string(),
                    c.seed.to_string(),
                    c.converged.to_string(),
                    c.oracle_calls.to_string(),
                    c.iterations.to_string(),
                    c.queries_per_iteration.to_string(),
                    c.iteration_budget.to_string(),
                    opt(c.best_grad_norm),
                ]
            })
            .collect()
    }
}

/// Per-epoch DPO losses.
pub struct LossCurve<'a, T>(pub &'a [T]);

impl<T: Scalar> Tabular for LossCurve<'_, T> {
    fn header(&self) -> Vec<&'static str> {
        vec!["epoch", "loss"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.0
            .iter()
            .enumerate()
            .map(|(e, l)| vec![e.to_string(), l.to_string()])
            .collect()
    }
}

pub fn write_csv<R: Tabular + ?Sized>(report: &R, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(report.header())?;
    for row in report.rows() {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json<R: Serialize + ?Sized>(value: &R, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// Writes `report` to `path` as CSV (its tabular schema) or pretty JSON.
pub fn export_results<R: Tabular + Serialize>(report: &R, path: impl AsRef<Path>, format: Format) -> Result<()> {
    match format {
        Format::Csv => write_csv(report, path.as_ref()),
        Format::Json => write_json(report, path.as_ref()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::IterationRecord;
    use crate::vector::ParamVector;

    fn empty() -> Trajectory<f64> {
        Trajectory {
            initial_hash: 0,
            records: vec![],
            final_theta: ParamVector::new(vec![1.0]).unwrap(),
            final_diagnostics: None,
        }
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        export_results(&empty(), &p, Format::Csv).unwrap();
        assert_eq!(
            std::fs::read_to_string(&p).unwrap(),
            "iter,oracle_calls,neg_fraction,step,skipped,f,grad_norm\n"
        );
    }

    #[test]
    fn one_iteration_is_two_lines() {
        let mut t = empty();
        t.records.push(IterationRecord {
            iteration: 1,
            calls: 4,
            oracle_calls: 4,
            negative_fraction: 0.25,
            step: 0.0,
            skipped: true,
            degenerate: false,
            theta_hash: 0,
            snapshot: None,
            objective: None,
            grad_norm: None,
        });
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        export_results(&t, &p, Format::Csv).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap(), "1,4,0.25,0,true,,");
    }

    #[test]
    fn json_round_trip() {
        let report = EstimatorErrorReport {
            dim: 3,
            sparsity: 1,
            flip_prob: 0.1,
            queries: 7,
            errors: vec![0.1, 0.30000000000000004, 1e-17],
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.json");
        export_results(&report, &p, Format::Json).unwrap();
        let back: EstimatorErrorReport = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let err = export_results(&empty(), "/nonexistent-dir/t.csv", Format::Csv).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/t.csv"));
    }
}
