//! Monte Carlo replication study and its summary tables.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::dgp::{true_alpha, Dgp};
use super::rng::{derive_seed, rng_from_seed};
use super::truth::{true_psi, TruthMode};
use crate::data::{split, Dataset};
use crate::error::{Error, Result};
use crate::estimate::{EstimatorConfig, Method, TrainingFit};
use crate::riesz::{Functional, FunctionalKind};

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationConfig {
    pub dgp: Dgp,
    pub functionals: Vec<Functional>,
    pub methods: Vec<Method>,
    pub n: usize,
    pub n_sims: usize,
    pub base_seed: u64,
    pub split_fraction: f64,
    pub estimator: EstimatorConfig,
}

impl ReplicationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::InvalidParameter(format!("n must be at least 4, got {}", self.n)));
        }
        if self.n_sims == 0 {
            return Err(Error::InvalidParameter("n_sims must be at least 1".into()));
        }
        if self.functionals.is_empty() || self.methods.is_empty() {
            return Err(Error::InvalidParameter(
                "need at least one functional and one method".into(),
            ));
        }
        for f in &self.functionals {
            self.dgp.check(f)?;
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "split fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if self.estimator.grid.is_empty() {
            return Err(Error::InvalidParameter("boosting grid is empty".into()));
        }
        for p in &self.estimator.grid {
            p.validate()?;
        }
        self.estimator.constants.validate()?;
        if self.methods.contains(&Method::Indirect)
            && self.functionals.iter().any(|f| f.kind().is_shift())
            && self.estimator.kde.is_none()
        {
            return Err(Error::Config(
                "indirect shift functionals need KDE bandwidth grids".into(),
            ));
        }
        Ok(())
    }

    /// Seed of replication `s` (1-based).
    pub fn replication_seed(&self, s: usize) -> u64 {
        self.base_seed.wrapping_add(s as u64)
    }
}

/// One estimate from one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub seed: u64,
    pub method: Method,
    pub functional: Functional,
    pub psi_hat: f64,
    pub se: f64,
    pub covers: bool,
    pub rep_rmse: f64,
    pub rep_mae: f64,
}

/// Aggregates for one `(method, functional)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub functional: Functional,
    pub truth: f64,
    pub avg_estimate: f64,
    pub avg_est_sd: f64,
    pub rmse: f64,
    /// Sample standard deviation of the estimates; 0 when only one replication ran.
    pub empirical_sd: f64,
    pub empirical_sd_defined: bool,
    pub coverage_95: f64,
    pub rep_rmse: f64,
    pub rep_mae: f64,
    pub n_sims: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyReport {
    pub dgp: Dgp,
    pub n: usize,
    pub n_sims: usize,
    pub base_seed: u64,
    pub rows: Vec<ReportRow>,
    pub records: Vec<ReplicationRecord>,
}

/// Reference value used to score a study: closed form where one exists,
/// quadrature otherwise.
pub fn reference_truth(dgp: Dgp, functional: &Functional) -> Result<f64> {
    let mode = match functional.kind() {
        FunctionalKind::Ate | FunctionalKind::Ase => TruthMode::ClosedForm,
        FunctionalKind::Att | FunctionalKind::Lase => TruthMode::Quadrature,
    };
    Ok(true_psi(dgp, functional, mode)?.value)
}

/// RMSE and MAE of `alpha_hat` against the true representer over the rows of `eval`.
pub fn representer_metrics(
    alpha_hat: impl Fn(f64, &[f64]) -> f64,
    dgp: Dgp,
    functional: &Functional,
    eval: &Dataset,
) -> Result<(f64, f64)> {
    if eval.n() == 0 {
        return Err(Error::InvalidData("representer metrics need at least one row".into()));
    }
    let mut sq = 0.0;
    let mut abs = 0.0;
    for i in 0..eval.n() {
        let (a, x) = (eval.a()[i], eval.x_row(i));
        let diff = alpha_hat(a, x) - true_alpha(dgp, functional, a, x[0])?;
        sq += diff * diff;
        abs += diff.abs();
    }
    let n = eval.n() as f64;
    Ok(((sq / n).sqrt(), abs / n))
}

/// Runs replication `s`: draw, split, fit every nuisance on the first half
/// and estimate every `(method, functional)` pair on the second.
pub fn run_replication(config: &ReplicationConfig, s: usize, truths: &[f64]) -> Result<Vec<ReplicationRecord>> {
    let seed = config.replication_seed(s);
    let wrap = |e: Error| Error::Replication {
        seed,
        source: Box::new(e),
    };
    let data = config.dgp.draw(config.n, &mut rng_from_seed(seed));
    let halves = split(&data, config.split_fraction, derive_seed(seed, 0)).map_err(wrap)?;
    let mut fit = TrainingFit::new(&halves.train, &config.estimator, derive_seed(seed, 1));
    let mut out = Vec::with_capacity(config.methods.len() * config.functionals.len());
    for &method in &config.methods {
        for (f, truth) in config.functionals.iter().zip(truths) {
            let (est, alpha) = fit.estimate(&halves.estimation, f, method).map_err(wrap)?;
            let (rep_rmse, rep_mae) =
                representer_metrics(|a, x| alpha.predict(a, x), config.dgp, f, &halves.estimation).map_err(wrap)?;
            out.push(ReplicationRecord {
                replication: s,
                seed,
                method,
                functional: *f,
                psi_hat: est.psi_hat,
                se: est.se,
                covers: est.covers(*truth),
                rep_rmse,
                rep_mae,
            });
        }
    }
    Ok(out)
}

/// Runs every replication (in parallel on the current rayon pool) and
/// aggregates in replication order, so the report does not depend on the
/// number of threads.
pub fn run_study(config: &ReplicationConfig) -> Result<StudyReport> {
    config.validate()?;
    let truths = config
        .functionals
        .iter()
        .map(|f| reference_truth(config.dgp, f))
        .collect::<Result<Vec<_>>>()?;
    let per_rep: Vec<Vec<ReplicationRecord>> = (1..=config.n_sims)
        .into_par_iter()
        .map(|s| run_replication(config, s, &truths))
        .collect::<Result<_>>()?;
    let records: Vec<ReplicationRecord> = per_rep.into_iter().flatten().collect();
    let rows = summarize(config, &records, &truths);
    Ok(StudyReport {
        dgp: config.dgp,
        n: config.n,
        n_sims: config.n_sims,
        base_seed: config.base_seed,
        rows,
        records,
    })
}

/// Aggregates records into one row per `(method, functional)`, in config order.
pub fn summarize(config: &ReplicationConfig, records: &[ReplicationRecord], truths: &[f64]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for &method in &config.methods {
        for (f, &truth) in config.functionals.iter().zip(truths) {
            let rs: Vec<&ReplicationRecord> = records
                .iter()
                .filter(|r| r.method == method && r.functional == *f)
                .collect();
            if rs.is_empty() {
                continue;
            }
            let k = rs.len() as f64;
            let mean = |g: &dyn Fn(&ReplicationRecord) -> f64| rs.iter().map(|r| g(r)).sum::<f64>() / k;
            let avg = mean(&|r| r.psi_hat);
            let defined = rs.len() > 1;
            let empirical_sd = if defined {
                (rs.iter().map(|r| (r.psi_hat - avg).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
            } else {
                0.0
            };
            rows.push(ReportRow {
                method,
                functional: *f,
                truth,
                avg_estimate: avg,
                avg_est_sd: mean(&|r| r.se),
                rmse: mean(&|r| (r.psi_hat - truth).powi(2)).sqrt(),
                empirical_sd,
                empirical_sd_defined: defined,
                coverage_95: mean(&|r| if r.covers { 1.0 } else { 0.0 }),
                rep_rmse: mean(&|r| r.rep_rmse),
                rep_mae: mean(&|r| r.rep_mae),
                n_sims: rs.len(),
            });
        }
    }
    rows
}

impl StudyReport {
    pub fn row(&self, method: Method, kind: FunctionalKind) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.functional.kind() == kind)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record([
            "method",
            "functional",
            "avg_estimate",
            "avg_est_sd",
            "rmse",
            "empirical_sd",
            "coverage_95",
            "rep_rmse",
            "rep_mae",
            "n_sims",
            "n",
            "base_seed",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.method.name().to_string(),
                r.functional.name().to_string(),
                r.avg_estimate.to_string(),
                r.avg_est_sd.to_string(),
                r.rmse.to_string(),
                r.empirical_sd.to_string(),
                r.coverage_95.to_string(),
                r.rep_rmse.to_string(),
                r.rep_mae.to_string(),
                r.n_sims.to_string(),
                self.n.to_string(),
                self.base_seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Per-replication estimates, one row per record.
    pub fn write_records_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record([
            "replication",
            "seed",
            "method",
            "functional",
            "psi_hat",
            "se",
            "covers",
            "rep_rmse",
            "rep_mae",
        ])
        .map_err(csv_err)?;
        for r in &self.records {
            w.write_record([
                r.replication.to_string(),
                r.seed.to_string(),
                r.method.name().to_string(),
                r.functional.name().to_string(),
                r.psi_hat.to_string(),
                r.se.to_string(),
                u8::from(r.covers).to_string(),
                r.rep_rmse.to_string(),
                r.rep_mae.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
    }

    /// Two Markdown tables: estimator performance and representer accuracy.
    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "## {} design (n = {}, {} replications, base seed {})\n",
            self.dgp, self.n, self.n_sims, self.base_seed
        );
        s.push_str("| Functional | Method | Truth | Avg. Estimate | Avg. Est. SD | RMSE | Empirical SD | Coverage |\n");
        s.push_str("|---|---|---:|---:|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let sd = if r.empirical_sd_defined {
                format!("{:.3}", r.empirical_sd)
            } else {
                "n/a".to_string()
            };
            let _ = writeln!(
                s,
                "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {} | {:.3} |",
                r.functional.name().to_uppercase(),
                r.method,
                r.truth,
                r.avg_estimate,
                r.avg_est_sd,
                r.rmse,
                sd,
                r.coverage_95
            );
        }
        s.push_str("\n| Functional | Method | Representer RMSE | Representer MAE |\n|---|---|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {:.3} | {:.3} |",
                r.functional.name().to_uppercase(),
                r.method,
                r.rep_rmse,
                r.rep_mae
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::true_alpha;

    #[test]
    fn representer_metric_examples() {
        let d = Dgp::Binary.draw(50, &mut rng_from_seed(1));
        let f = Functional::Ate;
        let exact = |a: f64, x: &[f64]| true_alpha(Dgp::Binary, &f, a, x[0]).unwrap();
        let (r, m) = representer_metrics(exact, Dgp::Binary, &f, &d).unwrap();
        assert_eq!((r, m), (0.0, 0.0));
        let shifted = |a: f64, x: &[f64]| exact(a, x) + 1.0;
        let (r, m) = representer_metrics(shifted, Dgp::Binary, &f, &d).unwrap();
        assert!((r - 1.0).abs() < 1e-12 && (m - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reference_truths() {
        assert_eq!(reference_truth(Dgp::Binary, &Functional::Ate).unwrap(), 29.5);
        assert!((reference_truth(Dgp::Binary, &Functional::Att).unwrap() - 30.786).abs() < 1e-3);
    }
}
