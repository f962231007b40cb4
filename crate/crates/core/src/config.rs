//! Plain-text run configuration.
//!
//! One `key = value` pair per line; `#` starts a comment. Lists are
//! comma-separated. Keys:
//!
//! ```text
//! dgp                        binary | continuous
//! n, n_sims, base_seed
//! split_fraction
//! functionals                e.g. ate,att or ase,lase
//! functional.delta           shift for ase/lase (default 1)
//! functional.threshold       threshold for lase (default 0)
//! methods                    rieszboost,indirect
//! grid.learning_rates, grid.n_iterations, grid.max_depths, grid.min_samples_leaf
//! cv.folds
//! kde.joint_bandwidths, kde.marginal_bandwidths
//! nuisance.clip              number or `none`
//! nuisance.floor
//! output.report_csv, output.report_markdown, output.records_csv
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::boost::BoostParams;
use crate::error::{Error, Result};
use crate::estimate::{EstimatorConfig, Method};
use crate::nuisance::{KdeGrids, NuisanceConstants};
use crate::riesz::{Functional, FunctionalKind};
use crate::sim::{Dgp, ReplicationConfig};
use crate::tuning::boost_grid;

pub const DEFAULT_LEARNING_RATES: [f64; 4] = [0.001, 0.01, 0.1, 0.25];
pub const DEFAULT_N_ITERATIONS: [usize; 7] = [10, 30, 50, 75, 100, 150, 200];
pub const DEFAULT_MAX_DEPTHS: [usize; 3] = [3, 5, 7];
pub const DEFAULT_KDE_JOINT: [f64; 5] = [0.01, 1.2575, 2.505, 3.7525, 5.0];
pub const DEFAULT_KDE_MARGINAL: [f64; 5] = [0.01, 0.5075, 1.005, 1.5025, 2.0];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub n_iterations: Vec<usize>,
    pub max_depths: Vec<usize>,
    pub min_samples_leaf: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            learning_rates: DEFAULT_LEARNING_RATES.to_vec(),
            n_iterations: DEFAULT_N_ITERATIONS.to_vec(),
            max_depths: DEFAULT_MAX_DEPTHS.to_vec(),
            min_samples_leaf: 5,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Vec<BoostParams>> {
        let grid = boost_grid(
            &self.learning_rates,
            &self.n_iterations,
            &self.max_depths,
            self.min_samples_leaf,
        )?;
        if grid.is_empty() {
            return Err(Error::Config("boosting grid is empty".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dgp: Dgp,
    pub n: usize,
    pub n_sims: usize,
    pub base_seed: u64,
    pub split_fraction: f64,
    pub functionals: Vec<FunctionalKind>,
    pub delta: f64,
    pub threshold: f64,
    pub methods: Vec<Method>,
    pub grid: GridSpec,
    pub cv_folds: usize,
    pub kde: KdeGrids,
    pub constants: NuisanceConstants,
    pub report_csv: Option<PathBuf>,
    pub report_markdown: Option<PathBuf>,
    pub records_csv: Option<PathBuf>,
}

impl RunConfig {
    /// Default study settings for `dgp`.
    pub fn defaults(dgp: Dgp) -> Self {
        let functionals = match dgp {
            Dgp::Binary => vec![FunctionalKind::Ate, FunctionalKind::Att],
            Dgp::Continuous => vec![FunctionalKind::Ase, FunctionalKind::Lase],
        };
        Self {
            dgp,
            n: 1000,
            n_sims: 500,
            base_seed: 0,
            split_fraction: 0.5,
            functionals,
            delta: 1.0,
            threshold: 0.0,
            methods: vec![Method::RieszBoost, Method::Indirect],
            grid: GridSpec::default(),
            cv_folds: 5,
            kde: KdeGrids {
                joint: DEFAULT_KDE_JOINT.to_vec(),
                marginal: DEFAULT_KDE_MARGINAL.to_vec(),
            },
            constants: NuisanceConstants::default(),
            report_csv: None,
            report_markdown: None,
            records_csv: None,
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Parses a configuration. `dgp` picks the defaults every other key overrides.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let dgp = match pairs.iter().find(|(k, _)| k == "dgp") {
            Some((_, v)) => v.parse::<Dgp>().map_err(|e| key_error("dgp", e))?,
            None => return Err(Error::Config("missing required key `dgp`".into())),
        };
        let mut c = Self::defaults(dgp);
        let mut seen = std::collections::HashSet::new();
        for (k, v) in &pairs {
            if !seen.insert(k.clone()) {
                return Err(Error::Config(format!("key `{k}` given twice")));
            }
            c.set(k, v)?;
        }
        c.validate()?;
        Ok(c)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "dgp" => {}
            "n" => self.n = scalar(key, v)?,
            "n_sims" => self.n_sims = scalar(key, v)?,
            "base_seed" => self.base_seed = scalar(key, v)?,
            "split_fraction" => self.split_fraction = scalar(key, v)?,
            "functionals" => self.functionals = list(key, v)?,
            "functional.delta" => self.delta = scalar(key, v)?,
            "functional.threshold" => self.threshold = scalar(key, v)?,
            "methods" => self.methods = list(key, v)?,
            "grid.learning_rates" => self.grid.learning_rates = list(key, v)?,
            "grid.n_iterations" => self.grid.n_iterations = list(key, v)?,
            "grid.max_depths" => self.grid.max_depths = list(key, v)?,
            "grid.min_samples_leaf" => self.grid.min_samples_leaf = scalar(key, v)?,
            "cv.folds" => self.cv_folds = scalar(key, v)?,
            "kde.joint_bandwidths" => self.kde.joint = list(key, v)?,
            "kde.marginal_bandwidths" => self.kde.marginal = list(key, v)?,
            "nuisance.clip" => {
                self.constants.clip = if v.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(scalar(key, v)?)
                }
            }
            "nuisance.floor" => self.constants.floor = scalar(key, v)?,
            "output.report_csv" => self.report_csv = Some(PathBuf::from(v)),
            "output.report_markdown" => self.report_markdown = Some(PathBuf::from(v)),
            "output.records_csv" => self.records_csv = Some(PathBuf::from(v)),
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn functional_specs(&self) -> Result<Vec<Functional>> {
        self.functionals
            .iter()
            .map(|&k| Functional::from_parts(k, Some(self.delta), Some(self.threshold)))
            .collect()
    }

    pub fn estimator(&self) -> Result<EstimatorConfig> {
        Ok(EstimatorConfig {
            grid: self.grid.build().map_err(|e| key_error("grid", e))?,
            cv_folds: self.cv_folds,
            kde: Some(self.kde.clone()),
            constants: self.constants,
        })
    }

    pub fn replication(&self) -> Result<ReplicationConfig> {
        Ok(ReplicationConfig {
            dgp: self.dgp,
            functionals: self.functional_specs()?,
            methods: self.methods.clone(),
            n: self.n,
            n_sims: self.n_sims,
            base_seed: self.base_seed,
            split_fraction: self.split_fraction,
            estimator: self.estimator()?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("`{key}` {what}")))
            }
        };
        check(self.n >= 4, "n", "must be at least 4")?;
        check(self.n_sims >= 1, "n_sims", "must be at least 1")?;
        check(
            self.split_fraction > 0.0 && self.split_fraction < 1.0,
            "split_fraction",
            "must lie in (0, 1)",
        )?;
        check(!self.functionals.is_empty(), "functionals", "must not be empty")?;
        check(!self.methods.is_empty(), "methods", "must not be empty")?;
        check(self.cv_folds >= 2, "cv.folds", "must be at least 2")?;
        check(
            self.kde
                .joint
                .iter()
                .chain(&self.kde.marginal)
                .all(|h| *h > 0.0 && h.is_finite()),
            "kde",
            "bandwidths must be positive",
        )?;
        for &k in &self.functionals {
            if !self.dgp.supports(k) {
                return Err(Error::Config(format!(
                    "`functionals`: {k} is not defined for the {} design",
                    self.dgp
                )));
            }
        }
        self.functional_specs().map_err(|e| key_error("functional", e))?;
        self.constants.validate().map_err(|e| key_error("nuisance", e))?;
        self.estimator()?;
        let n_train = (self.split_fraction * self.n as f64).round() as usize;
        check(
            n_train >= self.cv_folds,
            "cv.folds",
            "exceeds the number of training rows",
        )?;
        Ok(())
    }
}

fn key_error(key: &str, e: Error) -> Error {
    Error::Config(format!("`{key}`: {e}"))
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse {v:?}")))
}

fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| scalar(key, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::parse("dgp = continuous\n").unwrap();
        assert_eq!(c, RunConfig::defaults(Dgp::Continuous));
        assert_eq!(c.estimator().unwrap().grid.len(), 84);
    }

    #[test]
    fn overrides_and_comments() {
        let text =
            "# small run\ndgp = binary\nn_sims = 2   # smoke\ngrid.learning_rates = 0.1, 0.25\nnuisance.clip = none\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.n_sims, 2);
        assert_eq!(c.grid.learning_rates, vec![0.1, 0.25]);
        assert_eq!(c.constants.clip, None);
    }

    #[test]
    fn errors_name_the_key() {
        let e = RunConfig::parse("dgp = binary\nbogus.key = 3\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("bogus.key"), "{e}");
        let e = RunConfig::parse("dgp = binary\nn = ten\n").unwrap_err().to_string();
        assert!(e.contains("`n`"), "{e}");
        let e = RunConfig::parse("dgp = binary\nfunctionals = ase\n")
            .unwrap_err()
            .to_string();
        assert!(e.contains("functionals"), "{e}");
        assert!(RunConfig::parse("n = 5\n").is_err());
    }
}
