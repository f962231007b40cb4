//! Efficient-estimating-equation estimates with cross-fitting and
//! influence-function standard errors.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::boost::BoostParams;
use crate::data::{split, Dataset};
use crate::error::{Error, Result};
use crate::nuisance::{
    fit_outcome_regression, fit_propensity, indirect_alpha, select_bandwidths, ConditionalDensity, IndirectNuisance,
    KdeGrids, NuisanceBundle, NuisanceConstants, OutcomeModel, PropensityModel,
};
use crate::riesz::{m_eval, tune_rieszboost, Functional, FunctionalKind, RieszModel};
use crate::sim::derive_seed;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub psi_hat: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Estimated influence function at each estimation row.
    pub phi: Vec<f64>,
}

impl EstimateResult {
    fn from_phi(psi_hat: f64, phi: Vec<f64>) -> Self {
        let se = eif_se(&phi);
        Self {
            psi_hat,
            se,
            ci_lo: psi_hat - Z_95 * se,
            ci_hi: psi_hat + Z_95 * se,
            phi,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_lo <= value && value <= self.ci_hi
    }
}

/// `sqrt(Σ φ_i² / n²)`.
pub fn eif_se(phi: &[f64]) -> f64 {
    if phi.is_empty() {
        return 0.0;
    }
    let n = phi.len() as f64;
    (phi.iter().map(|p| p * p).sum::<f64>()).sqrt() / n
}

/// Solves the empirical influence-function equation for ψ on `data`.
///
/// For ATE and ASE, `ψ̂ = mean[m(O, μ̂) + α̂(W)(Y - μ̂(W))]`. For ATT and LASE
/// the influence function is `(m(O, μ̂) - w·ψ + α̂(W)(Y - μ̂(W))) / p̂` with
/// subgroup weight `w` (`A`, or `1(A < t)`). It is affine in ψ, so the root is
/// `Σ[m + α̂(Y - μ̂)] / Σ w` whatever the value of `p̂`; `p̂` only scales φ.
pub fn eee_estimate(functional: &Functional, data: &Dataset, bundle: &NuisanceBundle<'_>) -> Result<EstimateResult> {
    if data.n() == 0 {
        return Err(Error::InvalidData("estimation sample is empty".into()));
    }
    let mut score = Vec::with_capacity(data.n());
    let mut weight = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        let (y, a, x) = (data.y()[i], data.a()[i], data.x_row(i));
        let m = m_eval(functional, a, x, &bundle.mu);
        score.push(m + (bundle.alpha)(a, x) * (y - (bundle.mu)(a, x)));
        weight.push(functional.subgroup_weight(a));
    }
    if score.iter().any(|s| !s.is_finite()) {
        return Err(Error::Estimation(format!(
            "non-finite influence-function term for {}",
            functional.name()
        )));
    }
    if !functional.is_normalized() {
        let psi = score.iter().sum::<f64>() / data.n() as f64;
        let phi = score.iter().map(|s| s - psi).collect();
        return Ok(EstimateResult::from_phi(psi, phi));
    }
    let p = bundle.scalar_hat;
    if !(p > 0.0 && p.is_finite()) {
        return Err(Error::Estimation(format!(
            "{} needs a positive subgroup probability, got {p}",
            functional.name()
        )));
    }
    let total_w: f64 = weight.iter().sum();
    if total_w == 0.0 {
        return Err(Error::Estimation(format!(
            "no estimation rows in the {} subgroup",
            functional.name()
        )));
    }
    let psi = score.iter().sum::<f64>() / total_w;
    let phi = score.iter().zip(&weight).map(|(s, w)| (s - w * psi) / p).collect();
    Ok(EstimateResult::from_phi(psi, phi))
}

/// How the representer is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    RieszBoost,
    Indirect,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::RieszBoost => "rieszboost",
            Self::Indirect => "indirect",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rieszboost" => Ok(Self::RieszBoost),
            "indirect" => Ok(Self::Indirect),
            other => Err(Error::InvalidParameter(format!(
                "unknown method `{other}` (expected rieszboost or indirect)"
            ))),
        }
    }
}

/// Settings shared by every nuisance fit on a training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Boosting grid for μ̂, RieszBoost α̂ and the propensity score.
    pub grid: Vec<BoostParams>,
    pub cv_folds: usize,
    /// Required by the indirect ASE/LASE representers.
    pub kde: Option<KdeGrids>,
    pub constants: NuisanceConstants,
}

/// A fitted representer.
#[derive(Debug, Clone)]
pub enum AlphaModel {
    Riesz(RieszModel),
    Propensity {
        model: Arc<PropensityModel>,
        functional: Functional,
        constants: NuisanceConstants,
    },
    Density {
        density: Arc<ConditionalDensity>,
        functional: Functional,
        constants: NuisanceConstants,
    },
}

impl AlphaModel {
    pub fn predict(&self, a: f64, x: &[f64]) -> f64 {
        match self {
            Self::Riesz(m) => m.predict(a, x),
            Self::Propensity {
                model,
                functional,
                constants,
            } => {
                let pi = |x: &[f64]| model.predict(x);
                indirect_alpha(functional, IndirectNuisance::Propensity(&pi), constants, a, x)
                    .expect("nuisance kind checked when the model was built")
            }
            Self::Density {
                density,
                functional,
                constants,
            } => indirect_alpha(functional, IndirectNuisance::Density(density), constants, a, x)
                .expect("nuisance kind checked when the model was built"),
        }
    }
}

/// Lazily fits and caches the nuisances of one training sample so that
/// several functionals and methods can share them.
pub struct TrainingFit<'a> {
    train: &'a Dataset,
    config: &'a EstimatorConfig,
    seed: u64,
    outcome: Option<Arc<OutcomeModel>>,
    propensity: Option<Arc<PropensityModel>>,
    density: Option<Arc<ConditionalDensity>>,
}

const STREAM_OUTCOME: u64 = 1;
const STREAM_RIESZ: u64 = 2;
const STREAM_PROPENSITY: u64 = 3;
const STREAM_BANDWIDTH: u64 = 4;

impl<'a> TrainingFit<'a> {
    pub fn new(train: &'a Dataset, config: &'a EstimatorConfig, seed: u64) -> Self {
        Self {
            train,
            config,
            seed,
            outcome: None,
            propensity: None,
            density: None,
        }
    }

    pub fn outcome(&mut self) -> Result<Arc<OutcomeModel>> {
        if self.outcome.is_none() {
            let (_, m) = fit_outcome_regression(
                self.train,
                &self.config.grid,
                self.config.cv_folds,
                derive_seed(self.seed, STREAM_OUTCOME),
            )?;
            self.outcome = Some(Arc::new(m));
        }
        Ok(self.outcome.clone().expect("just fitted"))
    }

    fn propensity(&mut self) -> Result<Arc<PropensityModel>> {
        if self.propensity.is_none() {
            let (_, m) = fit_propensity(
                self.train,
                &self.config.grid,
                self.config.cv_folds,
                derive_seed(self.seed, STREAM_PROPENSITY),
            )?;
            self.propensity = Some(Arc::new(m));
        }
        Ok(self.propensity.clone().expect("just fitted"))
    }

    /// Bandwidths are chosen on a random half split of the training sample,
    /// then both KDEs are refit on all of it.
    fn density(&mut self) -> Result<Arc<ConditionalDensity>> {
        if self.density.is_none() {
            let grids = self.config.kde.as_ref().ok_or_else(|| {
                Error::Config("the indirect method for shift functionals needs KDE bandwidth grids".into())
            })?;
            let inner = split(self.train, 0.5, derive_seed(self.seed, STREAM_BANDWIDTH))?;
            let (hj, hm) = select_bandwidths(&inner.train, &inner.estimation, grids)?;
            let cd = ConditionalDensity::fit(self.train, hj, hm, self.config.constants.floor)?;
            self.density = Some(Arc::new(cd));
        }
        Ok(self.density.clone().expect("just fitted"))
    }

    pub fn alpha(&mut self, functional: &Functional, method: Method) -> Result<AlphaModel> {
        functional.validate()?;
        let constants = self.config.constants;
        constants.validate()?;
        match (method, functional.kind()) {
            (Method::RieszBoost, _) => {
                let (_, m) = tune_rieszboost(
                    self.train,
                    functional,
                    &self.config.grid,
                    self.config.cv_folds,
                    derive_seed(self.seed, STREAM_RIESZ),
                )?;
                Ok(AlphaModel::Riesz(m))
            }
            (Method::Indirect, FunctionalKind::Ate | FunctionalKind::Att) => Ok(AlphaModel::Propensity {
                model: self.propensity()?,
                functional: *functional,
                constants,
            }),
            (Method::Indirect, FunctionalKind::Ase | FunctionalKind::Lase) => Ok(AlphaModel::Density {
                density: self.density()?,
                functional: *functional,
                constants,
            }),
        }
    }

    /// Training-sample estimate of the normalizing subgroup probability.
    pub fn scalar_hat(&self, functional: &Functional) -> f64 {
        if !functional.is_normalized() {
            return 1.0;
        }
        let a = self.train.a();
        a.iter().map(|&v| functional.subgroup_weight(v)).sum::<f64>() / a.len() as f64
    }

    /// Fits α̂ (and μ̂ if not cached) here and solves the estimating equation on `estimation`.
    pub fn estimate(
        &mut self,
        estimation: &Dataset,
        functional: &Functional,
        method: Method,
    ) -> Result<(EstimateResult, AlphaModel)> {
        let mu = self.outcome()?;
        let alpha = self.alpha(functional, method)?;
        let bundle = NuisanceBundle {
            mu: Box::new(|a, x| mu.predict(a, x)),
            alpha: Box::new(|a, x| alpha.predict(a, x)),
            scalar_hat: self.scalar_hat(functional),
        };
        let result = eee_estimate(functional, estimation, &bundle)?;
        drop(bundle);
        Ok((result, alpha))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossFitConfig {
    pub estimator: EstimatorConfig,
    /// Fraction of rows used for fitting nuisances.
    pub split_fraction: f64,
    pub seed: u64,
    /// Also fit on the estimation half, evaluate on the training half, and pool.
    pub two_fold: bool,
}

/// Splits `dataset`, fits μ̂ and α̂ on one part and solves the estimating
/// equation on the other.
///
/// With `two_fold`, the roles are swapped for a second estimate. The pooled ψ̂
/// is the size-weighted average of the two, and the standard error uses the
/// concatenated influence-function values.
pub fn cross_fit_estimate(
    dataset: &Dataset,
    functional: &Functional,
    method: Method,
    config: &CrossFitConfig,
) -> Result<EstimateResult> {
    if dataset.n() < 4 {
        return Err(Error::InvalidData(format!(
            "cross-fitting needs at least 4 rows, got {}",
            dataset.n()
        )));
    }
    if method == Method::Indirect && functional.kind().is_shift() && config.estimator.kde.is_none() {
        return Err(Error::Config(format!(
            "indirect {} requires KDE bandwidth grids in the configuration",
            functional.name()
        )));
    }
    let halves = split(dataset, config.split_fraction, derive_seed(config.seed, 0))?;
    let (first, _) = TrainingFit::new(&halves.train, &config.estimator, derive_seed(config.seed, 1)).estimate(
        &halves.estimation,
        functional,
        method,
    )?;
    if !config.two_fold {
        return Ok(first);
    }
    let (second, _) = TrainingFit::new(&halves.estimation, &config.estimator, derive_seed(config.seed, 2)).estimate(
        &halves.train,
        functional,
        method,
    )?;
    let (n1, n2) = (first.phi.len() as f64, second.phi.len() as f64);
    let psi = (n1 * first.psi_hat + n2 * second.psi_hat) / (n1 + n2);
    let mut phi = first.phi;
    phi.extend(second.phi);
    Ok(EstimateResult::from_phi(psi, phi))
}
