//! Nuisance estimators for the indirect (plug-in) representers and for the
//! outcome regression used by every estimator.

use std::f64::consts::PI;

use crate::boost::{
    bernoulli_log_loss, expit, fit_boost, BernoulliDeviance, BoostParams, BoostedModel, SquaredError, TreeParams,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::riesz::{Functional, FunctionalKind};
use crate::tuning::{select_by_cv, validation_path};

/// Numerical guards for the plug-in representers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuisanceConstants {
    /// Propensities are clipped to `[clip, 1 - clip]`; `None` disables clipping.
    pub clip: Option<f64>,
    /// Lower bound for density denominators.
    pub floor: f64,
}

impl Default for NuisanceConstants {
    fn default() -> Self {
        Self {
            clip: Some(1e-4),
            floor: 1e-12,
        }
    }
}

impl NuisanceConstants {
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.clip {
            if !(c > 0.0 && c < 0.5) {
                return Err(Error::InvalidParameter(format!("clip must lie in (0, 0.5), got {c}")));
            }
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "floor must be positive, got {}",
                self.floor
            )));
        }
        Ok(())
    }

    pub fn clip_propensity(&self, p: f64) -> f64 {
        match self.clip {
            Some(c) => p.clamp(c, 1.0 - c),
            None => p,
        }
    }
}

fn outcome_predictors(data: &Dataset) -> Matrix {
    let d = data.d();
    let mut values = Vec::with_capacity(data.n() * (d + 1));
    for i in 0..data.n() {
        values.push(data.a()[i]);
        values.extend_from_slice(data.x_row(i));
    }
    Matrix::new(data.n(), d + 1, values).expect("shape is consistent")
}

/// Boosted `μ̂(a, x) = E[Y | A = a, X = x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub model: BoostedModel,
}

impl OutcomeModel {
    pub fn predict(&self, a: f64, x: &[f64]) -> f64 {
        assert_eq!(x.len() + 1, self.model.n_features(), "covariate dimension mismatch");
        self.model.predict_with(|j| if j == 0 { a } else { x[j - 1] })
    }
}

/// Fits the outcome regression by squared-error boosting on `(A, X)`,
/// choosing the grid point with the lowest k-fold validation MSE.
pub fn fit_outcome_regression(
    train: &Dataset,
    grid: &[BoostParams],
    k: usize,
    seed: u64,
) -> Result<(BoostParams, OutcomeModel)> {
    let predictors = outcome_predictors(train);
    let targets = Matrix::column(train.y().to_vec());
    let path = |tr: &[usize], va: &[usize], lr: f64, tree: TreeParams, checkpoints: &[usize]| {
        let valid_y: Vec<f64> = va.iter().map(|&i| train.y()[i]).collect();
        validation_path(
            &predictors.select_rows(tr),
            &targets.select_rows(tr),
            &SquaredError,
            &predictors.select_rows(va),
            lr,
            tree,
            checkpoints,
            |pred| pred.iter().zip(&valid_y).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / pred.len() as f64,
        )
    };
    let best = select_by_cv(grid, train.n(), k, seed, &path)?;
    let model = fit_boost(&predictors, &targets, &SquaredError, &best)?;
    Ok((best, OutcomeModel { model }))
}

/// Boosted classifier for `π̂(x) = P(A = 1 | X = x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel {
    pub model: BoostedModel,
}

impl PropensityModel {
    /// Probability strictly inside (0, 1) unless the log-odds overflow.
    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.model.n_features(), "covariate dimension mismatch");
        expit(self.model.predict_with(|j| x[j]))
    }
}

/// Fits the propensity score by Bernoulli-deviance boosting on `X`, choosing
/// the grid point with the lowest k-fold validation log-loss.
pub fn fit_propensity(
    train: &Dataset,
    grid: &[BoostParams],
    k: usize,
    seed: u64,
) -> Result<(BoostParams, PropensityModel)> {
    if !train.has_binary_treatment() {
        return Err(Error::InvalidData("propensity model needs a binary treatment".into()));
    }
    let a = train.a();
    if a.iter().all(|&v| v == a[0]) {
        return Err(Error::InvalidData(format!(
            "every training label equals {}; the propensity score is degenerate",
            a[0]
        )));
    }
    let predictors = train.x().clone();
    let labels = Matrix::column(a.to_vec());
    let path = |tr: &[usize], va: &[usize], lr: f64, tree: TreeParams, checkpoints: &[usize]| {
        let valid_a: Vec<f64> = va.iter().map(|&i| a[i]).collect();
        validation_path(
            &predictors.select_rows(tr),
            &labels.select_rows(tr),
            &BernoulliDeviance,
            &predictors.select_rows(va),
            lr,
            tree,
            checkpoints,
            |u| {
                u.iter()
                    .zip(&valid_a)
                    .map(|(&u, &y)| bernoulli_log_loss(y, u))
                    .sum::<f64>()
                    / u.len() as f64
            },
        )
    };
    let best = select_by_cv(grid, train.n(), k, seed, &path)?;
    let model = fit_boost(&predictors, &labels, &BernoulliDeviance, &best)?;
    Ok((best, PropensityModel { model }))
}

/// Isotropic Gaussian kernel density estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Kde {
    samples: Matrix,
    bandwidth: f64,
}

impl Kde {
    pub fn new(samples: Matrix, bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        if samples.rows() == 0 || samples.cols() == 0 {
            return Err(Error::InvalidData("KDE needs at least one sample".into()));
        }
        Ok(Self { samples, bandwidth })
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    fn log_norm(&self) -> f64 {
        let q = self.dim() as f64;
        -(self.samples.rows() as f64).ln() - q * self.bandwidth.ln() - 0.5 * q * (2.0 * PI).ln()
    }

    fn check_point(&self, point: &[f64]) {
        assert_eq!(point.len(), self.dim(), "KDE evaluation point has the wrong dimension");
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.check_point(point);
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let sum: f64 = self.samples.iter_rows().map(|s| (-sq_dist(point, s) * inv).exp()).sum();
        sum * self.log_norm().exp()
    }

    /// `ln(eval(point))`, computed with log-sum-exp so it stays finite when
    /// every kernel underflows.
    pub fn log_eval(&self, point: &[f64]) -> f64 {
        self.check_point(point);
        let inv = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        let max = self
            .samples
            .iter_rows()
            .map(|s| -sq_dist(point, s) * inv)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = self
            .samples
            .iter_rows()
            .map(|s| (-sq_dist(point, s) * inv - max).exp())
            .sum();
        self.log_norm() + max + sum.ln()
    }
}

#[inline]
fn sq_dist(p: &[f64], s: &[f64]) -> f64 {
    p.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn joint_samples(data: &Dataset) -> Matrix {
    outcome_predictors(data)
}

/// `p̂(a | x) = joint(a, x) / max(marginal(x), floor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalDensity {
    pub joint: Kde,
    pub marginal: Kde,
    pub floor: f64,
}

impl ConditionalDensity {
    pub fn fit(train: &Dataset, h_joint: f64, h_marginal: f64, floor: f64) -> Result<Self> {
        Ok(Self {
            joint: Kde::new(joint_samples(train), h_joint)?,
            marginal: Kde::new(train.x().clone(), h_marginal)?,
            floor,
        })
    }

    pub fn eval(&self, a: f64, x: &[f64]) -> f64 {
        let mut point = Vec::with_capacity(x.len() + 1);
        point.push(a);
        point.extend_from_slice(x);
        self.joint.eval(&point) / self.marginal.eval(x).max(self.floor)
    }
}

/// Fitted functions consumed by the estimating equation.
///
/// `scalar_hat` is the estimated subgroup probability (`P(A = 1)` for ATT,
/// `P(A < t)` for LASE) and 1 for the unnormalized functionals.
pub struct NuisanceBundle<'a> {
    pub mu: Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync + 'a>,
    pub alpha: Box<dyn Fn(f64, &[f64]) -> f64 + Send + Sync + 'a>,
    pub scalar_hat: f64,
}

/// Bandwidth grids for the joint and marginal KDEs.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeGrids {
    pub joint: Vec<f64>,
    pub marginal: Vec<f64>,
}

/// Picks the `(h_joint, h_marginal)` pair maximizing the held-out conditional
/// log-likelihood `Σ_valid [ln joint(a, x) - ln marginal(x)]`.
///
/// Ties go to the smaller joint bandwidth, then the smaller marginal one.
pub fn select_bandwidths(train: &Dataset, valid: &Dataset, grids: &KdeGrids) -> Result<(f64, f64)> {
    if grids.joint.is_empty() || grids.marginal.is_empty() {
        return Err(Error::InvalidParameter("bandwidth grids must be non-empty".into()));
    }
    let joint_train = joint_samples(train);
    let joint_valid = joint_samples(valid);
    let score = |samples: &Matrix, points: &Matrix, h: f64| -> Result<f64> {
        let kde = Kde::new(samples.clone(), h)?;
        Ok(points.iter_rows().map(|p| kde.log_eval(p)).sum())
    };
    let joint_scores = grids
        .joint
        .iter()
        .map(|&h| score(&joint_train, &joint_valid, h))
        .collect::<Result<Vec<_>>>()?;
    let marg_scores = grids
        .marginal
        .iter()
        .map(|&h| score(train.x(), valid.x(), h))
        .collect::<Result<Vec<_>>>()?;

    let mut pairs: Vec<(f64, f64, f64)> = Vec::new();
    for (hj, sj) in grids.joint.iter().zip(&joint_scores) {
        for (hm, sm) in grids.marginal.iter().zip(&marg_scores) {
            pairs.push((*hj, *hm, sj - sm));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut best: Option<(f64, f64, f64)> = None;
    for p in pairs {
        if p.2.is_finite() && best.map_or(true, |b| p.2 > b.2) {
            best = Some(p);
        }
    }
    best.map(|(hj, hm, _)| (hj, hm))
        .ok_or_else(|| Error::Estimation("no bandwidth pair gave a finite log-likelihood".into()))
}

/// The fitted nuisance an indirect representer is built from.
#[derive(Clone, Copy)]
pub enum IndirectNuisance<'a> {
    Propensity(&'a dyn Fn(&[f64]) -> f64),
    Density(&'a ConditionalDensity),
}

/// Plug-in representer at `(a, x)` from an estimated propensity score
/// (ATE, ATT) or conditional density (ASE, LASE).
pub fn indirect_alpha(
    functional: &Functional,
    nuisance: IndirectNuisance<'_>,
    constants: &NuisanceConstants,
    a: f64,
    x: &[f64],
) -> Result<f64> {
    let ratio =
        |density: &ConditionalDensity, delta: f64| density.eval(a - delta, x) / density.eval(a, x).max(constants.floor);
    match (functional, nuisance) {
        (Functional::Ate, IndirectNuisance::Propensity(pi)) => {
            let p = constants.clip_propensity(pi(x));
            Ok(a / p - (1.0 - a) / (1.0 - p))
        }
        (Functional::Att, IndirectNuisance::Propensity(pi)) => {
            let p = constants.clip_propensity(pi(x));
            Ok(a - (1.0 - a) * p / (1.0 - p))
        }
        (&Functional::Ase { delta }, IndirectNuisance::Density(cd)) => Ok(ratio(cd, delta) - 1.0),
        (&Functional::Lase { delta, threshold }, IndirectNuisance::Density(cd)) => {
            let shifted = if a < threshold + delta { ratio(cd, delta) } else { 0.0 };
            Ok(shifted - if a < threshold { 1.0 } else { 0.0 })
        }
        (f, _) => {
            let needed = match f.kind() {
                FunctionalKind::Ate | FunctionalKind::Att => "a propensity score",
                FunctionalKind::Ase | FunctionalKind::Lase => "a conditional density",
            };
            Err(Error::InvalidParameter(format!("indirect {} needs {needed}", f.name())))
        }
    }
}
