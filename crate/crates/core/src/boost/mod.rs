//! Generic gradient boosting over regression trees.
//!
//! The engine is parameterized by a row-wise [`ResidualFunction`] that maps a
//! target row and the current prediction to a generalized residual. Each
//! iteration fits a least-squares tree to those residuals and adds it to the
//! ensemble with step size `learning_rate`. Predictions start at zero.

mod serialize;
mod tree;

pub use serialize::{read_model, write_model, MODEL_MAGIC};
pub use tree::{fit_tree, Node, PresortedFeatures, RegressionTree, TreeParams};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostParams {
    pub learning_rate: f64,
    pub n_iterations: usize,
    pub tree: TreeParams,
}

impl BoostParams {
    pub fn new(learning_rate: f64, n_iterations: usize, tree: TreeParams) -> Result<Self> {
        let p = Self {
            learning_rate,
            n_iterations,
            tree,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.tree.validate()
    }
}

/// Maps one target row and the current prediction at that row to the
/// negative gradient used as the next tree's regression target.
pub trait ResidualFunction: Sync {
    fn residual(&self, target: &[f64], prediction: f64) -> f64;
}

/// `y - ŷ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaredError;

impl ResidualFunction for SquaredError {
    #[inline]
    fn residual(&self, target: &[f64], prediction: f64) -> f64 {
        residual_mse(target[0], prediction)
    }
}

/// `y - expit(ŷ)` for labels in {0, 1} and log-odds predictions.
#[derive(Debug, Clone, Copy, Default)]
pub struct BernoulliDeviance;

impl ResidualFunction for BernoulliDeviance {
    #[inline]
    fn residual(&self, target: &[f64], prediction: f64) -> f64 {
        residual_bernoulli(target[0], prediction)
    }
}

#[inline]
pub fn residual_mse(y: f64, prediction: f64) -> f64 {
    y - prediction
}

#[inline]
pub fn residual_bernoulli(y: f64, log_odds: f64) -> f64 {
    y - expit(log_odds)
}

/// Logistic function `1 / (1 + e^-u)`, evaluated without overflow.
#[inline]
pub fn expit(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Negative Bernoulli log-likelihood of label `y` at log-odds `u`.
#[inline]
pub fn bernoulli_log_loss(y: f64, u: f64) -> f64 {
    // log(1 + e^u) - y·u
    let softplus = if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    };
    softplus - y * u
}

/// An additive tree ensemble `0 + λ·Σ f_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    trees: Vec<RegressionTree>,
    learning_rate: f64,
    n_features: usize,
}

impl BoostedModel {
    pub fn new(trees: Vec<RegressionTree>, learning_rate: f64, n_features: usize) -> Result<Self> {
        if let Some(t) = trees.iter().find(|t| t.n_features() != n_features) {
            return Err(Error::DimensionMismatch {
                expected: n_features,
                got: t.n_features(),
            });
        }
        Ok(Self {
            trees,
            learning_rate,
            n_features,
        })
    }

    pub fn empty(learning_rate: f64, n_features: usize) -> Self {
        Self {
            trees: Vec::new(),
            learning_rate,
            n_features,
        }
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Always 0; boosting starts from the zero function.
    pub fn initial_value(&self) -> f64 {
        0.0
    }

    pub fn predict(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        Ok(self.predict_with(|j| row[j]))
    }

    /// Prediction with features supplied by index; no dimension check.
    #[inline]
    pub fn predict_with(&self, feature: impl Fn(usize) -> f64 + Copy) -> f64 {
        let mut z = 0.0;
        for t in &self.trees {
            z += self.learning_rate * t.predict_with(feature);
        }
        z
    }

    /// `expit` of the raw score, for models trained on [`BernoulliDeviance`].
    pub fn predict_proba(&self, row: &[f64]) -> Result<f64> {
        self.predict(row).map(expit)
    }

    /// The first `m` trees.
    pub fn truncated(&self, m: usize) -> Self {
        Self {
            trees: self.trees[..m.min(self.trees.len())].to_vec(),
            learning_rate: self.learning_rate,
            n_features: self.n_features,
        }
    }

    /// Ensemble holding the trees of `self` followed by those of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.learning_rate != other.learning_rate {
            return Err(Error::InvalidParameter("learning rates differ".into()));
        }
        let mut trees = self.trees.clone();
        trees.extend(other.trees.iter().cloned());
        Self::new(trees, self.learning_rate, self.n_features)
    }
}

/// Runs `params.n_iterations` boosting rounds on (`predictors`, `targets`).
pub fn fit_boost<R: ResidualFunction + ?Sized>(
    predictors: &Matrix,
    targets: &Matrix,
    residual_fn: &R,
    params: &BoostParams,
) -> Result<BoostedModel> {
    fit_boost_observed(predictors, targets, residual_fn, params, |_, _, _| Ok(()))
}

/// [`fit_boost`] with a callback after every iteration.
///
/// The callback receives the 1-based iteration number, the tree just added,
/// and the updated training predictions.
pub fn fit_boost_observed<R, F>(
    predictors: &Matrix,
    targets: &Matrix,
    residual_fn: &R,
    params: &BoostParams,
    mut observer: F,
) -> Result<BoostedModel>
where
    R: ResidualFunction + ?Sized,
    F: FnMut(usize, &RegressionTree, &[f64]) -> Result<()>,
{
    params.validate()?;
    let rows = predictors.rows();
    if targets.rows() != rows {
        return Err(Error::InvalidData(format!(
            "predictor matrix has {rows} rows but target matrix has {}",
            targets.rows()
        )));
    }
    let n_features = predictors.cols();
    let lr = params.learning_rate;
    if params.n_iterations == 0 {
        return Ok(BoostedModel::empty(lr, n_features));
    }
    let sorted = PresortedFeatures::new(predictors)?;

    let mut predictions = vec![0.0; rows];
    let mut residuals = vec![0.0; rows];
    let mut fitted = vec![0.0; rows];
    let mut trees = Vec::with_capacity(params.n_iterations);
    for m in 1..=params.n_iterations {
        for j in 0..rows {
            let r = residual_fn.residual(targets.row(j), predictions[j]);
            if !r.is_finite() {
                return Err(Error::NonFiniteResidual { iteration: m });
            }
            residuals[j] = r;
        }
        let tree = sorted.fit(&residuals, &params.tree, &mut fitted)?;
        for j in 0..rows {
            predictions[j] += lr * fitted[j];
        }
        observer(m, &tree, &predictions)?;
        trees.push(tree);
    }
    Ok(BoostedModel {
        trees,
        learning_rate: lr,
        n_features,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn mse(y: &[f64], p: &[f64]) -> f64 {
        y.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64
    }

    #[test]
    fn zero_iterations_predict_zero() {
        let x = Matrix::column(vec![0.0, 1.0, 2.0]);
        let y = Matrix::column(vec![5.0, 6.0, 7.0]);
        let p = BoostParams::new(0.1, 0, TreeParams::default()).unwrap();
        let model = fit_boost(&x, &y, &SquaredError, &p).unwrap();
        assert!(model.trees().is_empty());
        assert_eq!(model.predict(&[1.0]).unwrap(), 0.0);
        assert_eq!(model.predict_proba(&[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn one_full_step_interpolates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 40;
        let x = Matrix::column((0..n).map(|_| rng.gen::<f64>()).collect());
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let p = BoostParams::new(1.0, 1, TreeParams::new(64, 1).unwrap()).unwrap();
        let model = fit_boost(&x, &Matrix::column(y.clone()), &SquaredError, &p).unwrap();
        for i in 0..n {
            assert_eq!(model.predict(x.row(i)).unwrap(), y[i]);
        }
    }

    #[test]
    fn mse_training_loss_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 500;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|x| (3.0 * x).sin() + 0.3 * rng.gen_range(-1.0..1.0))
            .collect();
        let p = BoostParams::new(0.1, 200, TreeParams::new(3, 5).unwrap()).unwrap();
        let mut prev = mse(&y, &vec![0.0; n]);
        fit_boost_observed(
            &Matrix::column(xs),
            &Matrix::column(y.clone()),
            &SquaredError,
            &p,
            |_, _, pred| {
                let cur = mse(&y, pred);
                assert!(cur <= prev + 1e-12 * prev, "{cur} > {prev}");
                prev = cur;
                Ok(())
            },
        )
        .unwrap();
    }

    #[test]
    fn row_mismatch_is_rejected() {
        let p = BoostParams::new(0.1, 3, TreeParams::default()).unwrap();
        let r = fit_boost(
            &Matrix::column(vec![1.0, 2.0]),
            &Matrix::column(vec![1.0]),
            &SquaredError,
            &p,
        );
        assert!(r.is_err());
    }

    struct Exploding;
    impl ResidualFunction for Exploding {
        fn residual(&self, _: &[f64], prediction: f64) -> f64 {
            if prediction != 0.0 {
                f64::NAN
            } else {
                1.0
            }
        }
    }

    #[test]
    fn non_finite_residual_reports_iteration() {
        let p = BoostParams::new(0.5, 5, TreeParams::new(1, 1).unwrap()).unwrap();
        let err = fit_boost(
            &Matrix::column(vec![1.0, 2.0]),
            &Matrix::column(vec![0.0, 0.0]),
            &Exploding,
            &p,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteResidual { iteration: 2 }));
    }

    #[test]
    fn constant_tree_scaled_by_learning_rate() {
        let model = BoostedModel::new(vec![RegressionTree::constant(2.0, 1)], 0.5, 1).unwrap();
        assert_eq!(model.predict(&[123.0]).unwrap(), 1.0);
        assert!(model.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn residual_values() {
        assert_eq!(residual_mse(3.0, 1.0), 2.0);
        assert_eq!(residual_mse(4.25, 4.25), 0.0);
        assert_eq!(residual_bernoulli(1.0, 0.0), 0.5);
        assert!((residual_bernoulli(0.0, 40.0) + 1.0).abs() <= 1e-15);
        assert!(expit(-800.0) > 0.0 || expit(-800.0) == 0.0);
        assert!(expit(800.0) <= 1.0);
    }

    #[test]
    fn mse_residual_matches_finite_difference() {
        // residual = -(n/2)·∂/∂ŷ_i of (1/n)Σ(y - ŷ)²
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let h = 1e-5;
        for i in 0..n {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += h;
            dn[i] -= h;
            let grad = (mse(&y, &up) - mse(&y, &dn)) / (2.0 * h);
            let expected = -(n as f64 / 2.0) * grad;
            let r = residual_mse(y[i], p[i]);
            assert!((r - expected).abs() <= 1e-6 * r.abs().max(1e-3), "{r} vs {expected}");
        }
    }

    #[test]
    fn bernoulli_residual_matches_finite_difference() {
        // residual = -∂/∂u of the per-row negative log-likelihood
        for &y in &[0.0, 1.0] {
            for &u in &[-3.0, -0.4, 0.0, 0.7, 2.5] {
                let h = 1e-5;
                let grad = (bernoulli_log_loss(y, u + h) - bernoulli_log_loss(y, u - h)) / (2.0 * h);
                let r = residual_bernoulli(y, u);
                assert!((r + grad).abs() <= 1e-6 * r.abs(), "y={y} u={u}: {r} vs {}", -grad);
            }
        }
    }

    #[test]
    fn separable_two_points_are_classified() {
        let x = Matrix::column(vec![0.0, 1.0]);
        let y = Matrix::column(vec![0.0, 1.0]);
        let p = BoostParams::new(0.25, 200, TreeParams::new(1, 1).unwrap()).unwrap();
        let model = fit_boost(&x, &y, &BernoulliDeviance, &p).unwrap();
        assert!(model.predict_proba(&[0.0]).unwrap() < 0.1);
        assert!(model.predict_proba(&[1.0]).unwrap() > 0.9);
    }

    #[test]
    fn concatenation_adds_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 60;
        let x = Matrix::new(n, 2, (0..2 * n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let y1 = Matrix::column((0..n).map(|_| rng.gen::<f64>()).collect());
        let y2 = Matrix::column((0..n).map(|_| rng.gen::<f64>()).collect());
        let p = BoostParams::new(0.3, 7, TreeParams::new(2, 3).unwrap()).unwrap();
        let m1 = fit_boost(&x, &y1, &SquaredError, &p).unwrap();
        let m2 = fit_boost(&x, &y2, &SquaredError, &p).unwrap();
        let both = m1.concat(&m2).unwrap();
        for i in 0..n {
            let lhs = both.predict(x.row(i)).unwrap();
            let rhs = m1.predict(x.row(i)).unwrap() + m2.predict(x.row(i)).unwrap();
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn fitting_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 80;
        let x = Matrix::new(n, 3, (0..3 * n).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let y = Matrix::column((0..n).map(|_| rng.gen::<f64>()).collect());
        let p = BoostParams::new(0.1, 20, TreeParams::new(3, 2).unwrap()).unwrap();
        assert_eq!(
            fit_boost(&x, &y, &SquaredError, &p).unwrap(),
            fit_boost(&x, &y, &SquaredError, &p).unwrap()
        );
    }
}
