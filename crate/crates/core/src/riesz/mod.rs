//! Riesz regression by gradient boosting.
//!
//! The empirical Riesz loss `L_n(α) = (1/n)·Σ [α(W_i)² - 2·m(O_i, α)]` depends
//! on α at counterfactual points as well as at the observations. The data are
//! first augmented with those points ([`augment`]); boosting then runs on the
//! augmented rows with the functional-specific [`riesz_residual`].

mod augment;
mod functional;

pub use augment::{augment, AugmentedData};
pub use functional::{m_eval, riesz_residual, Functional, FunctionalKind};

use crate::boost::{
    fit_boost, fit_boost_observed, BoostParams, BoostedModel, RegressionTree, ResidualFunction, TreeParams,
};
use crate::data::Dataset;
use crate::error::Result;
use crate::tuning::{select_by_cv, validation_path};

impl ResidualFunction for Functional {
    #[inline]
    fn residual(&self, target: &[f64], prediction: f64) -> f64 {
        riesz_residual(self, target[0], target[1], prediction)
    }
}

/// Fitted representer `α̂(a, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RieszModel {
    pub model: BoostedModel,
    pub functional: Functional,
}

impl RieszModel {
    /// `α̂(a, x)`. Panics if `x` has the wrong length.
    pub fn predict(&self, a: f64, x: &[f64]) -> f64 {
        assert_eq!(x.len() + 1, self.model.n_features(), "covariate dimension mismatch");
        self.model.predict_with(|j| if j == 0 { a } else { x[j - 1] })
    }
}

/// `(1/n)·Σ_i [α(A_i, X_i)² - 2·m(O_i, α)]`.
pub fn riesz_loss(dataset: &Dataset, functional: &Functional, alpha: impl Fn(f64, &[f64]) -> f64) -> f64 {
    let n = dataset.n();
    let mut total = 0.0;
    for i in 0..n {
        let (a, x) = (dataset.a()[i], dataset.x_row(i));
        let v = alpha(a, x);
        total += v * v - 2.0 * m_eval(functional, a, x, &alpha);
    }
    total / n as f64
}

/// Boosts the Riesz loss on the augmented training data.
pub fn fit_rieszboost(train: &Dataset, functional: &Functional, params: &BoostParams) -> Result<RieszModel> {
    let aug = augment(train, functional)?;
    let model = fit_boost(&aug.predictor, &aug.target, functional, params)?;
    Ok(RieszModel {
        model,
        functional: *functional,
    })
}

/// [`fit_rieszboost`] that also reports the training Riesz loss after each
/// iteration (index 0 holds the loss of the zero function).
pub fn fit_rieszboost_traced(
    train: &Dataset,
    functional: &Functional,
    params: &BoostParams,
) -> Result<(RieszModel, Vec<f64>)> {
    let aug = augment(train, functional)?;
    let coef = aug.loss_coefficients(functional);
    let mut trace = vec![aug.loss_from_predictions(&coef, &vec![0.0; aug.n_rows()])];
    let model = fit_boost_observed(
        &aug.predictor,
        &aug.target,
        functional,
        params,
        |_, _: &RegressionTree, pred| {
            trace.push(aug.loss_from_predictions(&coef, pred));
            Ok(())
        },
    )?;
    Ok((
        RieszModel {
            model,
            functional: *functional,
        },
        trace,
    ))
}

/// Picks the grid point with the lowest k-fold validation Riesz loss and
/// refits it on all of `train`.
///
/// Ties go to fewer iterations, then smaller learning rate, then smaller depth.
pub fn tune_rieszboost(
    train: &Dataset,
    functional: &Functional,
    grid: &[BoostParams],
    k: usize,
    seed: u64,
) -> Result<(BoostParams, RieszModel)> {
    functional.validate()?;
    // Fail early on invalid treatment before any fold work.
    augment(train, functional)?;
    let path = |tr: &[usize], va: &[usize], lr: f64, tree: TreeParams, checkpoints: &[usize]| {
        let fold_train = augment(&train.subset(tr), functional)?;
        let fold_valid = augment(&train.subset(va), functional)?;
        let coef = fold_valid.loss_coefficients(functional);
        validation_path(
            &fold_train.predictor,
            &fold_train.target,
            functional,
            &fold_valid.predictor,
            lr,
            tree,
            checkpoints,
            |pred| fold_valid.loss_from_predictions(&coef, pred),
        )
    };
    let best = select_by_cv(grid, train.n(), k, seed, &path)?;
    let model = fit_rieszboost(train, functional, &best)?;
    Ok((best, model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boost::TreeParams;
    use crate::matrix::Matrix;

    fn two_rows() -> Dataset {
        Dataset::from_columns(vec![0.0, 0.0], vec![1.0, 0.0], vec![0.2, 0.7]).unwrap()
    }

    #[test]
    fn augment_ate() {
        let aug = augment(&two_rows(), &Functional::Ate).unwrap();
        let p = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.0, 0.7], vec![0.0, 0.2], vec![1.0, 0.7]], 2).unwrap();
        let t = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]], 2).unwrap();
        assert_eq!(aug.predictor, p);
        assert_eq!(aug.target, t);
        assert_eq!(aug.origin, vec![0, 1, 0, 1]);
    }

    #[test]
    fn augment_att() {
        let aug = augment(&two_rows(), &Functional::Att).unwrap();
        let p = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.0, 0.7], vec![0.0, 0.2]], 2).unwrap();
        let t = Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 1.0]], 2).unwrap();
        assert_eq!(aug.predictor, p);
        assert_eq!(aug.target, t);
    }

    #[test]
    fn augment_lase() {
        let d = Dataset::from_columns(vec![0.0, 0.0], vec![-0.5, 0.4], vec![0.1, 0.9]).unwrap();
        let aug = augment(&d, &Functional::lase(1.0, 0.0).unwrap()).unwrap();
        let p = Matrix::from_rows(&[vec![-0.5, 0.1], vec![0.4, 0.9], vec![0.5, 0.1]], 2).unwrap();
        let t = Matrix::from_rows(&[vec![-0.5, -0.5], vec![0.4, 0.4], vec![0.5, -0.5]], 2).unwrap();
        assert_eq!(aug.predictor, p);
        assert_eq!(aug.target, t);
        assert_eq!(aug.origin, vec![0, 1, 0]);
    }

    #[test]
    fn augment_rejects_non_binary() {
        let d = Dataset::from_columns(vec![0.0], vec![0.5], vec![0.0]).unwrap();
        assert!(augment(&d, &Functional::Ate).is_err());
        assert!(augment(&d, &Functional::Att).is_err());
        assert!(augment(&d, &Functional::ase(1.0).unwrap()).is_ok());
        let huge = Dataset::from_columns(vec![0.0], vec![1e20], vec![0.0]).unwrap();
        assert!(augment(&huge, &Functional::ase(1.0).unwrap()).is_err());
    }

    #[test]
    fn loss_of_zero_and_constant() {
        let d = two_rows();
        for f in [
            Functional::Ate,
            Functional::Att,
            Functional::ase(0.5).unwrap(),
            Functional::lase(1.0, 0.5).unwrap(),
        ] {
            assert_eq!(riesz_loss(&d, &f, |_, _| 0.0), 0.0);
        }
        let single = Dataset::from_columns(vec![1.0], vec![1.0], vec![0.3]).unwrap();
        assert_eq!(riesz_loss(&single, &Functional::Ate, |_, _| 1.5), 2.25);
    }

    #[test]
    fn augmented_loss_matches_direct_loss() {
        let d = Dataset::from_columns(
            vec![0.0; 5],
            vec![-0.3, 1.2, 0.1, -2.0, 0.7],
            vec![0.5, 0.2, 0.9, 1.4, 0.0],
        )
        .unwrap();
        let alpha = |a: f64, x: &[f64]| (a * 1.3 - x[0]).sin() + 0.2 * a;
        for f in [Functional::ase(1.0).unwrap(), Functional::lase(1.0, 0.5).unwrap()] {
            let aug = augment(&d, &f).unwrap();
            let pred: Vec<f64> = aug.predictor.iter_rows().map(|r| alpha(r[0], &r[1..])).collect();
            let via_aug = aug.loss_from_predictions(&aug.loss_coefficients(&f), &pred);
            let direct = riesz_loss(&d, &f, alpha);
            assert!((via_aug - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_iterations_give_zero_representer() {
        let d = Dataset::from_columns(vec![0.0; 4], vec![1.0, 0.0, 1.0, 0.0], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let p = BoostParams::new(0.1, 0, TreeParams::default()).unwrap();
        let m = fit_rieszboost(&d, &Functional::Ate, &p).unwrap();
        assert_eq!(m.predict(1.0, &[0.25]), 0.0);
        assert_eq!(riesz_loss(&d, &Functional::Ate, |a, x| m.predict(a, x)), 0.0);
    }

    #[test]
    fn traced_loss_agrees_with_model() {
        let d = Dataset::from_columns(
            vec![0.0; 8],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
        )
        .unwrap();
        let p = BoostParams::new(0.5, 6, TreeParams::new(2, 1).unwrap()).unwrap();
        let (m, trace) = fit_rieszboost_traced(&d, &Functional::Ate, &p).unwrap();
        assert_eq!(trace.len(), 7);
        let direct = riesz_loss(&d, &Functional::Ate, |a, x| m.predict(a, x));
        assert!((trace[6] - direct).abs() < 1e-12);
    }

    #[test]
    fn single_point_grid_is_returned() {
        let d = Dataset::from_columns(
            vec![0.0; 10],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0],
            (0..10).map(|i| i as f64 / 10.0).collect(),
        )
        .unwrap();
        let p = BoostParams::new(0.1, 3, TreeParams::new(2, 1).unwrap()).unwrap();
        let (best, model) = tune_rieszboost(&d, &Functional::Ate, &[p], 2, 0).unwrap();
        assert_eq!(best, p);
        assert_eq!(model, fit_rieszboost(&d, &Functional::Ate, &p).unwrap());
        assert!(tune_rieszboost(&d, &Functional::Ate, &[], 2, 0).is_err());
    }
}
