use super::functional::{riesz_residual, Functional};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Observed rows plus the counterfactual rows at which the empirical Riesz
/// loss depends on the candidate function.
///
/// `predictor` has columns `(ã, x…)`, `target` has columns `(ã, a°)`, and
/// `origin[j]` is the source observation of row `j`. The first `n_observed`
/// rows are the observations themselves in dataset order.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedData {
    pub predictor: Matrix,
    pub target: Matrix,
    pub origin: Vec<usize>,
    pub n_observed: usize,
}

impl AugmentedData {
    pub fn n_rows(&self) -> usize {
        self.origin.len()
    }

    /// Coefficient of `α(row j)` in `Σ_i m(O_i, α)`, i.e. the residual at a zero prediction.
    pub fn loss_coefficients(&self, functional: &Functional) -> Vec<f64> {
        self.target
            .iter_rows()
            .map(|t| riesz_residual(functional, t[0], t[1], 0.0))
            .collect()
    }

    /// Empirical Riesz loss `(1/n)·Σ_i [α(W_i)² - 2·m(O_i, α)]` from the values
    /// of α at every augmented row.
    pub fn loss_from_predictions(&self, coefficients: &[f64], predictions: &[f64]) -> f64 {
        let mut total = 0.0;
        for j in 0..self.n_rows() {
            let z = predictions[j];
            if j < self.n_observed {
                total += z * z;
            }
            total -= 2.0 * coefficients[j] * z;
        }
        total / self.n_observed as f64
    }
}

/// Builds the predictor and target matrices for `functional`.
///
/// ATE appends `(1 - A_i, X_i)` for every row; ATT appends `(0, X_i)` for
/// treated rows; ASE appends `(A_i + δ, X_i)` for every row; LASE appends
/// `(A_i + δ, X_i)` for rows with `A_i < t`. Appended rows carry targets
/// `(ã, A_i)` and observed rows carry `(A_i, A_i)`.
pub fn augment(dataset: &Dataset, functional: &Functional) -> Result<AugmentedData> {
    functional.validate()?;
    if functional.requires_binary_treatment() && !dataset.has_binary_treatment() {
        return Err(Error::InvalidData(format!(
            "functional {} requires a 0/1 treatment",
            functional.name()
        )));
    }
    let n = dataset.n();
    let d = dataset.d();
    let counterfactual = |a: f64| -> Option<f64> {
        match *functional {
            Functional::Ate => Some(1.0 - a),
            Functional::Att => (a == 1.0).then_some(0.0),
            Functional::Ase { delta } => Some(a + delta),
            Functional::Lase { delta, threshold } => (a < threshold).then_some(a + delta),
        }
    };

    let extra: Vec<(usize, f64)> = (0..n)
        .filter_map(|i| counterfactual(dataset.a()[i]).map(|c| (i, c)))
        .collect();
    if let Some(&(i, _)) = extra.iter().find(|&&(i, c)| c == dataset.a()[i]) {
        return Err(Error::InvalidData(format!(
            "shifted treatment at row {i} is indistinguishable from the observed value"
        )));
    }
    let rows = n + extra.len();
    let mut predictor = Vec::with_capacity(rows * (d + 1));
    let mut target = Vec::with_capacity(rows * 2);
    let mut origin = Vec::with_capacity(rows);
    let mut push = |i: usize, a_tilde: f64| {
        predictor.push(a_tilde);
        predictor.extend_from_slice(dataset.x_row(i));
        target.push(a_tilde);
        target.push(dataset.a()[i]);
        origin.push(i);
    };
    for i in 0..n {
        push(i, dataset.a()[i]);
    }
    for &(i, c) in &extra {
        push(i, c);
    }
    Ok(AugmentedData {
        predictor: Matrix::new(rows, d + 1, predictor)?,
        target: Matrix::new(rows, 2, target)?,
        origin,
        n_observed: n,
    })
}
