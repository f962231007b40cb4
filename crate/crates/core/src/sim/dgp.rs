//! The two simulation designs and their analytic nuisance functions.
//!
//! Binary treatment:
//!   X ~ U(0, 1), A | X ~ Bernoulli(expit(η(X))),
//!   η(x) = -0.02x - x² + 4·ln(x + 0.3) + 1.5,
//!   Y | A, X ~ N(5x + 9xa + 5·sin(πx) + 25(a - 2), 1).
//!
//! Continuous treatment:
//!   X ~ U(0, 2), A | X ~ N(x² - 1, 2²),
//!   Y | A, X ~ N(5x + 9a(x + 2)² + 5·sin(πx) + 25a, 1).

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::boost::expit;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::riesz::{Functional, FunctionalKind};

/// Standard deviation of `A | X` in the continuous design.
pub const TREATMENT_SD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dgp {
    Binary,
    Continuous,
}

impl Dgp {
    pub fn name(self) -> &'static str {
        match self {
            Self::Binary => "binary",
            Self::Continuous => "continuous",
        }
    }

    /// Functionals that are well defined under this design.
    pub fn supports(self, kind: FunctionalKind) -> bool {
        match self {
            Self::Binary => matches!(kind, FunctionalKind::Ate | FunctionalKind::Att),
            Self::Continuous => matches!(kind, FunctionalKind::Ase | FunctionalKind::Lase),
        }
    }

    pub fn check(self, functional: &Functional) -> Result<()> {
        functional.validate()?;
        if self.supports(functional.kind()) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "functional {} is not defined for the {} design",
                functional.name(),
                self.name()
            )))
        }
    }

    /// Covariate support `(lo, hi)` of the uniform X.
    pub fn x_range(self) -> (f64, f64) {
        match self {
            Self::Binary => (0.0, 1.0),
            Self::Continuous => (0.0, 2.0),
        }
    }

    /// One observation `(y, a, x)`, drawn in that order from x upward.
    pub fn draw_row<R: Rng + ?Sized>(self, rng: &mut R) -> (f64, f64, f64) {
        match self {
            Self::Binary => {
                let x: f64 = rng.gen();
                let a = if rng.gen::<f64>() < true_propensity(x) {
                    1.0
                } else {
                    0.0
                };
                let e: f64 = rng.sample(StandardNormal);
                (true_mu(self, a, x) + e, a, x)
            }
            Self::Continuous => {
                let x = 2.0 * rng.gen::<f64>();
                let z: f64 = rng.sample(StandardNormal);
                let a = continuous_treatment_mean(x) + TREATMENT_SD * z;
                let e: f64 = rng.sample(StandardNormal);
                (true_mu(self, a, x) + e, a, x)
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, n: usize, rng: &mut R) -> Dataset {
        let mut y = Vec::with_capacity(n);
        let mut a = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for _ in 0..n {
            let (yi, ai, xi) = self.draw_row(rng);
            y.push(yi);
            a.push(ai);
            x.push(xi);
        }
        Dataset::new(y, a, Matrix::column(x)).expect("simulated draws are finite")
    }
}

impl fmt::Display for Dgp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dgp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binary" => Ok(Self::Binary),
            "continuous" => Ok(Self::Continuous),
            other => Err(Error::InvalidParameter(format!(
                "unknown dgp `{other}` (expected binary or continuous)"
            ))),
        }
    }
}

pub fn draw_binary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    Dgp::Binary.draw(n, rng)
}

pub fn draw_continuous<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Dataset {
    Dgp::Continuous.draw(n, rng)
}

/// Log-odds of treatment in the binary design.
pub fn propensity_log_odds(x: f64) -> f64 {
    -0.02 * x - x * x + 4.0 * (x + 0.3).ln() + 1.5
}

/// `P(A = 1 | X = x)` in the binary design.
pub fn true_propensity(x: f64) -> f64 {
    expit(propensity_log_odds(x))
}

/// `E[A | X = x]` in the continuous design.
pub fn continuous_treatment_mean(x: f64) -> f64 {
    x * x - 1.0
}

/// Conditional density of `A` given `X = x` in the continuous design.
pub fn true_treatment_density(a: f64, x: f64) -> f64 {
    let z = (a - continuous_treatment_mean(x)) / TREATMENT_SD;
    (-0.5 * z * z).exp() / (TREATMENT_SD * (2.0 * PI).sqrt())
}

/// `p(a - δ | x) / p(a | x)` for the Gaussian treatment law.
pub fn true_density_ratio(delta: f64, a: f64, x: f64) -> f64 {
    let mu = continuous_treatment_mean(x);
    let var = TREATMENT_SD * TREATMENT_SD;
    (((a - mu).powi(2) - (a - delta - mu).powi(2)) / (2.0 * var)).exp()
}

/// Outcome regression `E[Y | A = a, X = x]`.
pub fn true_mu(dgp: Dgp, a: f64, x: f64) -> f64 {
    match dgp {
        Dgp::Binary => 5.0 * x + 9.0 * x * a + 5.0 * (PI * x).sin() + 25.0 * (a - 2.0),
        Dgp::Continuous => 5.0 * x + 9.0 * a * (x + 2.0).powi(2) + 5.0 * (PI * x).sin() + 25.0 * a,
    }
}

/// True Riesz representer of `functional` under `dgp`.
pub fn true_alpha(dgp: Dgp, functional: &Functional, a: f64, x: f64) -> Result<f64> {
    dgp.check(functional)?;
    Ok(match *functional {
        Functional::Ate => {
            let p = true_propensity(x);
            a / p - (1.0 - a) / (1.0 - p)
        }
        Functional::Att => {
            let p = true_propensity(x);
            a - (1.0 - a) * p / (1.0 - p)
        }
        Functional::Ase { delta } => true_density_ratio(delta, a, x) - 1.0,
        Functional::Lase { delta, threshold } => {
            let shifted = if a < threshold + delta {
                true_density_ratio(delta, a, x)
            } else {
                0.0
            };
            shifted - if a < threshold { 1.0 } else { 0.0 }
        }
    })
}
