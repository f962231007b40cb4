//! True parameter values for the simulation designs.

use std::fmt;
use std::str::FromStr;

use statrs::function::erf::erfc;

use super::dgp::{continuous_treatment_mean, true_mu, true_propensity, Dgp, TREATMENT_SD};
use super::rng::rng_from_seed;
use crate::error::{Error, Result};
use crate::riesz::{m_eval, Functional};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthMode {
    ClosedForm,
    Quadrature,
    MonteCarlo { draws: usize, seed: u64 },
}

impl TruthMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ClosedForm => "closed-form",
            Self::Quadrature => "quadrature",
            Self::MonteCarlo { .. } => "monte-carlo",
        }
    }
}

impl fmt::Display for TruthMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MonteCarlo { draws, seed } => write!(f, "monte-carlo(N={draws}, seed={seed})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Parses `closed-form`, `quadrature` or `monte-carlo`; Monte Carlo takes its
/// size and seed from the caller afterwards.
impl FromStr for TruthMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "closed-form" | "closed" => Ok(Self::ClosedForm),
            "quadrature" => Ok(Self::Quadrature),
            "monte-carlo" | "mc" => Ok(Self::MonteCarlo {
                draws: 10_000_000,
                seed: 0,
            }),
            other => Err(Error::InvalidParameter(format!("unknown truth mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Truth {
    pub value: f64,
    /// Standard error, for Monte Carlo truths only.
    pub std_error: Option<f64>,
}

pub(crate) fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Composite Simpson rule with `intervals` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, intervals: usize) -> f64 {
    let n = intervals + intervals % 2;
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

const QUAD_PANELS: usize = 4000;

/// Probability of the subgroup that normalizes the estimand: `P(A = 1)` for
/// ATT, `P(A < t)` for LASE, 1 otherwise.
pub fn true_subgroup_probability(dgp: Dgp, functional: &Functional) -> Result<f64> {
    dgp.check(functional)?;
    let (lo, hi) = dgp.x_range();
    let width = hi - lo;
    Ok(match *functional {
        Functional::Att => simpson(true_propensity, lo, hi, QUAD_PANELS) / width,
        Functional::Lase { threshold, .. } => simpson(|x| lase_weight(threshold, x), lo, hi, QUAD_PANELS) / width,
        _ => 1.0,
    })
}

fn lase_weight(threshold: f64, x: f64) -> f64 {
    std_normal_cdf((threshold - continuous_treatment_mean(x)) / TREATMENT_SD)
}

/// True value of `functional` under `dgp`.
///
/// Closed forms exist for ATE (9·E[X] + 25 = 29.5) and ASE (δ·(9·E[(X+2)²] + 25) = 109δ).
/// Quadrature integrates the conditional effect over X, weighted by the
/// subgroup probability for ATT and LASE. Monte Carlo averages `m(O, μ₀)`
/// (normalized by the subgroup frequency) over simulated draws.
pub fn true_psi(dgp: Dgp, functional: &Functional, mode: TruthMode) -> Result<Truth> {
    dgp.check(functional)?;
    let exact = |value| Ok(Truth { value, std_error: None });
    match mode {
        TruthMode::ClosedForm => match *functional {
            Functional::Ate => exact(9.0 * 0.5 + 25.0),
            Functional::Ase { delta } => exact(delta * (9.0 * 56.0 / 6.0 + 25.0)),
            _ => Err(Error::InvalidParameter(format!(
                "no closed form for {}; use quadrature or monte-carlo",
                functional.name()
            ))),
        },
        TruthMode::Quadrature => {
            let (lo, hi) = dgp.x_range();
            let (num, den) = match *functional {
                Functional::Ate => (simpson(|x| 9.0 * x + 25.0, lo, hi, QUAD_PANELS), hi - lo),
                Functional::Att => (
                    simpson(|x| (9.0 * x + 25.0) * true_propensity(x), lo, hi, QUAD_PANELS),
                    simpson(true_propensity, lo, hi, QUAD_PANELS),
                ),
                Functional::Ase { delta } => (
                    simpson(|x| delta * (9.0 * (x + 2.0).powi(2) + 25.0), lo, hi, QUAD_PANELS),
                    hi - lo,
                ),
                Functional::Lase { delta, threshold } => (
                    simpson(
                        |x| delta * (9.0 * (x + 2.0).powi(2) + 25.0) * lase_weight(threshold, x),
                        lo,
                        hi,
                        QUAD_PANELS,
                    ),
                    simpson(|x| lase_weight(threshold, x), lo, hi, QUAD_PANELS),
                ),
            };
            exact(num / den)
        }
        TruthMode::MonteCarlo { draws, seed } => {
            if draws < 2 {
                return Err(Error::InvalidParameter(
                    "monte-carlo truth needs at least 2 draws".into(),
                ));
            }
            let mut rng = rng_from_seed(seed);
            let mu = |a: f64, x: &[f64]| true_mu(dgp, a, x[0]);
            // Streaming sums for the ratio Σm / Σw and its linearized variance.
            let (mut sm, mut sw, mut smm, mut sww, mut smw) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for _ in 0..draws {
                let (_, a, x) = dgp.draw_row(&mut rng);
                let m = m_eval(functional, a, &[x], mu);
                let w = functional.subgroup_weight(a);
                sm += m;
                sw += w;
                smm += m * m;
                sww += w * w;
                smw += m * w;
            }
            if sw == 0.0 {
                return Err(Error::Estimation("no draws fell in the target subgroup".into()));
            }
            let value = sm / sw;
            let ss = (smm - 2.0 * value * smw + value * value * sww).max(0.0);
            Ok(Truth {
                value,
                std_error: Some(ss.sqrt() / sw),
            })
        }
    }
}
