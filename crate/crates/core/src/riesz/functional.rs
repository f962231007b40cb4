use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Target estimand, which fixes the linear functional `m(O, g)`.
///
/// Construct through [`Functional::ase`] / [`Functional::lase`] (or call
/// [`Functional::validate`]) so that a zero shift is rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// `g(1, x) - g(0, x)`
    Ate,
    /// `a·(g(1, x) - g(0, x))`, the partial parameter of the effect on the treated.
    Att,
    /// `g(a + δ, x) - g(a, x)`
    Ase { delta: f64 },
    /// `1(a < t)·(g(a + δ, x) - g(a, x))`
    Lase { delta: f64, threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FunctionalKind {
    Ate,
    Att,
    Ase,
    Lase,
}

impl FunctionalKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Ate => "ate",
            Self::Att => "att",
            Self::Ase => "ase",
            Self::Lase => "lase",
        }
    }

    /// Whether the functional shifts a continuous treatment.
    pub fn is_shift(self) -> bool {
        matches!(self, Self::Ase | Self::Lase)
    }
}

impl fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FunctionalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ate" => Ok(Self::Ate),
            "att" => Ok(Self::Att),
            "ase" => Ok(Self::Ase),
            "lase" => Ok(Self::Lase),
            other => Err(Error::InvalidParameter(format!(
                "unknown functional `{other}` (expected ate, att, ase or lase)"
            ))),
        }
    }
}

impl Functional {
    pub fn ase(delta: f64) -> Result<Self> {
        let f = Self::Ase { delta };
        f.validate()?;
        Ok(f)
    }

    pub fn lase(delta: f64, threshold: f64) -> Result<Self> {
        let f = Self::Lase { delta, threshold };
        f.validate()?;
        Ok(f)
    }

    /// Builds a functional from its kind and optional named parameters.
    /// Shift functionals require `delta`; LASE also requires `threshold`.
    pub fn from_parts(kind: FunctionalKind, delta: Option<f64>, threshold: Option<f64>) -> Result<Self> {
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::InvalidParameter(format!("functional {kind} requires `{name}`")))
        };
        match kind {
            FunctionalKind::Ate => Ok(Self::Ate),
            FunctionalKind::Att => Ok(Self::Att),
            FunctionalKind::Ase => Self::ase(need(delta, "delta")?),
            FunctionalKind::Lase => Self::lase(need(delta, "delta")?, need(threshold, "threshold")?),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Ate | Self::Att => Ok(()),
            Self::Ase { delta } | Self::Lase { delta, .. } if !(delta.is_finite() && delta != 0.0) => Err(
                Error::InvalidParameter(format!("shift delta must be finite and nonzero, got {delta}")),
            ),
            Self::Lase { threshold, .. } if !threshold.is_finite() => Err(Error::InvalidParameter(format!(
                "LASE threshold must be finite, got {threshold}"
            ))),
            _ => Ok(()),
        }
    }

    pub fn kind(&self) -> FunctionalKind {
        match self {
            Self::Ate => FunctionalKind::Ate,
            Self::Att => FunctionalKind::Att,
            Self::Ase { .. } => FunctionalKind::Ase,
            Self::Lase { .. } => FunctionalKind::Lase,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind().name()
    }

    /// ATE and ATT are only defined for 0/1 treatments.
    pub fn requires_binary_treatment(&self) -> bool {
        matches!(self, Self::Ate | Self::Att)
    }

    /// Whether the estimand is normalized by a marginal probability
    /// (`P(A = 1)` for ATT, `P(A < t)` for LASE).
    pub fn is_normalized(&self) -> bool {
        matches!(self, Self::Att | Self::Lase { .. })
    }

    /// Per-row weight whose mean estimates the normalizing probability:
    /// `a` for ATT, `1(a < t)` for LASE, 1 otherwise.
    #[inline]
    pub fn subgroup_weight(&self, a: f64) -> f64 {
        match *self {
            Self::Att => a,
            Self::Lase { threshold, .. } => indicator(a < threshold),
            _ => 1.0,
        }
    }
}

impl fmt::Display for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Ate => write!(f, "ate"),
            Self::Att => write!(f, "att"),
            Self::Ase { delta } => write!(f, "ase(delta={delta})"),
            Self::Lase { delta, threshold } => write!(f, "lase(delta={delta}, threshold={threshold})"),
        }
    }
}

#[inline]
pub(crate) fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Evaluates `m(O, g)` at one observation with treatment `a` and covariates `x`.
///
/// The outcome does not enter any of the supported functionals.
pub fn m_eval(functional: &Functional, a: f64, x: &[f64], g: impl Fn(f64, &[f64]) -> f64) -> f64 {
    match *functional {
        Functional::Ate => g(1.0, x) - g(0.0, x),
        Functional::Att => {
            if a == 0.0 {
                0.0
            } else {
                a * (g(1.0, x) - g(0.0, x))
            }
        }
        Functional::Ase { delta } => g(a + delta, x) - g(a, x),
        Functional::Lase { delta, threshold } => {
            if a < threshold {
                g(a + delta, x) - g(a, x)
            } else {
                0.0
            }
        }
    }
}

/// Row-wise Riesz residual for target row `(ã, a°)` and current prediction `ẑ`.
///
/// Equals `-(n/2)` times the derivative of the empirical Riesz loss with
/// respect to the prediction at that augmented row. Observed rows are those
/// with `ã == a°`, compared exactly.
#[inline]
pub fn riesz_residual(functional: &Functional, a_tilde: f64, a_obs: f64, prediction: f64) -> f64 {
    let observed = a_tilde == a_obs;
    let own = if observed { -prediction } else { 0.0 };
    let sign = if observed { -1.0 } else { 1.0 };
    own + match *functional {
        Functional::Ate => 2.0 * a_tilde - 1.0,
        Functional::Att => indicator(a_obs == 1.0) * (2.0 * a_tilde - 1.0),
        Functional::Ase { .. } => sign,
        Functional::Lase { threshold, .. } => indicator(a_obs < threshold) * sign,
    }
}
