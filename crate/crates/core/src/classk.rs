//! Parametric class-K functions used as the per-level coefficients of a
//! barrier cascade.
//!
//! Every function is defined on the whole real line: on `z >= 0` by its
//! closed form, on `z < 0` by the linear extension with the slope at the
//! origin, so `alpha(-z) = -alpha'(0) * z`. Negative arguments show up when
//! the cascade is evaluated outside the sets it defines (validation grids,
//! membership tests).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind<T> {
    Linear { gamma: T },
    Saturating { scale: T, knee: T },
}

/// A class-K function `alpha` with `alpha(0) = 0`, strictly increasing,
/// and `alpha(z) < z` for `z > 0` (except the exponential-CBF linear case
/// `gamma = 1`, which only a depth-0 cascade accepts).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassKSpec", into = "ClassKSpec")]
#[serde(bound(serialize = "T: Scalar", deserialize = "T: Scalar"))]
pub struct ClassKFn<T> {
    kind: Kind<T>,
}

/// Wire form: `{"kind": "linear", "gamma": 0.5}` or
/// `{"kind": "saturating", "scale": 0.5, "knee": 4.0}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClassKSpec {
    Linear { gamma: f64 },
    Saturating { scale: f64, knee: f64 },
}

impl<T: Scalar> TryFrom<ClassKSpec> for ClassKFn<T> {
    type Error = Error;

    fn try_from(spec: ClassKSpec) -> Result<Self> {
        match spec {
            ClassKSpec::Linear { gamma } => Self::linear(T::lit(gamma)),
            ClassKSpec::Saturating { scale, knee } => Self::saturating(T::lit(scale), T::lit(knee)),
        }
    }
}

impl<T: Scalar> From<ClassKFn<T>> for ClassKSpec {
    fn from(f: ClassKFn<T>) -> Self {
        match f.kind {
            Kind::Linear { gamma } => ClassKSpec::Linear {
                gamma: gamma.as_f64(),
            },
            Kind::Saturating { scale, knee } => ClassKSpec::Saturating {
                scale: scale.as_f64(),
                knee: knee.as_f64(),
            },
        }
    }
}

/// Outcome of [`check_classk`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassKVerdict<T> {
    Pass,
    FailAt(T),
}

impl<T: Scalar> ClassKFn<T> {
    /// `alpha(z) = gamma * z` with `0 < gamma <= 1`.
    pub fn linear(gamma: T) -> Result<Self> {
        if !gamma.is_finite() || gamma <= T::zero() || gamma > T::one() {
            return Err(Error::OutOfRange {
                what: "gamma",
                value: gamma.as_f64(),
                expected: "0 < gamma <= 1",
            });
        }
        Ok(Self {
            kind: Kind::Linear { gamma },
        })
    }

    /// `alpha(z) = scale * z / (1 + z / knee)` with `0 < scale < 1`, `knee > 0`.
    pub fn saturating(scale: T, knee: T) -> Result<Self> {
        if !scale.is_finite() || scale <= T::zero() || scale >= T::one() {
            return Err(Error::OutOfRange {
                what: "scale",
                value: scale.as_f64(),
                expected: "0 < scale < 1",
            });
        }
        if !knee.is_finite() || knee <= T::zero() {
            return Err(Error::OutOfRange {
                what: "knee",
                value: knee.as_f64(),
                expected: "knee > 0",
            });
        }
        Ok(Self {
            kind: Kind::Saturating { scale, knee },
        })
    }

    /// Derivative at the origin; also the slope of the negative extension.
    pub fn slope_at_zero(&self) -> T {
        match self.kind {
            Kind::Linear { gamma } => gamma,
            Kind::Saturating { scale, .. } => scale,
        }
    }

    /// The linear coefficient if this is a linear function.
    pub fn gamma(&self) -> Option<T> {
        match self.kind {
            Kind::Linear { gamma } => Some(gamma),
            Kind::Saturating { .. } => None,
        }
    }

    pub fn is_exponential(&self) -> bool {
        self.gamma() == Some(T::one())
    }

    pub fn eval(&self, z: T) -> Result<T> {
        if !z.is_finite() {
            return Err(Error::NonFinite("class-K argument"));
        }
        Ok(self.apply(z))
    }

    /// Unchecked evaluation for callers that already validated `z`.
    /// Non-finite input propagates.
    pub(crate) fn apply(&self, z: T) -> T {
        match self.kind {
            Kind::Linear { gamma } => gamma * z,
            Kind::Saturating { scale, knee } => {
                if z < T::zero() {
                    scale * z
                } else {
                    scale * z / (T::one() + z / knee)
                }
            }
        }
    }

    /// Short human-readable tag, used to derive candidate ids.
    pub fn label(&self) -> String {
        match self.kind {
            Kind::Linear { gamma } => format!("{gamma}"),
            Kind::Saturating { scale, knee } => format!("sat({scale},{knee})"),
        }
    }
}

/// Grid-checks the class-K contract: `alpha(0) = 0` (to 1e-12), strictly
/// increasing across consecutive grid points, and `alpha(z) < z` at every
/// positive grid point. Reports the first failing grid point.
pub fn check_classk<T: Scalar>(f: &ClassKFn<T>, grid: &[T]) -> Result<ClassKVerdict<T>> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if grid.iter().any(|z| !z.is_finite()) {
        return Err(Error::InvalidGrid("non-finite point"));
    }
    if grid.iter().any(|&z| z < T::zero()) {
        return Err(Error::InvalidGrid("negative point"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidGrid("not sorted"));
    }
    if f.apply(T::zero()).abs() > T::lit(1e-12) {
        return Ok(ClassKVerdict::FailAt(T::zero()));
    }
    let mut prev: Option<(T, T)> = None;
    for &z in grid {
        let a = f.apply(z);
        if z > T::zero() && (a.is_nan() || a >= z) {
            return Ok(ClassKVerdict::FailAt(z));
        }
        if let Some((pz, pa)) = prev {
            if z > pz && (a.is_nan() || a <= pa) {
                return Ok(ClassKVerdict::FailAt(z));
            }
        }
        prev = Some((z, a));
    }
    Ok(ClassKVerdict::Pass)
}

/// Grid used to admit a function into an [`AlphaVector`](crate::AlphaVector):
/// zero plus 37 log-spaced points from 1e-6 to 1e3.
pub fn standard_grid<T: Scalar>() -> Vec<T> {
    std::iter::once(T::zero())
        .chain((-24..=12).map(|k| T::lit(10f64.powf(k as f64 / 4.0))))
        .collect()
}
