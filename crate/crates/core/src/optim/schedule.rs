use std::fmt;

use crate::error::{Error, Result};

/// Step-size sequence indexed by the global inner-iteration counter `k`.
///
/// With `e = ⌊k/mₛ⌋` the zero-based epoch:
///
/// ```text
/// fixed   η_k = η₀
/// decay   η_k = η₀ / (1 + η₀·λ·e)
/// hybrid  η_k = η₀ / (1 + η₀·λ·min(e, s_TH − 2))
/// ```
///
/// so the hybrid sequence decays during epochs `1 .. s_TH − 1` (one-based) and
/// keeps the last decayed value from epoch `s_TH` on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Schedule {
    Fixed { eta0: f64 },
    Decay { eta0: f64, lambda: f64 },
    Hybrid { eta0: f64, lambda: f64, s_threshold: usize },
}

impl Schedule {
    pub fn fixed(eta0: f64) -> Result<Self> {
        Self::Fixed { eta0 }.validated()
    }

    pub fn decay(eta0: f64, lambda: f64) -> Result<Self> {
        Self::Decay { eta0, lambda }.validated()
    }

    pub fn hybrid(eta0: f64, lambda: f64, s_threshold: usize) -> Result<Self> {
        Self::Hybrid {
            eta0,
            lambda,
            s_threshold,
        }
        .validated()
    }

    /// `η₀` must be finite and non-negative (zero freezes the iterate),
    /// `λ` finite and non-negative.
    pub fn validated(self) -> Result<Self> {
        let (eta0, lambda) = match self {
            Self::Fixed { eta0 } => (eta0, 0.0),
            Self::Decay { eta0, lambda } | Self::Hybrid { eta0, lambda, .. } => (eta0, lambda),
        };
        if !(eta0.is_finite() && eta0 >= 0.0) {
            return Err(Error::Config(format!("step size eta0 must be finite and >= 0, got {eta0}")));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("decay lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(self)
    }

    pub fn eta0(&self) -> f64 {
        match *self {
            Self::Fixed { eta0 } | Self::Decay { eta0, .. } | Self::Hybrid { eta0, .. } => eta0,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Fixed { .. } => "fixed",
            Self::Decay { .. } => "decay",
            Self::Hybrid { .. } => "hybrid",
        }
    }

    /// Step size for global inner iteration `k` (zero-based) with `m_s`
    /// inner iterations per epoch.
    pub fn eta(&self, k: usize, m_s: usize) -> f64 {
        let epoch = k / m_s.max(1);
        match *self {
            Self::Fixed { eta0 } => eta0,
            Self::Decay { eta0, lambda } => eta0 / (1.0 + eta0 * lambda * epoch as f64),
            Self::Hybrid {
                eta0,
                lambda,
                s_threshold,
            } => {
                let frozen = epoch.min(s_threshold.saturating_sub(2));
                eta0 / (1.0 + eta0 * lambda * frozen as f64)
            }
        }
    }
}

/// Compact label used in file names, e.g. `decay-eta0_0.002-lambda_0.01`.
impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Self::Fixed { eta0 } => write!(f, "fixed-eta0_{eta0}"),
            Self::Decay { eta0, lambda } => write!(f, "decay-eta0_{eta0}-lambda_{lambda}"),
            Self::Hybrid {
                eta0,
                lambda,
                s_threshold,
            } => write!(f, "hybrid-eta0_{eta0}-lambda_{lambda}-sth_{s_threshold}"),
        }
    }
}
