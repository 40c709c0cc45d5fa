//! Named scalar observables.
//!
//! Experiments refer to test functions by name so that reports are
//! reproducible. Each entry knows its first two derivatives (for generator
//! tables) and its supremum over an interval.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScalarObservable {
    /// `1`
    One,
    /// `x`
    Identity,
    /// `x²`
    Square,
    /// `cos x`
    Cos,
    /// `sin x`
    Sin,
    /// `tanh x`
    Tanh,
    /// `tanh |x|`, kinked at the origin with one-sided slopes ±1.
    AbsTanh,
}

impl ScalarObservable {
    pub const ALL: [ScalarObservable; 7] = [
        Self::One,
        Self::Identity,
        Self::Square,
        Self::Cos,
        Self::Sin,
        Self::Tanh,
        Self::AbsTanh,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::One => "one",
            Self::Identity => "x",
            Self::Square => "x2",
            Self::Cos => "cos",
            Self::Sin => "sin",
            Self::Tanh => "tanh",
            Self::AbsTanh => "abs_tanh",
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Identity => x,
            Self::Square => x * x,
            Self::Cos => x.cos(),
            Self::Sin => x.sin(),
            Self::Tanh => x.tanh(),
            Self::AbsTanh => x.abs().tanh(),
        }
    }

    /// First derivative; for the kinked entry this is the derivative away from
    /// the origin (use [`Self::one_sided_slopes`] at 0).
    pub fn d1(&self, x: f64) -> f64 {
        match self {
            Self::One => 0.0,
            Self::Identity => 1.0,
            Self::Square => 2.0 * x,
            Self::Cos => -x.sin(),
            Self::Sin => x.cos(),
            Self::Tanh => 1.0 - x.tanh().powi(2),
            Self::AbsTanh => x.signum() * (1.0 - x.abs().tanh().powi(2)),
        }
    }

    pub fn d2(&self, x: f64) -> f64 {
        match self {
            Self::One | Self::Identity => 0.0,
            Self::Square => 2.0,
            Self::Cos => -x.cos(),
            Self::Sin => -x.sin(),
            Self::Tanh => {
                let t = x.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Self::AbsTanh => {
                let t = x.abs().tanh();
                -2.0 * t * (1.0 - t * t)
            }
        }
    }

    /// `(u'(0−), u'(0+))`.
    pub fn one_sided_slopes(&self) -> (f64, f64) {
        match self {
            Self::AbsTanh => (-1.0, 1.0),
            other => {
                let d = other.d1(0.0);
                (d, d)
            }
        }
    }

    /// Supremum of `|u|` over `[lo, hi]` (infinite endpoints allowed), or
    /// `None` when unbounded there.
    pub fn sup_norm(&self, lo: f64, hi: f64) -> Option<f64> {
        let m = lo.abs().max(hi.abs());
        match self {
            Self::One | Self::Cos | Self::Sin | Self::Tanh | Self::AbsTanh => Some(1.0),
            Self::Identity if m.is_finite() => Some(m),
            Self::Square if m.is_finite() => Some(m * m),
            _ => None,
        }
    }
}

impl fmt::Display for ScalarObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScalarObservable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|o| o.name() == s)
            .ok_or_else(|| crate::error::param("phi", format!("unknown observable `{s}`")))
    }
}
