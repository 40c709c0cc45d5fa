//! `dX = σ_α(X) dW` with `σ_α(x) = |x|^α/(1+|x|^α)`, `0 < α < 1/2`.
//!
//! The coefficient vanishes at `0` but `σ_α^{-2}` is integrable there, so
//! weak existence holds and uniqueness fails: solutions may spend time at
//! `0`. Paths are built from Brownian motion by a time change; delays at `0`
//! are inserted with exponential clocks driven by local time.

mod damped;
mod delayed;
mod local_time;
mod timechange;

use serde::{Deserialize, Serialize};

pub use damped::{invariant_histogram, simulate_absorbed, simulate_damped, InvariantHistogram};
pub use delayed::{chapman_kolmogorov, simulate_delayed, ChapmanKolmogorov, ClockSpec, DelayedSample};
pub use local_time::{default_epsilon, local_time_estimate, occupation, LocalTime};
pub use timechange::{additive_functional, simulate_no_delay, simulate_time_change, TimeChange, TimeChangedPath};

use crate::error::{param, Error, Result};
use crate::observable::ScalarObservable;
use crate::pathcore::{RandomSource, TimeGrid};
use crate::semigroup::Dynamics;

/// Exponent `α ∈ (0, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaCoefficient(f64);

impl AlphaCoefficient {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha < 0.5 {
            Ok(Self(alpha))
        } else {
            Err(Error::Domain {
                value: alpha,
                domain: "(0, 1/2)",
            })
        }
    }
    pub fn value(&self) -> f64 {
        self.0
    }
}

/// `σ_α(x) = |x|^α/(1+|x|^α)`.
pub fn sigma_alpha(alpha: AlphaCoefficient, x: f64) -> f64 {
    let p = x.abs().powf(alpha.0);
    p / (1.0 + p)
}

/// Diffusion coefficient: the degenerate `σ_α`, or a constant (test hook).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sigma {
    Alpha(AlphaCoefficient),
    Constant(f64),
}

impl Sigma {
    pub fn alpha(alpha: f64) -> Result<Self> {
        Ok(Sigma::Alpha(AlphaCoefficient::new(alpha)?))
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Sigma::Alpha(a) => sigma_alpha(*a, x),
            Sigma::Constant(c) => *c,
        }
    }

    /// Cap on `σ^{-2}` for time step `dt`: `σ_α(ε)^{-2}` at
    /// `ε = dt^{1/(2−2α)}`.
    pub fn cap(&self, dt: f64) -> f64 {
        match self {
            Sigma::Alpha(a) => {
                let eps = dt.powf(1.0 / (2.0 - 2.0 * a.0));
                let s = sigma_alpha(*a, eps);
                1.0 / (s * s)
            }
            Sigma::Constant(c) => 1.0 / (c * c),
        }
    }

    /// `min(σ(x)^{-2}, cap)`.
    pub fn inv_sq_capped(&self, x: f64, cap: f64) -> f64 {
        let s = self.eval(x);
        if s == 0.0 {
            cap
        } else {
            (1.0 / (s * s)).min(cap)
        }
    }

    /// Distance to `0` below which a grid path counts as having hit it:
    /// three times the one-step noise scale `σ(√dt)√dt`.
    pub fn absorption_threshold(&self, dt: f64) -> f64 {
        let h = dt.sqrt();
        3.0 * self.eval(h) * h
    }
}

/// Boundary behaviour at `0`: `Finite(c)` with `c ≥ 0` (`0` means no time
/// spent at `0`), or absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StickyParam {
    Finite(f64),
    Absorbing,
}

impl StickyParam {
    pub fn new(c: f64) -> Result<Self> {
        if c == f64::INFINITY {
            Ok(StickyParam::Absorbing)
        } else if c >= 0.0 {
            Ok(StickyParam::Finite(c))
        } else {
            Err(param("c", "must lie in [0, inf]"))
        }
    }
}

/// A test function with second derivative away from `0` and one-sided first
/// derivatives at `0`.
pub trait TestFunction {
    fn d2(&self, x: f64) -> f64;
    /// `(u'(0−), u'(0+))`, if both exist.
    fn one_sided_slopes(&self) -> Option<(f64, f64)>;
}

impl TestFunction for ScalarObservable {
    fn d2(&self, x: f64) -> f64 {
        ScalarObservable::d2(self, x)
    }
    fn one_sided_slopes(&self) -> Option<(f64, f64)> {
        Some(ScalarObservable::one_sided_slopes(self))
    }
}

/// The generator `L_c u(x)`: `σ(x)² u''(x)` away from `0`; at `0`
/// `(u'(0+) − u'(0−))/c` for `c > 0`, `0` when absorbing, and the limit
/// `lim σ²u'' = 0` for `c = 0`.
///
/// This is the operator in the form the generator family is written; the
/// Itô generator of `dX = σ dW` carries an extra factor `1/2`.
pub fn generator_action(c: StickyParam, u: &dyn TestFunction, x: f64, sigma: Sigma) -> Result<f64> {
    if x != 0.0 {
        let s = sigma.eval(x);
        return Ok(s * s * u.d2(x));
    }
    match c {
        StickyParam::Absorbing => Ok(0.0),
        StickyParam::Finite(c) if c > 0.0 => {
            let (minus, plus) = u
                .one_sided_slopes()
                .ok_or_else(|| Error::Inadmissible("one-sided derivatives at 0 are required".into()))?;
            Ok((plus - minus) / c)
        }
        StickyParam::Finite(_) => {
            let s = sigma.eval(0.0);
            let d = 0.5 * (u.d2(1e-300) + u.d2(-1e-300));
            Ok(s * s * d)
        }
    }
}

/// Which solution of the equation to sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Selection {
    /// Spends no time at `0`.
    NoDelay,
    /// Sticky at `0` through exponential clocks.
    Delayed(ClockSpec),
    /// Stopped at `0`.
    Absorbed,
    /// The damped equation `dX = −X dt + σ dW` with `c ∈ {0, ∞}`.
    Damped(StickyParam),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Girsanov {
    pub sigma: Sigma,
    pub selection: Selection,
}

impl Girsanov {
    pub fn new(sigma: Sigma, selection: Selection) -> Self {
        Self { sigma, selection }
    }
}

impl Dynamics for Girsanov {
    type State = f64;

    fn name(&self) -> String {
        let sel = match self.selection {
            Selection::NoDelay => "no-delay".to_string(),
            Selection::Delayed(c) => format!("delayed(rate={})", c.rate),
            Selection::Absorbed => "absorbed".into(),
            Selection::Damped(StickyParam::Absorbing) => "damped(c=inf)".into(),
            Selection::Damped(StickyParam::Finite(c)) => format!("damped(c={c})"),
        };
        format!("girsanov[{sel}]")
    }

    fn simulate(&self, x: &f64, grid: &TimeGrid, source: RandomSource) -> Result<Vec<f64>> {
        let path = match self.selection {
            Selection::NoDelay => simulate_no_delay(self.sigma, *x, grid, source)?,
            Selection::Delayed(clock) => simulate_delayed(self.sigma, *x, clock, grid, source)?.path,
            Selection::Absorbed => simulate_absorbed(self.sigma, *x, grid, source)?,
            Selection::Damped(c) => simulate_damped(self.sigma, *x, c, grid, source)?,
        };
        Ok(path.values().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_examples() {
        let a = AlphaCoefficient::new(0.25).unwrap();
        assert_eq!(sigma_alpha(a, 0.0), 0.0);
        assert!((sigma_alpha(a, 1.0) - 0.5).abs() < 1e-15);
        assert!((sigma_alpha(a, 16.0) - 2.0 / 3.0).abs() < 1e-15);
        assert!(AlphaCoefficient::new(0.5).is_err());
        assert!(AlphaCoefficient::new(0.0).is_err());
    }

    #[test]
    fn sigma_shape() {
        for alpha in [0.1, 0.25, 0.4] {
            let a = AlphaCoefficient::new(alpha).unwrap();
            let mut prev = -1.0;
            for i in 0..1000 {
                let x = i as f64 * 0.01;
                let s = sigma_alpha(a, x);
                assert_eq!(s, sigma_alpha(a, -x));
                assert!(s > prev && s < 1.0);
                prev = s;
            }
        }
    }

    #[test]
    fn cap_matches_sigma_at_cap_radius() {
        let s = Sigma::alpha(0.25).unwrap();
        let dt: f64 = 1e-4;
        let eps = dt.powf(1.0 / 1.5);
        assert!((s.cap(dt) - s.inv_sq_capped(eps, f64::INFINITY)).abs() < 1e-9 * s.cap(dt));
        assert_eq!(s.inv_sq_capped(0.0, s.cap(dt)), s.cap(dt));
        assert_eq!(s.inv_sq_capped(1.0, s.cap(dt)), 4.0);
    }

    #[test]
    fn generator_examples() {
        let s = Sigma::alpha(0.25).unwrap();
        let g = generator_action(StickyParam::Finite(0.0), &ScalarObservable::Square, 1.0, s).unwrap();
        assert!((g - 0.5).abs() < 1e-15);
        let g = generator_action(StickyParam::new(2.0).unwrap(), &ScalarObservable::AbsTanh, 0.0, s).unwrap();
        assert_eq!(g, 1.0);
        for u in ScalarObservable::ALL {
            assert_eq!(generator_action(StickyParam::Absorbing, &u, 0.0, s).unwrap(), 0.0);
            assert_eq!(generator_action(StickyParam::Finite(0.0), &u, 0.0, s).unwrap(), 0.0);
        }
    }

    #[test]
    fn generator_needs_slopes() {
        struct NoSlopes;
        impl TestFunction for NoSlopes {
            fn d2(&self, _: f64) -> f64 {
                0.0
            }
            fn one_sided_slopes(&self) -> Option<(f64, f64)> {
                None
            }
        }
        let s = Sigma::alpha(0.25).unwrap();
        assert!(generator_action(StickyParam::Finite(1.0), &NoSlopes, 0.0, s).is_err());
        assert!(generator_action(StickyParam::Finite(1.0), &NoSlopes, 0.5, s).is_ok());
    }
}
