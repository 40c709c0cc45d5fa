//! Simulation and verification toolkit for Markov selections of ill-posed
//! stochastic evolution equations.
//!
//! * [`pathcore`]: grids, paths, random streams, quadrature, empirical laws
//!   and martingale hypothesis tests.
//! * [`peano`]: the deterministic `Ẋ = −X + √X` example and its selections.
//! * [`girsanov`]: `dX = σ_α(X) dW` through time changes, local time, delays,
//!   absorption and the damped variant.
//! * [`stroockyor`]: Wiener and reflected families solving one degenerate
//!   martingale problem.
//! * [`nse`]: spectral Galerkin stochastic Navier-Stokes with cut-off.
//! * [`semigroup`]: Monte-Carlo semigroup, resolvent and generator estimators.

pub mod error;
pub mod girsanov;
pub mod nse;
pub mod observable;
pub mod pathcore;
pub mod peano;
pub mod semigroup;
pub mod stroockyor;

pub use error::{Error, Result};
pub use pathcore::{RandomSource, SamplePath, TimeGrid};
