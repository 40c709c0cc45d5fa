//! The experiment registry.

use std::fmt;

use anyhow::Result;
use mlab_core::observable::ScalarObservable;

use crate::params::{Params, Param};
use crate::report::Outcome;

mod girsanov;
mod nse;
mod peano;
mod semigroup;
mod stroockyor;

/// A cross-field check; the error names the offending key.
pub type Check = fn(&Params) -> std::result::Result<(), (&'static str, String)>;
pub type Runner = fn(&Params, u64) -> Result<Outcome>;

pub struct Experiment {
    pub name: &'static str,
    pub description: &'static str,
    pub params: &'static [Param],
    pub check: Check,
    pub run: Runner,
}

impl fmt::Debug for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Experiment").field("name", &self.name).finish_non_exhaustive()
    }
}

impl Experiment {
    pub fn required(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.default.is_none())
    }
}

/// Sorted by name.
pub static REGISTRY: [Experiment; 11] = [
    semigroup::GENERATOR_CHECK,
    girsanov::DELAY_MARKOV,
    girsanov::INVARIANT,
    girsanov::QV,
    semigroup::MP_RESIDUAL,
    nse::MARTINGALE,
    peano::EXTREMAL,
    peano::MARKOV,
    semigroup::RESOLVENT_IDENTITY,
    stroockyor::STRONG_FELLER,
    stroockyor::SUBMARTINGALE,
];

pub fn lookup(name: &str) -> Option<&'static Experiment> {
    REGISTRY.iter().find(|e| e.name == name)
}

pub const OBSERVABLES: &[&str] = &["one", "x", "x2", "cos", "sin", "tanh", "abs_tanh"];

fn observable(name: &str) -> Result<ScalarObservable> {
    Ok(name.parse()?)
}

fn no_check(_: &Params) -> std::result::Result<(), (&'static str, String)> {
    Ok(())
}

/// Every pair must end by `horizon`.
fn pairs_within(
    p: &Params,
    pairs: &'static str,
    horizon: &'static str,
) -> std::result::Result<(), (&'static str, String)> {
    let h = p.num(horizon);
    match p.pairs(pairs).iter().find(|(_, t)| *t > h * (1.0 + 1e-12)) {
        Some((s, t)) => Err((pairs, format!("pair {s}:{t} ends after {horizon} = {h}"))),
        None => Ok(()),
    }
}
