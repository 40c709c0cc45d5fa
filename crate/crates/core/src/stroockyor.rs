//! Two Markov families solving one degenerate martingale problem on the line.
//!
//! The Wiener family is Brownian motion. The reflected family runs as
//! Brownian motion until it first hits `0` and as reflected Brownian motion
//! afterwards (immediately so from `x ≥ 0`). Both satisfy the submartingale
//! characterization for test functions with nonnegative boundary slope, both
//! are strong Feller, and their kernels differ.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::pathcore::quadrature::{composite, normal_cdf};
use crate::pathcore::{ensemble, simulate_brownian, BinEdges, MeanEstimate, RandomSource, SamplePath, TimeGrid};
use crate::semigroup::{Dynamics, EnsembleSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Wiener,
    Reflected,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Wiener => "wiener",
            Family::Reflected => "reflected",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wiener" => Ok(Family::Wiener),
            "reflected" => Ok(Family::Reflected),
            _ => Err(param("family", format!("unknown family `{s}`"))),
        }
    }
}

/// A time-`t` kernel from `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: Family,
    pub t: f64,
    pub x: f64,
}

impl KernelSpec {
    pub fn new(family: Family, t: f64, x: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(param("t", "must be positive"));
        }
        if !x.is_finite() {
            return Err(param("x", "must be finite"));
        }
        Ok(Self { family, t, x })
    }

    /// Points where the density is not smooth.
    fn breaks(&self) -> Vec<f64> {
        match self.family {
            Family::Wiener => vec![],
            Family::Reflected => vec![0.0],
        }
    }

    /// Interval carrying all but a negligible part of the mass.
    fn support(&self) -> (f64, f64) {
        let w = 12.0 * self.t.sqrt();
        match self.family {
            Family::Wiener => (self.x - w, self.x + w),
            Family::Reflected if self.x >= 0.0 => (0.0, self.x + w),
            Family::Reflected => (self.x - w, -self.x + w),
        }
    }
}

fn heat(t: f64, z: f64) -> f64 {
    (-0.5 * z * z / t).exp() / (2.0 * std::f64::consts::PI * t).sqrt()
}

/// Transition density `p_t(x, y)`.
///
/// Reflected family: from `x ≥ 0`, `φ_t(y−x) + φ_t(y+x)` on `y ≥ 0`; from
/// `x < 0`, the killed density `φ_t(y−x) − φ_t(y+x)` on `y < 0` plus, for
/// `y > 0`, the mass that hit `0` and was reflected, `2φ_t(y−x)`.
pub fn kernel_density(spec: &KernelSpec, y: f64) -> f64 {
    let (t, x) = (spec.t, spec.x);
    match spec.family {
        Family::Wiener => heat(t, y - x),
        Family::Reflected if x >= 0.0 => {
            if y < 0.0 {
                0.0
            } else {
                heat(t, y - x) + heat(t, y + x)
            }
        }
        Family::Reflected => {
            if y < 0.0 {
                heat(t, y - x) - heat(t, y + x)
            } else {
                2.0 * heat(t, y - x)
            }
        }
    }
}

/// `∫ p_t(x, y) dy` over `[lo, hi]`.
pub fn kernel_mass(spec: &KernelSpec, lo: f64, hi: f64) -> f64 {
    let (a, b) = spec.support();
    let (lo, hi) = (lo.max(a), hi.min(b));
    if hi <= lo {
        return 0.0;
    }
    composite(lo, hi, 0.1 * spec.t.sqrt(), &spec.breaks(), |y| kernel_density(spec, y))
}

/// Bin probabilities of the kernel on the given edges.
pub fn kernel_bin_probabilities(spec: &KernelSpec, edges: &BinEdges) -> Vec<f64> {
    edges.edges().windows(2).map(|w| kernel_mass(spec, w[0], w[1])).collect()
}

/// Sign changes of `f` on `[lo, hi]`, located by bisection.
fn roots(lo: f64, hi: f64, f: &dyn Fn(f64) -> f64) -> Vec<f64> {
    let n = 4000;
    let h = (hi - lo) / n as f64;
    let mut out = Vec::new();
    let mut prev = f(lo);
    for i in 1..=n {
        let y = lo + h * i as f64;
        let cur = f(y);
        if prev == 0.0 {
            out.push(y - h);
        } else if prev * cur < 0.0 {
            let (mut a, mut b) = (y - h, y);
            for _ in 0..80 {
                let m = 0.5 * (a + b);
                if f(m) * f(a) <= 0.0 {
                    b = m;
                } else {
                    a = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        prev = cur;
    }
    out
}

/// Total-variation distance between two time-`t` kernels from closed-form
/// densities, by quadrature split at every crossing of the two densities.
pub fn kernel_tv(a: &KernelSpec, b: &KernelSpec) -> f64 {
    let (la, ha) = a.support();
    let (lb, hb) = b.support();
    let (lo, hi) = (la.min(lb), ha.max(hb));
    let diff = |y: f64| kernel_density(a, y) - kernel_density(b, y);
    let mut breaks = roots(lo, hi, &diff);
    breaks.extend(a.breaks());
    breaks.extend(b.breaks());
    let panel = 0.05 * a.t.min(b.t).sqrt();
    (0.5 * composite(lo, hi, panel, &breaks, |y| diff(y).abs())).clamp(0.0, 1.0)
}

/// `‖P_t(x, ·) − P_t(x', ·)‖_TV` for one family.
pub fn strong_feller_modulus(family: Family, t: f64, x: f64, xprime: f64) -> Result<f64> {
    if x == xprime {
        KernelSpec::new(family, t, x)?;
        return Ok(0.0);
    }
    Ok(kernel_tv(&KernelSpec::new(family, t, x)?, &KernelSpec::new(family, t, xprime)?))
}

/// `2Φ(|x − x'|/(2√t)) − 1`.
pub fn wiener_modulus_closed_form(t: f64, x: f64, xprime: f64) -> f64 {
    2.0 * normal_cdf((x - xprime).abs() / (2.0 * t.sqrt())) - 1.0
}

pub fn simulate_family(family: Family, x: f64, grid: &TimeGrid, source: RandomSource) -> Result<SamplePath> {
    if !x.is_finite() {
        return Err(param("x", "must be finite"));
    }
    let w = simulate_brownian(grid, 1, source)?;
    let w = w.values();
    let values: Vec<f64> = match family {
        Family::Wiener => w.iter().map(|v| x + v).collect(),
        Family::Reflected if x >= 0.0 => w.iter().map(|v| (x + v).abs()).collect(),
        Family::Reflected => match w.iter().position(|v| x + v >= 0.0) {
            None => w.iter().map(|v| x + v).collect(),
            Some(k) => {
                // overshoot at the crossing node is discarded
                let mut out: Vec<f64> = w[..k].iter().map(|v| x + v).collect();
                out.extend(w[k..].iter().map(|v| (v - w[k]).abs()));
                out
            }
        },
    };
    SamplePath::scalar(*grid, values)
}

impl Dynamics for Family {
    type State = f64;

    fn name(&self) -> String {
        format!("stroock-yor[{}]", Family::name(self))
    }

    fn simulate(&self, x: &f64, grid: &TimeGrid, source: RandomSource) -> Result<Vec<f64>> {
        Ok(simulate_family(*self, *x, grid, source)?.values().to_vec())
    }

    fn exact_expectation(&self, x: &f64, phi: &(dyn Fn(&f64) -> f64 + Sync), t: f64) -> Option<Result<f64>> {
        let spec = match KernelSpec::new(*self, t, *x) {
            Ok(s) => s,
            Err(e) => return Some(Err(e)),
        };
        let (lo, hi) = spec.support();
        Some(Ok(composite(lo, hi, 0.1 * t.sqrt(), &spec.breaks(), |y| kernel_density(&spec, y) * phi(&y))))
    }
}

/// Registered time-dependent test functions `φ(t, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryFunction {
    /// `x`
    X,
    /// `x + t`
    XPlusT,
    /// `arctan x`
    Arctan,
    /// `x + x²/2`
    XPlusHalfSquare,
    /// `e^{−t} sin x`
    DecaySin,
    /// `−x` (boundary slope −1)
    NegX,
    /// `t − x` (boundary slope 0, but `∂_xφ(t, 0) < 0`)
    TMinusX,
}

impl BoundaryFunction {
    pub const ALL: [BoundaryFunction; 7] = [
        Self::X,
        Self::XPlusT,
        Self::Arctan,
        Self::XPlusHalfSquare,
        Self::DecaySin,
        Self::NegX,
        Self::TMinusX,
    ];

    /// The five functions used by the submartingale suite.
    pub const SUITE: [BoundaryFunction; 5] = [Self::X, Self::XPlusT, Self::Arctan, Self::XPlusHalfSquare, Self::DecaySin];

    pub fn name(&self) -> &'static str {
        match self {
            Self::X => "x",
            Self::XPlusT => "x+t",
            Self::Arctan => "arctan",
            Self::XPlusHalfSquare => "x+x2/2",
            Self::DecaySin => "exp(-t)sin",
            Self::NegX => "-x",
            Self::TMinusX => "t-x",
        }
    }

    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            Self::X => x,
            Self::XPlusT => x + t,
            Self::Arctan => x.atan(),
            Self::XPlusHalfSquare => x + 0.5 * x * x,
            Self::DecaySin => (-t).exp() * x.sin(),
            Self::NegX => -x,
            Self::TMinusX => t - x,
        }
    }

    pub fn d_t(&self, t: f64, x: f64) -> f64 {
        match self {
            Self::XPlusT | Self::TMinusX => 1.0,
            Self::DecaySin => -(-t).exp() * x.sin(),
            _ => 0.0,
        }
    }

    pub fn d_x(&self, t: f64, x: f64) -> f64 {
        match self {
            Self::X | Self::XPlusT => 1.0,
            Self::Arctan => 1.0 / (1.0 + x * x),
            Self::XPlusHalfSquare => 1.0 + x,
            Self::DecaySin => (-t).exp() * x.cos(),
            Self::NegX | Self::TMinusX => -1.0,
        }
    }

    pub fn d_xx(&self, t: f64, x: f64) -> f64 {
        match self {
            Self::Arctan => -2.0 * x / (1.0 + x * x).powi(2),
            Self::XPlusHalfSquare => 1.0,
            Self::DecaySin => -(-t).exp() * x.sin(),
            _ => 0.0,
        }
    }

    /// `b(t) = ∂_tφ(t, 0) + ∂_xφ(t, 0)`.
    pub fn boundary_slope(&self, t: f64) -> f64 {
        self.d_t(t, 0.0) + self.d_x(t, 0.0)
    }
}

impl FromStr for BoundaryFunction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|f| f.name() == s)
            .ok_or_else(|| param("phi", format!("unknown test function `{s}`")))
    }
}

/// A test function checked to have `b(t) ≥ 0` on a grid of times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryTestFunction(BoundaryFunction);

impl BoundaryTestFunction {
    pub fn new(f: BoundaryFunction, horizon: f64) -> Result<Self> {
        for k in 0..=200 {
            let t = horizon * k as f64 / 200.0;
            let b = f.boundary_slope(t);
            if b < 0.0 {
                return Err(Error::Inadmissible(format!(
                    "{}: boundary slope {b} < 0 at t = {t}",
                    f.name()
                )));
            }
        }
        Ok(Self(f))
    }

    pub fn function(&self) -> BoundaryFunction {
        self.0
    }
}

/// One-sided result for one `(s, t)` pair and one nonnegative weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneSidedPair {
    pub s: f64,
    pub t: f64,
    pub weight: String,
    pub mean: f64,
    pub std_error: f64,
    /// `−mean/SE`; large values reject the submartingale hypothesis.
    pub violation_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmartingaleReport {
    pub family: Family,
    pub phi: String,
    pub x: f64,
    pub n_paths: usize,
    pub pairs: Vec<OneSidedPair>,
}

impl SubmartingaleReport {
    pub fn max_violation(&self) -> f64 {
        self.pairs.iter().map(|p| p.violation_z).fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn passes(&self, z_crit: f64) -> bool {
        self.max_violation() <= z_crit
    }
}

/// `Z_t = φ(t, ξ_t) − ∫_0^t 1{ξ_r ≠ 0}(∂_tφ + ½∂²_xφ)(r, ξ_r) dr` at every
/// node of the path.
pub fn compensated(phi: BoundaryFunction, path: &SamplePath) -> Vec<f64> {
    let g = path.grid();
    let gen: Vec<f64> = (0..path.len())
        .map(|k| {
            let (t, x) = (g.time(k), path.at(k));
            if x == 0.0 {
                0.0
            } else {
                phi.d_t(t, x) + 0.5 * phi.d_xx(t, x)
            }
        })
        .collect();
    let comp = crate::pathcore::quadrature::cumulative_trapezoid(&gen, g.dt());
    (0..path.len()).map(|k| phi.value(g.time(k), path.at(k)) - comp[k]).collect()
}

/// Tests `E[h (Z_t − Z_s)] ≥ 0` for the weights `h ∈ {1, 1{ξ_s > 0},
/// 1{ξ_s ≤ 0}}` of the state at `s`.
pub fn submartingale_check(
    family: Family,
    x: f64,
    phi: BoundaryTestFunction,
    pairs: &[(f64, f64)],
    spec: &EnsembleSpec,
) -> Result<SubmartingaleReport> {
    let horizon = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    if pairs.iter().any(|&(s, t)| !(s >= 0.0 && t > s)) {
        return Err(param("pairs", "need 0 <= s < t"));
    }
    let grid = TimeGrid::horizon(horizon, spec.dt)?;
    let f = phi.function();
    let runs = ensemble(spec.n_paths, spec.source, |src| {
        simulate_family(family, x, &grid, src).map(|p| {
            let z = compensated(f, &p);
            (z, p.values().to_vec())
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    type Weight = fn(f64) -> f64;
    let weights: [(&str, Weight); 3] = [
        ("1", |_| 1.0),
        ("1{x>0}", |x| if x > 0.0 { 1.0 } else { 0.0 }),
        ("1{x<=0}", |x| if x <= 0.0 { 1.0 } else { 0.0 }),
    ];
    let mut out = Vec::new();
    for &(s, t) in pairs {
        let (ks, kt) = (grid.index_of(s), grid.index_of(t));
        for (name, h) in &weights {
            let v: Vec<f64> = runs.iter().map(|(z, xi)| h(xi[ks]) * (z[kt] - z[ks])).collect();
            let est = MeanEstimate::from_samples(&v);
            out.push(OneSidedPair {
                s,
                t,
                weight: name.to_string(),
                mean: est.mean,
                std_error: est.std_error,
                violation_z: -est.z(0.0),
            });
        }
    }
    Ok(SubmartingaleReport {
        family,
        phi: f.name().to_string(),
        x,
        n_paths: runs.len(),
        pairs: out,
    })
}
