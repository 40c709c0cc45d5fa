//! The scalar ODE `Ẋ = −X + √X` on `[0, 1]`.
//!
//! Uniqueness fails only at `0`: a solution may sit there for any time `a`
//! and then leave along the star solution `X*(t − a)`. A selection is fixed
//! by a law `ν` on `[0, ∞]` for the departure time; it is Markov exactly
//! when `ν` is exponential (including the two degenerate rates).
//!
//! Everything here is closed-form or deterministic quadrature over `ν`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::observable::ScalarObservable;
use crate::pathcore::quadrature::composite;
use crate::pathcore::{Rng, RandomSource, SamplePath, TimeGrid};
use crate::semigroup::Dynamics;

fn check_state(x: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&x) {
        Ok(x)
    } else {
        Err(Error::Domain {
            value: x,
            domain: "[0, 1]",
        })
    }
}

/// `X_x(t) = (1 + (√x − 1) e^{−t/2})²`; the solution from `0` that never
/// leaves is returned for `x = 0`.
pub fn flow_exact(x: f64, t: f64) -> Result<f64> {
    check_state(x)?;
    if !(t >= 0.0) {
        return Err(param("t", "must be >= 0"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    Ok(flow_unchecked(x, t))
}

fn flow_unchecked(x: f64, t: f64) -> f64 {
    let y = 1.0 + (x.sqrt() - 1.0) * (-0.5 * t).exp();
    y * y
}

/// `X*(t) = (1 − e^{−t/2})²`, the solution leaving `0` at time `0`.
pub fn star_solution(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let y = -(-0.5 * t).exp_m1();
    y * y
}

/// Departure time from `0`; `Never` is the atom at infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Delay {
    At(f64),
    Never,
}

impl Delay {
    fn check(self) -> Result<Self> {
        match self {
            Delay::At(a) if a >= 0.0 && a.is_finite() => Ok(self),
            Delay::At(a) => Err(Error::Domain {
                value: a,
                domain: "[0, inf)",
            }),
            Delay::Never => Ok(self),
        }
    }
}

/// Law of the departure time from `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DelayLaw {
    /// Rate in `(0, ∞)`; the degenerate rates are stored as Dirac laws.
    Exponential(f64),
    Dirac(Delay),
    Uniform { lo: f64, hi: f64 },
    Empirical(Vec<Delay>),
}

impl DelayLaw {
    /// Exponential law with `rate ∈ [0, ∞]`: rate `∞` is an immediate
    /// departure, rate `0` never departs.
    pub fn exponential(rate: f64) -> Result<Self> {
        if rate.is_nan() || rate < 0.0 {
            return Err(param("rate", "must lie in [0, inf]"));
        }
        Ok(if rate == f64::INFINITY {
            DelayLaw::Dirac(Delay::At(0.0))
        } else if rate == 0.0 {
            DelayLaw::Dirac(Delay::Never)
        } else {
            DelayLaw::Exponential(rate)
        })
    }

    pub fn dirac(at: Delay) -> Result<Self> {
        Ok(DelayLaw::Dirac(at.check()?))
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(param("uniform", "need 0 <= lo <= hi < inf"));
        }
        Ok(if lo == hi {
            DelayLaw::Dirac(Delay::At(lo))
        } else {
            DelayLaw::Uniform { lo, hi }
        })
    }

    pub fn empirical(samples: Vec<Delay>) -> Result<Self> {
        if samples.is_empty() {
            return Err(param("empirical", "need at least one sample"));
        }
        let samples = samples.into_iter().map(Delay::check).collect::<Result<Vec<_>>>()?;
        Ok(DelayLaw::Empirical(samples))
    }

    /// Whether the law is exponential, degenerate rates included.
    pub fn is_exponential(&self) -> bool {
        matches!(
            self,
            DelayLaw::Exponential(_) | DelayLaw::Dirac(Delay::At(0.0)) | DelayLaw::Dirac(Delay::Never)
        )
    }

    pub fn sample(&self, rng: &mut Rng) -> Delay {
        match self {
            DelayLaw::Exponential(rate) => Delay::At(crate::pathcore::exponential(rng, *rate)),
            DelayLaw::Dirac(d) => *d,
            DelayLaw::Uniform { lo, hi } => Delay::At(rng.random_range(*lo..*hi)),
            DelayLaw::Empirical(s) => s[rng.random_range(0..s.len())],
        }
    }

    /// `E_ν[g(a)]` by deterministic quadrature. `breaks` are the points where
    /// `g` is not smooth; `g` must be constant beyond the largest of them on
    /// unbounded supports.
    pub fn expectation<G: FnMut(Delay) -> f64>(&self, breaks: &[f64], mut g: G) -> f64 {
        match self {
            DelayLaw::Dirac(d) => g(*d),
            DelayLaw::Empirical(s) => s.iter().map(|d| g(*d)).sum::<f64>() / s.len() as f64,
            DelayLaw::Uniform { lo, hi } => {
                composite(*lo, *hi, 0.25, breaks, |a| g(Delay::At(a))) / (hi - lo)
            }
            DelayLaw::Exponential(rate) => {
                let rate = *rate;
                let last = breaks.iter().copied().fold(0.0f64, f64::max);
                let upper = last + 40.0 / rate;
                let panel = 0.25 * (1.0 / rate).min(1.0);
                let body = composite(0.0, upper, panel, breaks, |a| rate * (-rate * a).exp() * g(Delay::At(a)));
                body + (-rate * upper).exp() * g(Delay::At(upper))
            }
        }
    }

    /// Short label for reports.
    pub fn label(&self) -> String {
        match self {
            DelayLaw::Exponential(r) => format!("exponential({r})"),
            DelayLaw::Dirac(Delay::At(a)) => format!("dirac({a})"),
            DelayLaw::Dirac(Delay::Never) => "dirac(inf)".into(),
            DelayLaw::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
            DelayLaw::Empirical(s) => format!("empirical(n={})", s.len()),
        }
    }
}

/// State after time `t` of the path that leaves `0` at `a`.
fn delayed_star(a: Delay, t: f64) -> f64 {
    match a {
        Delay::At(a) => star_solution(t - a),
        Delay::Never => 0.0,
    }
}

/// The selection `(P^ν_x)`: deterministic from `x > 0`, delayed departure
/// with law `ν` from `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionFamily {
    pub delay: DelayLaw,
}

impl SelectionFamily {
    pub fn new(delay: DelayLaw) -> Self {
        Self { delay }
    }

    pub fn sample(&self, x: f64, grid: &TimeGrid, source: RandomSource) -> Result<SamplePath> {
        check_state(x)?;
        let values: Vec<f64> = if x > 0.0 {
            grid.times().map(|t| flow_unchecked(x, t)).collect()
        } else {
            let a = self.delay.sample(&mut source.rng());
            grid.times().map(|t| delayed_star(a, t)).collect()
        };
        SamplePath::scalar(*grid, values)
    }

    /// `E^{P^ν_x}[f(ξ_t)]`.
    pub fn expectation(&self, x: f64, f: &dyn Fn(f64) -> f64, t: f64) -> Result<f64> {
        check_state(x)?;
        if x > 0.0 {
            return Ok(f(flow_unchecked(x, t)));
        }
        Ok(self.delay.expectation(&[t], |a| f(delayed_star(a, t))))
    }
}

impl Dynamics for SelectionFamily {
    type State = f64;

    fn name(&self) -> String {
        format!("peano[{}]", self.delay.label())
    }

    fn simulate(&self, x: &f64, grid: &TimeGrid, source: RandomSource) -> Result<Vec<f64>> {
        Ok(self.sample(*x, grid, source)?.values().to_vec())
    }

    fn exact_expectation(&self, x: &f64, phi: &(dyn Fn(&f64) -> f64 + Sync), t: f64) -> Option<Result<f64>> {
        Some(self.expectation(*x, &|y| phi(&y), t))
    }
}

/// `E[f(ξ_{s+t})] − E[E^{ξ_s}[f(ξ_t)]]` under `P^ν_0`, where the inner
/// expectation restarts the same selection from the state at time `s`.
pub fn markov_defect(family: &SelectionFamily, s: f64, t: f64, f: ScalarObservable) -> Result<f64> {
    if !(s > 0.0 && t > 0.0) {
        return Err(param("s, t", "must be > 0"));
    }
    let nu = &family.delay;
    let lhs = nu.expectation(&[s + t], |a| f.eval(delayed_star(a, s + t)));
    let restart_at_zero = nu.expectation(&[t], |a| f.eval(delayed_star(a, t)));
    let rhs = nu.expectation(&[s], |a| match a {
        Delay::At(a) if a < s => f.eval(flow_unchecked(star_solution(s - a), t)),
        _ => restart_at_zero,
    });
    let d = lhs - rhs;
    if !d.is_finite() {
        return Err(Error::Quadrature(format!("non-finite defect at s={s}, t={t}")));
    }
    Ok(d)
}

const J_TAIL: f64 = 1e-10;

/// `∫_0^∞ e^{−λs} f(X*(s)) ds`, truncated where the tail bound
/// `‖f‖ e^{−λT}/λ` drops below `1e-10`.
pub fn star_laplace(lambda: f64, f: ScalarObservable) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(param("lambda", "must be a positive finite number"));
    }
    let sup = f.sup_norm(0.0, 1.0).unwrap_or(1.0).max(1e-300);
    let horizon = ((sup / (lambda * J_TAIL)).ln() / lambda).max(0.0);
    let panel = 0.25f64.min(horizon / 8.0).max(1e-6);
    Ok(composite(0.0, horizon, panel, &[], |s| (-lambda * s).exp() * f.eval(star_solution(s))))
}

/// `J_{λ,f}(P^ν_0) = E^{P^ν_0}[∫_0^∞ e^{−λt} f(ξ_t) dt]`.
pub fn j_functional(lambda: f64, f: ScalarObservable, delay: &DelayLaw) -> Result<f64> {
    let k = star_laplace(lambda, f)?;
    let f0 = f.eval(0.0);
    Ok(delay.expectation(&[], |a| match a {
        Delay::At(a) => {
            let stay = (-lambda * a).exp();
            f0 * -(-lambda * a).exp_m1() / lambda + stay * k
        }
        Delay::Never => f0 / lambda,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalityGap {
    /// `J(P^a_0) − J(P^b_0)` by quadrature.
    pub gap: f64,
    /// `λ(b − a)/((λ + a)(λ + b)) · [J(rate 0) − J(rate ∞)]`.
    pub formula_gap: f64,
    pub abs_err: f64,
}

/// Difference of `J_{λ,f}` between exponential rates `a` and `b` (both in
/// `[0, ∞]`) against its two-extreme-points form.
pub fn extremality_gap(lambda: f64, f: ScalarObservable, a: f64, b: f64) -> Result<ExtremalityGap> {
    let ja = j_functional(lambda, f, &DelayLaw::exponential(a)?)?;
    let jb = j_functional(lambda, f, &DelayLaw::exponential(b)?)?;
    let never = j_functional(lambda, f, &DelayLaw::Dirac(Delay::Never))?;
    let now = j_functional(lambda, f, &DelayLaw::Dirac(Delay::At(0.0)))?;
    let weight = rate_weight(lambda, a) - rate_weight(lambda, b);
    let formula_gap = weight * (now - never);
    let gap = ja - jb;
    Ok(ExtremalityGap {
        gap,
        formula_gap,
        abs_err: (gap - formula_gap).abs(),
    })
}

/// `a/(λ + a)`, the weight of the immediate-departure extreme in `J(P^a_0)`;
/// the difference of two such weights is `λ(a − b)/((λ + a)(λ + b))`.
fn rate_weight(lambda: f64, a: f64) -> f64 {
    if a == f64::INFINITY {
        1.0
    } else {
        a / (lambda + a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rk4(x0: f64, t: f64, h: f64) -> f64 {
        let f = |x: f64| -x + x.max(0.0).sqrt();
        let n = (t / h).round() as usize;
        let mut x = x0;
        for _ in 0..n {
            let k1 = f(x);
            let k2 = f(x + 0.5 * h * k1);
            let k3 = f(x + 0.5 * h * k2);
            let k4 = f(x + h * k3);
            x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        x
    }

    #[test]
    fn flow_examples() {
        assert_eq!(flow_exact(1.0, 3.7).unwrap(), 1.0);
        assert_eq!(flow_exact(0.25, 0.0).unwrap(), 0.25);
        assert_eq!(flow_exact(0.0, 5.0).unwrap(), 0.0);
        let v = flow_exact(0.25, 2.0).unwrap();
        assert!((v - rk4(0.25, 2.0, 1e-5)).abs() < 1e-10);
        assert!((v - 0.665_954).abs() < 1e-6);
        assert!(flow_exact(1.5, 1.0).is_err());
        assert!(flow_exact(-0.1, 1.0).is_err());
    }

    #[test]
    fn star_examples() {
        assert_eq!(star_solution(0.0), 0.0);
        assert!((star_solution(60.0) - 1.0).abs() < 1e-12);
        // the star path from a tiny positive start follows the flow
        assert!((star_solution(2.0) - rk4(1e-12, 2.0, 1e-5)).abs() < 1e-5);
        assert!((star_solution(2.0) - 0.39958).abs() < 5e-6);
    }

    #[test]
    fn ode_residual() {
        let h = 1e-4;
        for i in 1..=9 {
            let x = i as f64 / 10.0;
            for &t in &[0.0, 0.5, 2.0] {
                let t = t + h;
                let d = (flow_exact(x, t + h).unwrap() - flow_exact(x, t - h).unwrap()) / (2.0 * h);
                let v = flow_exact(x, t).unwrap();
                assert!((d - (-v + v.sqrt())).abs() < 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn semiflow(x in 1e-6f64..=1.0, s in 0.0f64..10.0, t in 0.0f64..10.0) {
            let a = flow_exact(flow_exact(x, s).unwrap(), t).unwrap();
            let b = flow_exact(x, s + t).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn flow_stays_in_unit_interval(x in 0.0f64..=1.0, t in 0.0f64..50.0) {
            let v = flow_exact(x, t).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!(v >= x - 1e-15);
        }
    }

    #[test]
    fn delay_law_normalization() {
        assert_eq!(DelayLaw::exponential(f64::INFINITY).unwrap(), DelayLaw::Dirac(Delay::At(0.0)));
        assert_eq!(DelayLaw::exponential(0.0).unwrap(), DelayLaw::Dirac(Delay::Never));
        assert!(DelayLaw::exponential(-1.0).is_err());
        assert!(DelayLaw::uniform(2.0, 1.0).is_err());
        assert!(DelayLaw::dirac(Delay::At(f64::INFINITY)).is_err());
        for law in [
            DelayLaw::exponential(0.7).unwrap(),
            DelayLaw::uniform(0.0, 2.0).unwrap(),
            DelayLaw::empirical(vec![Delay::At(1.0), Delay::Never]).unwrap(),
        ] {
            assert!((law.expectation(&[1.0], |_| 1.0) - 1.0).abs() < 1e-13, "{law:?}");
        }
    }

    #[test]
    fn exponential_moments() {
        let law = DelayLaw::exponential(2.0).unwrap();
        let m = law.expectation(&[], |a| match a {
            Delay::At(a) => a,
            Delay::Never => unreachable!(),
        });
        assert!((m - 0.5).abs() < 1e-13);
    }

    #[test]
    fn sample_paths() {
        let g = TimeGrid::horizon(5.0, 0.1).unwrap();
        let fam = SelectionFamily::new(DelayLaw::exponential(1.0).unwrap());
        let a = fam.sample(0.5, &g, RandomSource::new(1, 0)).unwrap();
        let b = fam.sample(0.5, &g, RandomSource::new(2, 0)).unwrap();
        assert_eq!(a, b);
        let now = SelectionFamily::new(DelayLaw::exponential(f64::INFINITY).unwrap());
        let p = now.sample(0.0, &g, RandomSource::new(1, 0)).unwrap();
        for (k, t) in g.times().enumerate() {
            assert_eq!(p.at(k), star_solution(t));
        }
        let never = SelectionFamily::new(DelayLaw::exponential(0.0).unwrap());
        assert!(never.sample(0.0, &g, RandomSource::new(1, 0)).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ensemble_mean_matches_quadrature() {
        let t = 1.5;
        let g = TimeGrid::horizon(t, 0.5).unwrap();
        let fam = SelectionFamily::new(DelayLaw::exponential(1.0).unwrap());
        let finals: Vec<f64> = crate::pathcore::ensemble(10_000, RandomSource::new(11, 0), |src| {
            *fam.sample(0.0, &g, src).unwrap().last().first().unwrap()
        });
        let est = crate::pathcore::MeanEstimate::from_samples(&finals);
        // independent oracle: fine trapezoid of ∫_0^t X*(t − a) e^{−a} da
        let n = 200_000;
        let h = t / n as f64;
        let mut oracle = 0.0;
        for i in 0..=n {
            let a = i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            oracle += w * star_solution(t - a) * (-a).exp();
        }
        oracle *= h;
        assert!((est.mean - oracle).abs() < 3.0 * est.std_error, "{est:?} vs {oracle}");
        let q = fam.expectation(0.0, &|x| x, t).unwrap();
        assert!((q - oracle).abs() < 1e-9);
    }

    #[test]
    fn markov_defect_exponential_vanishes() {
        let fs = [ScalarObservable::Identity, ScalarObservable::Square, ScalarObservable::Cos];
        for &rate in &[0.0, 0.5, 1.0, 5.0, f64::INFINITY] {
            let fam = SelectionFamily::new(DelayLaw::exponential(rate).unwrap());
            for &s in &[0.25, 1.0, 4.0] {
                for &t in &[0.25, 1.0, 4.0] {
                    for f in fs {
                        let d = markov_defect(&fam, s, t, f).unwrap();
                        assert!(d.abs() < 1e-8, "rate {rate} s {s} t {t} {f}: {d}");
                    }
                }
            }
        }
        let never = SelectionFamily::new(DelayLaw::Dirac(Delay::Never));
        assert_eq!(markov_defect(&never, 0.3, 0.9, ScalarObservable::Cos).unwrap(), 0.0);
    }

    #[test]
    fn markov_defect_detects_non_exponential() {
        let u = SelectionFamily::new(DelayLaw::uniform(0.0, 2.0).unwrap());
        assert!(markov_defect(&u, 0.5, 0.5, ScalarObservable::Identity).unwrap().abs() > 1e-3);
        let d = SelectionFamily::new(DelayLaw::dirac(Delay::At(1.0)).unwrap());
        let worst = [0.25, 1.0, 4.0]
            .iter()
            .flat_map(|&s| [0.25, 1.0, 4.0].map(move |t| (s, t)))
            .map(|(s, t)| markov_defect(&d, s, t, ScalarObservable::Identity).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(worst > 1e-3);
    }

    #[test]
    fn uniform_defect_matches_direct_integration() {
        // oracle: midpoint sums over a ∈ (0, 2) of both sides
        let (s, t) = (0.5, 0.5);
        let n = 400_000;
        let h = 2.0 / n as f64;
        let p0 = {
            let mut acc = 0.0;
            for i in 0..n {
                let a = (i as f64 + 0.5) * h;
                acc += star_solution(t - a);
            }
            acc / n as f64
        };
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i in 0..n {
            let a = (i as f64 + 0.5) * h;
            lhs += star_solution(s + t - a);
            rhs += if a < s { star_solution(s + t - a) } else { p0 };
        }
        let oracle = (lhs - rhs) / n as f64;
        let fam = SelectionFamily::new(DelayLaw::uniform(0.0, 2.0).unwrap());
        let d = markov_defect(&fam, s, t, ScalarObservable::Identity).unwrap();
        assert!((d - oracle).abs() < 1e-8, "{d} vs {oracle}");
    }

    #[test]
    fn j_examples() {
        for law in [
            DelayLaw::exponential(0.0).unwrap(),
            DelayLaw::exponential(3.0).unwrap(),
            DelayLaw::uniform(0.0, 2.0).unwrap(),
        ] {
            assert!((j_functional(2.0, ScalarObservable::One, &law).unwrap() - 0.5).abs() < 1e-10);
        }
        let now = DelayLaw::exponential(f64::INFINITY).unwrap();
        // ∫ e^{−t}(1 − e^{−t/2})² dt = 1 − 2·(2/3) + 1/2 = 1/6
        assert!((j_functional(1.0, ScalarObservable::Identity, &now).unwrap() - 1.0 / 6.0).abs() < 1e-10);
        let two = DelayLaw::exponential(2.0).unwrap();
        assert!((j_functional(1.0, ScalarObservable::Identity, &two).unwrap() - 1.0 / 9.0).abs() < 1e-10);
    }

    #[test]
    fn gap_examples() {
        let g = extremality_gap(1.0, ScalarObservable::Identity, 0.7, 0.7).unwrap();
        assert_eq!(g.gap, 0.0);
        let g = extremality_gap(1.0, ScalarObservable::Identity, 0.5, 2.0).unwrap();
        assert!((g.gap + 1.0 / 18.0).abs() < 1e-10);
        assert!(g.abs_err < 1e-10);
    }

    #[test]
    fn gap_sign_constant_on_lattice() {
        let rates = [0.0, 0.5, 1.0, 4.0, f64::INFINITY];
        let mut signs = Vec::new();
        for &a in &rates {
            for &b in &rates {
                if a == b {
                    continue;
                }
                let g = extremality_gap(1.0, ScalarObservable::Identity, a, b).unwrap();
                assert!(g.abs_err < 1e-10);
                let diff = if b == f64::INFINITY { 1.0 } else if a == f64::INFINITY { -1.0 } else { b - a };
                signs.push((g.gap * diff).signum());
            }
        }
        assert!(signs.iter().all(|s| *s == signs[0]));
    }

    #[test]
    fn long_run_law() {
        let f = |x: f64| if x >= 1.0 - 1e-3 { 1.0 } else { 0.0 };
        let fam = SelectionFamily::new(DelayLaw::exponential(1.0).unwrap());
        let m10 = fam.expectation(0.0, &f, 10.0).unwrap();
        let m20 = fam.expectation(0.0, &f, 20.0).unwrap();
        assert!(m20 > m10 && m20 > 0.99);
        let never = SelectionFamily::new(DelayLaw::exponential(0.0).unwrap());
        assert_eq!(never.expectation(0.0, &|x| if x == 0.0 { 1.0 } else { 0.0 }, 20.0).unwrap(), 1.0);
    }
}
