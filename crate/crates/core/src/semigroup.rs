//! Transition semigroups, resolvents and generators estimated from ensembles.
//!
//! Every dynamics module implements [`Dynamics`]. Estimators here only
//! simulate and reduce: each trajectory uses its own child stream, results
//! are collected in trajectory order and reduced sequentially, so a given
//! seed always produces the same numbers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pathcore::quadrature::{composite, GaussLegendre};
use crate::pathcore::{ensemble, martingale_increment_test, MartingaleReport, MeanEstimate, RandomSource, TimeGrid};

/// A family of laws `(P_x)` that can be sampled on a time grid.
pub trait Dynamics: Sync {
    type State: Clone + Send + Sync;

    fn name(&self) -> String;

    /// One trajectory started at `x`, one state per grid node.
    fn simulate(&self, x: &Self::State, grid: &TimeGrid, source: RandomSource) -> Result<Vec<Self::State>>;

    /// `P_t φ(x)` in closed form (or by deterministic quadrature), when the
    /// law of the state at time `t` is known exactly.
    fn exact_expectation(&self, _x: &Self::State, _phi: &(dyn Fn(&Self::State) -> f64 + Sync), _t: f64) -> Option<Result<f64>> {
        None
    }
}

/// An observable together with its declared supremum over the state space.
pub struct BoundedObservable<'a, S> {
    pub name: String,
    pub f: &'a (dyn Fn(&S) -> f64 + Sync),
    pub sup: f64,
}

impl<'a, S> BoundedObservable<'a, S> {
    pub fn new(name: impl Into<String>, f: &'a (dyn Fn(&S) -> f64 + Sync), sup: Option<f64>) -> Result<Self> {
        let name = name.into();
        match sup {
            Some(sup) if sup.is_finite() => Ok(Self { name, f, sup }),
            _ => Err(Error::Unbounded(name)),
        }
    }
}

/// Ensemble size, time step and random source for Monte-Carlo estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n_paths: usize,
    pub dt: f64,
    pub source: RandomSource,
}

impl EnsembleSpec {
    pub fn new(n_paths: usize, dt: f64, source: RandomSource) -> Self {
        Self { n_paths, dt, source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemigroupEstimate {
    pub t: f64,
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub aborted: usize,
}

/// Largest tolerated share of aborted trajectories.
const MAX_ABORT_FRACTION: f64 = 1e-3;

/// Simulates the ensemble on `grid` and evaluates `phi` at every node.
/// Aborted trajectories are dropped if they are rare enough.
pub fn observe<D: Dynamics>(
    dynamics: &D,
    x: &D::State,
    phi: &(dyn Fn(&D::State) -> f64 + Sync),
    grid: &TimeGrid,
    spec: &EnsembleSpec,
) -> Result<(Vec<Vec<f64>>, usize)> {
    let runs = ensemble(spec.n_paths, spec.source, |src| {
        dynamics
            .simulate(x, grid, src)
            .map(|states| states.iter().map(|s| phi(s)).collect::<Vec<f64>>())
    });
    let total = runs.len();
    let mut kept = Vec::with_capacity(total);
    let mut aborted = 0;
    for r in runs {
        match r {
            Ok(v) => kept.push(v),
            Err(Error::Aborted { .. }) => aborted += 1,
            Err(e) => return Err(e),
        }
    }
    if aborted as f64 >= MAX_ABORT_FRACTION * total as f64 && aborted > 0 {
        return Err(Error::TooManyAborts { aborted, total });
    }
    Ok((kept, aborted))
}

/// Grid on `[0, horizon]` whose step divides the horizon.
fn grid_for(horizon: f64, dt: f64) -> Result<TimeGrid> {
    let n = (horizon / dt).ceil().max(1.0) as usize;
    TimeGrid::new(0.0, horizon / n as f64, n)
}

fn interp(values: &[f64], dt: f64, t: f64) -> f64 {
    let n = values.len() - 1;
    let u = (t / dt).clamp(0.0, n as f64);
    let k = (u.floor() as usize).min(n - 1);
    let w = u - k as f64;
    values[k] * (1.0 - w) + values[k + 1] * w
}

/// Monte-Carlo (or exact) estimate of `P_t φ(x)`.
pub fn estimate_pt<D: Dynamics>(
    dynamics: &D,
    x: &D::State,
    phi: &(dyn Fn(&D::State) -> f64 + Sync),
    t: f64,
    spec: &EnsembleSpec,
) -> Result<SemigroupEstimate> {
    if !(t >= 0.0) {
        return Err(crate::error::param("t", "must be >= 0"));
    }
    if t == 0.0 {
        return Ok(SemigroupEstimate {
            t,
            value: phi(x),
            std_error: 0.0,
            n: spec.n_paths,
            aborted: 0,
        });
    }
    if let Some(v) = dynamics.exact_expectation(x, phi, t) {
        return Ok(SemigroupEstimate {
            t,
            value: v?,
            std_error: 0.0,
            n: spec.n_paths,
            aborted: 0,
        });
    }
    let grid = grid_for(t, spec.dt)?;
    let (obs, aborted) = observe(dynamics, x, phi, &grid, spec)?;
    let finals: Vec<f64> = obs.iter().map(|v| *v.last().unwrap()).collect();
    let est = MeanEstimate::from_samples(&finals);
    Ok(SemigroupEstimate {
        t,
        value: est.mean,
        std_error: est.std_error,
        n: est.n,
        aborted,
    })
}

/// The curve `t ↦ P_t φ(x)` on a grid, with per-node standard errors.
pub fn semigroup_curve<D: Dynamics>(
    dynamics: &D,
    x: &D::State,
    phi: &(dyn Fn(&D::State) -> f64 + Sync),
    grid: &TimeGrid,
    spec: &EnsembleSpec,
) -> Result<Vec<MeanEstimate>> {
    if let Some(first) = dynamics.exact_expectation(x, phi, grid.end()) {
        first?;
        return grid
            .times()
            .map(|t| {
                let v = if t == 0.0 { phi(x) } else { dynamics.exact_expectation(x, phi, t).unwrap()? };
                Ok(MeanEstimate {
                    mean: v,
                    std_error: 0.0,
                    n: spec.n_paths,
                })
            })
            .collect();
    }
    let (obs, _) = observe(dynamics, x, phi, grid, spec)?;
    Ok((0..grid.n_nodes())
        .map(|k| MeanEstimate::from_samples(&obs.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect())
}

/// Controls for resolvent estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventOptions {
    /// Truncation horizon of the Laplace integral.
    pub horizon: f64,
    /// Width of Gauss-Legendre panels.
    pub panel: f64,
    /// Largest acceptable tail bound `‖φ‖∞ e^{−λH}/λ`.
    pub tolerance: f64,
    pub ensemble: EnsembleSpec,
}

impl ResolventOptions {
    /// Horizon chosen so that the tail bound for `lambda` and `sup` is below
    /// `tolerance`.
    pub fn for_tolerance(lambda: f64, sup: f64, tolerance: f64, ensemble: EnsembleSpec) -> Self {
        let horizon = ((sup.max(1e-300) / (lambda * tolerance)).ln() / lambda).max(1.0) * 1.05;
        Self {
            horizon,
            panel: 0.25,
            tolerance,
            ensemble,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventEstimate {
    pub lambda: f64,
    pub value: f64,
    pub quadrature_error: f64,
    pub mc_error: f64,
    pub horizon: f64,
}

impl ResolventEstimate {
    pub fn combined_error(&self) -> f64 {
        self.quadrature_error + self.mc_error
    }
}

fn tail_bound(sup: f64, lambda: f64, horizon: f64) -> f64 {
    sup * (-lambda * horizon).exp() / lambda
}

/// Samples `t ↦ P_t φ(x)` for quadrature: either the exact curve (a single
/// "path") or one interpolated φ-series per trajectory on a uniform grid.
enum Curves {
    Exact,
    Paths { series: Vec<Vec<f64>>, dt: f64 },
}

fn curves<D: Dynamics>(dynamics: &D, x: &D::State, phi: &BoundedObservable<D::State>, horizon: f64, spec: &EnsembleSpec) -> Result<Curves> {
    if let Some(r) = dynamics.exact_expectation(x, phi.f, horizon) {
        r?;
        return Ok(Curves::Exact);
    }
    let grid = grid_for(horizon, spec.dt)?;
    let (series, _) = observe(dynamics, x, phi.f, &grid, spec)?;
    Ok(Curves::Paths { series, dt: grid.dt() })
}

/// Integrates `kernel(t) · P_t φ(x)` over `[0, horizon]` with each curve.
/// Returns one value per trajectory (or one value for the exact curve) and a
/// quadrature error estimate from halving the panel width.
fn laplace_integrals<D: Dynamics>(
    dynamics: &D,
    x: &D::State,
    phi: &BoundedObservable<D::State>,
    curves: &Curves,
    horizon: f64,
    panel: f64,
    kernel: &dyn Fn(f64) -> f64,
) -> Result<(Vec<f64>, f64)> {
    match curves {
        Curves::Exact => {
            let mut err = None;
            let mut f = |t: f64| {
                if t == 0.0 {
                    return kernel(t) * (phi.f)(x);
                }
                match dynamics.exact_expectation(x, phi.f, t).unwrap() {
                    Ok(v) => kernel(t) * v,
                    Err(e) => {
                        err = Some(e);
                        0.0
                    }
                }
            };
            let fine = composite(0.0, horizon, panel * 0.5, &[], &mut f);
            let coarse = composite(0.0, horizon, panel, &[], &mut f);
            if let Some(e) = err {
                return Err(e);
            }
            Ok((vec![fine], (fine - coarse).abs()))
        }
        Curves::Paths { series, dt } => {
            let rule = GaussLegendre::sixteen();
            let panels = (horizon / panel).ceil().max(1.0) as usize;
            let h = horizon / panels as f64;
            let nodes: Vec<(f64, f64)> = (0..panels)
                .flat_map(|p| rule.on(h * p as f64, h * (p + 1) as f64).collect::<Vec<_>>())
                .collect();
            let weights: Vec<f64> = nodes.iter().map(|&(t, w)| w * kernel(t)).collect();
            let grid_kernel: Vec<f64> = (0..series[0].len()).map(|k| kernel(k as f64 * dt)).collect();
            let mut gl = Vec::with_capacity(series.len());
            let mut gap = 0.0;
            for v in series {
                let g: f64 = nodes.iter().zip(&weights).map(|(&(t, _), w)| w * interp(v, *dt, t)).sum();
                // trapezoid on the simulation grid as a second rule
                let n = v.len() - 1;
                let mut trap = 0.5 * (grid_kernel[0] * v[0] + grid_kernel[n] * v[n]);
                for k in 1..n {
                    trap += grid_kernel[k] * v[k];
                }
                trap *= dt;
                gap += g - trap;
                gl.push(g);
            }
            Ok((gl, (gap / series.len() as f64).abs()))
        }
    }
}

/// `R_λ φ(x) = ∫_0^∞ e^{−λt} P_t φ(x) dt` on shared trajectories.
pub fn resolvent<D: Dynamics>(
    dynamics: &D,
    x: &D::State,
    phi: &BoundedObservable<D::State>,
    lambda: f64,
    opts: &ResolventOptions,
) -> Result<ResolventEstimate> {
    if !(lambda > 0.0) {
        return Err(crate::error::param("lambda", "must be > 0"));
    }
    let tail = tail_bound(phi.sup, lambda, opts.horizon);
    if tail > opts.tolerance {
        return Err(Error::HorizonTooShort {
            tail,
            tolerance: opts.tolerance,
        });
    }
    let c = curves(dynamics, x, phi, opts.horizon, &opts.ensemble)?;
    let (vals, quad) = laplace_integrals(dynamics, x, phi, &c, opts.horizon, opts.panel, &|t| (-lambda * t).exp())?;
    let est = MeanEstimate::from_samples(&vals);
    Ok(ResolventEstimate {
        lambda,
        value: est.mean,
        quadrature_error: quad + tail,
        mc_error: if vals.len() > 1 { est.std_error } else { 0.0 },
        horizon: opts.horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub lambda1: f64,
    pub lambda2: f64,
    pub r1: f64,
    pub r2: f64,
    /// `(λ2 − λ1) R_{λ1} R_{λ2} φ(x)`, or `R_λ² φ(x)` in the degenerate case.
    pub product: f64,
    pub residual: f64,
    pub quadrature_error: f64,
    pub mc_error: f64,
}

impl IdentityResidual {
    pub fn combined_error(&self) -> f64 {
        self.quadrature_error + self.mc_error
    }
}

/// Residual of `R_{λ1} − R_{λ2} = (λ2 − λ1) R_{λ1} R_{λ2}`.
///
/// The double resolvent collapses to the single integral
/// `∫ e^{−λ2 r}(e^{(λ2−λ1) r} − 1) P_r φ(x) dr`, evaluated on the same
/// trajectories as both resolvents so their errors are correlated. For
/// `λ1 = λ2` the kernel becomes `r e^{−λ r}` (that is `R_λ²φ = −∂_λ R_λ φ`)
/// and the residual is measured against a Richardson central difference of
/// `λ ↦ R_λ φ(x)`.
pub fn resolvent_identity_residual<D: Dynamics>(
    dynamics: &D,
    x: &D::State,
    phi: &BoundedObservable<D::State>,
    lambda1: f64,
    lambda2: f64,
    opts: &ResolventOptions,
) -> Result<IdentityResidual> {
    if !(lambda1 > 0.0 && lambda2 > 0.0) {
        return Err(crate::error::param("lambda", "must be > 0"));
    }
    let lmin = lambda1.min(lambda2);
    let tail = if lambda1 == lambda2 {
        // ∫_H^∞ r e^{−λr} dr = e^{−λH}(H/λ + 1/λ²)
        phi.sup * (-lmin * opts.horizon).exp() * (opts.horizon / lmin + 1.0 / (lmin * lmin))
    } else {
        tail_bound(phi.sup, lambda1, opts.horizon) + tail_bound(phi.sup, lambda2, opts.horizon)
    };
    if tail > opts.tolerance {
        return Err(Error::HorizonTooShort {
            tail,
            tolerance: opts.tolerance,
        });
    }
    let c = curves(dynamics, x, phi, opts.horizon, &opts.ensemble)?;
    let h = opts.horizon;
    let p = opts.panel;
    let (r1, q1) = laplace_integrals(dynamics, x, phi, &c, h, p, &|t| (-lambda1 * t).exp())?;
    let (r2, q2) = laplace_integrals(dynamics, x, phi, &c, h, p, &|t| (-lambda2 * t).exp())?;

    if lambda1 == lambda2 {
        let lambda = lambda1;
        let (rr, q3) = laplace_integrals(dynamics, x, phi, &c, h, p, &|t| t * (-lambda * t).exp())?;
        // Richardson-extrapolated central difference of λ ↦ R_λ.
        let step = 1e-2 * lambda;
        let at = |l: f64| laplace_integrals(dynamics, x, phi, &c, h, p, &|t| (-l * t).exp()).map(|v| v.0);
        let rp1 = at(lambda + step)?;
        let rm1 = at(lambda - step)?;
        let rp2 = at(lambda + 0.5 * step)?;
        let rm2 = at(lambda - 0.5 * step)?;
        let per_path: Vec<f64> = (0..rr.len())
            .map(|i| {
                let d1 = (rp1[i] - rm1[i]) / (2.0 * step);
                let d2 = (rp2[i] - rm2[i]) / step;
                let deriv = (4.0 * d2 - d1) / 3.0;
                rr[i] + deriv
            })
            .collect();
        let est = MeanEstimate::from_samples(&per_path);
        let r = MeanEstimate::from_samples(&r1);
        let prod = MeanEstimate::from_samples(&rr);
        return Ok(IdentityResidual {
            lambda1,
            lambda2,
            r1: r.mean,
            r2: r.mean,
            product: prod.mean,
            residual: est.mean.abs(),
            quadrature_error: q1 + q3 + tail,
            mc_error: if rr.len() > 1 { est.std_error } else { 0.0 },
        });
    }

    let dl = lambda2 - lambda1;
    let (k, q3) = laplace_integrals(dynamics, x, phi, &c, h, p, &|t| (-lambda2 * t).exp() * (dl * t).exp_m1())?;
    let per_path: Vec<f64> = (0..k.len()).map(|i| r1[i] - r2[i] - k[i]).collect();
    let est = MeanEstimate::from_samples(&per_path);
    Ok(IdentityResidual {
        lambda1,
        lambda2,
        r1: MeanEstimate::from_samples(&r1).mean,
        r2: MeanEstimate::from_samples(&r2).mean,
        product: MeanEstimate::from_samples(&k).mean,
        residual: est.mean.abs(),
        quadrature_error: q1 + q2 + q3 + tail,
        mc_error: if k.len() > 1 { est.std_error } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorEstimate {
    pub value: f64,
    pub std_error: f64,
    /// `(ε, (P_ε φ(x) − φ(x))/ε, standard error)` for each step.
    pub quotients: Vec<(f64, f64, f64)>,
    pub n: usize,
}

/// Outcome of a finite-difference generator estimate. An estimate whose
/// error bar exceeds its magnitude is never reported as a plain number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FdOutcome {
    Estimate(GeneratorEstimate),
    Inconclusive(GeneratorEstimate),
}

impl FdOutcome {
    pub fn estimate(&self) -> &GeneratorEstimate {
        match self {
            FdOutcome::Estimate(e) | FdOutcome::Inconclusive(e) => e,
        }
    }
    pub fn is_conclusive(&self) -> bool {
        matches!(self, FdOutcome::Estimate(_))
    }
}

/// Richardson-extrapolated `lim (P_ε φ(x) − φ(x))/ε` using the two smallest
/// steps, with common random numbers: every trajectory is simulated once up
/// to the largest ε and read off at each ε.
pub fn generator_fd<D: Dynamics>(
    dynamics: &D,
    x: &D::State,
    phi: &(dyn Fn(&D::State) -> f64 + Sync),
    eps: &[f64],
    spec: &EnsembleSpec,
) -> Result<FdOutcome> {
    if eps.len() < 2 {
        return Err(crate::error::param("eps", "need at least two steps"));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(crate::error::param("eps", "must be positive and strictly decreasing"));
    }
    let phi0 = phi(x);
    let (ea, eb) = (eps[eps.len() - 2], eps[eps.len() - 1]);
    let richardson = |da: f64, db: f64| (ea * db - eb * da) / (ea - eb);

    let (quotients, per_path): (Vec<(f64, f64, f64)>, Vec<f64>) =
        if dynamics.exact_expectation(x, phi, eps[0]).is_some() {
            let mut q = Vec::new();
            for &e in eps {
                let v = dynamics.exact_expectation(x, phi, e).unwrap()?;
                q.push((e, (v - phi0) / e, 0.0));
            }
            let n = q.len();
            let r = richardson(q[n - 2].1, q[n - 1].1);
            (q, vec![r])
        } else {
            let dt = spec.dt;
            let idx: Vec<usize> = eps
                .iter()
                .map(|&e| {
                    let k = (e / dt).round();
                    if (k * dt - e).abs() > 1e-9 * e || k < 1.0 {
                        Err(crate::error::param("eps", format!("{e} is not a multiple of dt = {dt}")))
                    } else {
                        Ok(k as usize)
                    }
                })
                .collect::<Result<_>>()?;
            let grid = TimeGrid::new(0.0, dt, idx[0])?;
            let (obs, _) = observe(dynamics, x, phi, &grid, spec)?;
            let mut q = Vec::new();
            for (j, &e) in eps.iter().enumerate() {
                let d: Vec<f64> = obs.iter().map(|v| (v[idx[j]] - phi0) / e).collect();
                let m = MeanEstimate::from_samples(&d);
                q.push((e, m.mean, m.std_error));
            }
            let (ka, kb) = (idx[eps.len() - 2], idx[eps.len() - 1]);
            let per = obs
                .iter()
                .map(|v| richardson((v[ka] - phi0) / ea, (v[kb] - phi0) / eb))
                .collect();
            (q, per)
        };
    let est = MeanEstimate::from_samples(&per_path);
    let g = GeneratorEstimate {
        value: est.mean,
        std_error: if per_path.len() > 1 { est.std_error } else { 0.0 },
        quotients,
        n: spec.n_paths,
    };
    if g.std_error > g.value.abs() {
        Ok(FdOutcome::Inconclusive(g))
    } else {
        Ok(FdOutcome::Estimate(g))
    }
}

/// Tests that `φ(ξ_t) − ∫_0^t Lφ(ξ_s) ds` is a martingale, regressing its
/// increments on `{1, φ(ξ_s)}` (only `{1}` when `s = 0`).
pub fn martingale_problem_residual<D: Dynamics>(
    dynamics: &D,
    x: &D::State,
    phi: &(dyn Fn(&D::State) -> f64 + Sync),
    l_phi: &(dyn Fn(&D::State) -> f64 + Sync),
    horizon: f64,
    pairs: &[(f64, f64)],
    spec: &EnsembleSpec,
) -> Result<MartingaleReport> {
    let grid = grid_for(horizon, spec.dt)?;
    let dt = grid.dt();
    let runs = ensemble(spec.n_paths, spec.source, |src| {
        dynamics.simulate(x, &grid, src).map(|states| {
            let f: Vec<f64> = states.iter().map(|s| phi(s)).collect();
            let l: Vec<f64> = states.iter().map(|s| l_phi(s)).collect();
            let comp = crate::pathcore::quadrature::cumulative_trapezoid(&l, dt);
            let m: Vec<f64> = f.iter().zip(&comp).map(|(a, b)| a - b).collect();
            (m, f)
        })
    });
    let mut series = Vec::with_capacity(runs.len());
    let mut phis = Vec::with_capacity(runs.len());
    let mut aborted = 0;
    for r in runs {
        match r {
            Ok((m, f)) => {
                series.push(m);
                phis.push(f);
            }
            Err(Error::Aborted { .. }) => aborted += 1,
            Err(e) => return Err(e),
        }
    }
    if aborted > 0 && aborted as f64 >= MAX_ABORT_FRACTION * spec.n_paths as f64 {
        return Err(Error::TooManyAborts {
            aborted,
            total: spec.n_paths,
        });
    }
    let idx: Vec<(usize, usize)> = pairs.iter().map(|&(s, t)| (grid.index_of(s), grid.index_of(t))).collect();
    martingale_increment_test(
        &series,
        |i, s| if s == 0 { vec![1.0] } else { vec![1.0, phis[i][s]] },
        &idx,
        None::<fn(usize, usize) -> f64>,
    )
}

/// Standard Brownian motion on the line (test dynamics; generator `½ d²/dx²`).
#[derive(Debug, Clone, Copy, Default)]
pub struct BrownianDynamics;

impl Dynamics for BrownianDynamics {
    type State = f64;

    fn name(&self) -> String {
        "brownian".into()
    }

    fn simulate(&self, x: &f64, grid: &TimeGrid, source: RandomSource) -> Result<Vec<f64>> {
        let w = crate::pathcore::simulate_brownian(grid, 1, source)?;
        Ok(w.values().iter().map(|v| x + v).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Deterministic exponential decay `x e^{−t}` (exact semigroup).
    struct Decay;
    impl Dynamics for Decay {
        type State = f64;
        fn name(&self) -> String {
            "decay".into()
        }
        fn simulate(&self, x: &f64, grid: &TimeGrid, _: RandomSource) -> Result<Vec<f64>> {
            Ok(grid.times().map(|t| x * (-t).exp()).collect())
        }
        fn exact_expectation(&self, x: &f64, phi: &(dyn Fn(&f64) -> f64 + Sync), t: f64) -> Option<Result<f64>> {
            Some(Ok(phi(&(x * (-t).exp()))))
        }
    }

    fn spec(n: usize) -> EnsembleSpec {
        EnsembleSpec::new(n, 1e-2, RandomSource::new(3, 0))
    }

    #[test]
    fn pt_at_zero_is_exact() {
        let e = estimate_pt(&BrownianDynamics, &0.3, &|x: &f64| x.cos(), 0.0, &spec(100)).unwrap();
        assert_eq!(e.value, 0.3f64.cos());
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn resolvent_of_one() {
        let one = |_: &f64| 1.0;
        let phi = BoundedObservable::new("one", &one, Some(1.0)).unwrap();
        let opts = ResolventOptions::for_tolerance(2.0, 1.0, 1e-12, spec(200));
        let r = resolvent(&BrownianDynamics, &0.0, &phi, 2.0, &opts).unwrap();
        assert!((r.value - 0.5).abs() < r.combined_error() + 1e-12, "{r:?}");
        let r = resolvent(&Decay, &1.0, &phi, 2.0, &opts).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn resolvent_decay_closed_form() {
        // ∫ e^{−λt} x e^{−t} dt = x/(λ+1)
        let id = |x: &f64| *x;
        let phi = BoundedObservable::new("x", &id, Some(1.0)).unwrap();
        let opts = ResolventOptions::for_tolerance(1.0, 1.0, 1e-13, spec(1));
        let r = resolvent(&Decay, &0.8, &phi, 1.0, &opts).unwrap();
        assert!((r.value - 0.4).abs() < 1e-12);
    }

    #[test]
    fn short_horizon_rejected() {
        let one = |_: &f64| 1.0;
        let phi = BoundedObservable::new("one", &one, Some(1.0)).unwrap();
        let mut opts = ResolventOptions::for_tolerance(1.0, 1.0, 1e-8, spec(1));
        opts.horizon = 1.0;
        assert!(matches!(
            resolvent(&Decay, &1.0, &phi, 1.0, &opts),
            Err(Error::HorizonTooShort { .. })
        ));
    }

    #[test]
    fn unbounded_observable_rejected() {
        let sq = |x: &f64| x * x;
        assert!(matches!(
            BoundedObservable::new("x2", &sq, None),
            Err(Error::Unbounded(_))
        ));
    }

    #[test]
    fn fd_exact_decay() {
        // generator of x e^{−t} on φ = id is −x
        let out = generator_fd(&Decay, &0.5, &|x: &f64| *x, &[1e-2, 1e-3], &spec(1)).unwrap();
        assert!(out.is_conclusive());
        assert!((out.estimate().value + 0.5).abs() < 1e-5);
    }

    #[test]
    fn fd_rejects_bad_steps() {
        assert!(generator_fd(&Decay, &0.5, &|x: &f64| *x, &[1e-3, 1e-2], &spec(1)).is_err());
        assert!(generator_fd(&BrownianDynamics, &0.5, &|x: &f64| *x, &[1.5e-2, 1e-3], &spec(10)).is_err());
    }

    #[test]
    fn fd_zero_generator_is_inconclusive() {
        // ½φ'' = 0 for φ = x: pure noise, so most seeds give an error bar
        // wider than the estimate
        let inconclusive = (0..20)
            .filter(|&seed| {
                let spec = EnsembleSpec::new(500, 1e-2, RandomSource::new(seed, 0));
                !generator_fd(&BrownianDynamics, &0.0, &|x: &f64| *x, &[2e-2, 1e-2], &spec)
                    .unwrap()
                    .is_conclusive()
            })
            .count();
        assert!(inconclusive >= 8, "{inconclusive}");
    }

    #[test]
    fn fd_brownian_square() {
        // ½(x²)'' = 1
        let out = generator_fd(&BrownianDynamics, &0.3, &|x: &f64| x * x, &[2e-2, 1e-2], &spec(4000)).unwrap();
        assert!(out.is_conclusive());
        let e = out.estimate();
        assert!((e.value - 1.0).abs() < 4.0 * e.std_error, "{e:?}");
    }
}
