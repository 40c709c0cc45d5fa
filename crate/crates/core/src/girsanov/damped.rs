//! The absorbed solution and the damped equation `dX = −X dt + σ(X) dW`.

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::pathcore::{normal, BinEdges, EmpiricalLaw, RandomSource, SamplePath, TimeGrid};

use super::{simulate_no_delay, Sigma, StickyParam};

/// The no-delay path stopped at the first node within the absorption
/// threshold of `0`, and exactly `0` from there on.
pub fn simulate_absorbed(sigma: Sigma, x0: f64, grid: &TimeGrid, source: RandomSource) -> Result<SamplePath> {
    let thr = sigma.absorption_threshold(grid.dt());
    if x0.abs() < thr {
        return Ok(SamplePath::scalar(*grid, vec![0.0; grid.n_nodes()])?.with_stop(0));
    }
    let base = simulate_no_delay(sigma, x0, grid, source)?;
    match base.values().iter().position(|x| x.abs() < thr) {
        None => Ok(base),
        Some(k) => {
            let mut v = base.values().to_vec();
            v[k..].iter_mut().for_each(|x| *x = 0.0);
            Ok(SamplePath::scalar(*grid, v)?.with_stop(k))
        }
    }
}

/// Euler-Maruyama for the damped equation. With `c = ∞` the state is frozen
/// at `0` once within the absorption threshold; with `c = 0` the scheme runs
/// unmodified.
pub fn simulate_damped(
    sigma: Sigma,
    x0: f64,
    sticky: StickyParam,
    grid: &TimeGrid,
    source: RandomSource,
) -> Result<SamplePath> {
    let absorbing = match sticky {
        StickyParam::Absorbing => true,
        StickyParam::Finite(c) if c == 0.0 => false,
        StickyParam::Finite(c) => {
            return Err(Error::Inadmissible(format!(
                "damped simulation supports c = 0 or c = inf, got c = {c}"
            )))
        }
    };
    if !x0.is_finite() {
        return Err(param("x0", "must be finite"));
    }
    let dt = grid.dt();
    // |drift|·dt < ½·|x| for the linear drift −x
    if dt >= 0.5 {
        return Err(param("dt", "damped scheme needs dt < 0.5"));
    }
    let thr = sigma.absorption_threshold(dt);
    let sd = dt.sqrt();
    let mut rng = source.rng();
    let mut v = Vec::with_capacity(grid.n_nodes());
    let mut x = x0;
    let mut stop = None;
    if absorbing && x.abs() < thr {
        x = 0.0;
        stop = Some(0);
    }
    v.push(x);
    for k in 1..grid.n_nodes() {
        if stop.is_none() {
            x += -x * dt + sigma.eval(x) * sd * normal(&mut rng);
            if absorbing && x.abs() < thr {
                x = 0.0;
                stop = Some(k);
            }
        }
        v.push(x);
    }
    let path = SamplePath::scalar(*grid, v)?;
    Ok(match stop {
        Some(k) => path.with_stop(k),
        None => path,
    })
}

/// Time-averaged occupation of one damped path after a burn-in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvariantHistogram {
    pub law: EmpiricalLaw,
    /// Fraction of post-burn-in time spent exactly at `0`.
    pub atom_mass: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn invariant_histogram(
    sigma: Sigma,
    sticky: StickyParam,
    x0: f64,
    burn_in: f64,
    horizon: f64,
    dt: f64,
    edges: &BinEdges,
    source: RandomSource,
) -> Result<InvariantHistogram> {
    if !(horizon > burn_in && burn_in >= 0.0) {
        return Err(param("horizon", "must exceed burn_in >= 0"));
    }
    let grid = TimeGrid::horizon(horizon, dt)?;
    let path = simulate_damped(sigma, x0, sticky, &grid, source)?;
    let first = grid.index_of(burn_in);
    let samples: Vec<f64> = path.values()[first..].to_vec();
    let atom_mass = samples.iter().filter(|x| **x == 0.0).count() as f64 / samples.len() as f64;
    Ok(InvariantHistogram {
        law: EmpiricalLaw::binned(samples, edges),
        atom_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathcore::{ensemble, tv_distance, MeanEstimate};

    fn sigma() -> Sigma {
        Sigma::alpha(0.25).unwrap()
    }

    #[test]
    fn absorbed_from_zero_is_zero() {
        let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
        let p = simulate_absorbed(sigma(), 0.0, &g, RandomSource::new(1, 0)).unwrap();
        assert!(p.values().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn absorbed_stays_at_zero() {
        let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
        let mut seen = 0;
        for s in 0..100 {
            let p = simulate_absorbed(sigma(), 0.1, &g, RandomSource::new(s, 0)).unwrap();
            if let Some(k) = p.stop_index() {
                seen += 1;
                assert!(p.values()[k..].iter().all(|x| *x == 0.0));
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn absorption_monotone_in_start() {
        let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
        let frac = |x0: f64| {
            let v = ensemble(2000, RandomSource::new(2, 0), |src| {
                let p = simulate_absorbed(sigma(), x0, &g, src).unwrap();
                if p.stop_index().is_some() {
                    1.0
                } else {
                    0.0
                }
            });
            MeanEstimate::from_samples(&v)
        };
        let near = frac(0.1);
        let far = frac(1.0);
        assert!(near.mean - far.mean > 3.0 * (near.std_error.powi(2) + far.std_error.powi(2)).sqrt());
    }

    #[test]
    fn zero_noise_is_exponential_decay() {
        let g = TimeGrid::horizon(2.0, 1e-3).unwrap();
        let p = simulate_damped(Sigma::Constant(0.0), 1.5, StickyParam::Finite(0.0), &g, RandomSource::new(0, 0)).unwrap();
        for (k, t) in g.times().enumerate() {
            assert!((p.at(k) - 1.5 * (-t).exp()).abs() < 2.0 * 1e-3 * 1.5);
        }
    }

    #[test]
    fn damped_mean_vanishes() {
        let g = TimeGrid::horizon(10.0, 1e-2).unwrap();
        let v = ensemble(4000, RandomSource::new(3, 0), |src| {
            *simulate_damped(sigma(), 1.0, StickyParam::Finite(0.0), &g, src).unwrap().last().first().unwrap()
        });
        let est = MeanEstimate::from_samples(&v);
        assert!(est.mean.abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn damped_rejects_intermediate_c() {
        let g = TimeGrid::horizon(1.0, 1e-2).unwrap();
        assert!(simulate_damped(sigma(), 1.0, StickyParam::Finite(1.0), &g, RandomSource::new(0, 0)).is_err());
        assert!(simulate_damped(sigma(), 1.0, StickyParam::Finite(0.0), &TimeGrid::horizon(2.0, 0.5).unwrap(), RandomSource::new(0, 0)).is_err());
    }

    #[test]
    fn sticky_infinite_from_zero() {
        let g = TimeGrid::horizon(1.0, 1e-2).unwrap();
        let p = simulate_damped(sigma(), 0.0, StickyParam::Absorbing, &g, RandomSource::new(0, 0)).unwrap();
        assert!(p.values().iter().all(|x| *x == 0.0));
        let edges = BinEdges::uniform_with_tails(-2.0, 2.0, 20).unwrap().with_atom(0.0, 1e-9).unwrap();
        let h = invariant_histogram(sigma(), StickyParam::Absorbing, 0.0, 1.0, 10.0, 1e-2, &edges, RandomSource::new(0, 0)).unwrap();
        assert_eq!(h.atom_mass, 1.0);
    }

    #[test]
    fn atom_mass_grows_with_horizon() {
        let edges = BinEdges::uniform_with_tails(-2.0, 2.0, 20).unwrap();
        let mass = |h: f64| {
            let v = ensemble(200, RandomSource::new(5, 0), |src| {
                invariant_histogram(sigma(), StickyParam::Absorbing, 1.0, 0.0, h, 1e-2, &edges, src)
                    .unwrap()
                    .atom_mass
            });
            MeanEstimate::from_samples(&v)
        };
        let m100 = mass(100.0);
        assert!(m100.mean > 0.0 && m100.mean < 1.0);
        assert!(mass(200.0).mean > m100.mean);
    }

    #[test]
    fn sticky_zero_has_no_atom_and_is_stationary() {
        let edges = BinEdges::uniform_with_tails(-1.5, 1.5, 12).unwrap().with_atom(0.0, 1e-9).unwrap();
        let run = |seed| {
            invariant_histogram(sigma(), StickyParam::Finite(0.0), 0.5, 10.0, 4000.0, 1e-2, &edges, RandomSource::new(seed, 0)).unwrap()
        };
        let a = run(1);
        let b = run(2);
        assert_eq!(a.atom_mass, 0.0);
        let tv = tv_distance(&a.law, &b.law).unwrap();
        assert!(tv < 0.05, "{tv}");
    }
}
