//! Solutions that spend time at `0`.
//!
//! With i.i.d. pairs `(S_n, S'_n)` of exponential times of rate `λ`, the
//! `n`-th delay `S_n` is inserted at `U_n`, the time the local time at `0` of
//! the no-delay path `X̂` has grown by `S'_{n−1}` since `U_{n−1}`; a path
//! started at `0` first waits `S_0`. With `D` the sum of delays inserted so
//! far and `E` the inverse of `t ↦ t + D_t`, the solution is `Y_t = X̂(E_t)`
//! off the delay intervals and exactly `0` on them.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::pathcore::{ensemble, exponential, tv_distance, BinEdges, EmpiricalLaw, RandomSource, Rng, SamplePath, TimeGrid};

use super::{default_epsilon, local_time_estimate, simulate_no_delay, Sigma};

/// Rate of the exponential clocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockSpec {
    pub rate: f64,
    /// When false every delay is forced to length zero (test hook).
    pub insert_delays: bool,
}

impl ClockSpec {
    pub fn new(rate: f64) -> Result<Self> {
        if rate > 0.0 && rate.is_finite() {
            Ok(Self {
                rate,
                insert_delays: true,
            })
        } else {
            Err(param("rate", "must be positive and finite"))
        }
    }

    pub fn without_delays(rate: f64) -> Result<Self> {
        Ok(Self {
            insert_delays: false,
            ..Self::new(rate)?
        })
    }
}

/// A delayed path and the delays inserted on the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayedSample {
    pub path: SamplePath,
    /// `(first node, number of steps)` of each delay interval, in order.
    pub delays: Vec<(usize, usize)>,
    /// The horizon ended inside a delay, which is cut short.
    pub truncated: bool,
}

impl DelayedSample {
    /// Time spent exactly at `0` (node count times the step).
    pub fn time_at_zero(&self) -> f64 {
        let dt = self.path.grid().dt();
        dt * self.path.values()[..self.path.len() - 1].iter().filter(|v| **v == 0.0).count() as f64
    }

    /// Length of the delay started at time `0` (paths from `0` only).
    pub fn initial_delay(&self) -> f64 {
        match self.delays.first() {
            Some(&(1, len)) => len as f64 * self.path.grid().dt(),
            _ => 0.0,
        }
    }
}

/// Whole steps for a delay of `len`, rounded up or down at random so the
/// expected number of steps is exactly `len/dt`.
fn steps(rng: &mut Rng, len: f64, dt: f64) -> usize {
    let u = len / dt;
    let f = u.floor();
    f as usize + usize::from(rng.random::<f64>() < u - f)
}

pub fn simulate_delayed(
    sigma: Sigma,
    x0: f64,
    clock: ClockSpec,
    grid: &TimeGrid,
    source: RandomSource,
) -> Result<DelayedSample> {
    let base = simulate_no_delay(sigma, x0, grid, source)?;
    let xs = base.values();
    let local = local_time_estimate(&base, 0.0, default_epsilon(&base).max(f64::MIN_POSITIVE))?;
    let lt = local.path.values();
    let dt = grid.dt();
    let mut rng = source.child(2).rng();
    let draw = |rng: &mut Rng| {
        if clock.insert_delays {
            exponential(rng, clock.rate)
        } else {
            0.0
        }
    };

    let n = grid.n_nodes();
    let mut ys = Vec::with_capacity(n);
    let mut delays = Vec::new();
    let mut pending = 0usize;
    let near_zero = sigma.absorption_threshold(dt);
    let mut level = exponential(&mut rng, clock.rate);
    let mut armed = false;
    if x0 == 0.0 {
        let s0 = draw(&mut rng);
        pending = steps(&mut rng, s0, dt);
        if pending > 0 {
            delays.push((1, pending));
        }
    }
    ys.push(x0);
    let mut r = 1;
    while ys.len() < n {
        if pending > 0 {
            ys.push(0.0);
            pending -= 1;
            continue;
        }
        ys.push(xs[r]);
        armed |= lt[r] > level;
        // the local-time estimate is smeared over (−ε, ε); the delay itself
        // starts once the path is actually at 0 on the grid scale
        if armed && (xs[r].abs() < near_zero || xs[r] * xs[r - 1] <= 0.0) {
            armed = false;
            let s = draw(&mut rng);
            let k = steps(&mut rng, s, dt);
            if k > 0 {
                delays.push((ys.len(), k));
            }
            pending = k;
            level = lt[r] + exponential(&mut rng, clock.rate);
        }
        r += 1;
    }
    let truncated = pending > 0;
    if truncated {
        if let Some(last) = delays.last_mut() {
            last.1 -= pending;
        }
    }
    Ok(DelayedSample {
        path: SamplePath::scalar(*grid, ys)?,
        delays,
        truncated,
    })
}

/// Chapman-Kolmogorov comparison from `x0`: the law of `Y_{s+t}` against
/// the law of `Y_t` restarted from independent samples of `Y_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapmanKolmogorov {
    pub tv: f64,
    pub n_paths: usize,
    /// Mass at exactly `0` in the direct and the restarted laws.
    pub atom_direct: f64,
    pub atom_restarted: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn chapman_kolmogorov(
    sigma: Sigma,
    x0: f64,
    clock: ClockSpec,
    s: f64,
    t: f64,
    dt: f64,
    n_paths: usize,
    edges: &BinEdges,
    source: RandomSource,
) -> Result<ChapmanKolmogorov> {
    if !(s > 0.0 && t > 0.0) {
        return Err(param("s, t", "must be > 0"));
    }
    let full = TimeGrid::horizon(s + t, dt)?;
    let first = TimeGrid::horizon(s, dt)?;
    let second = TimeGrid::horizon(t, dt)?;
    let direct = ensemble(n_paths, source.child(0), |src| {
        simulate_delayed(sigma, x0, clock, &full, src).map(|d| d.path.last()[0])
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let restarted = ensemble(n_paths, source.child(1), |src| {
        let mid = simulate_delayed(sigma, x0, clock, &first, src.child(0))?.path.last()[0];
        simulate_delayed(sigma, mid, clock, &second, src.child(1)).map(|d| d.path.last()[0])
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    let atom = |v: &[f64]| v.iter().filter(|x| **x == 0.0).count() as f64 / v.len() as f64;
    let (atom_direct, atom_restarted) = (atom(&direct), atom(&restarted));
    let a = EmpiricalLaw::binned(direct, edges);
    let b = EmpiricalLaw::binned(restarted, edges);
    Ok(ChapmanKolmogorov {
        tv: tv_distance(&a, &b)?,
        n_paths,
        atom_direct,
        atom_restarted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathcore::MeanEstimate;

    fn sigma() -> Sigma {
        Sigma::alpha(0.25).unwrap()
    }

    #[test]
    fn without_delays_equals_no_delay_path() {
        let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
        for x0 in [0.0, 0.4] {
            let src = RandomSource::new(3, 1);
            let d = simulate_delayed(sigma(), x0, ClockSpec::without_delays(1.0).unwrap(), &g, src).unwrap();
            let p = simulate_no_delay(sigma(), x0, &g, src).unwrap();
            assert_eq!(d.path, p);
            assert!(d.delays.is_empty());
        }
    }

    #[test]
    fn delays_are_exactly_zero() {
        let g = TimeGrid::horizon(2.0, 1e-3).unwrap();
        for seed in 0..20 {
            let d = simulate_delayed(sigma(), 0.0, ClockSpec::new(5.0).unwrap(), &g, RandomSource::new(seed, 0)).unwrap();
            for &(start, len) in &d.delays {
                assert!(d.path.values()[start..start + len].iter().all(|v| *v == 0.0));
                // the delay starts where the path is at (or next to) 0
                assert!(d.path.at(start - 1).abs() < 0.05, "{}", d.path.at(start - 1));
            }
            let total: usize = d.delays.iter().map(|x| x.1).sum();
            assert!(total + 1 <= g.n_nodes());
        }
    }

    #[test]
    fn initial_delay_mean() {
        let rate = 4.0;
        let g = TimeGrid::horizon(3.0, 1e-3).unwrap();
        let v = ensemble(4000, RandomSource::new(7, 0), |src| {
            let d = simulate_delayed(sigma(), 0.0, ClockSpec::new(rate).unwrap(), &g, src).unwrap();
            d.initial_delay()
        });
        let est = MeanEstimate::from_samples(&v);
        // truncation at the horizon is negligible: P(S_0 > 3) = e^{−12}
        assert!((est.mean - 1.0 / rate).abs() < 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn time_at_zero_positive_and_ordered() {
        let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
        let occ = |rate: f64| {
            let v = ensemble(2000, RandomSource::new(11, 0), |src| {
                simulate_delayed(sigma(), 0.0, ClockSpec::new(rate).unwrap(), &g, src)
                    .unwrap()
                    .time_at_zero()
            });
            MeanEstimate::from_samples(&v)
        };
        let slow = occ(1.0);
        let fast = occ(10.0);
        assert!(fast.mean > 0.0);
        let se = (slow.std_error.powi(2) + fast.std_error.powi(2)).sqrt();
        assert!(slow.mean - fast.mean > 3.0 * se, "{slow:?} {fast:?}");
    }

    #[test]
    fn chapman_kolmogorov_small() {
        let edges = BinEdges::uniform_with_tails(-1.2, 1.2, 12).unwrap().with_atom(0.0, 1e-12).unwrap();
        let ck = chapman_kolmogorov(sigma(), 0.0, ClockSpec::new(1.0).unwrap(), 0.5, 0.5, 1e-3, 3000, &edges, RandomSource::new(4, 0)).unwrap();
        assert!(ck.tv < 0.08, "{ck:?}");
        assert!(ck.atom_direct > 0.1);
    }

    #[test]
    fn truncation_flagged() {
        let g = TimeGrid::horizon(0.01, 1e-3).unwrap();
        let hits = (0..50)
            .filter(|&s| {
                simulate_delayed(sigma(), 0.0, ClockSpec::new(0.5).unwrap(), &g, RandomSource::new(s, 0))
                    .unwrap()
                    .truncated
            })
            .count();
        assert!(hits > 40);
    }
}
