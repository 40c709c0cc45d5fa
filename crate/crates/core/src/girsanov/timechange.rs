//! Solutions spending no time at `0`: `X̂_t = x + W(T_t)` where `T` is the
//! inverse of `S_u = ∫_0^u σ(x + W_r)^{-2} dr`.

use crate::error::{param, Result};
use crate::pathcore::{invert_increasing, normal, Rng, RandomSource, SamplePath, TimeGrid};

use super::Sigma;

/// `S` on the grid of the driving Brownian path and its inverse `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChange {
    pub s: SamplePath,
    pub t: SamplePath,
}

/// Additive functional `S_u = ∫_0^u min(σ(x0 + W_r)^{-2}, M) dr` by the
/// trapezoid rule, where the cap `M` depends on the step of `w`, and its
/// inverse on a uniform grid of the range.
pub fn additive_functional(sigma: Sigma, x0: f64, w: &SamplePath) -> Result<TimeChange> {
    if w.dim() != 1 {
        return Err(param("w", "must be scalar"));
    }
    check_sigma(sigma)?;
    let dt = w.grid().dt();
    let cap = sigma.cap(dt);
    let g: Vec<f64> = w.values().iter().map(|v| sigma.inv_sq_capped(x0 + v, cap)).collect();
    let s = crate::pathcore::quadrature::cumulative_trapezoid(&g, dt);
    let s = SamplePath::scalar(*w.grid(), s)?;
    let t = invert_increasing(&s)?;
    Ok(TimeChange { s, t })
}

fn check_sigma(sigma: Sigma) -> Result<()> {
    match sigma {
        Sigma::Constant(c) if !(c > 0.0 && c.is_finite()) => Err(param("sigma", "time change needs sigma > 0")),
        _ => Ok(()),
    }
}

/// A time-changed path together with the clock `T` at the output nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangedPath {
    pub x: SamplePath,
    pub clock: SamplePath,
}

/// Brownian motion generated cell by cell on a fixed step, with the running
/// additive functional.
struct Driver<'a> {
    rng: &'a mut Rng,
    sigma: Sigma,
    x0: f64,
    h: f64,
    sd: f64,
    cap: f64,
    /// Current cell `[u_k, u_{k+1}]`: node values of `W` and `S`.
    k: usize,
    w: (f64, f64),
    s: (f64, f64),
    g_right: f64,
}

impl<'a> Driver<'a> {
    fn new(rng: &'a mut Rng, sigma: Sigma, x0: f64, h: f64) -> Self {
        let cap = sigma.cap(h);
        let g0 = sigma.inv_sq_capped(x0, cap);
        let mut d = Driver {
            rng,
            sigma,
            x0,
            h,
            sd: h.sqrt(),
            cap,
            k: 0,
            w: (0.0, 0.0),
            s: (0.0, 0.0),
            g_right: g0,
        };
        d.extend_first();
        d
    }

    fn extend_first(&mut self) {
        let w1 = self.sd * normal(self.rng);
        let g1 = self.sigma.inv_sq_capped(self.x0 + w1, self.cap);
        self.s = (0.0, 0.5 * self.h * (self.g_right + g1));
        self.w = (0.0, w1);
        self.g_right = g1;
    }

    fn advance(&mut self) {
        let w_next = self.w.1 + self.sd * normal(self.rng);
        let g_next = self.sigma.inv_sq_capped(self.x0 + w_next, self.cap);
        let s_next = self.s.1 + 0.5 * self.h * (self.g_right + g_next);
        self.k += 1;
        self.w = (self.w.1, w_next);
        self.s = (self.s.1, s_next);
        self.g_right = g_next;
    }
}

/// Simulates `X̂` and `T` at the nodes of `grid`.
///
/// `T_t` is located on the piecewise-linear `S`, and `W(T_t)` between two
/// nodes of the driving path is drawn from the Brownian bridge conditioned on
/// the previous draw, so increments of `X̂` are exact Brownian increments
/// given the clock.
pub fn simulate_time_change(sigma: Sigma, x0: f64, grid: &TimeGrid, source: RandomSource) -> Result<TimeChangedPath> {
    check_sigma(sigma)?;
    if !x0.is_finite() {
        return Err(param("x0", "must be finite"));
    }
    let mut rng = source.rng();
    let h = grid.dt();
    let n = grid.n_nodes();
    let mut xs = Vec::with_capacity(n);
    let mut clock = Vec::with_capacity(n);
    xs.push(x0);
    clock.push(0.0);
    let mut bridge_rng = RandomSource::new(source.seed, source.stream_id).child(1).rng();
    let mut d = Driver::new(&mut rng, sigma, x0, h);
    // last drawn point inside the current cell, if any
    let mut left: Option<(f64, f64)> = None;
    for j in 1..n {
        let tau = j as f64 * h;
        while d.s.1 < tau {
            d.advance();
            left = None;
        }
        let (s0, s1) = d.s;
        let u0 = d.k as f64 * h;
        let u = u0 + h * ((tau - s0) / (s1 - s0)).clamp(0.0, 1.0);
        let u1 = u0 + h;
        let (ul, wl) = left.unwrap_or((u0, d.w.0));
        let span = u1 - ul;
        let w = if span <= 0.0 || u >= u1 {
            d.w.1
        } else {
            let frac = (u - ul) / span;
            let mean = wl + frac * (d.w.1 - wl);
            let var = (u - ul) * (u1 - u) / span;
            mean + var.max(0.0).sqrt() * normal(&mut bridge_rng)
        };
        left = Some((u, w));
        xs.push(x0 + w);
        clock.push(u);
    }
    Ok(TimeChangedPath {
        x: SamplePath::scalar(*grid, xs)?,
        clock: SamplePath::scalar(*grid, clock)?,
    })
}

/// The solution that spends no time at `0`.
pub fn simulate_no_delay(sigma: Sigma, x0: f64, grid: &TimeGrid, source: RandomSource) -> Result<SamplePath> {
    Ok(simulate_time_change(sigma, x0, grid, source)?.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathcore::{ensemble, simulate_brownian, MeanEstimate};

    #[test]
    fn constant_sigma_gives_identity_clock() {
        let g = TimeGrid::horizon(1.0, 1e-2).unwrap();
        let w = simulate_brownian(&g, 1, RandomSource::new(1, 0)).unwrap();
        let tc = additive_functional(Sigma::Constant(1.0), 0.3, &w).unwrap();
        for (k, t) in g.times().enumerate() {
            assert!((tc.s.at(k) - t).abs() < 1e-12);
        }
        let p = simulate_time_change(Sigma::Constant(1.0), 0.3, &g, RandomSource::new(2, 0)).unwrap();
        for (k, t) in g.times().enumerate() {
            assert!((p.clock.at(k) - t).abs() < 1e-9);
        }
    }

    #[test]
    fn frozen_coefficient_far_from_zero() {
        let s = Sigma::alpha(0.25).unwrap();
        let g = TimeGrid::horizon(0.01, 1e-5).unwrap();
        let w = simulate_brownian(&g, 1, RandomSource::new(4, 0)).unwrap();
        let tc = additive_functional(s, 10.0, &w).unwrap();
        let sig = s.eval(10.0);
        let frozen = 0.01 / (sig * sig);
        assert!((tc.s.last()[0] / frozen - 1.0).abs() < 0.05);
    }

    #[test]
    fn s_increasing_and_inverse_consistent() {
        let s = Sigma::alpha(0.25).unwrap();
        let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
        for seed in 0..5 {
            let w = simulate_brownian(&g, 1, RandomSource::new(seed, 0)).unwrap();
            let tc = additive_functional(s, 0.0, &w).unwrap();
            assert!(tc.s.values().windows(2).all(|p| p[1] > p[0]));
            assert!(tc.s.values().iter().all(|v| v.is_finite()));
            // S(T(v)) = v within two cells of the range grid
            let rg = tc.t.grid();
            let cell = rg.dt();
            for (k, v) in rg.times().enumerate() {
                let back = tc.s.interpolate(tc.t.at(k));
                assert!((back - v).abs() <= 2.0 * cell, "seed {seed} node {k}");
            }
        }
    }

    #[test]
    fn clock_below_identity_and_increasing() {
        let s = Sigma::alpha(0.25).unwrap();
        let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
        let p = simulate_time_change(s, 0.0, &g, RandomSource::new(9, 0)).unwrap();
        let c = p.clock.values();
        assert!(c.windows(2).all(|w| w[1] >= w[0]));
        for (k, t) in g.times().enumerate() {
            assert!(c[k] <= t + 1e-12);
        }
    }

    #[test]
    fn qv_matches_integrated_sigma() {
        let s = Sigma::alpha(0.25).unwrap();
        let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
        let pairs: Vec<(f64, f64)> = ensemble(400, RandomSource::new(5, 0), |src| {
            let p = simulate_no_delay(s, 1.0, &g, src).unwrap();
            let v = p.values();
            let qv: f64 = v.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
            let sig: Vec<f64> = v.iter().map(|x| s.eval(*x).powi(2)).collect();
            let int = *crate::pathcore::quadrature::cumulative_trapezoid(&sig, g.dt()).last().unwrap();
            (qv, int)
        });
        let qv = MeanEstimate::from_samples(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
        let int = MeanEstimate::from_samples(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        assert!((qv.mean / int.mean - 1.0).abs() < 0.05, "{qv:?} {int:?}");
    }

    #[test]
    fn leaves_zero_immediately() {
        let s = Sigma::alpha(0.25).unwrap();
        let g = TimeGrid::horizon(0.1, 1e-4).unwrap();
        let stuck = ensemble(1000, RandomSource::new(6, 0), |src| {
            let p = simulate_no_delay(s, 0.0, &g, src).unwrap();
            p.values().iter().all(|x| x.abs() < 1e-3)
        })
        .into_iter()
        .filter(|b| *b)
        .count();
        assert!(stuck < 10, "{stuck}");
    }

    #[test]
    fn rejects_zero_sigma() {
        let g = TimeGrid::horizon(1.0, 0.1).unwrap();
        assert!(simulate_no_delay(Sigma::Constant(0.0), 0.0, &g, RandomSource::new(0, 0)).is_err());
    }
}
