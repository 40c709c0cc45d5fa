//! Time integrals along paths and deterministic quadrature rules.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::pathcore::SamplePath;

/// Trapezoidal approximation of `∫ integrand(ξ_s) ds` over the whole grid.
pub fn path_quadrature<F>(path: &SamplePath, integrand: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let running = running_integral(path, integrand)?;
    Ok(*running.last().unwrap())
}

/// Cumulative trapezoidal integral at every node (first entry is 0).
pub fn running_integral<F>(path: &SamplePath, integrand: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let dt = path.grid().dt();
    let mut out = Vec::with_capacity(path.len());
    let mut prev = integrand(path.node(0));
    if !prev.is_finite() {
        return Err(Error::NonFiniteIntegrand { index: 0 });
    }
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..path.len() {
        let cur = integrand(path.node(k));
        if !cur.is_finite() {
            return Err(Error::NonFiniteIntegrand { index: k });
        }
        acc += 0.5 * dt * (prev + cur);
        out.push(acc);
        prev = cur;
    }
    Ok(out)
}

/// Cumulative trapezoid over equally spaced samples.
pub fn cumulative_trapezoid(values: &[f64], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 16-point rule.
    pub fn sixteen() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    /// Integrates over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(c + h * x))
            .sum::<f64>()
            * h
    }

    /// Mapped nodes and weights on `[a, b]`.
    pub fn on(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(x, w)| (c + h * x, w * h))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite 16-point Gauss-Legendre over `[a, b]` with panels no wider than
/// `max_panel`, after splitting at `breaks` (kinks of the integrand).
pub fn composite<F: FnMut(f64) -> f64>(a: f64, b: f64, max_panel: f64, breaks: &[f64], mut f: F) -> f64 {
    if b <= a {
        return 0.0;
    }
    let mut cuts: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let rule = GaussLegendre::sixteen();
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let panels = ((hi - lo) / max_panel).ceil().max(1.0) as usize;
        let h = (hi - lo) / panels as f64;
        for p in 0..panels {
            let l = lo + h * p as f64;
            total += rule.integrate(l, l + h, &mut f);
        }
    }
    total
}

/// Composite rule with a doubling check: refines until two successive panel
/// widths agree to `tol`, or fails.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, breaks: &[f64], tol: f64, mut f: F) -> Result<f64> {
    let mut panel = ((b - a) / 4.0).max(1e-3);
    let mut prev = composite(a, b, panel, breaks, &mut f);
    for _ in 0..14 {
        panel /= 2.0;
        let cur = composite(a, b, panel, breaks, &mut f);
        if (cur - prev).abs() <= tol * (1.0 + cur.abs()) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::Quadrature(format!("no convergence on [{a}, {b}] to {tol:e}")))
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathcore::TimeGrid;

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let rule = GaussLegendre::new(5);
        // exact for degree <= 9
        let v = rule.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-10);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sixteen_point_weights() {
        let r = GaussLegendre::sixteen();
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        assert!((r.integrate(0.0, PI, f64::sin) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn composite_handles_kinks() {
        let v = composite(-1.0, 2.0, 0.5, &[0.0], |x: f64| x.abs());
        assert!((v - 2.5).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_constant_and_linear() {
        let g = TimeGrid::horizon(1.0, 0.1).unwrap();
        let p = SamplePath::scalar(g, g.times().collect()).unwrap();
        assert!((path_quadrature(&p, |_| 1.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((path_quadrature(&p, |x| x[0]).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_reports_bad_node() {
        let g = TimeGrid::horizon(1.0, 0.25).unwrap();
        let p = SamplePath::scalar(g, vec![1.0, 0.5, 0.0, 0.5, 1.0]).unwrap();
        let err = path_quadrature(&p, |x| 1.0 / x[0]).unwrap_err();
        assert_eq!(err, Error::NonFiniteIntegrand { index: 2 });
    }

    #[test]
    fn normal_cdf_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-10, "{}", normal_cdf(1.959963984540054));
        assert!((2.0 * normal_cdf(0.25) - 1.0 - 0.19741265136584).abs() < 1e-10);
    }
}
