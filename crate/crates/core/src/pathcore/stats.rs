//! Sample statistics and the martingale hypothesis tests.
//!
//! The increment test regresses `M_t − M_s` on statistics of the path prefix
//! up to `s`. For a martingale every coefficient is zero, so each z-score is
//! approximately standard normal. This is a necessary-condition test: it
//! only sees the finitely many predictors it is given.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std_error: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        }
    }

    /// z-score of the mean against `target`; infinite if the error is zero
    /// and the mean differs.
    pub fn z(&self, target: f64) -> f64 {
        let d = self.mean - target;
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            d.signum() * f64::INFINITY
        }
    }
}

/// One JSON summary record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub statistic: String,
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl EnsembleSummary {
    pub fn new(statistic: impl Into<String>, est: MeanEstimate, seed: u64) -> Self {
        Self {
            statistic: statistic.into(),
            value: est.mean,
            std_error: est.std_error,
            n_samples: est.n,
            seed,
        }
    }
}

/// Result of the increment regression at one `(s, t)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub s: usize,
    pub t: usize,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    /// Empirical mean quadratic variation over `(s, t]` divided by the
    /// theoretical value, when one was supplied.
    pub qv_ratio: Option<f64>,
    pub qv_ratio_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub n_paths: usize,
    pub pairs: Vec<PairReport>,
}

impl MartingaleReport {
    pub fn max_abs_z(&self) -> f64 {
        self.pairs
            .iter()
            .flat_map(|p| p.z_scores.iter())
            .fold(0.0, |m, z| m.max(z.abs()))
    }

    pub fn all_within(&self, z_crit: f64) -> bool {
        self.max_abs_z() <= z_crit
    }

    pub fn qv_ratios(&self) -> Vec<f64> {
        self.pairs.iter().filter_map(|p| p.qv_ratio).collect()
    }
}

/// Runs the increment regression.
///
/// * `series[i]` is the functional `M` of path `i` evaluated at every node.
/// * `predictors(i, s)` returns the prefix statistics of path `i` at node `s`
///   (include a constant to test the unconditional mean).
/// * `theoretical_qv(s, t)` optionally supplies `[M]_t − [M]_s`.
pub fn martingale_increment_test<P, Q>(
    series: &[Vec<f64>],
    predictors: P,
    pairs: &[(usize, usize)],
    theoretical_qv: Option<Q>,
) -> Result<MartingaleReport>
where
    P: Fn(usize, usize) -> Vec<f64>,
    Q: Fn(usize, usize) -> f64,
{
    const MIN_PATHS: usize = 100;
    let n = series.len();
    if n < MIN_PATHS {
        return Err(Error::EnsembleTooSmall { got: n, need: MIN_PATHS });
    }
    let mut out = Vec::with_capacity(pairs.len());
    for &(s, t) in pairs {
        if s >= t {
            return Err(crate::error::param("pairs", format!("need s < t, got ({s}, {t})")));
        }
        let rows: Vec<Vec<f64>> = (0..n).map(|i| predictors(i, s)).collect();
        let p = rows[0].len();
        let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
        let y = DVector::from_fn(n, |i, _| series[i][t] - series[i][s]);
        let (beta, se) = ols_robust(&x, &y).ok_or(Error::DegeneratePredictors { s, t })?;
        let z: Vec<f64> = beta
            .iter()
            .zip(&se)
            .map(|(b, e)| if *e > 0.0 { b / e } else if *b == 0.0 { 0.0 } else { f64::INFINITY })
            .collect();

        let (qv_ratio, qv_ratio_se) = match &theoretical_qv {
            Some(q) => {
                let theory = q(s, t);
                let per_path: Vec<f64> = series
                    .iter()
                    .map(|m| m[s..=t].windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>())
                    .collect();
                let est = MeanEstimate::from_samples(&per_path);
                (Some(est.mean / theory), Some(est.std_error / theory.abs()))
            }
            None => (None, None),
        };
        out.push(PairReport {
            s,
            t,
            coefficients: beta,
            std_errors: se,
            z_scores: z,
            qv_ratio,
            qv_ratio_se,
        });
    }
    Ok(MartingaleReport { n_paths: n, pairs: out })
}

/// OLS with heteroskedasticity-consistent (HC1) standard errors.
fn ols_robust(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let (n, p) = x.shape();
    if n <= p {
        return None;
    }
    // Rescale columns so the conditioning check is scale-free.
    let scales: Vec<f64> = (0..p)
        .map(|j| {
            let c = x.column(j);
            (c.dot(&c) / n as f64).sqrt()
        })
        .collect();
    if scales.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return None;
    }
    let xs = DMatrix::from_fn(n, p, |i, j| x[(i, j)] / scales[j]);
    let xtx = xs.transpose() * &xs;
    let eig = xtx.clone().symmetric_eigenvalues();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for e in eig.iter() {
        lo = lo.min(*e);
        hi = hi.max(*e);
    }
    if !(lo > 1e-10 * hi) {
        return None;
    }
    let inv = xtx.try_inverse()?;
    let beta_s = &inv * (xs.transpose() * y);
    let resid = y - &xs * &beta_s;
    let mut meat = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let r2 = resid[i] * resid[i];
        for a in 0..p {
            for b in 0..p {
                meat[(a, b)] += xs[(i, a)] * xs[(i, b)] * r2;
            }
        }
    }
    let cov = &inv * meat * &inv * (n as f64 / (n - p) as f64);
    let beta = (0..p).map(|j| beta_s[j] / scales[j]).collect();
    let se = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt() / scales[j]).collect();
    Some((beta, se))
}

/// One-sided check that `E[h · ΔZ] ≥ 0` for nonnegative weights `h`. Returns
/// the violation z-score `−mean/SE` (large positive values reject).
pub fn one_sided_violation(weighted_increments: &[f64]) -> (MeanEstimate, f64) {
    let est = MeanEstimate::from_samples(weighted_increments);
    (est, -est.z(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_estimate_basic() {
        let e = MeanEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.std_error - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn ols_recovers_exact_line() {
        let n = 200;
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let y = DVector::from_fn(n, |i, _| 3.0 + 0.5 * i as f64 + if i % 2 == 0 { 0.1 } else { -0.1 });
        let (b, se) = ols_robust(&x, &y).unwrap();
        assert!((b[0] - 3.0).abs() < 0.05);
        assert!((b[1] - 0.5).abs() < 1e-3);
        assert!(se.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn degenerate_predictors_reported() {
        let series: Vec<Vec<f64>> = (0..150).map(|i| vec![0.0, i as f64]).collect();
        let err = martingale_increment_test(&series, |_, _| vec![1.0, 2.0], &[(0, 1)], None::<fn(usize, usize) -> f64>)
            .unwrap_err();
        assert_eq!(err, Error::DegeneratePredictors { s: 0, t: 1 });
    }

    #[test]
    fn small_ensemble_rejected() {
        let series = vec![vec![0.0, 1.0]; 10];
        assert!(matches!(
            martingale_increment_test(&series, |_, _| vec![1.0], &[(0, 1)], None::<fn(usize, usize) -> f64>),
            Err(Error::EnsembleTooSmall { .. })
        ));
    }
}
