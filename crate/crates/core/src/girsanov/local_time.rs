use crate::error::{param, Result};
use crate::pathcore::SamplePath;

/// Below this many contributing increments the estimate is flagged.
const MIN_CONTRIBUTIONS: usize = 100;

/// Running local time at a level.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalTime {
    pub path: SamplePath,
    pub epsilon: f64,
    /// Number of increments that started within `epsilon` of the level.
    pub contributing: usize,
}

impl LocalTime {
    pub fn is_reliable(&self) -> bool {
        self.contributing >= MIN_CONTRIBUTIONS
    }

    pub fn warning(&self) -> Option<String> {
        (!self.is_reliable()).then(|| {
            format!(
                "local time from only {} increments within {:e} of the level",
                self.contributing, self.epsilon
            )
        })
    }

    pub fn total(&self) -> f64 {
        self.path.last()[0]
    }
}

/// `10 ×` the mean absolute step of the path.
pub fn default_epsilon(path: &SamplePath) -> f64 {
    let v = path.values();
    let n = (v.len() - 1).max(1);
    10.0 * v.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / n as f64
}

/// `L(t) ≈ (1/2ε) Σ 1{|X_{t_j} − level| < ε} (X_{t_{j+1}} − X_{t_j})²`.
pub fn local_time_estimate(path: &SamplePath, level: f64, epsilon: f64) -> Result<LocalTime> {
    if path.dim() != 1 {
        return Err(param("path", "must be scalar"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(param("epsilon", "must be positive"));
    }
    let v = path.values();
    let mut out = Vec::with_capacity(v.len());
    let mut acc = 0.0;
    let mut contributing = 0;
    out.push(0.0);
    let scale = 0.5 / epsilon;
    for w in v.windows(2) {
        if (w[0] - level).abs() < epsilon {
            acc += scale * (w[1] - w[0]).powi(2);
            contributing += 1;
        }
        out.push(acc);
    }
    Ok(LocalTime {
        path: SamplePath::scalar(*path.grid(), out)?,
        epsilon,
        contributing,
    })
}

/// Time spent within `epsilon` of `level` (left-point rule over the steps).
pub fn occupation(path: &SamplePath, level: f64, epsilon: f64) -> f64 {
    let v = path.values();
    path.grid().dt() * v[..v.len() - 1].iter().filter(|x| (**x - level).abs() < epsilon).count() as f64
}
