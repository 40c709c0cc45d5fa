use crate::error::{Error, Result};
use crate::pathcore::{SamplePath, TimeGrid};

/// Generalized inverse of a strictly increasing scalar path, sampled on a
/// uniform grid of its range with the same number of steps.
pub fn invert_increasing(path: &SamplePath) -> Result<SamplePath> {
    check_increasing(path)?;
    let lo = path.at(0);
    let hi = path.at(path.len() - 1);
    let n = path.grid().n_steps();
    let grid = TimeGrid::new(lo, (hi - lo) / n as f64, n)?;
    invert_on(path, grid)
}

/// Inverse sampled on a caller-supplied grid of the range. Grid nodes beyond
/// the range of `path` are clamped to its final time.
pub fn invert_on(path: &SamplePath, range_grid: TimeGrid) -> Result<SamplePath> {
    check_increasing(path)?;
    let times = path.grid();
    let vals = path.values();
    let mut out = Vec::with_capacity(range_grid.n_nodes());
    let mut k = 0usize;
    let last = vals.len() - 1;
    for v in range_grid.times() {
        if v <= vals[0] {
            out.push(times.time(0));
            continue;
        }
        if v >= vals[last] {
            out.push(times.time(last));
            continue;
        }
        while k + 1 < last && vals[k + 1] < v {
            k += 1;
        }
        let w = (v - vals[k]) / (vals[k + 1] - vals[k]);
        out.push(times.time(k) + w * times.dt());
    }
    SamplePath::scalar(range_grid, out)
}

fn check_increasing(path: &SamplePath) -> Result<()> {
    if path.dim() != 1 {
        return Err(crate::error::param("path", "inversion needs a scalar path"));
    }
    let v = path.values();
    match v.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::NotIncreasing { index: i + 1 }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(dt: f64, n: usize, f: impl Fn(f64) -> f64) -> SamplePath {
        let g = TimeGrid::new(0.0, dt, n).unwrap();
        SamplePath::scalar(g, g.times().map(f).collect()).unwrap()
    }

    #[test]
    fn linear_inverse() {
        let s = path(0.1, 10, |t| 2.0 * t);
        let inv = invert_increasing(&s).unwrap();
        assert!((inv.grid().end() - 2.0).abs() < 1e-12);
        for k in 0..inv.len() {
            let t = inv.grid().time(k);
            assert!((inv.at(k) - t / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn square_inverse_within_one_cell() {
        let s = path(1e-3, 1000, |t| t * t);
        let inv = invert_increasing(&s).unwrap();
        let cell = inv.grid().dt();
        let err = (0..inv.len())
            .map(|k| (inv.at(k) - inv.grid().time(k).sqrt()).abs())
            .fold(0.0, f64::max);
        assert!(err <= cell, "err {err} cell {cell}");
    }

    #[test]
    fn rejects_non_monotone() {
        let g = TimeGrid::new(0.0, 1.0, 4).unwrap();
        let p = SamplePath::scalar(g, vec![0.0, 1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(invert_increasing(&p).unwrap_err(), Error::NotIncreasing { index: 3 });
    }
}
