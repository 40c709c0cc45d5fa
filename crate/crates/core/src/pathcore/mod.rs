//! Shared numerical substrate: grids, paths, random streams, quadrature,
//! inversion of increasing paths, empirical laws and martingale tests.

mod grid;
mod invert;
mod law;
pub mod quadrature;
mod rng;
mod stats;

pub use grid::{SamplePath, TimeGrid};
pub use invert::{invert_increasing, invert_on};
pub use law::{tv_distance, tv_histograms, BinEdges, EmpiricalLaw, Histogram};
pub use quadrature::{path_quadrature, running_integral};
pub use rng::{exponential, normal, RandomSource, Rng};
pub use stats::{
    martingale_increment_test, one_sided_violation, EnsembleSummary, MartingaleReport, MeanEstimate, PairReport,
};

use rayon::prelude::*;

/// Standard Brownian motion in `dim` coordinates started at the origin.
pub fn simulate_brownian(grid: &TimeGrid, dim: usize, source: RandomSource) -> crate::Result<SamplePath> {
    let mut rng = source.rng();
    let sd = grid.dt().sqrt();
    let mut values = vec![0.0; grid.n_nodes() * dim];
    for k in 1..grid.n_nodes() {
        for j in 0..dim {
            values[k * dim + j] = values[(k - 1) * dim + j] + sd * normal(&mut rng);
        }
    }
    SamplePath::new(*grid, dim, values)
}

/// Runs `f` once per trajectory with child stream `i` of `source`, in
/// parallel, returning results in trajectory order.
pub fn ensemble<T, F>(n: usize, source: RandomSource, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(RandomSource) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(|i| f(source.child(i))).collect()
}
