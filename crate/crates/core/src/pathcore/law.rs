use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing bin edges; the outermost edges may be infinite so
/// that every sample lands in a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEdges(Vec<f64>);

impl BinEdges {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(crate::error::param("edges", "need at least two edges"));
        }
        if edges.iter().any(|e| e.is_nan()) || edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(crate::error::param("edges", "must be strictly increasing"));
        }
        Ok(Self(edges))
    }

    /// `bins` equal-width bins on `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !(hi > lo) {
            return Err(crate::error::param("edges", "need bins >= 1 and hi > lo"));
        }
        let h = (hi - lo) / bins as f64;
        Self::new((0..=bins).map(|i| lo + h * i as f64).collect())
    }

    /// Uniform bins on `[lo, hi]` plus two unbounded tail bins.
    pub fn uniform_with_tails(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        let mut e = Self::uniform(lo, hi, bins)?.0;
        e.insert(0, f64::NEG_INFINITY);
        e.push(f64::INFINITY);
        Self::new(e)
    }

    /// Adds a narrow bin `[-width, width]` around `at` so that an atom there is
    /// separated from the continuous part.
    pub fn with_atom(self, at: f64, width: f64) -> Result<Self> {
        let mut e: Vec<f64> = self
            .0
            .into_iter()
            .filter(|&x| x <= at - width || x >= at + width)
            .collect();
        e.push(at - width);
        e.push(at + width);
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e.dedup();
        Self::new(e)
    }

    pub fn edges(&self) -> &[f64] {
        &self.0
    }
    pub fn n_bins(&self) -> usize {
        self.0.len() - 1
    }

    /// Bin index of `x`, half-open `[e_i, e_{i+1})` except the last bin which
    /// is closed. `None` when `x` falls outside.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let e = &self.0;
        if x.is_nan() || x < e[0] || x > e[e.len() - 1] {
            return None;
        }
        let i = e.partition_point(|&v| v <= x);
        Some(i.saturating_sub(1).min(self.n_bins() - 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: BinEdges,
    pub counts: Vec<u64>,
    /// Samples outside the edges; zero whenever the edges are unbounded.
    pub outside: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.outside
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.total().max(1) as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Associative merge of two histograms on the same edges.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.edges != other.edges {
            return Err(Error::MismatchedEdges);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.outside += other.outside;
        Ok(())
    }
}

/// Samples of a real (scalar) law, optionally binned.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    pub samples: Vec<f64>,
    pub histogram: Option<Histogram>,
}

impl EmpiricalLaw {
    pub fn new(samples: Vec<f64>) -> Self {
        Self {
            samples,
            histogram: None,
        }
    }

    pub fn binned(samples: Vec<f64>, edges: &BinEdges) -> Self {
        let mut law = Self::new(samples);
        law.bin(edges);
        law
    }

    pub fn bin(&mut self, edges: &BinEdges) -> &Histogram {
        let mut counts = vec![0u64; edges.n_bins()];
        let mut outside = 0;
        for &x in &self.samples {
            match edges.locate(x) {
                Some(i) => counts[i] += 1,
                None => outside += 1,
            }
        }
        self.histogram = Some(Histogram {
            edges: edges.clone(),
            counts,
            outside,
        });
        self.histogram.as_ref().unwrap()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }
}

/// Histogram total-variation distance `½ Σ |p_i − q_i|`, with the mass that
/// fell outside the edges treated as one extra bin.
pub fn tv_distance(a: &EmpiricalLaw, b: &EmpiricalLaw) -> Result<f64> {
    let (ha, hb) = match (&a.histogram, &b.histogram) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(crate::error::param("law", "both laws must be histogrammed")),
    };
    tv_histograms(ha, hb)
}

pub fn tv_histograms(ha: &Histogram, hb: &Histogram) -> Result<f64> {
    if ha.edges != hb.edges {
        return Err(Error::MismatchedEdges);
    }
    let na = ha.total().max(1) as f64;
    let nb = hb.total().max(1) as f64;
    let mut s: f64 = ha
        .counts
        .iter()
        .zip(&hb.counts)
        .map(|(&p, &q)| (p as f64 / na - q as f64 / nb).abs())
        .sum();
    s += (ha.outside as f64 / na - hb.outside as f64 / nb).abs();
    Ok((0.5 * s).clamp(0.0, 1.0))
}
