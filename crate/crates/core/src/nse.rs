//! Spectral Galerkin stochastic Navier-Stokes on the 3-torus with a cut-off
//! on the nonlinearity.
//!
//! Fields are mean-zero, divergence-free and real, stored as complex
//! coefficients `u_k ∈ ℂ³` on the lattice `0 < |k|_∞ ≤ N`. The inner product
//! is `⟨u, v⟩ = Σ_k Re(u_k · conj v_k)`. Real coordinates pair each `k` in the
//! positive half lattice with two unit vectors `e_1(k), e_2(k) ⊥ k` and
//! read `√2 Re(u_k·e_j)`, `√2 Im(u_k·e_j)`; they form an orthonormal basis
//! in which the noise covariance is diagonal with entries `q_k`.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::pathcore::{normal, RandomSource, Rng, SamplePath, TimeGrid};
use crate::semigroup::Dynamics;

type C = Complex64;
type Vec3 = [C; 3];

const ZERO3: Vec3 = [C::new(0.0, 0.0); 3];

fn dot_kc(k: [f64; 3], v: &Vec3) -> C {
    v[0] * k[0] + v[1] * k[1] + v[2] * k[2]
}

fn kf(k: [i32; 3]) -> [f64; 3] {
    [k[0] as f64, k[1] as f64, k[2] as f64]
}

fn norm2(k: [i32; 3]) -> f64 {
    (k[0] * k[0] + k[1] * k[1] + k[2] * k[2]) as f64
}

/// First nonzero component positive.
fn is_positive(k: [i32; 3]) -> bool {
    k.iter().find(|c| **c != 0).is_some_and(|c| *c > 0)
}

/// Wavevectors `0 < |k|_∞ ≤ N` with lookup tables, divergence-free bases and
/// the triads of the convolution.
#[derive(Debug, Clone)]
pub struct WaveLattice {
    n: usize,
    modes: Vec<[i32; 3]>,
    table: Vec<usize>,
    conj: Vec<usize>,
    half: Vec<usize>,
    basis: Vec<[[f64; 3]; 2]>,
    /// `(k, p, q)` with `p + q = k`, `k` in the positive half, grouped by `k`.
    triads: Vec<(u32, u32, u32)>,
}

impl WaveLattice {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n > 8 {
            return Err(param("N", "must lie in 1..=8"));
        }
        let ni = n as i32;
        let side = 2 * n + 1;
        let mut table = vec![usize::MAX; side * side * side];
        let mut modes = Vec::new();
        for a in -ni..=ni {
            for b in -ni..=ni {
                for c in -ni..=ni {
                    if (a, b, c) != (0, 0, 0) {
                        let k = [a, b, c];
                        table[Self::slot(n, k)] = modes.len();
                        modes.push(k);
                    }
                }
            }
        }
        let conj = modes.iter().map(|k| table[Self::slot(n, [-k[0], -k[1], -k[2]])]).collect();
        let half: Vec<usize> = (0..modes.len()).filter(|&i| is_positive(modes[i])).collect();
        let basis = modes
            .iter()
            .map(|&k| {
                let r = if is_positive(k) { k } else { [-k[0], -k[1], -k[2]] };
                polarizations(kf(r))
            })
            .collect();
        let mut lat = Self {
            n,
            modes,
            table,
            conj,
            half,
            basis,
            triads: Vec::new(),
        };
        let mut triads = Vec::new();
        for &ki in &lat.half {
            let k = lat.modes[ki];
            for (pi, &p) in lat.modes.iter().enumerate() {
                if let Some(qi) = lat.index([k[0] - p[0], k[1] - p[1], k[2] - p[2]]) {
                    triads.push((ki as u32, pi as u32, qi as u32));
                }
            }
        }
        lat.triads = triads;
        Ok(lat)
    }

    fn slot(n: usize, k: [i32; 3]) -> usize {
        let side = 2 * n + 1;
        let o = n as i32;
        ((k[0] + o) as usize * side + (k[1] + o) as usize) * side + (k[2] + o) as usize
    }

    pub fn cutoff(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[[i32; 3]] {
        &self.modes
    }

    pub fn index(&self, k: [i32; 3]) -> Option<usize> {
        let n = self.n as i32;
        if k.iter().any(|c| c.abs() > n) || k == [0, 0, 0] {
            return None;
        }
        Some(self.table[Self::slot(self.n, k)])
    }

    /// Index of `−k`.
    pub fn conj_index(&self, i: usize) -> usize {
        self.conj[i]
    }

    /// Indices of the positive half lattice.
    pub fn half(&self) -> &[usize] {
        &self.half
    }

    /// Orthonormal pair spanning `k^⊥`, shared by `k` and `−k`.
    pub fn polarization(&self, i: usize) -> [[f64; 3]; 2] {
        self.basis[i]
    }

    /// Number of real coordinates, `2·|lattice|`.
    pub fn real_dim(&self) -> usize {
        2 * self.modes.len()
    }

    pub fn n_triads(&self) -> usize {
        self.triads.len()
    }
}

fn polarizations(k: [f64; 3]) -> [[f64; 3]; 2] {
    let cross = |a: [f64; 3], b: [f64; 3]| [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let unit = |a: [f64; 3]| {
        let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
        [a[0] / n, a[1] / n, a[2] / n]
    };
    let axis = (0..3)
        .min_by(|&a, &b| k[a].abs().partial_cmp(&k[b].abs()).unwrap())
        .unwrap();
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let e1 = unit(cross(k, e));
    let e2 = unit(cross(k, e1));
    [e1, e2]
}

/// Complex coefficients on a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralField {
    n: usize,
    coeffs: Vec<Vec3>,
}

impl SpectralField {
    pub fn zeros(lat: &WaveLattice) -> Self {
        Self {
            n: lat.n,
            coeffs: vec![ZERO3; lat.len()],
        }
    }

    /// Raw coefficients; no invariant is checked.
    pub fn from_coefficients(lat: &WaveLattice, coeffs: Vec<[C; 3]>) -> Result<Self> {
        if coeffs.len() != lat.len() {
            return Err(param("coeffs", format!("expected {} modes, got {}", lat.len(), coeffs.len())));
        }
        Ok(Self { n: lat.n, coeffs })
    }

    /// Field from its real coordinates (ordered by half-lattice mode, then
    /// polarization, then real/imaginary part).
    pub fn from_real_coords(lat: &WaveLattice, x: &[f64]) -> Result<Self> {
        if x.len() != lat.real_dim() {
            return Err(param("coords", format!("expected {} coordinates", lat.real_dim())));
        }
        let mut u = Self::zeros(lat);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for (h, &i) in lat.half.iter().enumerate() {
            let mut v = ZERO3;
            for j in 0..2 {
                let z = C::new(x[4 * h + 2 * j], x[4 * h + 2 * j + 1]) * s;
                let e = lat.basis[i][j];
                for d in 0..3 {
                    v[d] += z * e[d];
                }
            }
            u.coeffs[i] = v;
            u.coeffs[lat.conj[i]] = v.map(|c| c.conj());
        }
        Ok(u)
    }

    pub fn real_coords(&self, lat: &WaveLattice) -> Vec<f64> {
        let r = std::f64::consts::SQRT_2;
        let mut out = Vec::with_capacity(lat.real_dim());
        for &i in &lat.half {
            for j in 0..2 {
                let z = dot_kc(lat.basis[i][j], &self.coeffs[i]) * r;
                out.push(z.re);
                out.push(z.im);
            }
        }
        out
    }

    /// Unit vector of one real coordinate.
    pub fn coordinate(lat: &WaveLattice, index: usize) -> Result<Self> {
        let mut x = vec![0.0; lat.real_dim()];
        *x.get_mut(index).ok_or_else(|| param("index", "out of range"))? = 1.0;
        Self::from_real_coords(lat, &x)
    }

    /// Independent centred Gaussian real coordinates with standard deviation
    /// `amplitude(|k|²)`.
    pub fn random(lat: &WaveLattice, amplitude: impl Fn(f64) -> f64, rng: &mut Rng) -> Self {
        let mut x = Vec::with_capacity(lat.real_dim());
        for &i in &lat.half {
            let a = amplitude(norm2(lat.modes[i]));
            for _ in 0..4 {
                x.push(a * normal(rng));
            }
        }
        Self::from_real_coords(lat, &x).expect("dimension matches")
    }

    pub fn cutoff(&self) -> usize {
        self.n
    }

    pub fn coefficients(&self) -> &[Vec3] {
        &self.coeffs
    }

    pub fn coefficient(&self, lat: &WaveLattice, k: [i32; 3]) -> Option<Vec3> {
        lat.index(k).map(|i| self.coeffs[i])
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (0..3).map(|d| (a[d] * b[d].conj()).re).sum::<f64>())
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            n: self.n,
            coeffs: self.coeffs.iter().map(|v| v.map(|c| c * a)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
                .collect(),
        }
    }

    /// `max_k |k·u_k|`.
    pub fn divergence_defect(&self, lat: &WaveLattice) -> f64 {
        self.coeffs
            .iter()
            .zip(&lat.modes)
            .map(|(v, k)| dot_kc(kf(*k), v).norm())
            .fold(0.0, f64::max)
    }

    /// `max_k |u_{−k} − conj u_k|`.
    pub fn reality_defect(&self, lat: &WaveLattice) -> f64 {
        (0..lat.len())
            .map(|i| {
                let (a, b) = (self.coeffs[i], self.coeffs[lat.conj[i]]);
                (0..3).map(|d| (b[d] - a[d].conj()).norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.iter().all(|c| c.re.is_finite() && c.im.is_finite()))
    }
}

/// `v_k ↦ v_k − k(k·v_k)/|k|²`.
pub fn leray_project(lat: &WaveLattice, v: &SpectralField) -> SpectralField {
    let mut out = v.clone();
    for (c, k) in out.coeffs.iter_mut().zip(&lat.modes) {
        let kk = kf(*k);
        let s = dot_kc(kk, c) / norm2(*k);
        for d in 0..3 {
            c[d] -= s * kk[d];
        }
    }
    out
}

/// Mode-wise multiplication by `|k|^{2θ}`.
pub fn stokes_apply(lat: &WaveLattice, u: &SpectralField, theta: f64) -> SpectralField {
    let mut out = u.clone();
    for (c, k) in out.coeffs.iter_mut().zip(&lat.modes) {
        let f = norm2(*k).powf(theta);
        *c = c.map(|z| z * f);
    }
    out
}

/// `Σ_k |k|^{4θ}|u_k|² = ‖A^θ u‖²`.
pub fn stokes_norm_sq(lat: &WaveLattice, u: &SpectralField, theta: f64) -> f64 {
    u.coeffs
        .iter()
        .zip(&lat.modes)
        .map(|(c, k)| norm2(*k).powf(2.0 * theta) * c.iter().map(|z| z.norm_sqr()).sum::<f64>())
        .sum()
}

/// `θ = (α0 + 1)/2` for `α0 < 1/2`, `α0 + 1/4` otherwise.
pub fn sobolev_theta(alpha0: f64) -> f64 {
    if alpha0 < 0.5 {
        0.5 * (alpha0 + 1.0)
    } else {
        alpha0 + 0.25
    }
}

/// `‖A^θ u‖` with `θ = θ(α0)`.
pub fn sobolev_norm(lat: &WaveLattice, u: &SpectralField, alpha0: f64) -> f64 {
    stokes_norm_sq(lat, u, sobolev_theta(alpha0)).sqrt()
}

/// Leray projection of `Σ_{p+q=k} i(u_p·q) v_q` on the lattice.
pub fn nonlinearity_b(lat: &WaveLattice, u: &SpectralField, v: &SpectralField) -> SpectralField {
    let mut out = SpectralField::zeros(lat);
    for &(k, p, q) in &lat.triads {
        let qv = kf(lat.modes[q as usize]);
        let a = dot_kc(qv, &u.coeffs[p as usize]) * C::i();
        let vq = &v.coeffs[q as usize];
        let o = &mut out.coeffs[k as usize];
        for d in 0..3 {
            o[d] += a * vq[d];
        }
    }
    for &i in &lat.half {
        out.coeffs[lat.conj[i]] = out.coeffs[i].map(|c| c.conj());
    }
    leray_project(lat, &out)
}

/// `⟨B(u, v), w⟩` summing only over the modes where `v` is nonzero.
pub fn b_inner(lat: &WaveLattice, u: &SpectralField, v: &SpectralField, w: &SpectralField) -> f64 {
    let mut acc = 0.0;
    for (qi, vq) in v.coeffs.iter().enumerate() {
        if vq.iter().all(|c| *c == C::new(0.0, 0.0)) {
            continue;
        }
        let q = lat.modes[qi];
        let qv = kf(q);
        for (pi, p) in lat.modes.iter().enumerate() {
            if let Some(ki) = lat.index([p[0] + q[0], p[1] + q[1], p[2] + q[2]]) {
                let a = dot_kc(qv, &u.coeffs[pi]) * C::i();
                let wk = &w.coeffs[ki];
                let s: C = (0..3).map(|d| vq[d] * wk[d].conj()).sum();
                acc += (a * s).re;
            }
        }
    }
    acc
}

/// Diagonal noise covariance in the real coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub alpha0: f64,
    /// `q_k` per lattice index.
    q: Vec<f64>,
}

impl NoiseSpec {
    /// `q_k = |k|^{−(3+4α0)}`, so that `|k|^{3/2+2α0}√q_k = 1`.
    pub fn new(lat: &WaveLattice, alpha0: f64) -> Result<Self> {
        if !(alpha0 > 1.0 / 6.0 && alpha0.is_finite()) {
            return Err(Error::Domain {
                value: alpha0,
                domain: "(1/6, inf)",
            });
        }
        let s = 1.5 + 2.0 * alpha0;
        let q = lat.modes.iter().map(|k| norm2(*k).powf(-s)).collect();
        Ok(Self { alpha0, q })
    }

    /// No noise (test hook).
    pub fn zero(lat: &WaveLattice, alpha0: f64) -> Self {
        Self {
            alpha0,
            q: vec![0.0; lat.len()],
        }
    }

    /// Explicit per-mode amplitudes (test hook); must be symmetric in `±k`.
    pub fn from_amplitudes(lat: &WaveLattice, alpha0: f64, q: Vec<f64>) -> Result<Self> {
        if q.len() != lat.len() {
            return Err(param("q", "one amplitude per lattice mode"));
        }
        if q.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(param("q", "amplitudes must be finite and nonnegative"));
        }
        if (0..q.len()).any(|i| q[i] != q[lat.conj[i]]) {
            return Err(param("q", "amplitudes must agree on k and -k"));
        }
        Ok(Self { alpha0, q })
    }

    pub fn amplitude(&self, i: usize) -> f64 {
        self.q[i]
    }

    /// `Σ_k 2 q_k` over the lattice.
    pub fn truncated_trace(&self) -> f64 {
        2.0 * self.q.iter().sum::<f64>()
    }

    /// `(min_k, max_k)` of `|k|^{3/2+2α0}√q_k`.
    pub fn spectral_condition(&self, lat: &WaveLattice) -> (f64, f64) {
        let s = 0.75 + self.alpha0;
        lat.modes.iter().zip(&self.q).fold((f64::INFINITY, 0.0f64), |(lo, hi), (k, q)| {
            let v = norm2(*k).powf(s) * q.sqrt();
            (lo.min(v), hi.max(v))
        })
    }

    /// `⟨Q φ, φ⟩ = Σ_k q_k |φ_k|²`.
    pub fn quadratic_form(&self, phi: &SpectralField) -> f64 {
        phi.coeffs
            .iter()
            .zip(&self.q)
            .map(|(c, q)| q * c.iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }
}

/// `Tr Q = Σ_{k ∈ ℤ³∖0} 2|k|^{−(3+4α0)}`: cube sums at two sizes with the
/// `M^{−4α0}` tail removed by extrapolation.
pub fn full_trace(alpha0: f64) -> Result<f64> {
    if !(alpha0 > 1.0 / 6.0 && alpha0.is_finite()) {
        return Err(Error::Domain {
            value: alpha0,
            domain: "(1/6, inf)",
        });
    }
    let s = 1.5 + 2.0 * alpha0;
    let cube = |m: i32| {
        let mut acc = 0.0;
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    if (a, b, c) != (0, 0, 0) {
                        acc += ((a * a + b * b + c * c) as f64).powf(-s);
                    }
                }
            }
        }
        2.0 * acc
    };
    let (m, r) = (48, 2f64.powf(4.0 * alpha0));
    let (a, b) = (cube(m), cube(2 * m));
    Ok((r * b - a) / (r - 1.0))
}

/// `χ(r) = 1` on `[0, 1]`, `0` on `[2, ∞)` and the quintic smoothstep between.
pub fn chi(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let s = r - 1.0;
        1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub r: f64,
}

impl CutoffSpec {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(param("R", "must be positive"));
        }
        Ok(Self { r })
    }

    /// `χ(‖u‖²_𝒲 / R)` given `‖u‖²_𝒲`.
    pub fn weight(&self, w_norm_sq: f64) -> f64 {
        if self.r.is_infinite() {
            1.0
        } else {
            chi(w_norm_sq / self.r)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GalerkinParams {
    pub nu: f64,
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
}

impl GalerkinParams {
    pub fn new(nu: f64, n: usize, dt: f64, horizon: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(param("nu", "must be positive"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(param("dt", "must be positive"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(param("horizon", "must be positive"));
        }
        if nu * (n * n) as f64 * dt > 1.0 {
            return Err(param("dt", format!("nu*N^2*dt = {} exceeds 1", nu * (n * n) as f64 * dt)));
        }
        Ok(Self { nu, n, dt, horizon })
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::horizon(self.horizon, self.dt)
    }
}

/// The truncated system `du + νAu dt + χ B(u, u) dt = Q^{1/2} dW`.
#[derive(Debug, Clone)]
pub struct NseSystem {
    pub lattice: Arc<WaveLattice>,
    pub nu: f64,
    pub alpha0: f64,
    pub noise: NoiseSpec,
    /// `None` runs the uncut system.
    pub cutoff: Option<CutoffSpec>,
    /// `false` switches the nonlinearity off (test hook).
    pub nonlinear: bool,
}

impl NseSystem {
    pub fn new(n: usize, nu: f64, alpha0: f64, cutoff: Option<CutoffSpec>) -> Result<Self> {
        let lattice = Arc::new(WaveLattice::new(n)?);
        let noise = NoiseSpec::new(&lattice, alpha0)?;
        if !(nu > 0.0) {
            return Err(param("nu", "must be positive"));
        }
        Ok(Self {
            lattice,
            nu,
            alpha0,
            noise,
            cutoff,
            nonlinear: true,
        })
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = noise;
        self
    }

    pub fn linear(mut self) -> Self {
        self.nonlinear = false;
        self
    }

    /// `‖u‖²_𝒲`.
    pub fn w_norm_sq(&self, u: &SpectralField) -> f64 {
        stokes_norm_sq(&self.lattice, u, sobolev_theta(self.alpha0))
    }

    /// Cut-off weight at `u`; `0` when the nonlinearity is off.
    pub fn chi_weight(&self, u: &SpectralField) -> f64 {
        if !self.nonlinear {
            return 0.0;
        }
        match self.cutoff {
            None => 1.0,
            Some(c) => c.weight(self.w_norm_sq(u)),
        }
    }

    /// `e^{−νA dt}(u − dt·χ B(u, u))`.
    pub fn drift_step(&self, u: &SpectralField, dt: f64) -> SpectralField {
        let lat = &*self.lattice;
        let w = self.chi_weight(u);
        let mut out = if w > 0.0 {
            u.add(&nonlinearity_b(lat, u, u).scale(-dt * w))
        } else {
            u.clone()
        };
        for (c, k) in out.coeffs.iter_mut().zip(&lat.modes) {
            let f = (-self.nu * norm2(*k) * dt).exp();
            *c = c.map(|z| z * f);
        }
        out
    }

    /// Per-coordinate variance of the stochastic convolution over `dt`:
    /// `q_k(1 − e^{−2ν|k|²dt})/(2ν|k|²)`.
    pub fn step_variance(&self, i: usize, dt: f64) -> f64 {
        let l = self.nu * norm2(self.lattice.modes[i]);
        self.noise.q[i] * (-(-2.0 * l * dt).exp_m1()) / (2.0 * l)
    }

    /// Exponential Euler step.
    pub fn step(&self, u: &SpectralField, dt: f64, rng: &mut Rng) -> Result<SpectralField> {
        let lat = &*self.lattice;
        let mut out = self.drift_step(u, dt);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for &i in &lat.half {
            let sd = self.step_variance(i, dt).sqrt();
            let mut v = ZERO3;
            for j in 0..2 {
                let z = C::new(normal(rng), normal(rng)) * (sd * s);
                let e = lat.basis[i][j];
                for d in 0..3 {
                    v[d] += z * e[d];
                }
            }
            if sd > 0.0 {
                let c = &mut out.coeffs[i];
                for d in 0..3 {
                    c[d] += v[d];
                }
                out.coeffs[lat.conj[i]] = out.coeffs[i].map(|c| c.conj());
            }
        }
        if !out.is_finite() {
            return Err(Error::Aborted {
                step: 0,
                reason: "non-finite spectral coefficient".into(),
            });
        }
        Ok(out)
    }

    /// Every node of one trajectory from `u0`.
    pub fn simulate(&self, u0: &SpectralField, grid: &TimeGrid, source: RandomSource) -> Result<Vec<SpectralField>> {
        self.check_field(u0)?;
        let mut rng = source.rng();
        let mut out = Vec::with_capacity(grid.n_nodes());
        out.push(u0.clone());
        for k in 1..grid.n_nodes() {
            let next = self.step(&out[k - 1], grid.dt(), &mut rng).map_err(|e| match e {
                Error::Aborted { reason, .. } => Error::Aborted { step: k, reason },
                e => e,
            })?;
            out.push(next);
        }
        Ok(out)
    }

    fn check_field(&self, u: &SpectralField) -> Result<()> {
        if u.n != self.lattice.n || u.coeffs.len() != self.lattice.len() {
            return Err(param("u0", "field lives on a different lattice"));
        }
        Ok(())
    }

    /// `M^φ` at every node, with the compensator of the simulated scheme:
    /// `M_n = ⟨u_n − u_0, φ⟩ − Σ_{j<n} ⟨e^{−νA dt}(u_j − dt χ_j B(u_j, u_j)) − u_j, φ⟩`.
    ///
    /// As `dt → 0` this is `⟨ξ_t − ξ_0, φ⟩ + ν∫⟨ξ, Aφ⟩ − ∫χ⟨B(ξ, φ), ξ⟩`.
    pub fn martingale_m(&self, path: &[SpectralField], grid: &TimeGrid, phi: &SpectralField) -> Result<SamplePath> {
        let lat = &*self.lattice;
        let dt = grid.dt();
        let mut decayed = phi.clone();
        let mut lin = Vec::with_capacity(lat.len());
        for (i, (c, k)) in decayed.coeffs.iter_mut().zip(&lat.modes).enumerate() {
            let f = (-self.nu * norm2(*k) * dt).exp();
            *c = c.map(|z| z * f);
            lin.push((i, f - 1.0));
        }
        let lin_phi = SpectralField {
            n: phi.n,
            coeffs: phi.coeffs.iter().zip(&lin).map(|(c, (_, g))| c.map(|z| z * *g)).collect(),
        };
        let mut m = Vec::with_capacity(path.len());
        let mut comp = 0.0;
        let base = path[0].inner(phi);
        for (j, u) in path.iter().enumerate() {
            m.push(u.inner(phi) - base - comp);
            if j + 1 < path.len() {
                // ⟨e^{−νAdt}B(u,u), φ⟩ = ⟨B(u,u), e^{−νAdt}φ⟩ = −⟨B(u, e^{−νAdt}φ), u⟩
                let w = self.chi_weight(u);
                let nl = if w > 0.0 { -b_inner(lat, u, &decayed, u) } else { 0.0 };
                comp += u.inner(&lin_phi) - dt * w * nl;
            }
        }
        SamplePath::scalar(*grid, m)
    }

    /// `t ⟨Qφ, φ⟩`.
    pub fn martingale_qv(&self, phi: &SpectralField, t: f64) -> f64 {
        t * self.noise.quadratic_form(phi)
    }

    /// Fraction of `trace·dt` the scheme injects per step:
    /// `Σ_k 2 q_k(1 − e^{−2ν|k|²dt})/(2ν|k|²) / (dt Σ_k 2 q_k)`, tending to `1`.
    pub fn noise_step_factor(&self, dt: f64) -> f64 {
        let tr = self.noise.truncated_trace();
        if tr == 0.0 {
            return 1.0;
        }
        2.0 * (0..self.lattice.len()).map(|i| self.step_variance(i, dt)).sum::<f64>() / (tr * dt)
    }

    /// `ℰ^n_t = |ξ_t|^{2n} + 2nν∫|ξ|^{2n−2}‖ξ‖²_V − n(2n−1)·trace·∫|ξ|^{2n−2}`
    /// with left-point sums in which `2ν|k|²dt` is replaced by the exact decay
    /// `1 − e^{−2ν|k|²dt}` of the scheme and `trace·dt` by the injected noise
    /// fraction, so the linear part balances exactly at every step.
    pub fn energy_process(&self, path: &[SpectralField], grid: &TimeGrid, n: u32, trace: f64) -> Result<SamplePath> {
        if n == 0 {
            return Err(param("n", "must be positive"));
        }
        let lat = &*self.lattice;
        let (nf, dt) = (n as f64, grid.dt());
        let decay: Vec<f64> = lat.modes.iter().map(|k| -(-2.0 * self.nu * norm2(*k) * dt).exp_m1()).collect();
        let forcing = trace * dt * self.noise_step_factor(dt);
        let mut out = Vec::with_capacity(path.len());
        let mut integral = 0.0;
        for u in path {
            let h = u.norm_sq();
            out.push(h.powi(n as i32) + integral);
            let dissipated: f64 = u
                .coeffs
                .iter()
                .zip(&decay)
                .map(|(c, d)| d * c.iter().map(|z| z.norm_sqr()).sum::<f64>())
                .sum();
            let low = h.powi(n as i32 - 1);
            integral += nf * low * dissipated - nf * (2.0 * nf - 1.0) * forcing * low;
        }
        SamplePath::scalar(*grid, out)
    }
}

/// First time the squared `𝒲` norm reaches `R`.
pub fn stopping_time_tau(path: &[SpectralField], grid: &TimeGrid, r: f64, lat: &WaveLattice, alpha0: f64) -> Option<f64> {
    if r.is_infinite() {
        return None;
    }
    let theta = sobolev_theta(alpha0);
    path.iter()
        .position(|u| stokes_norm_sq(lat, u, theta) >= r)
        .map(|k| grid.time(k))
}

impl Dynamics for NseSystem {
    type State = SpectralField;

    fn name(&self) -> String {
        format!("nse[N={}]", self.lattice.n)
    }

    fn simulate(&self, x: &SpectralField, grid: &TimeGrid, source: RandomSource) -> Result<Vec<SpectralField>> {
        NseSystem::simulate(self, x, grid, source)
    }
}

/// Scalar profile of a cylinder function `φ(x) = f(⟨x, e⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CylinderKind {
    Linear,
    Quadratic,
    Cosine,
}

impl CylinderKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Quadratic => "quadratic",
            Self::Cosine => "cosine",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            "cosine" => Ok(Self::Cosine),
            _ => Err(param("phi", format!("unknown cylinder function `{s}`"))),
        }
    }

    fn f(&self, y: f64) -> (f64, f64, f64) {
        match self {
            Self::Linear => (y, 1.0, 0.0),
            Self::Quadratic => (y * y, 2.0 * y, 2.0),
            Self::Cosine => (y.cos(), -y.sin(), -y.cos()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderFunction {
    pub kind: CylinderKind,
    pub direction: SpectralField,
}

impl CylinderFunction {
    pub fn new(kind: CylinderKind, direction: SpectralField) -> Self {
        Self { kind, direction }
    }

    pub fn eval(&self, x: &SpectralField) -> f64 {
        self.kind.f(x.inner(&self.direction)).0
    }
}

/// `L*φ(x) = ½⟨Qe, e⟩ f''(⟨x, e⟩) − ⟨νAx + χ B(x, x), e⟩ f'(⟨x, e⟩)`.
pub fn formal_generator_cylinder(sys: &NseSystem, x: &SpectralField, phi: &CylinderFunction) -> f64 {
    let lat = &*sys.lattice;
    let e = &phi.direction;
    let (_, d1, d2) = phi.kind.f(x.inner(e));
    let w = sys.chi_weight(x);
    let drift = sys.nu * stokes_apply(lat, x, 1.0).inner(e) - if w > 0.0 { w * b_inner(lat, x, e, x) } else { 0.0 };
    0.5 * sys.noise.quadratic_form(e) * d2 - drift * d1
}

const MAGIC: &[u8; 4] = b"NSE0";

/// `"NSE0"`, `N` as `u32`, coefficient count as `u64`, then `(re, im)` pairs,
/// all little-endian.
pub fn write_snapshot<W: Write>(mut out: W, u: &SpectralField) -> Result<()> {
    out.write_all(MAGIC)?;
    out.write_all(&(u.n as u32).to_le_bytes())?;
    out.write_all(&(3 * u.coeffs.len() as u64).to_le_bytes())?;
    for v in &u.coeffs {
        for c in v {
            out.write_all(&c.re.to_le_bytes())?;
            out.write_all(&c.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<SpectralField> {
    let mut head = [0u8; 16];
    input
        .read_exact(&mut head)
        .map_err(|_| Error::Snapshot("truncated header".into()))?;
    if &head[..4] != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let n = u32::from_le_bytes(head[4..8].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(head[8..16].try_into().unwrap());
    if n == 0 || n > 8 {
        return Err(Error::Snapshot(format!("lattice cutoff {n} out of range")));
    }
    let modes = (2 * n + 1).pow(3) - 1;
    if count != 3 * modes as u64 {
        return Err(Error::Snapshot(format!("count {count} does not match N = {n}")));
    }
    let mut buf = vec![0u8; 16 * count as usize];
    input
        .read_exact(&mut buf)
        .map_err(|_| Error::Snapshot("truncated body".into()))?;
    let vals: Vec<C> = buf
        .chunks_exact(16)
        .map(|b| {
            C::new(
                f64::from_le_bytes(b[..8].try_into().unwrap()),
                f64::from_le_bytes(b[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(SpectralField {
        n,
        coeffs: vals.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(n: usize) -> WaveLattice {
        WaveLattice::new(n).unwrap()
    }

    fn rand_field(l: &WaveLattice, seed: u64) -> SpectralField {
        SpectralField::random(l, |k2| 1.0 / (1.0 + k2), &mut RandomSource::new(seed, 0).rng())
    }

    #[test]
    fn lattice_shape() {
        for n in 1..=3 {
            let l = lat(n);
            assert_eq!(l.len(), (2 * n + 1).pow(3) - 1);
            assert_eq!(l.half().len() * 2, l.len());
            for i in 0..l.len() {
                let k = l.modes()[i];
                assert_eq!(l.modes()[l.conj_index(i)], [-k[0], -k[1], -k[2]]);
                let [e1, e2] = l.polarization(i);
                let d = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
                assert!(d(e1, kf(k)).abs() < 1e-14 && d(e2, kf(k)).abs() < 1e-14);
                assert!((d(e1, e1) - 1.0).abs() < 1e-14 && d(e1, e2).abs() < 1e-14);
            }
        }
        assert_eq!(lat(2).len(), 124);
    }

    #[test]
    fn real_coordinates_are_orthonormal() {
        let l = lat(2);
        let x: Vec<f64> = (0..l.real_dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let u = SpectralField::from_real_coords(&l, &x).unwrap();
        let back = u.real_coords(&l);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!((u.norm_sq() - x.iter().map(|v| v * v).sum::<f64>()).abs() < 1e-12);
        for i in [0, 5, 17] {
            let e = SpectralField::coordinate(&l, i).unwrap();
            assert!((u.inner(&e) - x[i]).abs() < 1e-14);
        }
        assert!(u.divergence_defect(&l) < 1e-14 && u.reality_defect(&l) == 0.0);
    }

    #[test]
    fn leray_examples() {
        let l = lat(1);
        let i = l.index([1, 1, 0]).unwrap();
        let mut v = SpectralField::zeros(&l);
        v.coeffs[i] = [C::new(1.0, 0.0), C::new(1.0, 0.0), C::new(0.0, 0.0)];
        v.coeffs[l.conj_index(i)] = v.coeffs[i];
        assert!(leray_project(&l, &v).norm_sq() < 1e-30);
        let u = rand_field(&l, 1);
        assert_eq!(leray_project(&l, &u).coefficients().len(), u.coefficients().len());
        for (a, b) in leray_project(&l, &u).coefficients().iter().zip(u.coefficients()) {
            for d in 0..3 {
                assert!((a[d] - b[d]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn stokes_examples() {
        let l = lat(2);
        let u = rand_field(&l, 2);
        assert_eq!(stokes_apply(&l, &u, 0.0), u);
        let i = l.index([1, 2, 0]).unwrap();
        let a = stokes_apply(&l, &u, 1.0);
        for d in 0..3 {
            assert!((a.coeffs[i][d] - u.coeffs[i][d] * 5.0).norm() < 1e-14);
        }
        let direct: f64 = l.modes().iter().zip(u.coefficients()).map(|(k, c)| norm2(*k) * c.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
        assert!((stokes_norm_sq(&l, &u, 0.5) - direct).abs() < 1e-12);
        assert!((stokes_apply(&l, &u, 0.5).norm_sq() - direct).abs() < 1e-12);
    }

    #[test]
    fn theta_cases() {
        assert_eq!(sobolev_theta(0.25), 0.625);
        assert_eq!(sobolev_theta(0.75), 1.0);
        assert_eq!(sobolev_norm(&lat(1), &SpectralField::zeros(&lat(1)), 0.3), 0.0);
    }

    /// `(u·∇)u` evaluated on a physical grid and transformed back.
    fn physical_oracle(l: &WaveLattice, u: &SpectralField) -> SpectralField {
        let n = l.cutoff() as i32;
        let m = (4 * n + 1) as usize;
        let h = 2.0 * std::f64::consts::PI / m as f64;
        let mut acc = vec![ZERO3; l.len()];
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    let x = [a as f64 * h, b as f64 * h, c as f64 * h];
                    let mut vel = [0.0; 3];
                    let mut grad = [[0.0; 3]; 3];
                    for (k, coef) in l.modes().iter().zip(u.coefficients()) {
                        let ph = kf(*k)[0] * x[0] + kf(*k)[1] * x[1] + kf(*k)[2] * x[2];
                        let e = C::new(ph.cos(), ph.sin());
                        for i in 0..3 {
                            let v = coef[i] * e;
                            vel[i] += v.re;
                            for j in 0..3 {
                                grad[i][j] += (v * C::i() * kf(*k)[j]).re;
                            }
                        }
                    }
                    let adv: Vec<f64> = (0..3).map(|i| (0..3).map(|j| vel[j] * grad[i][j]).sum()).collect();
                    for (idx, k) in l.modes().iter().enumerate() {
                        let ph = kf(*k)[0] * x[0] + kf(*k)[1] * x[1] + kf(*k)[2] * x[2];
                        let e = C::new(ph.cos(), -ph.sin());
                        for i in 0..3 {
                            acc[idx][i] += e * adv[i];
                        }
                    }
                }
            }
        }
        let norm = (m * m * m) as f64;
        let raw = SpectralField::from_coefficients(l, acc.into_iter().map(|v| v.map(|c| c / norm)).collect()).unwrap();
        leray_project(l, &raw)
    }

    #[test]
    fn nonlinearity_matches_physical_space() {
        for n in 1..=2 {
            let l = lat(n);
            let u = rand_field(&l, 3 + n as u64);
            let b = nonlinearity_b(&l, &u, &u);
            let o = physical_oracle(&l, &u);
            for (x, y) in b.coefficients().iter().zip(o.coefficients()) {
                for d in 0..3 {
                    assert!((x[d] - y[d]).norm() < 1e-12, "{x:?} {y:?}");
                }
            }
        }
    }

    #[test]
    fn single_shear_mode_has_no_self_interaction() {
        let l = lat(2);
        let i = l.index([1, 0, 0]).unwrap();
        let mut u = SpectralField::zeros(&l);
        u.coeffs[i] = [C::new(0.0, 0.0), C::new(0.3, -0.2), C::new(0.0, 0.0)];
        u.coeffs[l.conj_index(i)] = u.coeffs[i].map(|c| c.conj());
        assert_eq!(nonlinearity_b(&l, &u, &u).norm_sq(), 0.0);
    }

    #[test]
    fn two_mode_interaction_by_hand() {
        // u = (0, sin z, cos x): (u·∇)u = cos x ∂_z u = (0, cos x cos z, 0),
        // already divergence-free, with coefficient 1/4 on each (±1, 0, ±1)
        let l = lat(2);
        let mut u = SpectralField::zeros(&l);
        u.coeffs[l.index([1, 0, 0]).unwrap()][2] = C::new(0.5, 0.0);
        u.coeffs[l.index([-1, 0, 0]).unwrap()][2] = C::new(0.5, 0.0);
        u.coeffs[l.index([0, 0, 1]).unwrap()][1] = C::new(0.0, -0.5);
        u.coeffs[l.index([0, 0, -1]).unwrap()][1] = C::new(0.0, 0.5);
        let b = nonlinearity_b(&l, &u, &u);
        for (s1, s3) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
            let c = b.coefficient(&l, [s1, 0, s3]).unwrap();
            assert!((c[1] - C::new(0.25, 0.0)).norm() < 1e-15, "{c:?}");
            assert!(c[0].norm() < 1e-15 && c[2].norm() < 1e-15);
        }
        assert!((b.norm_sq() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn gradient_advection_projects_away() {
        // u = (0, 0, cos x) + (sin z, 0, 0) gives (u·∇)u = ∇(sin x cos z)
        let l = lat(2);
        let mut u = SpectralField::zeros(&l);
        u.coeffs[l.index([1, 0, 0]).unwrap()][2] = C::new(0.5, 0.0);
        u.coeffs[l.index([-1, 0, 0]).unwrap()][2] = C::new(0.5, 0.0);
        u.coeffs[l.index([0, 0, 1]).unwrap()][0] = C::new(0.0, -0.5);
        u.coeffs[l.index([0, 0, -1]).unwrap()][0] = C::new(0.0, 0.5);
        assert!(nonlinearity_b(&l, &u, &u).norm_sq() < 1e-30);
    }

    #[test]
    fn b_orthogonality() {
        for n in 1..=3 {
            let l = lat(n);
            for s in 0..100 {
                let u = rand_field(&l, 100 + s);
                let b = nonlinearity_b(&l, &u, &u);
                assert!(b.inner(&u).abs() < 1e-12, "N={n}: {}", b.inner(&u));
                assert!(b.divergence_defect(&l) < 1e-12 && b.reality_defect(&l) < 1e-12);
            }
        }
    }

    #[test]
    fn b_bilinear_and_inner_form() {
        let l = lat(2);
        let (u, v, w) = (rand_field(&l, 7), rand_field(&l, 8), rand_field(&l, 9));
        let lhs = nonlinearity_b(&l, &u.scale(2.0), &v.scale(-3.0));
        let rhs = nonlinearity_b(&l, &u, &v).scale(-6.0);
        for (a, b) in lhs.coefficients().iter().zip(rhs.coefficients()) {
            for d in 0..3 {
                assert!((a[d] - b[d]).norm() < 1e-13);
            }
        }
        let direct = nonlinearity_b(&l, &u, &v).inner(&w);
        assert!((b_inner(&l, &u, &v, &w) - direct).abs() < 1e-12);
        assert!((b_inner(&l, &u, &v, &w) + b_inner(&l, &u, &w, &v)).abs() < 1e-12);
    }

    #[test]
    fn noise_spectral_condition() {
        let l = lat(3);
        let q = NoiseSpec::new(&l, 0.4).unwrap();
        let (lo, hi) = q.spectral_condition(&l);
        assert!((lo - 1.0).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
        assert!(NoiseSpec::new(&l, 0.1).is_err());
        let full = full_trace(0.4).unwrap();
        assert!(full > q.truncated_trace());
        // slower independent estimate: cube sum with the integral tail
        let s = 1.5 + 2.0 * 0.4;
        let m = 60i32;
        let mut acc = 0.0;
        for a in -m..=m {
            for b in -m..=m {
                for c in -m..=m {
                    if (a, b, c) != (0, 0, 0) {
                        acc += ((a * a + b * b + c * c) as f64).powf(-s);
                    }
                }
            }
        }
        assert!((full - 2.0 * acc) / full < 0.05 && full > 2.0 * acc);
    }

    #[test]
    fn chi_shape() {
        assert_eq!(chi(0.5), 1.0);
        assert_eq!(chi(1.0), 1.0);
        assert_eq!(chi(2.0), 0.0);
        assert!((chi(1.5) - 0.5).abs() < 1e-15);
        let h = 1e-6;
        assert!((chi(1.0 + h) - 1.0).abs() < 1e-12 && chi(2.0 - h) < 1e-12);
        let mut prev = 1.0;
        for i in 0..=1000 {
            let c = chi(1.0 + i as f64 / 1000.0);
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn galerkin_guard() {
        assert!(GalerkinParams::new(1.0, 2, 1e-3, 1.0).is_ok());
        assert!(GalerkinParams::new(1.0, 4, 0.1, 1.0).is_err());
        assert!(GalerkinParams::new(-1.0, 2, 1e-3, 1.0).is_err());
    }

    #[test]
    fn heat_semigroup_hook() {
        let sys = NseSystem::new(2, 0.7, 0.5, None).unwrap();
        let l = sys.lattice.clone();
        let sys = sys.clone().with_noise(NoiseSpec::zero(&l, 0.5)).linear();
        let u = rand_field(&l, 11);
        let v = sys.step(&u, 1e-2, &mut RandomSource::new(0, 0).rng()).unwrap();
        for ((a, b), k) in v.coefficients().iter().zip(u.coefficients()).zip(l.modes()) {
            let f = (-0.7 * norm2(*k) * 1e-2).exp();
            for d in 0..3 {
                assert_eq!(a[d], b[d] * f);
            }
        }
    }

    #[test]
    fn cutoff_support_is_linear() {
        let sys = NseSystem::new(2, 1.0, 0.5, Some(CutoffSpec::new(0.5).unwrap())).unwrap();
        let u = rand_field(&sys.lattice, 12).scale(10.0);
        assert!(sys.w_norm_sq(&u) >= 2.0 * 0.5);
        let lin = sys.clone().linear();
        let a = sys.step(&u, 1e-3, &mut RandomSource::new(1, 0).rng()).unwrap();
        let b = lin.step(&u, 1e-3, &mut RandomSource::new(1, 0).rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invariants_preserved_over_steps() {
        for n in 1..=3 {
            let sys = NseSystem::new(n, 1.0, 0.5, Some(CutoffSpec::new(50.0).unwrap())).unwrap();
            let g = TimeGrid::horizon(1.0, 1e-3).unwrap();
            let path = sys.simulate(&rand_field(&sys.lattice, 13), &g, RandomSource::new(2, 0)).unwrap();
            for u in path.iter().step_by(100).chain(path.last()) {
                assert!(u.divergence_defect(&sys.lattice) < 1e-12);
                assert!(u.reality_defect(&sys.lattice) < 1e-12);
            }
        }
    }

    #[test]
    fn stochastic_convolution_variance() {
        let sys = NseSystem::new(1, 1.3, 0.5, None).unwrap().linear();
        let l = sys.lattice.clone();
        let g = TimeGrid::horizon(0.4, 1e-2).unwrap();
        let coord = 3;
        let i = l.half()[coord / 4];
        let samples = crate::pathcore::ensemble(4000, RandomSource::new(3, 0), |src| {
            let p = sys.simulate(&SpectralField::zeros(&l), &g, src).unwrap();
            p.last().unwrap().real_coords(&l)[coord].powi(2)
        });
        let est = crate::pathcore::MeanEstimate::from_samples(&samples);
        let lam = 1.3 * norm2(l.modes()[i]);
        let target = sys.noise.amplitude(i) * (1.0 - (-2.0 * lam * 0.4).exp()) / (2.0 * lam);
        assert!(est.z(target).abs() < 3.0, "{est:?} {target}");
    }

    #[test]
    fn tau_monotone_in_r() {
        let sys = |r: f64| NseSystem::new(1, 0.2, 0.5, Some(CutoffSpec::new(r).unwrap())).unwrap();
        let g = TimeGrid::horizon(2.0, 1e-2).unwrap();
        let lat = sys(1.0).lattice.clone();
        let noise = NoiseSpec::from_amplitudes(&lat, 0.5, vec![4.0; lat.len()]).unwrap();
        let u0 = SpectralField::zeros(&lat);
        for seed in 0..20 {
            let mut prev = 0.0;
            for r in [0.5, 1.0, 2.0, 4.0, 8.0] {
                let s = sys(r).with_noise(noise.clone());
                let p = s.simulate(&u0, &g, RandomSource::new(seed, 0)).unwrap();
                let tau = stopping_time_tau(&p, &g, r, &lat, 0.5).unwrap_or(f64::INFINITY);
                assert!(tau >= prev);
                prev = tau;
            }
        }
        let p = sys(1.0).simulate(&rand_field(&lat, 1).scale(5.0), &g, RandomSource::new(0, 0)).unwrap();
        assert_eq!(stopping_time_tau(&p, &g, 1e-6, &lat, 0.5), Some(0.0));
        assert_eq!(stopping_time_tau(&p, &g, f64::INFINITY, &lat, 0.5), None);
    }

    #[test]
    fn martingale_with_no_noise_on_phi_is_zero() {
        let sys = NseSystem::new(1, 1.0, 0.5, None).unwrap();
        let l = sys.lattice.clone();
        let phi = SpectralField::coordinate(&l, 0).unwrap();
        let i = l.half()[0];
        let mut q: Vec<f64> = (0..l.len()).map(|j| sys.noise.amplitude(j)).collect();
        q[i] = 0.0;
        q[l.conj_index(i)] = 0.0;
        let sys = sys.clone().with_noise(NoiseSpec::from_amplitudes(&l, 0.5, q).unwrap());
        let g = TimeGrid::horizon(0.2, 1e-3).unwrap();
        let p = sys.simulate(&rand_field(&l, 3), &g, RandomSource::new(0, 0)).unwrap();
        let m = sys.martingale_m(&p, &g, &phi).unwrap();
        assert!(m.values().iter().all(|v| v.abs() < 1e-12));
        assert_eq!(sys.martingale_qv(&phi, 1.0), 0.0);
    }

    #[test]
    fn energy_nonincreasing_without_forcing() {
        let sys = NseSystem::new(2, 1.0, 0.5, None).unwrap();
        let l = sys.lattice.clone();
        let sys = sys.clone().with_noise(NoiseSpec::zero(&l, 0.5)).linear();
        let g = TimeGrid::horizon(0.5, 1e-3).unwrap();
        let p = sys.simulate(&rand_field(&l, 4), &g, RandomSource::new(0, 0)).unwrap();
        let e = sys.energy_process(&p, &g, 1, 0.0).unwrap();
        assert!(e.values().windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    }

    #[test]
    fn generator_examples() {
        let sys = NseSystem::new(2, 1.0, 0.5, None).unwrap();
        let l = sys.lattice.clone();
        let e = SpectralField::coordinate(&l, 8).unwrap();
        let q = sys.noise.amplitude(l.half()[2]);
        let sq = CylinderFunction::new(CylinderKind::Quadratic, e.clone());
        assert!((formal_generator_cylinder(&sys, &SpectralField::zeros(&l), &sq) - q).abs() < 1e-15);
        let lin = sys.clone().with_noise(NoiseSpec::zero(&l, 0.5)).linear();
        let x = rand_field(&l, 5);
        let f = CylinderFunction::new(CylinderKind::Linear, e.clone());
        let want = -stokes_apply(&l, &x, 1.0).inner(&e);
        assert!((formal_generator_cylinder(&lin, &x, &f) - want).abs() < 1e-14);
    }

    #[test]
    fn snapshot_round_trip() {
        let l = lat(2);
        let u = rand_field(&l, 6);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &u).unwrap();
        assert_eq!(&buf[..4], b"NSE0");
        assert_eq!(buf.len(), 16 + 16 * 3 * 124);
        assert_eq!(read_snapshot(&buf[..]).unwrap(), u);
        assert!(read_snapshot(&buf[..100]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_snapshot(&bad[..]), Err(Error::Snapshot(_))));
    }
}
