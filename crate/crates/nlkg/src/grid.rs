//! Discrete representation of even (and odd) functions on a truncated line.
//!
//! Functions are stored on the half-line nodes x_j = (j+1/2)h, j = 0..N-1,
//! h = L/N, and extended to x < 0 by parity. Even fields live in a cosine
//! basis (frequencies ξ_m = πm/L, Neumann at both ends), odd fields in the
//! matching sine basis (frequencies κ_k = π(k+1)/L). Both transform pairs are
//! exact discrete inverses, so −∂ₓₓ acts as a diagonal multiplier and parity
//! is unbreakable by construction.
//!
//! Integrals of even integrands use the plain midpoint rule 2h·Σ f(x_j),
//! which by symmetry is the full-line trapezoid rule on the shifted lattice
//! and is spectrally accurate for smooth decaying integrands.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

/// Minimum admissible node count; anything smaller cannot resolve a soliton.
pub const MIN_POINTS: usize = 16;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("half-length must be positive, got {0}")]
    BadLength(f64),
    #[error("need at least {MIN_POINTS} points, got {0}")]
    TooFewPoints(usize),
    #[error("grid spacing h = {h} too coarse for soliton scale beta = {beta} (need h <= 0.1/beta)")]
    TooCoarse { h: f64, beta: f64 },
}

struct GridInner {
    half_length: f64,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
}

/// Shared immutable grid description plus cached transform plans.
#[derive(Clone)]
pub struct Grid(Arc<GridInner>);

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("half_length", &self.0.half_length)
            .field("n", &self.0.n)
            .field("h", &self.0.h)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.0.n == other.0.n && self.0.half_length.to_bits() == other.0.half_length.to_bits()
    }
}

impl Grid {
    /// Build the half-line grid on (0, L) with N nodes at (j+1/2)h, h = L/N.
    pub fn new(half_length: f64, n: usize) -> Result<Self, GridError> {
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(GridError::BadLength(half_length));
        }
        if n < MIN_POINTS {
            return Err(GridError::TooFewPoints(n));
        }
        let h = half_length / n as f64;
        let nodes = (0..n).map(|j| (j as f64 + 0.5) * h).collect();
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(2 * n);
        let fft_inv = planner.plan_fft_inverse(2 * n);
        Ok(Grid(Arc::new(GridInner {
            half_length,
            n,
            h,
            nodes,
            fft_fwd,
            fft_inv,
        })))
    }

    pub fn half_length(&self) -> f64 {
        self.0.half_length
    }

    pub fn len(&self) -> usize {
        self.0.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        self.0.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.0.nodes
    }

    pub fn node(&self, j: usize) -> f64 {
        self.0.nodes[j]
    }

    /// Cosine frequency ξ_m = πm/L of mode m.
    pub fn cosine_freq(&self, m: usize) -> f64 {
        std::f64::consts::PI * m as f64 / self.0.half_length
    }

    /// Sine frequency κ_k = π(k+1)/L of mode k.
    pub fn sine_freq(&self, k: usize) -> f64 {
        std::f64::consts::PI * (k + 1) as f64 / self.0.half_length
    }

    /// Whether the spacing resolves a soliton of inverse width `beta`.
    pub fn check_resolves(&self, beta: f64) -> Result<(), GridError> {
        if self.0.h > 0.1 / beta {
            Err(GridError::TooCoarse { h: self.0.h, beta })
        } else {
            Ok(())
        }
    }

    fn assert_same(&self, other: &Grid) {
        assert!(
            self == other,
            "fields in one expression must share an identical grid"
        );
    }

    /// Forward DCT-II of a packed complex pair; X_k = Σ_n z_n cos(πk(2n+1)/(2N)).
    fn dct2_complex(&self, z: &[Complex64]) -> Vec<Complex64> {
        let n = self.0.n;
        debug_assert_eq!(z.len(), n);
        // Even extension around the half-sample boundaries, length 2N.
        let mut buf = vec![Complex64::default(); 2 * n];
        buf[..n].copy_from_slice(z);
        for j in 0..n {
            buf[2 * n - 1 - j] = z[j];
        }
        self.0.fft_fwd.process(&mut buf);
        let scale = std::f64::consts::PI / (2.0 * n as f64);
        (0..n)
            .map(|k| {
                let tw = Complex64::from_polar(0.5, -scale * k as f64);
                tw * buf[k]
            })
            .collect()
    }

    /// Inverse of `dct2_complex` (DCT-III with matching normalization).
    fn dct3_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.0.n;
        debug_assert_eq!(x.len(), n);
        let scale = std::f64::consts::PI / (2.0 * n as f64);
        let mut buf = vec![Complex64::default(); 2 * n];
        for k in 0..n {
            buf[k] = Complex64::from_polar(2.0, scale * k as f64) * x[k];
        }
        // X_N = 0 and X_{2N-k} = -X_k.
        for k in (n + 1)..(2 * n) {
            buf[k] = Complex64::from_polar(2.0, scale * k as f64) * (-x[2 * n - k]);
        }
        self.0.fft_inv.process(&mut buf);
        let norm = 1.0 / (2.0 * n as f64);
        buf[..n].iter().map(|y| y * norm).collect()
    }

    /// Forward cosine transform of real samples.
    pub fn dct2(&self, values: &[f64]) -> Vec<f64> {
        let z: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.dct2_complex(&z).iter().map(|c| c.re).collect()
    }

    /// Inverse cosine transform back to samples.
    pub fn dct3(&self, coeffs: &[f64]) -> Vec<f64> {
        let z: Vec<Complex64> = coeffs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.dct3_complex(&z).iter().map(|c| c.re).collect()
    }

    /// Forward cosine transform of two real sample sets via one complex FFT.
    pub fn dct2_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        let out = self.dct2_complex(&z);
        (
            out.iter().map(|c| c.re).collect(),
            out.iter().map(|c| c.im).collect(),
        )
    }

    /// Inverse cosine transform of two coefficient sets via one complex FFT.
    pub fn dct3_pair(&self, a: &[f64], b: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<Complex64> = a
            .iter()
            .zip(b)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        let out = self.dct3_complex(&z);
        (
            out.iter().map(|c| c.re).collect(),
            out.iter().map(|c| c.im).collect(),
        )
    }

    /// Forward sine transform: S_k = Σ_n x_n sin(π(k+1)(2n+1)/(2N)).
    ///
    /// Reduces to the cosine transform via S_k = DCT2((-1)^n x_n)_{N-1-k}.
    pub fn dst2(&self, values: &[f64]) -> Vec<f64> {
        let n = self.0.n;
        let flipped: Vec<f64> = values
            .iter()
            .enumerate()
            .map(|(j, &v)| if j % 2 == 0 { v } else { -v })
            .collect();
        let c = self.dct2(&flipped);
        (0..n).map(|k| c[n - 1 - k]).collect()
    }

    /// Inverse sine transform.
    pub fn dst3(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.0.n;
        let rev: Vec<f64> = (0..n).map(|m| coeffs[n - 1 - m]).collect();
        let x = self.dct3(&rev);
        x.iter()
            .enumerate()
            .map(|(j, &v)| if j % 2 == 0 { v } else { -v })
            .collect()
    }

    /// Full-line integral of an even-integrand sample set: 2h Σ f_j.
    pub fn integrate_even(&self, values: &[f64]) -> f64 {
        2.0 * self.0.h * values.iter().sum::<f64>()
    }
}

/// Even function sampled on the half-line grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EvenField {
    grid: Grid,
    values: Vec<f64>,
}

/// Odd function stored by its half-line samples (x > 0 side).
#[derive(Clone, Debug, PartialEq)]
pub struct OddField {
    grid: Grid,
    values: Vec<f64>,
}

impl EvenField {
    pub fn zeros(grid: &Grid) -> Self {
        EvenField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        EvenField {
            grid: grid.clone(),
            values: grid.nodes().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn from_samples(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "sample count must match grid");
        EvenField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
    }

    /// Cosine coefficients X_m (raw DCT-II normalization).
    pub fn cosine_coeffs(&self) -> Vec<f64> {
        self.grid.dct2(&self.values)
    }

    pub fn from_cosine_coeffs(grid: &Grid, coeffs: &[f64]) -> Self {
        EvenField::from_samples(grid, grid.dct3(coeffs))
    }

    /// Full-line L² inner product ⟨f, g⟩ = ∫ fg dx.
    pub fn inner(&self, other: &EvenField) -> f64 {
        self.grid.assert_same(&other.grid);
        2.0 * self.grid.spacing()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Per-mode full-line spectral energies P_m with Σ P_m = ‖f‖₂².
    pub fn spectral_energies(&self) -> Vec<f64> {
        let n = self.grid.len() as f64;
        let coeffs = self.cosine_coeffs();
        let base = 2.0 * self.grid.spacing() / n;
        coeffs
            .iter()
            .enumerate()
            .map(|(m, &c)| base * if m == 0 { 1.0 } else { 2.0 } * c * c)
            .collect()
    }

    /// (Σ (1+ξ²)^s P(ξ))^{1/2} over the discrete cosine frequencies.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        self.spectral_energies()
            .iter()
            .enumerate()
            .map(|(m, &p)| {
                let xi = self.grid.cosine_freq(m);
                (1.0 + xi * xi).powf(s) * p
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn h1_norm(&self) -> f64 {
        self.sobolev_norm(1.0)
    }

    /// ‖⟨x⟩^{-s_w} f‖₂ with ⟨x⟩ = (1+x²)^{1/2}.
    pub fn weighted_l2(&self, s_w: f64) -> f64 {
        let q: f64 = self
            .grid
            .nodes()
            .iter()
            .zip(&self.values)
            .map(|(&x, &v)| (1.0 + x * x).powf(-s_w) * v * v)
            .sum();
        (2.0 * self.grid.spacing() * q).sqrt()
    }

    /// Apply a diagonal multiplier m(ξ) in the cosine basis.
    pub fn apply_cosine_multiplier(&self, m: impl Fn(f64) -> f64) -> EvenField {
        let mut coeffs = self.cosine_coeffs();
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= m(self.grid.cosine_freq(k));
        }
        EvenField::from_cosine_coeffs(&self.grid, &coeffs)
    }

    /// −f″ via the ξ² multiplier.
    pub fn neg_laplacian(&self) -> EvenField {
        self.apply_cosine_multiplier(|xi| xi * xi)
    }

    /// ∂ₓ f, an odd function.
    pub fn derivative(&self) -> OddField {
        let grid = &self.grid;
        let n = grid.len();
        let coeffs = self.cosine_coeffs();
        let mut s = vec![0.0; n];
        for (k, sk) in s.iter_mut().enumerate().take(n - 1) {
            *sk = -coeffs[k + 1] * grid.sine_freq(k);
        }
        OddField::from_sine_coeffs(grid, &s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> EvenField {
        EvenField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> EvenField {
        self.map(|v| c * v)
    }

    /// self + c * other
    pub fn axpy(&self, c: f64, other: &EvenField) -> EvenField {
        self.grid.assert_same(&other.grid);
        EvenField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    /// Pointwise product with another even field (even result).
    pub fn mul_pointwise(&self, other: &EvenField) -> EvenField {
        self.grid.assert_same(&other.grid);
        EvenField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .collect(),
        }
    }
}

impl OddField {
    pub fn zeros(grid: &Grid) -> Self {
        OddField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    /// Sample an odd function by its x > 0 values.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        OddField {
            grid: grid.clone(),
            values: grid.nodes().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn from_samples(grid: &Grid, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len(), "sample count must match grid");
        OddField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sine_coeffs(&self) -> Vec<f64> {
        self.grid.dst2(&self.values)
    }

    pub fn from_sine_coeffs(grid: &Grid, coeffs: &[f64]) -> Self {
        OddField::from_samples(grid, grid.dst3(coeffs))
    }

    pub fn inner(&self, other: &OddField) -> f64 {
        self.grid.assert_same(&other.grid);
        2.0 * self.grid.spacing()
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    /// Apply a diagonal multiplier m(κ) in the sine basis.
    pub fn apply_sine_multiplier(&self, m: impl Fn(f64) -> f64) -> OddField {
        let mut coeffs = self.sine_coeffs();
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c *= m(self.grid.sine_freq(k));
        }
        OddField::from_sine_coeffs(&self.grid, &coeffs)
    }

    pub fn neg_laplacian(&self) -> OddField {
        self.apply_sine_multiplier(|k| k * k)
    }

    /// ∂ₓ g, an even function. The Nyquist sine mode has no cosine slot and
    /// is dropped; it is zero for resolved fields.
    pub fn derivative(&self) -> EvenField {
        let grid = &self.grid;
        let n = grid.len();
        let s = self.sine_coeffs();
        let mut c = vec![0.0; n];
        for m in 1..n {
            c[m] = s[m - 1] * grid.sine_freq(m - 1);
        }
        EvenField::from_cosine_coeffs(grid, &c)
    }

    /// Pointwise product with an even field (odd result).
    pub fn mul_even(&self, even: &EvenField) -> OddField {
        self.grid.assert_same(even.grid());
        OddField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(even.values())
                .map(|(a, b)| a * b)
                .collect(),
        }
    }

    pub fn axpy(&self, c: f64, other: &OddField) -> OddField {
        self.grid.assert_same(&other.grid);
        OddField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + c * b)
                .collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> OddField {
        OddField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| c * v).collect(),
        }
    }
}

/// Phase-space pair (u, u̇) ∈ H¹ × L².
#[derive(Clone, Debug)]
pub struct StateVec {
    pub u: EvenField,
    pub ud: EvenField,
}

impl StateVec {
    pub fn new(u: EvenField, ud: EvenField) -> Self {
        u.grid().assert_same(ud.grid());
        StateVec { u, ud }
    }

    pub fn zeros(grid: &Grid) -> Self {
        StateVec {
            u: EvenField::zeros(grid),
            ud: EvenField::zeros(grid),
        }
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    /// ‖(u, u̇)‖_{H¹×L²}
    pub fn norm(&self) -> f64 {
        (self.u.h1_norm().powi(2) + self.ud.l2_norm().powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.ud.is_finite()
    }

    /// Velocity-reversed state, the backward-time initial datum.
    pub fn time_reversed(&self) -> StateVec {
        StateVec {
            u: self.u.clone(),
            ud: self.ud.scaled(-1.0),
        }
    }

    pub fn axpy(&self, c: f64, other: &StateVec) -> StateVec {
        StateVec {
            u: self.u.axpy(c, &other.u),
            ud: self.ud.axpy(c, &other.ud),
        }
    }

    pub fn scaled(&self, c: f64) -> StateVec {
        StateVec {
            u: self.u.scaled(c),
            ud: self.ud.scaled(c),
        }
    }
}

/// Tail-integral quadrature ∫_{x_j}^{x_{N-1}} F dy on the node lattice:
/// trapezoid with fourth-order Gregory end corrections at the lower end.
/// The integrand is assumed negligible at the far end.
pub fn gregory_tail_integral(values: &[f64], from: usize, h: f64) -> f64 {
    let n = values.len();
    if from + 1 >= n {
        return 0.0;
    }
    let mut s = 0.5 * values[from];
    for v in &values[from + 1..n - 1] {
        s += v;
    }
    s += 0.5 * values[n - 1];
    let mut out = h * s;
    // Gregory corrections: -h/12 Δf₀ - h/24 Δ²f₀ (far-end terms dropped).
    if from + 1 < n {
        out -= h / 12.0 * (values[from + 1] - values[from]);
    }
    if from + 2 < n {
        out -= h / 24.0 * (values[from + 2] - 2.0 * values[from + 1] + values[from]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rand_field(grid: &Grid, seed: u64) -> EvenField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EvenField::from_samples(grid, (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    fn naive_dct2(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        v * (std::f64::consts::PI * k as f64 * (2 * j + 1) as f64
                            / (2.0 * n as f64))
                            .cos()
                    })
                    .sum()
            })
            .collect()
    }

    fn naive_dst2(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(j, &v)| {
                        v * (std::f64::consts::PI * (k + 1) as f64 * (2 * j + 1) as f64
                            / (2.0 * n as f64))
                            .sin()
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn make_grid_validates() {
        assert!(Grid::new(40.0, 4096).is_ok());
        let g = Grid::new(40.0, 4096).unwrap();
        assert_eq!(g.spacing(), 40.0 / 4096.0);
        assert!(matches!(Grid::new(40.0, 8), Err(GridError::TooFewPoints(8))));
        assert!(matches!(Grid::new(0.0, 1024), Err(GridError::BadLength(_))));
        assert!(matches!(Grid::new(-1.0, 1024), Err(GridError::BadLength(_))));
    }

    #[test]
    fn dct_matches_naive_and_roundtrips() {
        let grid = Grid::new(7.0, 48).unwrap();
        let f = rand_field(&grid, 1);
        let fast = grid.dct2(f.values());
        let slow = naive_dct2(f.values());
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let back = grid.dct3(&fast);
        let scale = f.max_abs();
        for (a, b) in back.iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-12 * scale);
        }
    }

    #[test]
    fn dst_matches_naive_and_roundtrips() {
        let grid = Grid::new(5.0, 40).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = grid.dst2(&x);
        let slow = naive_dst2(&x);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-10);
        }
        let back = grid.dst3(&fast);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_field_is_pure_zero_mode() {
        let grid = Grid::new(10.0, 64).unwrap();
        let f = EvenField::from_fn(&grid, |_| 1.0);
        let p = f.spectral_energies();
        let total: f64 = p.iter().sum();
        assert!((p[0] - total).abs() < 1e-12 * total);
        assert!((total - f.l2_norm().powi(2)).abs() < 1e-12 * total);
    }

    #[test]
    fn plancherel_holds() {
        let grid = Grid::new(12.0, 128).unwrap();
        let f = rand_field(&grid, 3);
        let direct = f.l2_norm().powi(2);
        let spectral: f64 = f.spectral_energies().iter().sum();
        assert!((direct - spectral).abs() <= 1e-12 * direct);
    }

    #[test]
    fn pair_transforms_match_single() {
        let grid = Grid::new(9.0, 96).unwrap();
        let a = rand_field(&grid, 4);
        let b = rand_field(&grid, 5);
        let (ca, cb) = grid.dct2_pair(a.values(), b.values());
        let sa = grid.dct2(a.values());
        let sb = grid.dct2(b.values());
        for (x, y) in ca.iter().zip(&sa) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in cb.iter().zip(&sb) {
            assert!((x - y).abs() < 1e-12);
        }
        let (ra, rb) = grid.dct3_pair(&ca, &cb);
        for (x, y) in ra.iter().zip(a.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in rb.iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sobolev_norm_properties() {
        let grid = Grid::new(20.0, 512).unwrap();
        let f = EvenField::from_fn(&grid, |x| (-x * x).exp());
        // s = 0 is the plain L² norm.
        assert!((f.sobolev_norm(0.0) - f.l2_norm()).abs() < 1e-12 * f.l2_norm());
        // Monotone in s for s >= 0.
        assert!(f.sobolev_norm(1.0) >= f.sobolev_norm(0.0));
        // Single-mode ratio: (1+ξ₀²)^{1/2}.
        let m0 = 7;
        let mut coeffs = vec![0.0; grid.len()];
        coeffs[m0] = 1.0;
        let single = EvenField::from_cosine_coeffs(&grid, &coeffs);
        let xi = grid.cosine_freq(m0);
        let ratio = single.sobolev_norm(1.0) / single.sobolev_norm(0.0);
        assert!((ratio - (1.0 + xi * xi).sqrt()).abs() < 1e-10);
        // Absolute homogeneity.
        let g = rand_field(&grid, 7);
        for s in [-2.0, -0.5, 0.5, 2.0] {
            let a = g.scaled(-3.5).sobolev_norm(s);
            let b = 3.5 * g.sobolev_norm(s);
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn weighted_l2_properties() {
        let grid = Grid::new(20.0, 1024).unwrap();
        let f = rand_field(&grid, 8);
        assert!((f.weighted_l2(0.0) - f.l2_norm()).abs() < 1e-12 * f.l2_norm());
        assert!(f.weighted_l2(2.0) <= f.weighted_l2(1.0));
        assert!(f.weighted_l2(1.0) <= f.l2_norm());
        // Bump at x ≈ 10: the weight is close to ⟨10⟩⁻², checked against a
        // direct quadrature oracle.
        let bump = EvenField::from_fn(&grid, |x| (-8.0 * (x - 10.0).powi(2)).exp());
        let oracle = {
            let h = grid.spacing();
            let q: f64 = grid
                .nodes()
                .iter()
                .map(|&x| {
                    let v = (-8.0 * (x - 10.0) * (x - 10.0)).exp();
                    (1.0 + x * x).powi(-2) * v * v
                })
                .sum();
            (2.0 * h * q).sqrt()
        };
        let got = bump.weighted_l2(2.0);
        assert!((got - oracle).abs() <= 1e-12 * oracle);
        // And the scale is ⟨10⟩⁻² within 2%.
        let approx_scale = bump.l2_norm() / 101.0;
        assert!((got - approx_scale).abs() <= 0.02 * approx_scale);
    }

    #[test]
    fn derivative_and_laplacian_agree_with_fd() {
        let grid = Grid::new(20.0, 1024).unwrap();
        let f = EvenField::from_fn(&grid, |x| (-0.5 * x * x).exp() * (1.0 + 0.3 * x * x));
        let d = f.derivative();
        // Spectral derivative vs analytic.
        for (j, &x) in grid.nodes().iter().enumerate().step_by(97) {
            let exact = (-0.5_f64 * x * x).exp() * (0.6 * x - x * (1.0 + 0.3 * x * x));
            assert!((d.values()[j] - exact).abs() < 1e-9, "at x={x}");
        }
        // −∂ₓₓ multiplier vs second-order finite differences: O(h²) agreement.
        let lap = f.neg_laplacian();
        let h = grid.spacing();
        let v = f.values();
        let mut max_err = 0.0_f64;
        for j in 1..grid.len() - 1 {
            let fd = -(v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h);
            max_err = max_err.max((lap.values()[j] - fd).abs());
        }
        assert!(max_err < 10.0 * h * h, "max_err = {max_err}");
        // Odd-to-even derivative closes the loop: (f')' = -neg_laplacian(f).
        let dd = d.derivative();
        for (a, b) in dd.values().iter().zip(lap.values()) {
            assert!((a + b).abs() < 1e-8);
        }
    }

    #[test]
    fn odd_field_roundtrip_and_norms() {
        let grid = Grid::new(15.0, 256).unwrap();
        let g = OddField::from_fn(&grid, |x| x * (-x * x / 2.0).exp());
        let coeffs = g.sine_coeffs();
        let back = OddField::from_sine_coeffs(&grid, &coeffs);
        for (a, b) in back.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        // Plancherel in the sine basis via inner product.
        let direct = g.l2_norm().powi(2);
        let n = grid.len() as f64;
        let spectral: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                2.0 * grid.spacing() / n * if k == grid.len() - 1 { 1.0 } else { 2.0 } * c * c
            })
            .sum();
        assert!((direct - spectral).abs() < 1e-12 * direct);
    }

    #[test]
    fn gregory_tail_quadrature_is_fourth_order() {
        // ∫_a^∞ e^{-y} dy = e^{-a} on a midpoint-offset lattice.
        for &n in &[200usize, 400] {
            let h = 20.0 / n as f64;
            let vals: Vec<f64> = (0..n).map(|j| (-(j as f64 + 0.5) * h).exp()).collect();
            let from = n / 10;
            let a = (from as f64 + 0.5) * h;
            let got = gregory_tail_integral(&vals, from, h);
            let err = (got - (-a).exp()).abs();
            assert!(err < 40.0 * h.powi(4), "n={n} err={err}");
        }
    }
}
