//! Discretization substrate: uniform periodic grid on `[-L, L)`, transforms of
//! real fields, spectral derivatives, Sobolev / H^s_κ norms and the dyadic
//! frequency projections.
//!
//! Spectrum convention: `spectrum[k] ≈ f̂(ξ_k)` with
//! `f̂(ξ) = (2π)^{-1/2} ∫ e^{-iξx} f(x) dx` and `ξ_k = πk/L` in FFT order, so
//! that `Δξ·Σ|f̂_k|² = ‖f‖²_{L²}` (discrete Plancherel).

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::cell::{OnceCell, RefCell};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

pub type C64 = Complex<f64>;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("grid size {0} must be an even integer >= 16")]
    BadGridSize(usize),
    #[error("grid half-length {0} must be positive and finite")]
    BadHalfLength(f64),
    #[error("field contains non-finite samples")]
    NonFiniteSamples,
    #[error("derivative order {0} exceeds the supported maximum of 8")]
    DerivativeOrder(usize),
    #[error("kappa = {0} must be positive")]
    NonPositiveKappa(f64),
    #[error("projection scale {0} is not a positive power of two")]
    NonDyadicScale(f64),
    #[error("projection weight exponent s = {0} must be >= 3")]
    ProjectionExponent(i64),
}

/// Uniform periodic grid on `[-L, L)` with `n` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    num_points: usize,
    half_length: f64,
}

impl Grid {
    pub fn new(num_points: usize, half_length: f64) -> Result<Self, SpectralError> {
        if num_points < 16 || num_points % 2 != 0 {
            return Err(SpectralError::BadGridSize(num_points));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(SpectralError::BadHalfLength(half_length));
        }
        Ok(Grid { num_points, half_length })
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    /// Grid spacing `Δx = 2L/n`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.num_points as f64
    }

    /// Spectral resolution `Δξ = π/L`.
    pub fn delta_xi(&self) -> f64 {
        PI / self.half_length
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.num_points).map(|i| self.point(i)).collect()
    }

    /// Wavenumber `ξ_k = πk/L` for FFT bin `i` (`k = i` for `i < n/2`, else `i - n`).
    pub fn wavenumber(&self, i: usize) -> f64 {
        let n = self.num_points as i64;
        let k = if (i as i64) < n / 2 { i as i64 } else { i as i64 - n };
        k as f64 * PI / self.half_length
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.num_points).map(|i| self.wavenumber(i)).collect()
    }

    /// Largest resolvable wavenumber `π(n/2)/L`.
    pub fn max_wavenumber(&self) -> f64 {
        PI * (self.num_points / 2) as f64 / self.half_length
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> = RefCell::new(HashMap::new());
}

fn fft_in_place(buf: &mut [C64], inverse: bool) {
    let n = buf.len();
    let plan = PLANS.with(|p| {
        p.borrow_mut()
            .entry((n, inverse))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(n)
                } else {
                    planner.plan_fft_forward(n)
                }
            })
            .clone()
    });
    plan.process(buf);
}

/// Real field sampled on a [`Grid`], with a lazily computed spectrum.
#[derive(Debug, Clone)]
pub struct Field {
    grid: Grid,
    samples: Vec<f64>,
    spectrum: OnceCell<Vec<C64>>,
}

impl Field {
    pub fn from_samples(grid: Grid, samples: Vec<f64>) -> Result<Self, SpectralError> {
        assert_eq!(samples.len(), grid.num_points(), "sample count must match grid");
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFiniteSamples);
        }
        Ok(Field { grid, samples, spectrum: OnceCell::new() })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self, SpectralError> {
        let samples = (0..grid.num_points()).map(|i| f(grid.point(i))).collect();
        Field::from_samples(grid, samples)
    }

    pub fn zero(grid: Grid) -> Self {
        Field { grid, samples: vec![0.0; grid.num_points()], spectrum: OnceCell::new() }
    }

    /// Build a field from its spectrum (FFT bin order, `spectrum[k] = f̂(ξ_k)`).
    /// The imaginary part left over by the inverse transform is discarded; it is
    /// at round-off level whenever the spectrum is Hermitian-symmetric.
    pub fn from_spectrum(grid: Grid, spectrum: Vec<C64>) -> Self {
        assert_eq!(spectrum.len(), grid.num_points());
        let n = grid.num_points();
        let scale = grid.delta_xi() / (2.0 * PI).sqrt();
        let mut buf: Vec<C64> = (0..n)
            .map(|i| spectrum[i] * if i % 2 == 0 { 1.0 } else { -1.0 } * scale)
            .collect();
        fft_in_place(&mut buf, true);
        let samples = buf.iter().map(|z| z.re).collect();
        let field = Field { grid, samples, spectrum: OnceCell::new() };
        let _ = field.spectrum.set(spectrum);
        field
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Spectrum `f̂(ξ_k)` in FFT bin order (computed once, then cached).
    pub fn spectrum(&self) -> &[C64] {
        self.spectrum.get_or_init(|| {
            let n = self.grid.num_points();
            let scale = self.grid.spacing() / (2.0 * PI).sqrt();
            let mut buf: Vec<C64> =
                self.samples.iter().map(|&v| C64::new(v, 0.0)).collect();
            fft_in_place(&mut buf, false);
            (0..n)
                .map(|i| buf[i] * if i % 2 == 0 { 1.0 } else { -1.0 } * scale)
                .collect()
        })
    }

    /// `j`-th spectral derivative: multiplies the spectrum by `(iξ)^j`.
    pub fn derivative(&self, j: usize) -> Result<Field, SpectralError> {
        if j > 8 {
            return Err(SpectralError::DerivativeOrder(j));
        }
        if self.samples.iter().any(|v| !v.is_finite()) {
            return Err(SpectralError::NonFiniteSamples);
        }
        if j == 0 {
            return Ok(self.clone());
        }
        let n = self.grid.num_points();
        let spec = self.spectrum();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            // The unpaired Nyquist mode has no consistent real odd derivative.
            if i == n / 2 && j % 2 == 1 {
                out.push(C64::new(0.0, 0.0));
            } else {
                let xi = self.grid.wavenumber(i);
                out.push(spec[i] * C64::new(0.0, xi).powu(j as u32));
            }
        }
        Ok(Field::from_spectrum(self.grid, out))
    }

    pub fn l2_norm(&self) -> f64 {
        let dx = self.grid.spacing();
        (dx * self.samples.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn linf_norm(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Standard Sobolev norm with weight `(ξ² + 1)^s`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let dxi = self.grid.delta_xi();
        let sum: f64 = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let xi = self.grid.wavenumber(i);
                (xi * xi + 1.0).powf(s) * z.norm_sqr()
            })
            .sum();
        (dxi * sum).sqrt()
    }

    /// `H^s_κ` norm: `(∫ (ξ² + 4κ²)^s |f̂|² dξ)^{1/2}`.
    pub fn hs_kappa_norm(&self, s: f64, kappa: f64) -> Result<f64, SpectralError> {
        if !(kappa > 0.0) {
            return Err(SpectralError::NonPositiveKappa(kappa));
        }
        let dxi = self.grid.delta_xi();
        let sum: f64 = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                let xi = self.grid.wavenumber(i);
                (xi * xi + 4.0 * kappa * kappa).powf(s) * z.norm_sqr()
            })
            .sum();
        Ok((dxi * sum).sqrt())
    }

    pub fn scale(&self, a: f64) -> Field {
        Field {
            grid: self.grid,
            samples: self.samples.iter().map(|v| a * v).collect(),
            spectrum: OnceCell::new(),
        }
    }

    pub fn add(&self, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a + b)
                .collect(),
            spectrum: OnceCell::new(),
        }
    }

    pub fn sub(&self, other: &Field) -> Field {
        self.add(&other.scale(-1.0))
    }

    /// Collocation product (pointwise; subject to aliasing).
    pub fn mul_pointwise(&self, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid);
        Field {
            grid: self.grid,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a * b)
                .collect(),
            spectrum: OnceCell::new(),
        }
    }

    /// Alias-free product: both factors are zero-padded to twice the band
    /// before multiplying, then the result is truncated back to the grid.
    pub fn mul_padded(&self, other: &Field) -> Field {
        assert_eq!(self.grid, other.grid);
        let n = self.grid.num_points();
        let m = 2 * n;
        let pad = |f: &Field| -> Vec<C64> {
            let spec = f.spectrum();
            let mut out = vec![C64::new(0.0, 0.0); m];
            for i in 0..n {
                let k = if i < n / 2 { i } else { i + m - n };
                out[k] = spec[i];
            }
            // The coarse Nyquist bin lands at fine index m − n/2; split it
            // symmetrically to keep the padded spectrum Hermitian.
            let z = out[m - n / 2] * 0.5;
            out[m - n / 2] = z;
            out[n / 2] = z.conj();
            out
        };
        let fine = Grid { num_points: m, half_length: self.grid.half_length };
        let a = Field::from_spectrum(fine, pad(self));
        let b = Field::from_spectrum(fine, pad(other));
        let prod = a.mul_pointwise(&b);
        let spec = prod.spectrum();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let k = if i < n / 2 { i } else { i + m - n };
            out[i] = spec[k];
        }
        // On the coarse grid the fine modes ±ξ_max alias onto the same bin.
        out[n / 2] += spec[n / 2];
        Field::from_spectrum(self.grid, out)
    }

    /// 2/3-rule de-aliasing: zeroes every mode with `|ξ| > (2/3)·ξ_max`.
    pub fn dealias_two_thirds(&self) -> Field {
        let cutoff = 2.0 / 3.0 * self.grid.max_wavenumber();
        let spec = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, z)| {
                if self.grid.wavenumber(i).abs() > cutoff {
                    C64::new(0.0, 0.0)
                } else {
                    *z
                }
            })
            .collect();
        Field::from_spectrum(self.grid, spec)
    }

    /// Spectral interpolation onto a grid refined by the integer factor `r`.
    pub fn upsample(&self, r: usize) -> Field {
        assert!(r >= 1);
        if r == 1 {
            return self.clone();
        }
        let n = self.grid.num_points();
        let m = r * n;
        let spec = self.spectrum();
        let mut out = vec![C64::new(0.0, 0.0); m];
        for i in 0..n {
            let k = if i < n / 2 { i } else { i + m - n };
            out[k] = spec[i];
        }
        // The Nyquist bin lands at fine index m − n/2; split it symmetrically
        // to keep the padded spectrum Hermitian.
        let z = out[m - n / 2] * 0.5;
        out[m - n / 2] = z;
        out[n / 2] = z.conj();
        let fine = Grid { num_points: m, half_length: self.grid.half_length };
        Field::from_spectrum(fine, out)
    }

    /// Antiderivative evaluated at grid nodes: the mean contributes a linear
    /// ramp, every other mode is divided by `iξ`. Exact for band-limited data.
    pub fn antiderivative(&self) -> Field {
        let n = self.grid.num_points();
        let spec = self.spectrum();
        let mean = self.samples.iter().sum::<f64>() / n as f64;
        let mut out = vec![C64::new(0.0, 0.0); n];
        for i in 1..n {
            let xi = self.grid.wavenumber(i);
            out[i] = spec[i] / C64::new(0.0, xi);
        }
        let osc = Field::from_spectrum(self.grid, out);
        let samples = (0..n)
            .map(|i| osc.samples[i] + mean * self.grid.point(i))
            .collect();
        Field { grid: self.grid, samples, spectrum: OnceCell::new() }
    }

    /// Translate by an integer number of grid cells (periodic rotation).
    pub fn shift_cells(&self, cells: i64) -> Field {
        let n = self.grid.num_points() as i64;
        let samples = (0..n)
            .map(|i| self.samples[(i + cells).rem_euclid(n) as usize])
            .collect();
        Field { grid: self.grid, samples, spectrum: OnceCell::new() }
    }
}

/// A Fourier multiplier evaluated on a grid's wavenumbers (FFT bin order).
#[derive(Debug, Clone)]
pub struct Multiplier {
    grid: Grid,
    values: Vec<C64>,
}

impl Multiplier {
    pub fn new(grid: Grid, symbol: impl Fn(f64) -> C64) -> Self {
        let values = (0..grid.num_points())
            .map(|i| symbol(grid.wavenumber(i)))
            .collect();
        Multiplier { grid, values }
    }

    pub fn new_real(grid: Grid, symbol: impl Fn(f64) -> f64) -> Self {
        Multiplier::new(grid, |xi| C64::new(symbol(xi), 0.0))
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn apply(&self, f: &Field) -> Field {
        assert_eq!(self.grid, f.grid());
        let spec = f
            .spectrum()
            .iter()
            .zip(&self.values)
            .map(|(z, m)| z * m)
            .collect();
        Field::from_spectrum(self.grid, spec)
    }
}

fn mollifier(t: f64, sharpness: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-sharpness / t).exp()
    }
}

/// Smooth cutoff `φ`: 1 on `|ξ| ≤ 1`, 0 on `|ξ| ≥ 2`, mollified step between.
/// The transition profile is adjustable through `sharpness` (default 1).
pub fn phi_with(xi: f64, sharpness: f64) -> f64 {
    let x = xi.abs();
    if x <= 1.0 {
        1.0
    } else if x >= 2.0 {
        0.0
    } else {
        let up = mollifier(2.0 - x, sharpness);
        up / (up + mollifier(x - 1.0, sharpness))
    }
}

pub fn phi(xi: f64) -> f64 {
    phi_with(xi, 1.0)
}

/// Littlewood–Paley bump `ψ(ξ) = √(φ(ξ) − φ(2ξ))`, supported on `1/2 < |ξ| < 2`.
pub fn psi_with(xi: f64, sharpness: f64) -> f64 {
    (phi_with(xi, sharpness) - phi_with(2.0 * xi, sharpness)).max(0.0).sqrt()
}

pub fn psi(xi: f64) -> f64 {
    psi_with(xi, 1.0)
}

/// Dyadic scales `N = 2^j` with `ψ(ξ/N) ≠ 0`, i.e. `N ∈ (|ξ|/2, 2|ξ|)`.
fn dyadic_window(xi: f64) -> impl Iterator<Item = f64> {
    let j0 = xi.abs().log2().floor() as i32;
    (j0 - 2..=j0 + 2).map(|j| (j as f64).exp2())
}

/// The dyadic square sum `Σ_{N ∈ 2^Z} ψ²(ξ/N)`: identically 1 away from ξ = 0.
pub fn lp_partition(xi: f64) -> f64 {
    lp_partition_with(xi, 1.0)
}

pub fn lp_partition_with(xi: f64, sharpness: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    dyadic_window(xi)
        .map(|n| {
            let p = psi_with(xi / n, sharpness);
            p * p
        })
        .sum()
}

/// Gradual high-frequency cutoff symbol
/// `m_hi(ξ) = Σ_{K<1} K^s ψ²(ξ/K) + Σ_{K≥1} ψ²(ξ/K)`.
pub fn m_hi(xi: f64, s: i64) -> f64 {
    m_hi_with(xi, s, 1.0)
}

pub fn m_hi_with(xi: f64, s: i64, sharpness: f64) -> f64 {
    if xi == 0.0 {
        return 0.0;
    }
    dyadic_window(xi)
        .map(|k| {
            let p = psi_with(xi / k, sharpness);
            let w = if k < 1.0 { k.powi(s as i32) } else { 1.0 };
            w * p * p
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionBranch {
    High,
    Low,
}

/// Apply `Π_{≥N}` (branch `High`, symbol `m_hi(ξ/N)`) or `Π_{<N}` (branch
/// `Low`, symbol `√(1 − m_hi²(ξ/N))`), so that `Π²_{<N} + Π²_{≥N} = 1`.
pub fn project_pi(
    f: &Field,
    n_scale: f64,
    s: i64,
    which: ProjectionBranch,
) -> Result<Field, SpectralError> {
    project_pi_with(f, n_scale, s, which, 1.0)
}

pub fn project_pi_with(
    f: &Field,
    n_scale: f64,
    s: i64,
    which: ProjectionBranch,
    sharpness: f64,
) -> Result<Field, SpectralError> {
    if !(n_scale > 0.0) || n_scale.log2().fract() != 0.0 {
        return Err(SpectralError::NonDyadicScale(n_scale));
    }
    if s < 3 {
        return Err(SpectralError::ProjectionExponent(s));
    }
    let grid = f.grid();
    let spec = f
        .spectrum()
        .iter()
        .enumerate()
        .map(|(i, z)| {
            let m = m_hi_with(grid.wavenumber(i) / n_scale, s, sharpness).min(1.0);
            let w = match which {
                ProjectionBranch::High => m,
                ProjectionBranch::Low => (1.0 - m * m).max(0.0).sqrt(),
            };
            z * w
        })
        .collect();
    Ok(Field::from_spectrum(grid, spec))
}
