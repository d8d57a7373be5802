//! Diagonal Green's functions of `−∂² + V + κ²`, the perturbation functional
//! `α(κ, q)`, and numerical verification of the resolvent operator identities.
//!
//! The workhorse representation is the logarithmic derivative (Riccati)
//! substitution for the two decaying solutions `ψ₊`, `ψ₋` of
//! `−ψ″ + (V + κ²)ψ = 0`:
//!
//! ```text
//! ψ₊′/ψ₊ = −κ − μ₊,   (∂ − 2κ) μ₊ = μ₊² − V,
//! ψ₋′/ψ₋ =  κ + μ₋,   (∂ + 2κ) μ₋ = V − μ₋²,
//! ```
//!
//! in terms of which the diagonal Green's function is simply
//! `g = 1/(2κ + μ₊ + μ₋)` — no exponentially large quantity ever appears.
//! The Riccati pair is solved either by a spectral fixed point (machine
//! precision on the periodic box; the default `Jost` engine) or by explicit
//! RK4 marching from Robin boundary data (`JostMarching`, kept for
//! convergence-order studies). A banded finite-difference inverse and the
//! resolvent Neumann series serve as independent oracles.

use crate::spectral_grid::{Field, Grid, Multiplier, SpectralError, C64};
use std::f64::consts::PI;
use thiserror::Error;

/// Safety margin for positive-definiteness: we require `κ² + min V > 0.1`.
pub const POSITIVITY_MARGIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SchrodingerError {
    #[error("kappa must be positive (got {0})")]
    NonPositiveKappa(f64),
    #[error("operator not safely positive definite: kappa² + min V = {margin:.3e} ≤ 0.1")]
    NotPositiveDefinite { margin: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("shift {0} is not an integer multiple of the grid spacing")]
    ShiftNotGridAligned(f64),
    #[error("resolvent series diverges: term ratio {term_ratio:.3e} ≥ 1")]
    SeriesDivergence { term_ratio: f64 },
    #[error("Riccati fixed point stalled after {iterations} iterations (residual {residual:.3e})")]
    FixedPointStalled { iterations: usize, residual: f64 },
    #[error("bound state at −κ²: 2κ + μ₊ + μ₋ is not positive")]
    BoundState,
    #[error("marching step unstable: 2κ·h = {two_kappa_h:.3} exceeds the RK4 stability bound")]
    MarchingUnstable { two_kappa_h: f64 },
    #[error("input is not band-limited: spectral tail fraction {tail_fraction:.3e}")]
    AliasedInput { tail_fraction: f64 },
    #[error("Jost solutions would overflow: κ·L = {exponent:.1} too large for exponentials")]
    WouldOverflow { exponent: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// The discretized operator `−∂² + V + κ²` together with the edge values of
/// `V` used for boundary conditions.
#[derive(Debug, Clone)]
pub struct SchrodingerProblem {
    potential: Field,
    kappa: f64,
    asymptotic_left: f64,
    asymptotic_right: f64,
}

impl SchrodingerProblem {
    pub fn new(
        potential: Field,
        kappa: f64,
        asymptotic_left: f64,
        asymptotic_right: f64,
    ) -> Result<Self, SchrodingerError> {
        if !(kappa > 0.0) {
            return Err(SchrodingerError::NonPositiveKappa(kappa));
        }
        let min_v = potential.samples().iter().cloned().fold(f64::INFINITY, f64::min);
        let margin = kappa * kappa + min_v;
        if !(margin > POSITIVITY_MARGIN) {
            return Err(SchrodingerError::NotPositiveDefinite { margin });
        }
        Ok(SchrodingerProblem { potential, kappa, asymptotic_left, asymptotic_right })
    }

    /// Problem for a decaying perturbation alone (zero asymptotics).
    pub fn decaying(q: Field, kappa: f64) -> Result<Self, SchrodingerError> {
        SchrodingerProblem::new(q, kappa, 0.0, 0.0)
    }

    pub fn potential(&self) -> &Field {
        &self.potential
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn grid(&self) -> Grid {
        self.potential.grid()
    }
}

/// How to compute the diagonal Green's function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreensMethod {
    /// Riccati pair by spectral fixed point; machine-accurate on the box.
    Jost,
    /// Riccati pair by RK4 marching from Robin edge data, `substeps` RK4
    /// steps per grid cell. Fixed-order; used for refinement studies.
    JostMarching { substeps: usize },
    /// Banded 4th-order finite differences, diagonal of the explicit inverse.
    DenseInverse,
    /// Resolvent Neumann series truncated at the given order.
    Series(usize),
}

/// `g(x) = G(x, x; κ, V)` on the grid.
#[derive(Debug, Clone)]
pub struct GreensDiagonal {
    values: Field,
    method: GreensMethod,
    kappa: f64,
}

impl GreensDiagonal {
    pub fn values(&self) -> &Field {
        &self.values
    }

    pub fn method(&self) -> GreensMethod {
        self.method
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }
}

/// Jost solutions with their (constant) Wronskian `ψ₊′ψ₋ − ψ₊ψ₋′`.
#[derive(Debug, Clone)]
pub struct JostPair {
    pub psi_plus: Field,
    pub psi_minus: Field,
    pub wronskian: f64,
}

/// Free resolvent kernel `(1/2κ)·e^{−κ|x−y|}` of `(−∂² + κ²)^{-1}`.
pub fn free_resolvent_kernel(x: f64, y: f64, kappa: f64) -> f64 {
    assert!(kappa > 0.0, "kappa must be positive");
    (-kappa * (x - y).abs()).exp() / (2.0 * kappa)
}

/// Multiplier for `R₀(κ) = (−∂² + κ²)^{-1}`.
fn r0_multiplier(grid: Grid, kappa: f64) -> Multiplier {
    Multiplier::new_real(grid, |xi| 1.0 / (xi * xi + kappa * kappa))
}

// ---------------------------------------------------------------------------
// Riccati solvers
// ---------------------------------------------------------------------------

const FIXED_POINT_MAX_ITER: usize = 2000;

/// Periodic solutions of the Riccati pair by spectral fixed point:
/// `μ₊ = (∂−2κ)^{-1}(μ₊² − V)`, `μ₋ = (∂+2κ)^{-1}(V − μ₋²)`.
/// The linear solves are exact Fourier multipliers; products are alias-free.
/// Contraction factor is ~‖μ‖_∞/κ, so convergence is fast for κ ≳ ‖V‖.
fn riccati_pair_spectral(v: &Field, kappa: f64) -> Result<(Field, Field), SchrodingerError> {
    let grid = v.grid();
    let s_plus = Multiplier::new(grid, |xi| C64::new(-2.0 * kappa, xi).inv());
    let s_minus = Multiplier::new(grid, |xi| C64::new(2.0 * kappa, xi).inv());
    let solve = |s: &Multiplier, sign: f64| -> Result<Field, SchrodingerError> {
        // sign = +1 solves (∂ ∓ 2κ)μ = ±(μ² − V)
        let mut mu = s.apply(&v.scale(-sign));
        let mut residual = f64::INFINITY;
        for iteration in 0..FIXED_POINT_MAX_ITER {
            let rhs = mu.mul_padded(&mu).sub(v).scale(sign);
            let next = s.apply(&rhs);
            residual = next.sub(&mu).linf_norm();
            mu = next;
            if residual <= 1e-15 * (1.0 + mu.linf_norm()) {
                return Ok(mu);
            }
            if !residual.is_finite() {
                return Err(SchrodingerError::FixedPointStalled { iterations: iteration + 1, residual });
            }
        }
        Err(SchrodingerError::FixedPointStalled { iterations: FIXED_POINT_MAX_ITER, residual })
    };
    let mu_plus = solve(&s_plus, 1.0)?;
    let mu_minus = solve(&s_minus, -1.0)?;
    Ok((mu_plus, mu_minus))
}

/// Riccati pair by explicit RK4 marching, each branch integrated in its
/// contracting direction (μ₊ right-to-left, μ₋ left-to-right) from Robin
/// boundary data `μ = V_edge/(√(κ² + V_edge) + κ)`.
fn riccati_pair_marching(
    prob: &SchrodingerProblem,
    substeps: usize,
) -> Result<(Field, Field), SchrodingerError> {
    assert!(substeps >= 1);
    let grid = prob.grid();
    let n = grid.num_points();
    let kappa = prob.kappa;
    let h = grid.spacing() / substeps as f64;
    let two_kappa_h = 2.0 * kappa * h;
    if two_kappa_h > 2.5 {
        return Err(SchrodingerError::MarchingUnstable { two_kappa_h });
    }
    // Stage values live on a grid refined by 2·substeps (RK4 needs midpoints).
    let fine = prob.potential.upsample(2 * substeps);
    let vf = fine.samples();
    let mf = vf.len();
    let robin = |v_edge: f64| v_edge / ((kappa * kappa + v_edge).sqrt() + kappa);

    let mut mu_plus = vec![0.0; n];
    let mut mu = robin(prob.asymptotic_right);
    // March from x = +L (fine index mf, wrapping) down to x = −L.
    let mut idx = mf;
    while idx > 0 {
        if idx % (2 * substeps) == 0 {
            let node = idx / (2 * substeps);
            if node < n {
                mu_plus[node] = mu;
            }
        }
        let f = |i: usize, m: f64| 2.0 * kappa * m + m * m - vf[i % mf];
        let k1 = f(idx % mf, mu);
        let k2 = f(idx - 1, mu - 0.5 * h * k1);
        let k3 = f(idx - 1, mu - 0.5 * h * k2);
        let k4 = f(idx - 2, mu - h * k3);
        mu -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        idx -= 2;
    }
    mu_plus[0] = mu;

    let mut mu_minus = vec![0.0; n];
    let mut mu = robin(prob.asymptotic_left);
    let mut idx = 0;
    while idx < mf {
        if idx % (2 * substeps) == 0 {
            mu_minus[idx / (2 * substeps)] = mu;
        }
        let f = |i: usize, m: f64| vf[i % mf] - 2.0 * kappa * m - m * m;
        let k1 = f(idx, mu);
        let k2 = f(idx + 1, mu + 0.5 * h * k1);
        let k3 = f(idx + 1, mu + 0.5 * h * k2);
        let k4 = f(idx + 2, mu + h * k3);
        mu += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        idx += 2;
    }

    Ok((
        Field::from_samples(grid, mu_plus)?,
        Field::from_samples(grid, mu_minus)?,
    ))
}

fn greens_from_riccati(
    grid: Grid,
    kappa: f64,
    mu_plus: &Field,
    mu_minus: &Field,
) -> Result<Field, SchrodingerError> {
    let denom: Vec<f64> = mu_plus
        .samples()
        .iter()
        .zip(mu_minus.samples())
        .map(|(p, m)| 2.0 * kappa + p + m)
        .collect();
    if denom.iter().any(|d| !(*d > 0.0)) {
        return Err(SchrodingerError::BoundState);
    }
    Ok(Field::from_samples(grid, denom.into_iter().map(|d| 1.0 / d).collect())?)
}

// ---------------------------------------------------------------------------
// Banded LU (partial pivoting) for the dense-inverse oracle
// ---------------------------------------------------------------------------

/// LU factorization of a banded matrix with `kl` sub- and `ku`
/// superdiagonals, LAPACK band storage with room for pivoting fill-in.
struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    /// Column-major band storage, `ldab = 2·kl + ku + 1` rows; entry (i, j)
    /// lives at `ab[kl + ku + i − j + ldab·j]`.
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    fn ldab(kl: usize, ku: usize) -> usize {
        2 * kl + ku + 1
    }

    /// Factor the matrix given by `entry(i, j)` (queried only within the band).
    fn factor(n: usize, kl: usize, ku: usize, entry: impl Fn(usize, usize) -> f64) -> Self {
        let ldab = Self::ldab(kl, ku);
        let mut ab = vec![0.0; ldab * n];
        for j in 0..n {
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n - 1);
            for i in lo..=hi {
                ab[kl + ku + i - j + ldab * j] = entry(i, j);
            }
        }
        let mut piv = vec![0usize; n];
        for k in 0..n {
            // Pivot among rows k..k+kl in column k.
            let hi = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = ab[kl + ku + ldab * k].abs();
            for i in (k + 1)..=hi {
                let v = ab[kl + ku + i - k + ldab * k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    ab.swap(kl + ku + k - j + ldab * j, kl + ku + p - j + ldab * j);
                }
            }
            let pivot = ab[kl + ku + ldab * k];
            assert!(pivot != 0.0, "banded LU: zero pivot at column {k}");
            for i in (k + 1)..=hi {
                let m = ab[kl + ku + i - k + ldab * k] / pivot;
                ab[kl + ku + i - k + ldab * k] = m;
                for j in (k + 1)..=jmax {
                    ab[kl + ku + i - j + ldab * j] -= m * ab[kl + ku + k - j + ldab * j];
                }
            }
        }
        BandedLu { n, kl, ku, ab, piv }
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let ldab = Self::ldab(kl, ku);
        for k in 0..n {
            b.swap(k, self.piv[k]);
            let hi = (k + kl).min(n - 1);
            let bk = b[k];
            for i in (k + 1)..=hi {
                b[i] -= self.ab[kl + ku + i - k + ldab * k] * bk;
            }
        }
        for k in (0..n).rev() {
            let jmax = (k + kl + ku).min(n - 1);
            let mut s = b[k];
            for j in (k + 1)..=jmax {
                s -= self.ab[kl + ku + k - j + ldab * j] * b[j];
            }
            b[k] = s / self.ab[kl + ku + ldab * k];
        }
    }
}

/// The two decaying roots `β ∈ (0, 1)` of the 4th-order five-point
/// characteristic equation for `−u″ + λ²u = 0`. In `w = z + 1/z` the quartic
/// collapses to `w² − 16w + 28 + 12λ²h² = 0`, so `w = 8 ∓ √(36 − 12λ²h²)`:
/// the minus branch carries the physical pair (`β₁ ≈ e^{−λh}`), the plus
/// branch the spurious pair of the wide stencil (`β₂ ≈ 0.072`). Both must be
/// used when eliminating ghost nodes — closing with the physical mode alone
/// excites the spurious one and poisons the first few boundary rows.
fn discrete_decay_roots(lambda_sq: f64, h: f64) -> (f64, f64) {
    let lh2 = lambda_sq * h * h;
    assert!(lh2 < 3.0, "grid too coarse for the five-point decay closure");
    let disc = (36.0 - 12.0 * lh2).sqrt();
    // w₁ − 2 without cancellation for small λh.
    let w1 = 2.0 + 12.0 * lh2 / (6.0 + disc);
    let w2 = 8.0 + disc;
    let z = |w: f64| (w - ((w - 2.0) * (w + 2.0)).sqrt()) / 2.0;
    (z(w1), z(w2))
}

/// Infinite-lattice diagonal of the inverse of the constant-coefficient
/// 4th-order discretization of `−∂² + λ²`: the Fourier integral
/// `(1/2π)∫_{−π/h}^{π/h} dξ/(s_d(ξ) + λ²)` with the five-point symbol
/// `s_d(ξ) = [5/2 − (8/3)cos(ξh) + (1/6)cos(2ξh)]/h²`. Trapezoid over one
/// period converges exponentially (analytic periodic integrand).
fn lattice_free_diagonal(lambda_sq: f64, h: f64) -> f64 {
    let m = 4096;
    let mut sum = 0.0;
    for k in 0..m {
        let theta = 2.0 * PI * (k as f64 + 0.5) / m as f64 - PI;
        let s = (2.5 - 8.0 / 3.0 * theta.cos() + (2.0 * theta).cos() / 6.0) / (h * h);
        sum += 1.0 / (s + lambda_sq);
    }
    sum / (h * m as f64)
}

/// Diagonal of the inverse of the banded 4th-order finite-difference
/// discretization of `−∂² + V + κ²` on the box, with exponential-decay
/// closure at both edges (whole-line boundary conditions).
///
/// The raw inverse diagonal carries an O(h) bias: the Green's kernel has a
/// cusp on the diagonal, so its value at `x = y` draws on frequencies far
/// beyond the lattice band. The bias is a local, constant-coefficient
/// effect, so it is removed exactly by comparing against the analytically
/// computable infinite-lattice diagonal at the frozen local potential:
/// `g_j = raw_j + 1/(2λ_j) − D(λ_j²)` with `λ_j² = κ² + V(x_j)`.
fn greens_dense_inverse(prob: &SchrodingerProblem) -> Result<Field, SchrodingerError> {
    let grid = prob.grid();
    let n = grid.num_points();
    let h = grid.spacing();
    let kappa = prob.kappa;
    let v = prob.potential.samples();
    let h2 = h * h;
    // −D₂ (4th order): stencil (1/12, −4/3, 5/2, −4/3, 1/12)/h².
    let a2 = 1.0 / (12.0 * h2);
    let a1 = -4.0 / (3.0 * h2);
    // Ghost elimination coefficients: with both decaying roots β₁, β₂ the
    // outside solution is a combination of the two modes, which pins the
    // ghosts to the first two interior nodes:
    // u_{−1} = p₁u₀ + q₁u₁, u_{−2} = p₂u₀ + q₂u₁ (mirrored on the right).
    let closure = |lambda_sq: f64| {
        let (b1, b2) = discrete_decay_roots(lambda_sq, h);
        let p1 = b1 + b2;
        let q1 = -b1 * b2;
        let p2 = b1 * b1 + b1 * b2 + b2 * b2;
        let q2 = -b1 * b2 * (b1 + b2);
        (p1, q1, p2, q2)
    };
    let (pl1, ql1, pl2, ql2) = closure(kappa * kappa + prob.asymptotic_left);
    let (pr1, qr1, pr2, qr2) = closure(kappa * kappa + prob.asymptotic_right);
    let entry = move |i: usize, j: usize| -> f64 {
        let mut val = match (j as i64 - i as i64).abs() {
            0 => 5.0 / (2.0 * h2) + v[i] + kappa * kappa,
            1 => a1,
            2 => a2,
            _ => 0.0,
        };
        if i == 0 && j == 0 {
            val += a1 * pl1 + a2 * pl2;
        }
        if i == 0 && j == 1 {
            val += a1 * ql1 + a2 * ql2;
        }
        if i == 1 && j == 0 {
            val += a2 * pl1;
        }
        if i == 1 && j == 1 {
            val += a2 * ql1;
        }
        if i == n - 1 && j == n - 1 {
            val += a1 * pr1 + a2 * pr2;
        }
        if i == n - 1 && j == n - 2 {
            val += a1 * qr1 + a2 * qr2;
        }
        if i == n - 2 && j == n - 1 {
            val += a2 * pr1;
        }
        if i == n - 2 && j == n - 2 {
            val += a2 * qr1;
        }
        val
    };
    let lu = BandedLu::factor(n, 2, 2, entry);
    let mut diag = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[j] = 1.0;
        lu.solve(&mut col);
        let lambda_sq = kappa * kappa + v[j];
        diag[j] = col[j] / h + 0.5 / lambda_sq.sqrt() - lattice_free_diagonal(lambda_sq, h);
    }
    Ok(Field::from_samples(grid, diag)?)
}

// ---------------------------------------------------------------------------
// Resolvent Neumann series
// ---------------------------------------------------------------------------

/// `g ≈ 1/2κ + Σ_{ℓ=1..order} (−1)^ℓ ⟨δ_x, (R₀V)^ℓ R₀ δ_x⟩` with every `R₀`
/// applied as a Fourier multiplier on the box. Detects divergence via the
/// sup-norm ratio of successive terms.
fn greens_series(prob: &SchrodingerProblem, order: usize) -> Result<Field, SchrodingerError> {
    let grid = prob.grid();
    let n = grid.num_points();
    let h = grid.spacing();
    let kappa = prob.kappa;
    let r0 = r0_multiplier(grid, kappa);
    let v = prob.potential.samples();
    // Columns of the operator matrix (R₀V)^ℓ R₀ applied to unit samples.
    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            r0.apply(&Field::from_samples(grid, e).unwrap()).samples().to_vec()
        })
        .collect();
    // Zeroth term: ⟨δ_x, R₀ δ_x⟩ = 1/2κ exactly. Its grid evaluation would
    // carry an O(h) band-truncation bias (the kernel cusp draws on
    // frequencies beyond the band); the higher terms are smoothed by the
    // band-limited V and are free of it.
    let mut g = vec![1.0 / (2.0 * kappa); n];
    let mut prev_norm = 1.0 / (2.0 * kappa);
    for ell in 1..=order {
        for col in columns.iter_mut() {
            let scaled: Vec<f64> = col.iter().zip(v).map(|(c, vv)| c * vv).collect();
            *col = r0.apply(&Field::from_samples(grid, scaled)?).samples().to_vec();
        }
        let term: Vec<f64> = (0..n).map(|j| columns[j][j] / h).collect();
        let norm = term.iter().fold(0.0f64, |m, t| m.max(t.abs()));
        let ratio = norm / prev_norm;
        if ell >= 2 && ratio >= 1.0 {
            return Err(SchrodingerError::SeriesDivergence { term_ratio: ratio });
        }
        let sign = if ell % 2 == 0 { 1.0 } else { -1.0 };
        for (gj, t) in g.iter_mut().zip(&term) {
            *gj += sign * t;
        }
        prev_norm = norm;
    }
    Ok(Field::from_samples(grid, g)?)
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

pub fn diagonal_green(
    prob: &SchrodingerProblem,
    method: GreensMethod,
) -> Result<GreensDiagonal, SchrodingerError> {
    let values = match method {
        GreensMethod::Jost => {
            let (mu_plus, mu_minus) = riccati_pair_spectral(&prob.potential, prob.kappa)?;
            greens_from_riccati(prob.grid(), prob.kappa, &mu_plus, &mu_minus)?
        }
        GreensMethod::JostMarching { substeps } => {
            let (mu_plus, mu_minus) = riccati_pair_marching(prob, substeps)?;
            greens_from_riccati(prob.grid(), prob.kappa, &mu_plus, &mu_minus)?
        }
        GreensMethod::DenseInverse => greens_dense_inverse(prob)?,
        GreensMethod::Series(order) => greens_series(prob, order)?,
    };
    if values.samples().iter().any(|g| !(*g > 0.0)) {
        return Err(SchrodingerError::BoundState);
    }
    Ok(GreensDiagonal { values, method, kappa: prob.kappa })
}

/// Jost solutions reconstructed from the Riccati pair. Only valid when the
/// exponentials `e^{±κL}` stay within double range.
pub fn jost_pair(prob: &SchrodingerProblem) -> Result<JostPair, SchrodingerError> {
    let grid = prob.grid();
    let exponent = prob.kappa * grid.half_length();
    if exponent > 300.0 {
        return Err(SchrodingerError::WouldOverflow { exponent });
    }
    let (mu_plus, mu_minus) = riccati_pair_spectral(&prob.potential, prob.kappa)?;
    let m_plus = mu_plus.antiderivative();
    let m_minus = mu_minus.antiderivative();
    let psi_plus = Field::from_samples(
        grid,
        (0..grid.num_points())
            .map(|i| (-prob.kappa * grid.point(i) - m_plus.samples()[i]).exp())
            .collect(),
    )?;
    let psi_minus = Field::from_samples(
        grid,
        (0..grid.num_points())
            .map(|i| (prob.kappa * grid.point(i) + m_minus.samples()[i]).exp())
            .collect(),
    )?;
    // W = ψ₊′ψ₋ − ψ₊ψ₋′ = −(2κ + μ₊ + μ₋)·ψ₊ψ₋, evaluated at x = 0.
    let mid = grid.num_points() / 2;
    let wronskian = -(2.0 * prob.kappa + mu_plus.samples()[mid] + mu_minus.samples()[mid])
        * psi_plus.samples()[mid]
        * psi_minus.samples()[mid];
    Ok(JostPair { psi_plus, psi_minus, wronskian })
}

/// Max-norm of `g‴ − 2Vg′ − 2(Vg)′ − 4κ²g′`, normalized by `‖g′‖_{H²} + 1`.
pub fn greens_ode_residual(gd: &GreensDiagonal, v: &Field) -> f64 {
    let g = &gd.values;
    assert_eq!(g.grid(), v.grid(), "Green's diagonal and potential on different grids");
    let kappa = gd.kappa;
    let gp = g.derivative(1).expect("finite field");
    let residual = g
        .derivative(3)
        .expect("finite field")
        .sub(&v.mul_padded(&gp).scale(2.0))
        .sub(&v.mul_padded(g).derivative(1).expect("finite field").scale(2.0))
        .sub(&gp.scale(4.0 * kappa * kappa));
    residual.linf_norm() / (gp.sobolev_norm(2.0) + 1.0)
}

/// `‖g(x; κ, q(·+h)) − g(x+h; κ, q)‖_∞` for a grid-aligned shift `h`.
pub fn translation_covariance_check(
    q: &Field,
    kappa: f64,
    h: f64,
) -> Result<f64, SchrodingerError> {
    let grid = q.grid();
    let cells_f = h / grid.spacing();
    let cells = cells_f.round();
    if (cells_f - cells).abs() > 1e-9 {
        return Err(SchrodingerError::ShiftNotGridAligned(h));
    }
    let cells = cells as i64;
    let g0 = diagonal_green(&SchrodingerProblem::decaying(q.clone(), kappa)?, GreensMethod::Jost)?;
    let g1 = diagonal_green(
        &SchrodingerProblem::decaying(q.shift_cells(cells), kappa)?,
        GreensMethod::Jost,
    )?;
    Ok(g1.values.sub(&g0.values.shift_cells(cells)).linf_norm())
}

/// Both sides of `‖√R₀ q √R₀‖²_{I₂} = κ^{-1}‖q‖²_{H^{-1}_κ}`.
///
/// The left side is the squared Frobenius norm of the kernel in the discrete
/// Fourier basis, `Σ_{k,k'} w²(ξ_k)|q̂(ξ_k−ξ_{k'})|²w²(ξ_{k'})·Δξ²/2π` with
/// `w² = (ξ²+κ²)^{-1}`; the outer index runs over an 8×-extended frequency
/// range so that the slowly-decaying diagonal `ξ ≈ ξ'` is not truncated at
/// the grid band (equivalently: the sandwich is evaluated on an upsampled
/// grid).
pub fn hilbert_schmidt_check(q: &Field, kappa: f64) -> Result<(f64, f64), SchrodingerError> {
    if !(kappa > 0.0) {
        return Err(SchrodingerError::NonPositiveKappa(kappa));
    }
    let grid = q.grid();
    let n = grid.num_points() as i64;
    let dxi = grid.delta_xi();
    let spec = q.spectrum();
    // |q̂|² indexed by signed mode number.
    let hat_sq = |d: i64| -> f64 {
        if d <= -n / 2 || d >= n / 2 {
            return 0.0;
        }
        let idx = d.rem_euclid(n) as usize;
        spec[idx].norm_sqr()
    };
    let w2 = |xi: f64| 1.0 / (xi * xi + kappa * kappa);
    let extent = 8 * (n / 2);
    let mut lhs = 0.0;
    for k in -extent..extent {
        let xi = k as f64 * dxi;
        let wk = w2(xi);
        for d in (-n / 2 + 1)..(n / 2) {
            let h = hat_sq(d);
            if h != 0.0 {
                lhs += wk * w2(xi - d as f64 * dxi) * h;
            }
        }
    }
    lhs *= dxi * dxi / (2.0 * PI);
    let rhs = q.hs_kappa_norm(-1.0, kappa)?.powi(2) / kappa;
    Ok((lhs, rhs))
}

/// Max pairwise discrepancy (relative to `‖f‖_{L²}`) among the three
/// expressions `16κ⁵⟨δ_x, R₀ f R₀ δ_x⟩ = 16κ⁴R₀(2κ)f = [4κ²+∂²+R₀(2κ)∂⁴]f`.
pub fn verify_linear_identity(f: &Field, kappa: f64) -> Result<f64, SchrodingerError> {
    if !(kappa > 0.0) {
        return Err(SchrodingerError::NonPositiveKappa(kappa));
    }
    let grid = f.grid();
    let k2 = kappa * kappa;
    // ⟨δ_x, R₀ f R₀ δ_x⟩ = κ^{-1} R₀(2κ) f from the kernel formula.
    let e1 = Multiplier::new_real(grid, |xi| {
        16.0 * k2 * k2 * kappa / kappa / (xi * xi + 4.0 * k2)
    })
    .apply(f);
    let e2 = Multiplier::new_real(grid, |xi| 16.0 * k2 * k2 / (xi * xi + 4.0 * k2)).apply(f);
    let e3 = Multiplier::new_real(grid, |xi| {
        4.0 * k2 - xi * xi + xi.powi(4) / (xi * xi + 4.0 * k2)
    })
    .apply(f);
    let norm = f.l2_norm().max(f64::MIN_POSITIVE);
    let d = e1
        .sub(&e2)
        .linf_norm()
        .max(e1.sub(&e3).linf_norm())
        .max(e2.sub(&e3).linf_norm());
    Ok(d / norm)
}

/// Left side of the quadratic identity, `16κ⁵⟨δ_x, R₀ f R₀ h R₀ δ_x⟩`,
/// evaluated by the bilinear Fourier formula (direct O(N²) summation).
fn quadratic_lhs(f: &Field, h: &Field, kappa: f64) -> Field {
    let grid = f.grid();
    let n = grid.num_points() as i64;
    let dxi = grid.delta_xi();
    let k2 = kappa * kappa;
    let fs = f.spectrum();
    let hs = h.spectrum();
    let hat = |spec: &[C64], d: i64| -> C64 {
        if d <= -n / 2 || d >= n / 2 {
            C64::new(0.0, 0.0)
        } else {
            spec[d.rem_euclid(n) as usize]
        }
    };
    let mut out = vec![C64::new(0.0, 0.0); n as usize];
    for k in 0..n {
        let ks = if k < n / 2 { k } else { k - n }; // signed mode number
        let xi = ks as f64 * dxi;
        let mut acc = C64::new(0.0, 0.0);
        for j in (-n / 2 + 1)..(n / 2) {
            let hj = hat(hs, j);
            if hj == C64::new(0.0, 0.0) {
                continue;
            }
            let fd = hat(fs, ks - j);
            if fd == C64::new(0.0, 0.0) {
                continue;
            }
            let eta = j as f64 * dxi;
            let dme = xi - eta;
            let weight = 8.0 * k2 * k2 * (xi * xi + dme * dme + eta * eta + 24.0 * k2)
                / ((xi * xi + 4.0 * k2) * (dme * dme + 4.0 * k2) * (eta * eta + 4.0 * k2));
            acc += fd * hj * weight;
        }
        out[k as usize] = acc * (dxi / (2.0 * PI).sqrt());
    }
    Field::from_spectrum(grid, out)
}

fn band_limit_check(f: &Field) -> Result<(), SchrodingerError> {
    let grid = f.grid();
    let cutoff = 2.0 / 3.0 * grid.max_wavenumber();
    let mut tail = 0.0;
    let mut total = 0.0;
    for (i, z) in f.spectrum().iter().enumerate() {
        let e = z.norm_sqr();
        total += e;
        if grid.wavenumber(i).abs() > cutoff {
            tail += e;
        }
    }
    if total > 0.0 && tail / total > 1e-16 {
        return Err(SchrodingerError::AliasedInput { tail_fraction: tail / total });
    }
    Ok(())
}

/// Relative max discrepancy between the bilinear Fourier evaluation of
/// `16κ⁵⟨δ_x, R₀ f R₀ h R₀ δ_x⟩` and the multiplier/product form
/// `3fh − 3[R₀(2κ)f″][R₀(2κ)h″] + 4κ²(−5 + R₀(2κ)∂²)([R₀(2κ)f′][R₀(2κ)h′])
///  + 4κ²(5∂² + 2R₀(2κ)∂⁴)([R₀(2κ)f][R₀(2κ)h])`.
pub fn verify_quadratic_identity(
    f: &Field,
    h: &Field,
    kappa: f64,
) -> Result<f64, SchrodingerError> {
    if !(kappa > 0.0) {
        return Err(SchrodingerError::NonPositiveKappa(kappa));
    }
    if f.grid() != h.grid() {
        return Err(SchrodingerError::GridMismatch);
    }
    band_limit_check(f)?;
    band_limit_check(h)?;
    let grid = f.grid();
    let k2 = kappa * kappa;
    let r2k = r0_multiplier(grid, 2.0 * kappa);
    let lhs = quadratic_lhs(f, h, kappa);
    let d = |field: &Field, j: usize| field.derivative(j).expect("finite field");
    let p = r2k.apply(&d(f, 1)).mul_padded(&r2k.apply(&d(h, 1)));
    let r = r2k.apply(f).mul_padded(&r2k.apply(h));
    let rhs = f
        .mul_padded(h)
        .scale(3.0)
        .sub(&r2k.apply(&d(f, 2)).mul_padded(&r2k.apply(&d(h, 2))).scale(3.0))
        .add(&p.scale(-5.0).add(&r2k.apply(&d(&p, 2))).scale(4.0 * k2))
        .add(&d(&r, 2).scale(5.0).add(&r2k.apply(&d(&r, 4)).scale(2.0)).scale(4.0 * k2));
    let scale = lhs.linf_norm().max(rhs.linf_norm()).max(f64::MIN_POSITIVE);
    Ok(lhs.sub(&rhs).linf_norm() / scale)
}

/// Renormalized log-transmission `α(κ, q)` for decaying `q`.
///
/// From the Riccati pair, the reciprocal transmission coefficient satisfies
/// `−log T = log(W/W_free) = ∫₀^∞ μ₊ + ∫_{−∞}^0 μ₋
/// + log(1 + (μ₊(0)+μ₋(0))/2κ)`; the renormalization removes the linear
/// trace term `(1/2κ)∫q`, after which `α = (1/2κ)∫q + log T` starts at the
/// quadratic (momentum) term of the large-κ expansion.
pub fn compute_alpha(q: &Field, kappa: f64) -> Result<f64, SchrodingerError> {
    let prob = SchrodingerProblem::decaying(q.clone(), kappa)?;
    let (mu_plus, mu_minus) = riccati_pair_spectral(&prob.potential, kappa)?;
    let grid = q.grid();
    let n = grid.num_points();
    let l = grid.half_length();
    let mid = n / 2;
    let integral_right = |mu: &Field| -> f64 {
        // ∫₀^L μ = ∫_{−L}^{L} μ − ∫_{−L}^0 μ, all endpoints at grid nodes.
        let mean = mu.samples().iter().sum::<f64>() / n as f64;
        let anti = mu.antiderivative();
        2.0 * l * mean - (anti.samples()[mid] - anti.samples()[0])
    };
    let integral_left = |mu: &Field| -> f64 {
        let anti = mu.antiderivative();
        anti.samples()[mid] - anti.samples()[0]
    };
    let edge = (mu_plus.samples()[mid] + mu_minus.samples()[mid]) / (2.0 * kappa);
    if edge <= -1.0 {
        return Err(SchrodingerError::BoundState);
    }
    let q_integral = q.samples().iter().sum::<f64>() * grid.spacing();
    Ok(q_integral / (2.0 * kappa)
        - (integral_right(&mu_plus) + integral_left(&mu_minus) + edge.ln_1p()))
}

/// `H_κ(q) = −16κ⁵·α(κ, q) + 4κ²·P(q)` with `P(q) = ½∫q²`.
pub fn compute_hkappa_functional(q: &Field, kappa: f64) -> Result<f64, SchrodingerError> {
    let alpha = compute_alpha(q, kappa)?;
    let p = 0.5 * q.l2_norm().powi(2);
    Ok(-16.0 * kappa.powi(5) * alpha + 4.0 * kappa * kappa * p)
}

/// `κ⁵·‖{g + ⟨δ,R₀VR₀δ⟩ − ⟨δ,R₀VR₀VR₀δ⟩}^{(s+1)}‖_{L²}` with `V = q + W`:
/// the series tail after removing the constant, linear and quadratic terms.
pub fn greens_tail_remainder(
    q: &Field,
    w: &Field,
    kappa: f64,
    s: usize,
) -> Result<f64, SchrodingerError> {
    assert!(s >= 1);
    if q.grid() != w.grid() {
        return Err(SchrodingerError::GridMismatch);
    }
    let v = q.add(w);
    let grid = v.grid();
    let prob = SchrodingerProblem::new(
        v.clone(),
        kappa,
        w.samples()[0],
        w.samples()[0],
    )?;
    let g = diagonal_green(&prob, GreensMethod::Jost)?;
    // ⟨δ,R₀VR₀δ⟩ = κ^{-1}R₀(2κ)V; the quadratic term is the bilinear form
    // divided by 16κ⁵.
    let linear = Multiplier::new_real(grid, |xi| {
        1.0 / (kappa * (xi * xi + 4.0 * kappa * kappa))
    })
    .apply(&v);
    let quadratic = quadratic_lhs(&v, &v, kappa).scale(1.0 / (16.0 * kappa.powi(5)));
    let remainder = g.values.add(&linear).sub(&quadratic);
    let deriv = remainder.derivative(s + 1)?;
    Ok(kappa.powi(5) * deriv.l2_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_grid::Grid;
    use approx::assert_relative_eq;

    fn gaussian(grid: Grid) -> Field {
        Field::from_fn(grid, |x| (-x * x).exp()).unwrap()
    }

    #[test]
    fn free_kernel_values() {
        assert_eq!(free_resolvent_kernel(3.0, 3.0, 1.0), 0.5);
        assert_eq!(free_resolvent_kernel(0.0, 0.0, 2.0), 0.25);
        assert_relative_eq!(
            free_resolvent_kernel(2.0f64.ln(), 0.0, 2.0),
            1.0 / 16.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn zero_potential_gives_half_kappa_inverse() {
        let grid = Grid::new(256, 15.0).unwrap();
        for kappa in [1.0, 2.5, 7.0] {
            let prob = SchrodingerProblem::decaying(Field::zero(grid), kappa).unwrap();
            for method in [
                GreensMethod::Jost,
                GreensMethod::JostMarching { substeps: 1 },
                GreensMethod::DenseInverse,
                GreensMethod::Series(3),
            ] {
                if matches!(method, GreensMethod::JostMarching { .. }) && 2.0 * kappa * grid.spacing() > 2.5 {
                    continue;
                }
                let g = diagonal_green(&prob, method).unwrap();
                let expect = 1.0 / (2.0 * kappa);
                for &v in g.values().samples() {
                    assert!((v - expect).abs() <= 1e-10, "{method:?} κ={kappa}: {v}");
                }
            }
        }
    }

    #[test]
    fn constant_potential_shift() {
        // V ≡ c shifts κ² → κ² + c: g ≡ 1/(2√(κ²+c)).
        let grid = Grid::new(2048, 10.0).unwrap();
        let c = 1.0;
        let kappa = 2.0;
        let v = Field::from_fn(grid, |_| c).unwrap();
        let prob = SchrodingerProblem::new(v, kappa, c, c).unwrap();
        let expect = 1.0 / (2.0 * (kappa * kappa + c).sqrt());
        let dense = diagonal_green(&prob, GreensMethod::DenseInverse).unwrap();
        for &g in dense.values().samples() {
            assert!((g - expect).abs() <= 1e-10, "dense: {g} vs {expect}");
        }
        let jost = diagonal_green(&prob, GreensMethod::Jost).unwrap();
        for &g in jost.values().samples() {
            assert!((g - expect).abs() <= 1e-12, "jost: {g} vs {expect}");
        }
    }

    #[test]
    fn jost_agrees_with_dense_inverse_for_gaussian() {
        let grid = Grid::new(2048, 20.0).unwrap();
        let kappa = 3.0;
        let prob = SchrodingerProblem::decaying(gaussian(grid), kappa).unwrap();
        let jost = diagonal_green(&prob, GreensMethod::Jost).unwrap();
        let dense = diagonal_green(&prob, GreensMethod::DenseInverse).unwrap();
        let diff = jost.values().sub(dense.values()).linf_norm();
        assert!(diff <= 1e-7, "jost vs dense: {diff:.3e}");
    }

    #[test]
    fn marching_converges_to_spectral_jost() {
        let grid = Grid::new(512, 20.0).unwrap();
        let kappa = 3.0;
        let prob = SchrodingerProblem::decaying(gaussian(grid), kappa).unwrap();
        let exact = diagonal_green(&prob, GreensMethod::Jost).unwrap();
        let coarse = diagonal_green(&prob, GreensMethod::JostMarching { substeps: 1 })
            .unwrap()
            .values()
            .sub(exact.values())
            .linf_norm();
        let fine = diagonal_green(&prob, GreensMethod::JostMarching { substeps: 2 })
            .unwrap()
            .values()
            .sub(exact.values())
            .linf_norm();
        assert!(coarse / fine >= 8.0, "marching not 4th order: {coarse:.3e} / {fine:.3e}");
    }

    #[test]
    fn series_converges_monotonically_for_large_kappa() {
        let grid = Grid::new(256, 15.0).unwrap();
        let kappa = 6.0;
        let prob = SchrodingerProblem::decaying(gaussian(grid), kappa).unwrap();
        let exact = diagonal_green(&prob, GreensMethod::Jost).unwrap();
        let mut prev = f64::INFINITY;
        for order in 1..=4 {
            let s = diagonal_green(&prob, GreensMethod::Series(order)).unwrap();
            let err = s.values().sub(exact.values()).linf_norm();
            // Each extra order shrinks the truncation error by ~‖V‖/κ² until
            // the grid bias of the term diagonals takes over near 1e-5; past
            // that floor we only require the error not to grow.
            if prev > 1e-5 {
                assert!(err < prev, "series order {order}: {err:.3e} vs {prev:.3e}");
            } else {
                assert!(err <= prev * 1.05, "series order {order}: {err:.3e} vs {prev:.3e}");
            }
            prev = err;
        }
        assert!(prev <= 1e-5, "series never reached its floor: {prev:.3e}");
    }

    #[test]
    fn series_divergence_detected() {
        // A tall positive barrier keeps the operator positive definite while
        // pushing the Neumann series' spectral radius past 1.
        let grid = Grid::new(256, 15.0).unwrap();
        let q = gaussian(grid).scale(8.0);
        let prob = SchrodingerProblem::decaying(q, 1.2).unwrap();
        assert!(matches!(
            diagonal_green(&prob, GreensMethod::Series(8)),
            Err(SchrodingerError::SeriesDivergence { .. })
        ));
    }

    #[test]
    fn ode_residual_zero_potential() {
        let grid = Grid::new(256, 15.0).unwrap();
        let prob = SchrodingerProblem::decaying(Field::zero(grid), 2.0).unwrap();
        let g = diagonal_green(&prob, GreensMethod::Jost).unwrap();
        assert!(greens_ode_residual(&g, &Field::zero(grid)) <= 1e-12);
    }

    #[test]
    fn ode_residual_small_for_spectral_jost() {
        let grid = Grid::new(1024, 20.0).unwrap();
        let kappa = 3.0;
        let q = gaussian(grid);
        let prob = SchrodingerProblem::decaying(q.clone(), kappa).unwrap();
        let g = diagonal_green(&prob, GreensMethod::Jost).unwrap();
        let r = greens_ode_residual(&g, &q);
        assert!(r <= 1e-6, "residual {r:.3e}");
    }

    #[test]
    fn translation_covariance() {
        let grid = Grid::new(256, 15.0).unwrap();
        let q = gaussian(grid);
        assert_eq!(translation_covariance_check(&q, 2.0, 0.0).unwrap(), 0.0);
        let one = translation_covariance_check(&q, 2.0, grid.spacing()).unwrap();
        assert!(one <= 1e-10, "one-cell shift: {one:.3e}");
        let band = Field::from_fn(grid, |x| {
            (3.0 * grid.delta_xi() * x).cos() * 0.4 + (7.0 * grid.delta_xi() * x).sin() * 0.2
        })
        .unwrap();
        let many = translation_covariance_check(&band, 2.0, 17.0 * grid.spacing()).unwrap();
        assert!(many <= 1e-10, "17-cell shift: {many:.3e}");
        assert!(matches!(
            translation_covariance_check(&q, 2.0, 0.4 * grid.spacing()),
            Err(SchrodingerError::ShiftNotGridAligned(_))
        ));
    }

    #[test]
    fn hilbert_schmidt_zero_field() {
        let grid = Grid::new(128, 10.0).unwrap();
        let (lhs, rhs) = hilbert_schmidt_check(&Field::zero(grid), 2.0).unwrap();
        assert_eq!(lhs, 0.0);
        assert_eq!(rhs, 0.0);
    }

    #[test]
    fn hilbert_schmidt_single_mode() {
        let grid = Grid::new(8192, 10.0).unwrap();
        let xi0 = 8.0 * PI / 10.0;
        let q = Field::from_fn(grid, |x| (xi0 * x).cos()).unwrap();
        let kappa = 1.0;
        let (lhs, rhs) = hilbert_schmidt_check(&q, kappa).unwrap();
        let expect = q.l2_norm().powi(2) / (kappa * (xi0 * xi0 + 4.0 * kappa * kappa));
        assert_relative_eq!(rhs, expect, max_relative = 1e-12);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
    }

    #[test]
    fn hilbert_schmidt_gaussian() {
        let grid = Grid::new(512, 20.0).unwrap();
        let (lhs, rhs) = hilbert_schmidt_check(&gaussian(grid), 2.0).unwrap();
        assert!((lhs - rhs).abs() / rhs <= 1e-6, "rel diff {:.3e}", (lhs - rhs).abs() / rhs);
    }

    #[test]
    fn linear_identity_residuals() {
        let grid = Grid::new(512, 20.0).unwrap();
        assert_eq!(verify_linear_identity(&Field::zero(grid), 2.0).unwrap(), 0.0);
        let r = verify_linear_identity(&gaussian(grid), 2.0).unwrap();
        assert!(r <= 1e-11, "residual {r:.3e}");
        // Symbol identity at ξ = 0: 16κ⁴/(4κ²) = 4κ².
        let kappa: f64 = 3.0;
        assert_eq!(16.0 * kappa.powi(4) / (4.0 * kappa * kappa), 4.0 * kappa * kappa);
    }

    #[test]
    fn quadratic_identity_single_mode_and_gaussians() {
        let grid = Grid::new(256, 15.0).unwrap();
        let z = Field::zero(grid);
        assert_eq!(verify_quadratic_identity(&z, &z, 2.0).unwrap(), 0.0);
        let mode = Field::from_fn(grid, |x| (5.0 * grid.delta_xi() * x).cos()).unwrap();
        let rm = verify_quadratic_identity(&mode, &mode, 2.0).unwrap();
        assert!(rm <= 1e-10, "single mode: {rm:.3e}");
        let f = gaussian(grid);
        let h = Field::from_fn(grid, |x| x * (-x * x).exp()).unwrap();
        let rg = verify_quadratic_identity(&f, &h, 3.0).unwrap();
        assert!(rg <= 1e-8, "gaussians: {rg:.3e}");
    }

    #[test]
    fn alpha_normalization_and_positivity() {
        let grid = Grid::new(512, 15.0).unwrap();
        assert_eq!(compute_alpha(&Field::zero(grid), 2.0).unwrap(), 0.0);
        for kappa in [1.5, 4.0, 16.0] {
            let a = compute_alpha(&gaussian(grid), kappa).unwrap();
            assert!(a >= 0.0, "α({kappa}) = {a:.3e}");
        }
    }

    #[test]
    fn alpha_large_kappa_expansion() {
        // α ≈ P/4κ³ − H_KdV/16κ⁵: check the second coefficient by removing
        // the first and scaling.
        let grid = Grid::new(1024, 15.0).unwrap();
        let q = gaussian(grid);
        let p = 0.5 * q.l2_norm().powi(2);
        let qp = q.derivative(1).unwrap();
        let q3 = q.mul_padded(&q).mul_padded(&q);
        let dx = grid.spacing();
        let h_kdv = 0.5 * qp.l2_norm().powi(2) + q3.samples().iter().sum::<f64>() * dx;
        for kappa in [8.0, 16.0, 32.0] {
            let a = compute_alpha(&q, kappa).unwrap();
            let second = (p / (4.0 * kappa.powi(3)) - a) * 16.0 * kappa.powi(5);
            assert_relative_eq!(second, h_kdv, max_relative = 0.05);
        }
    }

    #[test]
    fn alpha_quadratic_term_matches_series() {
        // α(λq) = λ²·(1/2κ)‖q‖²_{H^{-1}_κ}·κ·…: the quadratic term is
        // ½‖√R₀q√R₀‖²_{I₂} = (1/2κ)‖q‖²_{H^{-1}_κ}. Finite-difference second
        // derivative in λ should match it to 1%.
        let grid = Grid::new(512, 15.0).unwrap();
        let q = gaussian(grid);
        let kappa = 3.0;
        let lam = 1e-3;
        let a_p = compute_alpha(&q.scale(lam), kappa).unwrap();
        let a_m = compute_alpha(&q.scale(-lam), kappa).unwrap();
        let half_dd = (a_p + a_m) / (2.0 * lam * lam);
        let series_quadratic = q.hs_kappa_norm(-1.0, kappa).unwrap().powi(2) / (2.0 * kappa);
        assert_relative_eq!(half_dd, series_quadratic, max_relative = 0.01);
    }

    #[test]
    fn hkappa_approaches_kdv_energy() {
        let grid = Grid::new(1024, 15.0).unwrap();
        let q = gaussian(grid);
        let qp = q.derivative(1).unwrap();
        let q3 = q.mul_padded(&q).mul_padded(&q);
        let h_kdv =
            0.5 * qp.l2_norm().powi(2) + q3.samples().iter().sum::<f64>() * grid.spacing();
        let hk = compute_hkappa_functional(&q, 32.0).unwrap();
        assert_relative_eq!(hk, h_kdv, max_relative = 0.02);
        assert_eq!(compute_hkappa_functional(&Field::zero(grid), 8.0).unwrap(), 0.0);
    }

    #[test]
    fn jost_pair_wronskian_constant_and_positive() {
        let grid = Grid::new(512, 15.0).unwrap();
        let kappa = 2.0;
        let prob = SchrodingerProblem::decaying(gaussian(grid), kappa).unwrap();
        let pair = jost_pair(&prob).unwrap();
        assert!(pair.psi_plus.samples().iter().all(|&v| v > 0.0));
        assert!(pair.psi_minus.samples().iter().all(|&v| v > 0.0));
        // ψ₊ψ₋ grows where the prefactor shrinks and vice versa: their
        // combination −(2κ + μ₊ + μ₋)·ψ₊ψ₋ must be constant across the grid.
        // (ψ is not periodic, so spectral derivatives are unavailable; use
        // local finite differences as an independent cross-check instead.)
        let (mu_p, mu_m) = riccati_pair_spectral(prob.potential(), kappa).unwrap();
        let n = grid.num_points();
        for i in (n / 8)..(7 * n / 8) {
            let w = -(2.0 * kappa + mu_p.samples()[i] + mu_m.samples()[i])
                * pair.psi_plus.samples()[i]
                * pair.psi_minus.samples()[i];
            assert_relative_eq!(w, pair.wronskian, max_relative = 1e-8);
        }
        let h = grid.spacing();
        let fd = |f: &Field, i: usize| {
            (f.samples()[i - 2] - 8.0 * f.samples()[i - 1] + 8.0 * f.samples()[i + 1]
                - f.samples()[i + 2])
                / (12.0 * h)
        };
        for i in [n / 3, n / 2, 2 * n / 3] {
            let w = fd(&pair.psi_plus, i) * pair.psi_minus.samples()[i]
                - pair.psi_plus.samples()[i] * fd(&pair.psi_minus, i);
            assert_relative_eq!(w, pair.wronskian, max_relative = 1e-3);
        }
    }

    #[test]
    fn tail_remainder_trivial_and_decreasing() {
        let grid = Grid::new(512, 15.0).unwrap();
        let z = Field::zero(grid);
        assert!(greens_tail_remainder(&z, &z, 4.0, 1).unwrap() <= 1e-12);
        let q = gaussian(grid);
        let r8 = greens_tail_remainder(&q, &z, 8.0, 1).unwrap();
        let r16 = greens_tail_remainder(&q, &z, 16.0, 1).unwrap();
        assert!(r16 < r8, "remainder not decreasing: {r8:.3e} vs {r16:.3e}");
    }

    #[test]
    fn positivity_precondition_enforced() {
        let grid = Grid::new(256, 15.0).unwrap();
        let q = gaussian(grid).scale(-4.1);
        assert!(matches!(
            SchrodingerProblem::decaying(q, 2.0),
            Err(SchrodingerError::NotPositiveDefinite { .. })
        ));
        assert!(matches!(
            SchrodingerProblem::decaying(Field::zero(grid), -1.0),
            Err(SchrodingerError::NonPositiveKappa(_))
        ));
    }

    #[test]
    fn banded_lu_matches_dense_solver() {
        use nalgebra::{DMatrix, DVector};
        let n = 40;
        let (kl, ku) = (2, 2);
        // A fixed, reproducible non-symmetric banded matrix.
        let entry = |i: usize, j: usize| -> f64 {
            let d = j as i64 - i as i64;
            if d.unsigned_abs() as usize > 2 {
                0.0
            } else {
                ((i * 7 + j * 3 + 1) % 13) as f64 / 13.0 + if d == 0 { 4.0 } else { 0.0 }
            }
        };
        let lu = BandedLu::factor(n, kl, ku, entry);
        let a = DMatrix::from_fn(n, n, |i, j| entry(i, j));
        let b_vec: Vec<f64> = (0..n).map(|i| ((i * 5 + 2) % 11) as f64 - 5.0).collect();
        let x_ref = a.lu().solve(&DVector::from_vec(b_vec.clone())).unwrap();
        let mut x = b_vec;
        lu.solve(&mut x);
        for i in 0..n {
            assert_relative_eq!(x[i], x_ref[i], max_relative = 1e-10);
        }
    }
}


