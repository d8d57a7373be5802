//! The step-like background `W(x) = c1·tanh(x) + c2` and its periodic
//! surrogate used on the computational box.
//!
//! The surrogate inserts a matching down-step at `x = x_R`, far from the
//! observation window, so the box edges meet smoothly:
//! `W_per(x) = c2 + c1·[tanh(x) − tanh(x − x_R) − 1]`.

use crate::spectral_grid::{Field, Grid};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BackgroundError {
    #[error("analytic derivatives are provided up to order 6 (got {0})")]
    DerivativeOrder(usize),
    #[error("return step x_R = {x_r} must satisfy x_R >= 20 and L >= x_R + 20 (L = {half_length})")]
    ReturnStepPlacement { x_r: f64, half_length: f64 },
    #[error("periodized background edge mismatch {0:.3e} exceeds 1e-10")]
    EdgeMismatch(f64),
}

/// `W(x) = c1·tanh(x) + c2`; `c1 > 0` models an incoming tide.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepProfile {
    pub c1: f64,
    pub c2: f64,
}

/// `j`-th derivative of tanh at `x`, closed forms through order 6.
fn tanh_derivative(x: f64, j: usize) -> f64 {
    let t = x.tanh();
    // sech² via cosh: `1 − t²` loses all its digits to cancellation once
    // tanh saturates, and the derivatives must stay accurate in the tails.
    let c = x.cosh();
    let s = 1.0 / (c * c);
    match j {
        0 => t,
        1 => s,
        2 => -2.0 * t * s,
        3 => 4.0 * t * t * s - 2.0 * s * s,
        4 => -8.0 * t.powi(3) * s + 16.0 * t * s * s,
        5 => 16.0 * t.powi(4) * s - 88.0 * t * t * s * s + 16.0 * s.powi(3),
        6 => -32.0 * t.powi(5) * s + 416.0 * t.powi(3) * s * s - 272.0 * t * s.powi(3),
        _ => unreachable!(),
    }
}

impl StepProfile {
    pub fn new(c1: f64, c2: f64) -> Self {
        StepProfile { c1, c2 }
    }

    /// `W^{(j)}(x)` analytically, `j ≤ 6`.
    pub fn eval(&self, x: f64, j: usize) -> Result<f64, BackgroundError> {
        if j > 6 {
            return Err(BackgroundError::DerivativeOrder(j));
        }
        let base = self.c1 * tanh_derivative(x, j);
        Ok(if j == 0 { base + self.c2 } else { base })
    }

    /// Limits `W(±∞) = c2 ± c1`.
    pub fn limits(&self) -> (f64, f64) {
        (self.c2 - self.c1, self.c2 + self.c1)
    }
}

/// The background periodized onto a grid via the auxiliary down-step at `x_R`.
#[derive(Debug, Clone)]
pub struct PeriodizedBackground {
    profile: StepProfile,
    return_center: f64,
    field: Field,
}

impl PeriodizedBackground {
    pub fn new(
        profile: StepProfile,
        grid: Grid,
        x_r: f64,
    ) -> Result<Self, BackgroundError> {
        let l = grid.half_length();
        if !(x_r >= 20.0) || !(l >= x_r + 20.0) {
            return Err(BackgroundError::ReturnStepPlacement { x_r, half_length: l });
        }
        let field = Field::from_fn(grid, |x| Self::eval_static(profile, x_r, x, 0))
            .expect("periodized background is finite");
        let left = Self::eval_static(profile, x_r, -l, 0);
        let right = Self::eval_static(profile, x_r, l, 0);
        let mismatch = (left - right).abs();
        if mismatch > 1e-10 {
            return Err(BackgroundError::EdgeMismatch(mismatch));
        }
        Ok(PeriodizedBackground { profile, return_center: x_r, field })
    }

    fn eval_static(profile: StepProfile, x_r: f64, x: f64, j: usize) -> f64 {
        let up = tanh_derivative(x, j);
        let down = tanh_derivative(x - x_r, j);
        let base = profile.c1 * (up - down);
        if j == 0 {
            base - profile.c1 + profile.c2
        } else {
            base
        }
    }

    /// Analytic value of `W_per^{(j)}(x)`, `j ≤ 6`.
    pub fn eval(&self, x: f64, j: usize) -> Result<f64, BackgroundError> {
        if j > 6 {
            return Err(BackgroundError::DerivativeOrder(j));
        }
        Ok(Self::eval_static(self.profile, self.return_center, x, j))
    }

    pub fn profile(&self) -> StepProfile {
        self.profile
    }

    pub fn return_center(&self) -> f64 {
        self.return_center
    }

    pub fn grid(&self) -> Grid {
        self.field.grid()
    }

    /// Samples of `W_per` on the grid.
    pub fn field(&self) -> &Field {
        &self.field
    }

    /// Samples of `W_per^{(j)}` (analytic, not spectral) on the grid.
    pub fn derivative_field(&self, j: usize) -> Result<Field, BackgroundError> {
        if j > 6 {
            return Err(BackgroundError::DerivativeOrder(j));
        }
        let grid = self.field.grid();
        Ok(Field::from_fn(grid, |x| {
            Self::eval_static(self.profile, self.return_center, x, j)
        })
        .expect("background derivatives are finite"))
    }

    /// The (common) edge value of the surrogate, used as Schrödinger asymptotics.
    pub fn edge_value(&self) -> f64 {
        let l = self.field.grid().half_length();
        Self::eval_static(self.profile, self.return_center, -l, 0)
    }
}
