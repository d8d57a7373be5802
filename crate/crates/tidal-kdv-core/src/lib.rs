//! Spectral simulation and verification library for the Korteweg–de Vries
//! equation on step-like backgrounds.
//!
//! The crate is organised around five building blocks:
//!
//! * [`spectral_grid`] — periodic grid, Fourier transforms, spectral norms and
//!   the Littlewood–Paley / Π frequency projections;
//! * [`background`] — the tanh step profile `W(x) = c1·tanh(x) + c2` and its
//!   periodized surrogate;
//! * [`schrodinger`] — diagonal Green's functions `g(x; κ, V)` of
//!   `−∂² + V + κ²`, the perturbation functional `α(κ, q)`, and numerical
//!   verification of the resolvent operator identities;
//! * [`flows`] — right-hand sides and integrating-factor time steppers for
//!   KdV, tidal KdV, KdV with external potential, and the `H_κ` flows;
//! * [`diagnostics`] — conserved-energy reports, momentum-drift measurement,
//!   equicontinuity tails and κ-convergence studies.

pub mod background;
pub mod diagnostics;
pub mod flows;
pub mod schrodinger;
pub mod spectral_grid;
