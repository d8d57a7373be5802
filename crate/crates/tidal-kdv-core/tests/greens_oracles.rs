//! Cross-validation of the four Green's-diagonal engines on shared
//! potentials, plus translation covariance and the defining ODE residual.

use tidal_kdv_core::schrodinger::{
    diagonal_green, greens_ode_residual, translation_covariance_check, GreensMethod,
    SchrodingerProblem,
};
use tidal_kdv_core::spectral_grid::{Field, Grid};

fn gaussian(grid: Grid) -> Field {
    Field::from_fn(grid, |x| (-x * x).exp()).unwrap()
}

#[test]
fn all_engines_agree_on_a_gaussian() {
    let grid = Grid::new(1024, 20.0).unwrap();
    let kappa = 3.0;
    let prob = SchrodingerProblem::decaying(gaussian(grid), kappa).unwrap();
    let jost = diagonal_green(&prob, GreensMethod::Jost).unwrap();
    let dense = diagonal_green(&prob, GreensMethod::DenseInverse).unwrap();
    let marching = diagonal_green(&prob, GreensMethod::JostMarching { substeps: 4 }).unwrap();
    let series = diagonal_green(&prob, GreensMethod::Series(8)).unwrap();
    let vs_dense = jost.values().sub(dense.values()).linf_norm();
    let vs_marching = jost.values().sub(marching.values()).linf_norm();
    let vs_series = jost.values().sub(series.values()).linf_norm();
    assert!(vs_dense <= 1e-7, "jost vs dense {vs_dense:.3e}");
    assert!(vs_marching <= 1e-8, "jost vs marching {vs_marching:.3e}");
    assert!(vs_series <= 1e-6, "jost vs series {vs_series:.3e}");
}

#[test]
fn engines_agree_on_a_step_like_potential() {
    // Asymmetric tanh step: exercises unequal left/right boundary closures.
    let grid = Grid::new(1024, 40.0).unwrap();
    let kappa = 2.0;
    let v = Field::from_fn(grid, |x| 0.4 * (x.tanh() - (x - 20.0).tanh() - 1.0)).unwrap();
    let edge = v.samples()[0];
    let prob = SchrodingerProblem::new(v, kappa, edge, edge).unwrap();
    let jost = diagonal_green(&prob, GreensMethod::Jost).unwrap();
    let dense = diagonal_green(&prob, GreensMethod::DenseInverse).unwrap();
    let diff = jost.values().sub(dense.values()).linf_norm();
    assert!(diff <= 1e-7, "jost vs dense on step {diff:.3e}");
}

#[test]
fn ode_residual_is_small_and_refines_at_fourth_order() {
    // g‴ = 2Vg′ + 2(Vg)′ + 4κ²g′ characterizes the diagonal; the residual of
    // the marching engine at N = 1024 is ≤ 1e-6 and drops by ≥ 8 under
    // refinement of the marching substeps.
    let kappa = 3.0;
    let residual_at = |substeps: usize| {
        let grid = Grid::new(1024, 20.0).unwrap();
        let v = gaussian(grid);
        let prob = SchrodingerProblem::decaying(v.clone(), kappa).unwrap();
        let g = diagonal_green(&prob, GreensMethod::JostMarching { substeps }).unwrap();
        greens_ode_residual(&g, &v)
    };
    let coarse = residual_at(1);
    assert!(coarse <= 1e-6, "residual {coarse:.3e}");
    let fine = residual_at(2);
    assert!(coarse / fine >= 8.0, "refinement factor {:.2}", coarse / fine);
}

#[test]
fn spectral_engine_residual_is_near_machine_precision() {
    let grid = Grid::new(1024, 20.0).unwrap();
    let kappa = 3.0;
    let v = gaussian(grid);
    let prob = SchrodingerProblem::decaying(v.clone(), kappa).unwrap();
    let g = diagonal_green(&prob, GreensMethod::Jost).unwrap();
    let r = greens_ode_residual(&g, &v);
    assert!(r <= 1e-10, "spectral residual {r:.3e}");
}

#[test]
fn diagonal_is_translation_covariant() {
    let grid = Grid::new(512, 20.0).unwrap();
    let q = Field::from_fn(grid, |x| 0.9 * (-(x + 1.0).powi(2)).exp()).unwrap();
    let shift = 8.0 * grid.spacing();
    let defect = translation_covariance_check(&q, 2.5, shift).unwrap();
    assert!(defect <= 1e-10, "covariance defect {defect:.3e}");
}

#[test]
fn free_diagonal_is_half_inverse_kappa() {
    let grid = Grid::new(512, 20.0).unwrap();
    for &kappa in &[0.5, 1.0, 4.0] {
        let prob = SchrodingerProblem::decaying(Field::zero(grid), kappa).unwrap();
        for method in [
            GreensMethod::Jost,
            GreensMethod::DenseInverse,
            GreensMethod::Series(3),
        ] {
            let g = diagonal_green(&prob, method).unwrap();
            let target = 1.0 / (2.0 * kappa);
            for &v in g.values().samples() {
                assert!(
                    (v - target).abs() <= 1e-9 * (1.0 + target),
                    "{method:?} at kappa = {kappa}: {v} vs {target}"
                );
            }
        }
    }
}
