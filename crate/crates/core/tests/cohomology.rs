use thermolab::anosov::{cohomological_residual, SolverOptions};
use thermolab::field::SmField;
use thermolab::geometry::SurfaceModel;
use thermolab::grid::GridSpec;

/// On the flat torus with zero coupling each theta layer decouples, and the
/// Fourier mode sin(2 pi x) is reachable exactly unless cos(theta_k)
/// vanishes to rounding. The least-squares residual is then
/// sqrt(#{k : cos theta_k ~ 0} / n_theta).
fn fourier_oracle(n_theta: usize) -> f64 {
    let dead = (0..n_theta)
        .filter(|&k| (2.0 * std::f64::consts::PI * k as f64 / n_theta as f64).cos().abs() < 1e-12)
        .count();
    (dead as f64 / n_theta as f64).sqrt()
}

#[test]
fn obstructed_residual_matches_the_fourier_oracle() {
    let m = SurfaceModel::flat_torus();
    let zero = SmField::constant(0.0);
    let h = SmField::parse("sin(2*pi*x)").unwrap();
    for (n, n_theta) in [(16, 16), (16, 20), (16, 22), (24, 24), (32, 32)] {
        let grid = GridSpec::Torus {
            n_x: n,
            n_y: n,
            n_theta,
        };
        let r = cohomological_residual(&m, &zero, &h, (&zero, &zero), &grid, SolverOptions::default()).unwrap();
        let oracle = fourier_oracle(n_theta);
        assert!(
            (r.residual - oracle).abs() < 1e-6,
            "n_theta {n_theta}: {} vs {oracle}",
            r.residual
        );
    }
}

#[test]
fn closed_form_with_nonzero_period_is_obstructed_at_every_layer() {
    let m = SurfaceModel::flat_torus();
    let zero = SmField::constant(0.0);
    let one = SmField::constant(1.0);
    for n in [8, 12] {
        let r = cohomological_residual(
            &m,
            &zero,
            &zero,
            (&zero, &one),
            &GridSpec::torus(n),
            SolverOptions::default(),
        )
        .unwrap();
        assert!((r.residual - 1.0).abs() < 1e-12);
    }
}

#[test]
fn iteration_cap_is_reported() {
    let m = SurfaceModel::flat_torus();
    let zero = SmField::constant(0.0);
    let h = SmField::parse("sin(2*pi*x)*cos(theta) + cos(2*pi*y)").unwrap();
    let opts = SolverOptions {
        max_iterations: 2,
        tolerance: 1e-14,
    };
    let e = cohomological_residual(
        &m,
        &SmField::constant(0.4),
        &h,
        (&zero, &zero),
        &GridSpec::torus(12),
        opts,
    )
    .unwrap_err();
    assert_eq!(e.exit_code(), 2, "{e}");
}

#[test]
fn boundary_domains_are_rejected() {
    let zero = SmField::constant(0.0);
    let e = cohomological_residual(
        &SurfaceModel::flat_disk(),
        &zero,
        &zero,
        (&zero, &zero),
        &GridSpec::torus(8),
        SolverOptions::default(),
    )
    .unwrap_err();
    assert_eq!(e.exit_code(), 1);
}
