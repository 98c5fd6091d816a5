// Least-squares residuals of the cohomological equation on the flat torus.

use thermolab::anosov::{cohomological_residual, SolverOptions};
use thermolab::field::SmField;
use thermolab::geometry::SurfaceModel;
use thermolab::grid::GridSpec;

pub fn main() -> thermolab::Result<()> {
    let m = SurfaceModel::flat_torus();
    let zero = SmField::constant(0.0);
    let cases = [
        (
            "d(sin 2 pi x)",
            zero.clone(),
            SmField::parse("2*pi*cos(2*pi*x)")?,
            zero.clone(),
        ),
        (
            "h = sin 2 pi x",
            SmField::parse("sin(2*pi*x)")?,
            zero.clone(),
            zero.clone(),
        ),
        ("dx", zero.clone(), SmField::constant(1.0), zero.clone()),
    ];
    for n in [16, 24] {
        for (name, h, tx, ty) in &cases {
            let r = cohomological_residual(&m, &zero, h, (tx, ty), &GridSpec::torus(n), SolverOptions::default())?;
            println!(
                "n = {n}  {name:<15} residual {:.3e} after {} iterations",
                r.residual, r.iterations
            );
        }
    }
    Ok(())
}
