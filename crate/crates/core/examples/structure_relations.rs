// Frame relations of a conformal torus with and without a thermostat.

use thermolab::expr::parse_expression;
use thermolab::field::SmField;
use thermolab::geometry::{DerivativeMode, SurfaceKind, SurfaceModel};
use thermolab::grid::GridSpec;

pub fn main() -> thermolab::Result<()> {
    let phi = parse_expression("0.1*sin(2*pi*x)*cos(2*pi*y)")?;
    let model = SurfaceModel::conformal(SurfaceKind::ConformalTorus, phi, 1e-6)?;
    let lambda = SmField::parse("0.2*sin(2*pi*y)")?;
    let grid = GridSpec::torus(12);
    for mode in [DerivativeMode::Analytic, DerivativeMode::FiniteDifference { h: 1e-4 }] {
        let report = model.validate_structure_relations(&grid, Some(&lambda), mode);
        println!("{mode:?}");
        for r in &report.relations {
            println!("  {:<32} max {:.2e}  rms {:.2e}", r.relation, r.max, r.rms);
        }
    }
    Ok(())
}
