// Integrated identities on the torus and on the disk with its boundary form.

use thermolab::field::SmField;
use thermolab::geometry::SurfaceModel;
use thermolab::identities::{check_integral_identity_boundary, check_integral_identity_closed};
use thermolab::quadrature::QuadratureGrid;

pub fn main() -> thermolab::Result<()> {
    let torus = SurfaceModel::flat_torus();
    let lambda = SmField::parse("0.3*sin(2*pi*x) + 0.2*cos(theta)")?;
    let u = SmField::parse("sin(2*pi*x)*cos(theta) + cos(2*pi*y)*sin(2*theta)")?;
    let r = check_integral_identity_closed(&torus, &lambda, &u, &QuadratureGrid::torus(&torus, 24, 24, 24))?;
    println!(
        "torus: lhs {:.6} rhs {:.6} rel {:.1e}",
        r.final_identity.lhs, r.final_identity.rhs, r.final_identity.rel_residual
    );

    let disk = SurfaceModel::flat_disk();
    let grid = QuadratureGrid::disk(&disk, 16, 48, 48);
    let zero = SmField::constant(0.0);
    for text in ["x*sin(theta) + y*cos(theta)", "(1 - x^2 - y^2)*sin(theta)"] {
        let r = check_integral_identity_boundary(&disk, &zero, &SmField::parse(text)?, &grid)?;
        println!(
            "disk, u = {text}: boundary {:.6}, rel {:.1e}",
            r.terms["boundary"], r.rel_residual
        );
    }
    Ok(())
}
