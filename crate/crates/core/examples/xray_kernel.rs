// Discrete X-ray transform on the disk: the numerical kernel against the
// potential pairs.

use thermolab::field::SmField;
use thermolab::flow::Thermostat;
use thermolab::geometry::SurfaceModel;
use thermolab::xray::{analyze_kernel, assemble_discrete_operator, KernelThresholds, PolynomialBasis, RayFan};

pub fn main() -> thermolab::Result<()> {
    let basis = PolynomialBasis::new(6);
    for lambda in [0.0, 0.3] {
        let th = Thermostat::new(SurfaceModel::flat_disk(), SmField::constant(lambda));
        let op = assemble_discrete_operator(&th, &basis, &RayFan::new(16, 16))?;
        let rep = analyze_kernel(&op, &basis.gauge_basis(), KernelThresholds::default())?;
        println!(
            "lambda {lambda}: {} rays x {} columns, kernel {} (gauge {}), gap {:.1e}, max angle {:.1e} deg",
            op.rows(),
            op.cols(),
            rep.kernel_dimension,
            rep.gauge_dimension,
            rep.gap,
            rep.max_angle_deg
        );
    }
    Ok(())
}
