// Conjugate times along geodesics of constant curvature +1, 0 and -1.

use thermolab::field::SmPoint;
use thermolab::flow::Thermostat;
use thermolab::geometry::SurfaceModel;
use thermolab::jacobi::JacobiSolver;

pub fn main() -> thermolab::Result<()> {
    let cases = [
        (
            "sphere",
            SurfaceModel::round_sphere_chart(),
            SmPoint::new(0.1, 0.2, 0.3),
        ),
        ("flat", SurfaceModel::flat_torus(), SmPoint::new(0.1, 0.2, 0.3)),
        (
            "hyperbolic",
            SurfaceModel::hyperbolic_half_plane(),
            SmPoint::new(0.0, 1.0, 0.3),
        ),
    ];
    for (name, model, p) in cases {
        let solver = JacobiSolver::new(&Thermostat::geodesic(model));
        let times = solver.detect_conjugate_points(p, 10.0)?;
        println!("{name:<11} {times:?}");
    }
    Ok(())
}
