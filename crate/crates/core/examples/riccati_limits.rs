// Riccati solutions on the hyperbolic plane: finite windows, doubling
// limits and the a priori bound.

use thermolab::field::SmPoint;
use thermolab::flow::Thermostat;
use thermolab::geometry::SurfaceModel;
use thermolab::jacobi::{JacobiSolver, RiccatiSign};

pub fn main() -> thermolab::Result<()> {
    let solver = JacobiSolver::new(&Thermostat::geodesic(SurfaceModel::hyperbolic_half_plane()));
    let p = SmPoint::new(0.0, 1.0, 0.3);
    for r in [0.5f64, 1.0, 2.0] {
        let v = solver.riccati_at_zero(p, r, RiccatiSign::Plus)?;
        println!("R = {r}: r+(0) = {v:.12}, coth R = {:.12}", 1.0 / r.tanh());
    }
    let lim = solver.solve_riccati_limit(p, 1e-6, 1024.0)?;
    println!(
        "limits ({:.9}, {:.9}) reached at R = {}",
        lim.plus, lim.minus, lim.radius
    );
    let bound = solver.check_riccati_bound(&[p], &solver.thermostat.model.default_grid(), 1e-9, 1e-6)?;
    println!("bound {:.6} with A = {}", bound.bound, bound.constants.a);
    Ok(())
}
