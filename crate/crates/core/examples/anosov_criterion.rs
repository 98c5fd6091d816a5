// The curvature criterion and the quadratic-form rate along a Jacobi field.

use thermolab::anosov::{hyperbolicity_criterion, quadratic_form_rate, sylvester_equivalence};
use thermolab::field::SmField;
use thermolab::flow::{uniform_times, Thermostat};
use thermolab::geometry::SurfaceModel;
use thermolab::jacobi::{JacobiSolver, JacobiState};

pub fn main() -> thermolab::Result<()> {
    let hyp = SurfaceModel::hyperbolic_half_plane();
    for text in ["0", "0.5", "0.4*cos(theta)", "1.5"] {
        let lambda = SmField::parse(text)?;
        let grid = hyp.default_grid();
        let c = hyperbolicity_criterion(&hyp, &lambda, &grid);
        let s = sylvester_equivalence(&hyp, &lambda, &grid);
        println!(
            "lambda = {text:<14} sup {:+.4} anosov {} (sign mismatches {})",
            c.sup_value, c.anosov_flag, s.mismatches
        );
    }
    let solver = JacobiSolver::new(&Thermostat::geodesic(hyp));
    let ts = uniform_times(0.0, 2.0, 1e-3);
    let traj = solver.integrate_from([0.0, 1.0, 0.3], JacobiState::new(0.0, 1.0, 0.5), 2.0, &ts)?;
    let q = quadratic_form_rate(&solver, &traj);
    let last = q.states.last().expect("samples");
    println!(
        "yz grows to {:.4} at t = {}, rate check {:?}",
        last.q_value, last.t, q.max_fd_deviation
    );
    Ok(())
}
