// A thermostat orbit crossing the unit disk, and the unit-speed monitor.

use thermolab::field::{SmField, SmPoint};
use thermolab::flow::{OrbitOptions, Thermostat};
use thermolab::geometry::SurfaceModel;

pub fn main() -> thermolab::Result<()> {
    let th = Thermostat::new(SurfaceModel::flat_disk(), SmField::constant(0.5));
    let orbit = th.integrate_orbit(SmPoint::new(-0.9, 0.0, 0.0), &OrbitOptions::until(10.0).sampled(0.01))?;
    let end = orbit.end();
    println!("exit after t = {:?} at {:?}", orbit.exit_time, end.state);
    println!("transversal exit: {}", orbit.exit_transversal);
    if let Some(d) = th.speed_defect(&orbit) {
        println!("largest speed defect {d:.2e}");
    }
    Ok(())
}
