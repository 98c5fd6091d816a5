// Recovers a function from its ray integrals by truncated SVD.

use thermolab::flow::Thermostat;
use thermolab::geometry::SurfaceModel;
use thermolab::xray::{
    assemble_discrete_operator, entry_state, reconstruct_pair, transform_pair, KernelThresholds, PairField,
    PolynomialBasis, RayFan,
};

pub fn main() -> thermolab::Result<()> {
    let th = Thermostat::geodesic(SurfaceModel::flat_disk());
    let basis = PolynomialBasis::new(6);
    let op = assemble_discrete_operator(&th, &basis, &RayFan::new(16, 16))?;
    let pair = PairField::parse("exp(-x^2)*(1 - y^2)", "0", "0")?;
    let data = op
        .rays
        .iter()
        .map(|&(s, a)| transform_pair(&th, &pair, entry_state(s, a)).map(|r| r.value))
        .collect::<thermolab::Result<Vec<f64>>>()?;
    let rec = reconstruct_pair(&op, &basis, &data, KernelThresholds::default())?;
    let (mut err, mut norm) = (0.0, 0.0);
    for v in rec.nodes(12, 12) {
        let truth = (-v.x * v.x).exp() * (1.0 - v.y * v.y);
        err += (v.phi - truth).powi(2);
        norm += truth * truth;
    }
    println!("kept {} modes, relative L2 error {:.2e}", rec.kept, (err / norm).sqrt());
    Ok(())
}
