// Pointwise Pestov identity at random states of a conformal torus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermolab::expr::parse_expression;
use thermolab::field::{SmField, SmPoint};
use thermolab::geometry::{DerivativeMode, SurfaceKind, SurfaceModel};
use thermolab::identities::check_pestov_pointwise;

pub fn main() -> thermolab::Result<()> {
    let phi = parse_expression("0.1*sin(2*pi*x)*cos(2*pi*y)")?;
    let model = SurfaceModel::conformal(SurfaceKind::ConformalTorus, phi, 1e-6)?;
    let lambda = SmField::parse("0.2*sin(2*pi*y) + 0.1*cos(theta)")?;
    let u = SmField::parse("sin(2*pi*x)*cos(theta)")?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<SmPoint> = (0..200)
        .map(|_| SmPoint::new(rng.random(), rng.random(), rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    let rep = check_pestov_pointwise(&model, &lambda, &u, &points, DerivativeMode::Analytic);
    println!(
        "{} points, max residual {:.2e}, scale {:.2e}",
        rep.points, rep.max_residual, rep.max_lhs
    );
    Ok(())
}
