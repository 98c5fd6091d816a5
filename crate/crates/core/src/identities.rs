//! Pestov identity, Stokes consequences and integral identities.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{SmField, SmPoint};
use crate::geometry::{DerivativeMode, DerivedCurvatures, FrameOperator, SurfaceModel};
use crate::jacobi::FanSample;
use crate::quadrature::{BoundaryNodes, QuadratureGrid};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_residual: f64,
    /// `abs_residual` divided by the largest magnitude among both sides and
    /// the named terms.
    pub rel_residual: f64,
    pub terms: BTreeMap<String, f64>,
}

impl IdentityReport {
    pub fn new(lhs: f64, rhs: f64, terms: BTreeMap<String, f64>) -> IdentityReport {
        let abs_residual = (lhs - rhs).abs();
        let scale = terms
            .values()
            .chain([lhs, rhs].iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let rel_residual = if scale > 0.0 { abs_residual / scale } else { 0.0 };
        IdentityReport {
            lhs,
            rhs,
            abs_residual,
            rel_residual,
            terms,
        }
    }
}

fn terms(list: &[(&str, f64)]) -> BTreeMap<String, f64> {
    list.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Frame operators of a thermostat, optionally replaced by difference quotients.
struct Ops {
    f: FrameOperator,
    h: FrameOperator,
    v: FrameOperator,
}

impl Ops {
    fn new(model: &SurfaceModel, lambda: &SmField, mode: DerivativeMode) -> Ops {
        let f = model.generator(lambda);
        match mode {
            DerivativeMode::Analytic => Ops {
                f,
                h: model.h.clone(),
                v: model.v.clone(),
            },
            DerivativeMode::FiniteDifference { h } => Ops {
                f: f.to_finite_difference(h, model.domain),
                h: model.h.to_finite_difference(h, model.domain),
                v: model.v.to_finite_difference(h, model.domain),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PestovReport {
    pub points: usize,
    pub max_residual: f64,
    /// Largest `|2 Hu V F u|`, for scale.
    pub max_lhs: f64,
}

/// Pointwise residual of the Pestov identity
/// `2 Hu VFu = (Fu)^2 + (Hu)^2 - K0 (Vu)^2 + F(Hu Vu) - H(Vu Fu) + V(Hu Fu)
///  + Fu (I Hu + J Vu) + Hu Vu (lambda I + V(lambda))`.
pub fn check_pestov_pointwise(
    model: &SurfaceModel,
    lambda: &SmField,
    u: &SmField,
    points: &[SmPoint],
    mode: DerivativeMode,
) -> PestovReport {
    let ops = Ops::new(model, lambda, mode);
    let cur = model.derived_curvatures(lambda);
    let (fu, hu, vu) = (ops.f.apply_field(u), ops.h.apply_field(u), ops.v.apply_field(u));
    let vfu = ops.v.apply_field(&fu);
    let t1 = ops.f.apply_field(&hu.mul(&vu));
    let t2 = ops.h.apply_field(&vu.mul(&fu));
    let t3 = ops.v.apply_field(&hu.mul(&fu));
    let div = cur.lambda_i.add(&cur.v_lambda);
    let (max_residual, max_lhs) = points
        .par_iter()
        .map(|&p| {
            let (a, b, c) = (fu.eval(p), hu.eval(p), vu.eval(p));
            let lhs = 2.0 * b * vfu.eval(p);
            let rhs = a * a + b * b - cur.k0.eval(p) * c * c + t1.eval(p) - t2.eval(p)
                + t3.eval(p)
                + a * (model.i.eval(p) * b + model.j.eval(p) * c)
                + b * c * div.eval(p);
            ((lhs - rhs).abs(), lhs.abs())
        })
        .reduce(|| (0.0, 0.0), |x, y| (x.0.max(y.0), x.1.max(y.1)));
    PestovReport {
        points: points.len(),
        max_residual,
        max_lhs,
    }
}

/// `int_{boundary} g i_Y Theta` where `Y` has base components `(yx, yy)`.
fn boundary_flux<G>(b: &BoundaryNodes, g: G) -> f64
where
    G: Fn(usize) -> f64 + Sync,
{
    (0..b.nodes.len())
        .into_par_iter()
        .map(|k| b.weights[k] * g(k))
        .collect::<Vec<f64>>()
        .iter()
        .sum()
}

/// Normal component of a frame operator at a boundary node.
fn normal_component(op: &FrameOperator, b: &BoundaryNodes, k: usize) -> f64 {
    let c = op.coefficients(b.nodes[k].coords());
    c[0] * b.normals[k][0] + c[1] * b.normals[k][1]
}

/// Largest `|i_V Theta|` over the boundary nodes.
pub fn vertical_boundary_contraction(model: &SurfaceModel, grid: &QuadratureGrid) -> f64 {
    grid.boundary.as_ref().map_or(0.0, |b| {
        (0..b.nodes.len())
            .map(|k| (b.weights[k] * normal_component(&model.v, b, k)).abs())
            .fold(0.0, f64::max)
    })
}

/// Stokes consequences of the Lie derivatives of the Liouville form:
/// `int F f = -int f (lambda I + V(lambda))`, `int H f = int f J` and
/// `int V f = -int f I`, each with its boundary flux on the disk.
pub fn check_lie_derivatives(
    model: &SurfaceModel,
    lambda: &SmField,
    grid: &QuadratureGrid,
    f: &SmField,
) -> [IdentityReport; 3] {
    let cur = model.derived_curvatures(lambda);
    let gen = model.generator(lambda);
    let div = cur.lambda_i.add(&cur.v_lambda);
    let fv = grid.values(f);
    let flux = |op: &FrameOperator| {
        grid.boundary.as_ref().map_or(0.0, |b| {
            boundary_flux(b, |k| f.eval(b.nodes[k]) * normal_component(op, b, k))
        })
    };
    let report = |op: &FrameOperator, coef: &SmField, sign: f64| {
        let d = grid.values(&op.apply_field(f));
        let cv = grid.values(coef);
        let lhs = grid.integrate_values(&d);
        let interior = sign * grid.sum_with(|k| fv[k] * cv[k]);
        let bdry = flux(op);
        IdentityReport::new(
            lhs,
            interior + bdry,
            terms(&[("interior", interior), ("boundary", bdry)]),
        )
    };
    [
        report(&gen, &div, -1.0),
        report(&model.h, &model.j, 1.0),
        report(&model.v, &model.i, -1.0),
    ]
}

/// Derivatives of `u` used by the integral identities.
struct UDerivs {
    fu: SmField,
    hu: SmField,
    vu: SmField,
    vfu: SmField,
    fvu: SmField,
}

impl UDerivs {
    fn new(model: &SurfaceModel, lambda: &SmField, u: &SmField) -> UDerivs {
        let f = model.generator(lambda);
        let fu = f.apply_field(u);
        let vu = model.v.apply_field(u);
        UDerivs {
            vfu: model.v.apply_field(&fu),
            fvu: f.apply_field(&vu),
            hu: model.h.apply_field(u),
            fu,
            vu,
        }
    }
}

/// Integrals shared by the closed and boundary identities.
struct Integrals {
    fvu2: f64,
    vfu2: f64,
    fu2: f64,
    hu2: f64,
    big_k_vu2: f64,
    k0_vu2: f64,
    correction_vu2: f64,
    hu_vfu: f64,
}

fn integrals(grid: &QuadratureGrid, d: &UDerivs, cur: &DerivedCurvatures, f_v_lambda: &SmField) -> Integrals {
    let rows: Vec<[f64; 8]> = grid
        .nodes
        .par_iter()
        .map(|&p| {
            let (fu, hu, vu) = (d.fu.eval(p), d.hu.eval(p), d.vu.eval(p));
            let (vfu, fvu) = (d.vfu.eval(p), d.fvu.eval(p));
            let vu2 = vu * vu;
            let corr = cur.lambda_i.eval(p) * cur.v_lambda.eval(p) + f_v_lambda.eval(p);
            [
                fvu * fvu,
                vfu * vfu,
                fu * fu,
                hu * hu,
                cur.big_k.eval(p) * vu2,
                cur.k0.eval(p) * vu2,
                corr * vu2,
                hu * vfu,
            ]
        })
        .collect();
    let s = |i: usize| grid.sum_with(|k| rows[k][i]);
    Integrals {
        fvu2: s(0),
        vfu2: s(1),
        fu2: s(2),
        hu2: s(3),
        big_k_vu2: s(4),
        k0_vu2: s(5),
        correction_vu2: s(6),
        hu_vfu: s(7),
    }
}

/// Reports for the closed-surface identities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClosedIdentityReport {
    /// `int (F V u)^2 - int KK (Vu)^2 = int (V F u)^2 - int (F u)^2`.
    pub final_identity: IdentityReport,
    /// `2 int Hu VFu = int (Fu)^2 + int (Hu)^2 - int K0 (Vu)^2`.
    pub first: IdentityReport,
    /// `2 int Hu VFu = int (VFu)^2 - int (FVu)^2 + int (Hu)^2
    ///  + int (lambda I V(lambda) + F V(lambda)) (Vu)^2`.
    pub second: IdentityReport,
}

pub fn check_integral_identity_closed(
    model: &SurfaceModel,
    lambda: &SmField,
    u: &SmField,
    grid: &QuadratureGrid,
) -> Result<ClosedIdentityReport> {
    if grid.boundary.is_some() || model.domain.has_boundary() {
        return Err(LabError::Domain("closed identities need a closed model".into()));
    }
    let cur = model.derived_curvatures(lambda);
    let fvl = model.generator(lambda).apply_field(&cur.v_lambda);
    let d = UDerivs::new(model, lambda, u);
    let s = integrals(grid, &d, &cur, &fvl);
    let named = terms(&[
        ("FVu^2", s.fvu2),
        ("VFu^2", s.vfu2),
        ("Fu^2", s.fu2),
        ("Hu^2", s.hu2),
        ("KK_Vu^2", s.big_k_vu2),
        ("K0_Vu^2", s.k0_vu2),
        ("correction_Vu^2", s.correction_vu2),
        ("2HuVFu", 2.0 * s.hu_vfu),
    ]);
    Ok(ClosedIdentityReport {
        final_identity: IdentityReport::new(s.fvu2 - s.big_k_vu2, s.vfu2 - s.fu2, named.clone()),
        first: IdentityReport::new(2.0 * s.hu_vfu, s.fu2 + s.hu2 - s.k0_vu2, named.clone()),
        second: IdentityReport::new(2.0 * s.hu_vfu, s.vfu2 - s.fvu2 + s.hu2 + s.correction_vu2, named),
    })
}

/// The boundary identity
/// `int (FVu)^2 - int KK (Vu)^2 + int_{boundary} omega(u) = int (VFu)^2 - int (Fu)^2`
/// with `omega(u) = (Hu Vu + V(lambda)(Vu)^2) i_F Theta - Fu Vu i_H Theta`.
pub fn check_integral_identity_boundary(
    model: &SurfaceModel,
    lambda: &SmField,
    u: &SmField,
    grid: &QuadratureGrid,
) -> Result<IdentityReport> {
    let b = grid
        .boundary
        .as_ref()
        .ok_or_else(|| LabError::Domain("boundary identity needs boundary nodes".into()))?;
    let cur = model.derived_curvatures(lambda);
    let gen = model.generator(lambda);
    let fvl = gen.apply_field(&cur.v_lambda);
    let d = UDerivs::new(model, lambda, u);
    let s = integrals(grid, &d, &cur, &fvl);
    let omega = boundary_flux(b, |k| {
        let p = b.nodes[k];
        let (fu, hu, vu) = (d.fu.eval(p), d.hu.eval(p), d.vu.eval(p));
        (hu * vu + cur.v_lambda.eval(p) * vu * vu) * normal_component(&gen, b, k)
            - fu * vu * normal_component(&model.h, b, k)
    });
    let max_u_boundary = b.nodes.iter().map(|p| u.eval(*p).abs()).fold(0.0, f64::max);
    Ok(IdentityReport::new(
        s.fvu2 - s.big_k_vu2 + omega,
        s.vfu2 - s.fu2,
        terms(&[
            ("FVu^2", s.fvu2),
            ("VFu^2", s.vfu2),
            ("Fu^2", s.fu2),
            ("KK_Vu^2", s.big_k_vu2),
            ("boundary", omega),
            ("max_u_on_boundary", max_u_boundary),
        ]),
    ))
}

/// Which Riccati variable enters the square in the second identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RiccatiVariable {
    /// `rho = z/y`, paired with `psi V(lambda)`.
    Rho,
    /// `r = y'/y`, paired with `psi (lambda I + V(lambda))`.
    R,
}

/// `int (F psi)^2 - int KK psi^2 = int [F psi - r psi + psi c]^2` with the
/// Riccati data supplied per node. The transport term
/// `int F((rho - V(lambda)) psi^2)` is reported both directly and through Stokes.
pub fn check_second_identity<R>(
    model: &SurfaceModel,
    lambda: &SmField,
    psi: &SmField,
    grid: &QuadratureGrid,
    r_field: R,
    variable: RiccatiVariable,
) -> Result<IdentityReport>
where
    R: Fn(SmPoint) -> Result<FanSample> + Sync,
{
    let cur = model.derived_curvatures(lambda);
    let gen = model.generator(lambda);
    let fvl = gen.apply_field(&cur.v_lambda);
    let fpsi = gen.apply_field(psi);
    let fans: Vec<FanSample> = grid
        .nodes
        .par_iter()
        .map(|&p| {
            if psi.eval(p) == 0.0 && fpsi.eval(p) == 0.0 {
                // the square and every term vanish; skip the orbit launch
                Ok(FanSample {
                    rho: 0.0,
                    r: cur.lambda_i.eval(p),
                    f_rho: 0.0,
                    f_r: 0.0,
                    start_time: 0.0,
                })
            } else {
                r_field(p)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<[f64; 8]> = grid
        .nodes
        .par_iter()
        .zip(fans.par_iter())
        .map(|(&p, s)| {
            let (ps, fp) = (psi.eval(p), fpsi.eval(p));
            let (li, vl, k0) = (cur.lambda_i.eval(p), cur.v_lambda.eval(p), cur.k0.eval(p));
            let sq_rho = fp - s.rho * ps + ps * vl;
            let sq_r = fp - s.r * ps + ps * (li + vl);
            let (sq, other) = match variable {
                RiccatiVariable::Rho => (sq_rho, sq_r),
                RiccatiVariable::R => (sq_r, sq_rho),
            };
            let transport = (s.f_rho - fvl.eval(p)) * ps * ps + 2.0 * (s.rho - vl) * ps * fp;
            let stokes = -(s.rho - vl) * ps * ps * (li + vl);
            let skip = ps == 0.0 && fp == 0.0;
            let ric_rho = if skip {
                0.0
            } else {
                (s.f_rho + s.rho * s.rho + (li - vl) * s.rho + k0).abs()
            };
            let ric_r = if skip {
                0.0
            } else {
                (s.f_r + s.r * s.r - (li + vl) * s.r + cur.k_lambda.eval(p)).abs()
            };
            [
                fp * fp,
                cur.big_k.eval(p) * ps * ps,
                sq * sq,
                other * other,
                transport,
                stokes,
                ric_rho,
                ric_r,
            ]
        })
        .collect();
    let s = |i: usize| grid.sum_with(|k| rows[k][i]);
    let max = |i: usize| rows.iter().map(|r| r[i]).fold(0.0, f64::max);
    let (fpsi2, kpsi2, sq, other) = (s(0), s(1), s(2), s(3));
    Ok(IdentityReport::new(
        fpsi2 - kpsi2,
        sq,
        terms(&[
            ("Fpsi^2", fpsi2),
            ("KK_psi^2", kpsi2),
            ("square_other_variable", other),
            ("transport", s(4)),
            ("transport_stokes", s(5)),
            ("riccati_rho_max", max(6)),
            ("riccati_r_max", max(7)),
        ]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::geometry::SurfaceKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn field(s: &str) -> SmField {
        SmField::parse(s).unwrap()
    }

    fn bumpy_torus() -> SurfaceModel {
        let phi = parse_expression("0.1*sin(2*pi*x) + 0.05*cos(2*pi*y)").unwrap();
        SurfaceModel::conformal(SurfaceKind::ConformalTorus, phi, 1e-8).unwrap()
    }

    fn random_points(n: usize, seed: u64) -> Vec<SmPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| SmPoint::new(rng.random(), rng.random(), rng.random_range(0.0..2.0 * PI)))
            .collect()
    }

    #[test]
    fn pestov_trivial_cases() {
        let flat = SurfaceModel::flat_torus();
        let pts = random_points(50, 1);
        let zero = SmField::constant(0.0);
        let r = check_pestov_pointwise(&flat, &zero, &SmField::constant(3.0), &pts, DerivativeMode::Analytic);
        assert_eq!(r.max_residual, 0.0);
        let r = check_pestov_pointwise(&flat, &zero, &field("sin(theta)"), &pts, DerivativeMode::Analytic);
        assert!(r.max_residual < 1e-14 && r.max_lhs < 1e-14);
    }

    #[test]
    fn pestov_on_thermostat() {
        let m = bumpy_torus();
        let lam = field("0.2*sin(2*pi*y)");
        let u = field("sin(2*pi*x)*cos(theta)");
        let pts = random_points(200, 2);
        let a = check_pestov_pointwise(&m, &lam, &u, &pts, DerivativeMode::Analytic);
        assert!(a.max_residual < 1e-10, "{a:?}");
        assert!(a.max_lhs > 1.0);
        let shifted = check_pestov_pointwise(
            &m,
            &lam,
            &u.add(&SmField::constant(5.0)),
            &pts,
            DerivativeMode::Analytic,
        );
        assert!(shifted.max_residual < 1e-10);
        let fd = check_pestov_pointwise(&m, &lam, &u, &pts[..40], DerivativeMode::FiniteDifference { h: 1e-3 });
        assert!(fd.max_residual < 1e-5, "{fd:?}");
    }

    #[test]
    fn stokes_on_torus() {
        let flat = SurfaceModel::flat_torus();
        let g = QuadratureGrid::torus(&flat, 16, 16, 16);
        let f = field("sin(2*pi*x)*sin(theta)");
        for r in check_lie_derivatives(&flat, &SmField::constant(0.0), &g, &f) {
            assert!(r.abs_residual < 1e-10);
        }
        let f = field("cos(2*pi*x)*sin(theta) + cos(theta)");
        let [rf, _, _] = check_lie_derivatives(&flat, &field("sin(theta)"), &g, &f);
        assert!(rf.abs_residual < 1e-9 && rf.lhs.abs() > 0.1, "{rf:?}");
        let m = bumpy_torus();
        let g = QuadratureGrid::torus(&m, 32, 32, 16);
        for r in check_lie_derivatives(&m, &field("0.3*cos(theta)+0.1*sin(2*pi*y)"), &g, &f) {
            assert!(r.abs_residual < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn stokes_on_disk_orientation() {
        let disk = SurfaceModel::flat_disk();
        let g = QuadratureGrid::disk(&disk, 8, 16, 16);
        let [rf, rh, rv] = check_lie_derivatives(&disk, &SmField::constant(0.0), &g, &field("x*cos(theta)"));
        assert!((rf.lhs - PI * PI).abs() < 1e-12);
        assert!(rf.abs_residual < 1e-12 && rh.abs_residual < 1e-12 && rv.abs_residual < 1e-12);
        assert_eq!(vertical_boundary_contraction(&disk, &g), 0.0);
    }

    #[test]
    fn closed_identities() {
        let flat = SurfaceModel::flat_torus();
        let g = QuadratureGrid::torus(&flat, 16, 16, 16);
        let r = check_integral_identity_closed(&flat, &SmField::constant(0.0), &SmField::constant(1.0), &g).unwrap();
        assert_eq!(r.final_identity.abs_residual, 0.0);
        let u = field("sin(2*pi*x)*sin(theta)");
        let r = check_integral_identity_closed(&flat, &SmField::constant(0.0), &u, &g).unwrap();
        assert!(r.final_identity.rel_residual < 1e-8);
        let m = bumpy_torus();
        let g = QuadratureGrid::torus(&m, 32, 32, 32);
        let lam = field("0.2*sin(2*pi*y) + 0.1*cos(theta)");
        let u = field("sin(2*pi*x)*cos(theta) + cos(2*pi*y)*sin(2*theta)");
        let r = check_integral_identity_closed(&m, &lam, &u, &g).unwrap();
        for rep in [&r.final_identity, &r.first, &r.second] {
            assert!(rep.rel_residual < 1e-8, "{rep:?}");
        }
    }

    #[test]
    fn boundary_identity_on_disk() {
        let disk = SurfaceModel::flat_disk();
        let g = QuadratureGrid::disk(&disk, 12, 32, 32);
        let zero = SmField::constant(0.0);
        let c = check_integral_identity_boundary(&disk, &zero, &SmField::constant(2.0), &g).unwrap();
        assert_eq!(c.abs_residual, 0.0);
        let r = check_integral_identity_boundary(&disk, &zero, &field("(1-x^2-y^2)*sin(theta)"), &g).unwrap();
        assert!(r.terms["boundary"].abs() < 1e-10 && r.rel_residual < 1e-6, "{r:?}");
        let r = check_integral_identity_boundary(&disk, &zero, &field("x*sin(theta)"), &g).unwrap();
        // the two halves of the boundary form cancel for this u
        assert!(r.terms["boundary"].abs() < 1e-12 && r.rel_residual < 1e-5, "{r:?}");
        let lam = field("0.3*cos(theta) + 0.2*x");
        let r = check_integral_identity_boundary(&disk, &zero, &field("x*sin(theta)+y*cos(theta)"), &g).unwrap();
        assert!(
            (r.terms["boundary"] - 2.0 * PI * PI).abs() < 1e-10 && r.rel_residual < 1e-10,
            "{r:?}"
        );
        let u = field("x*sin(theta)+y*cos(theta)+x^2*cos(2*theta)");
        let r = check_integral_identity_boundary(&disk, &lam, &u, &g).unwrap();
        assert!(r.terms["boundary"].abs() > 0.1 && r.rel_residual < 1e-5, "{r:?}");
    }

    #[test]
    fn second_identity_with_exterior_fan() {
        use crate::flow::Thermostat;
        use crate::jacobi::JacobiSolver;
        let disk = SurfaceModel::flat_disk();
        let g = QuadratureGrid::disk(&disk, 16, 32, 32);
        let zero = SmField::constant(0.0);
        let solver = JacobiSolver::new(&Thermostat::new(disk.clone(), zero.clone()));
        let psi = field("(1-x^2-y^2)*sin(theta)");
        for var in [RiccatiVariable::Rho, RiccatiVariable::R] {
            let r = check_second_identity(&disk, &zero, &psi, &g, |p| solver.fan_riccati(p, 0.1), var).unwrap();
            assert!(r.rel_residual < 1e-5, "{r:?}");
            assert!(r.terms["riccati_rho_max"] < 1e-8 && r.terms["riccati_r_max"] < 1e-8);
        }
    }
}
