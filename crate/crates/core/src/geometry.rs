//! Surface models with the canonical frame `(X, H, V)` and structure scalars.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::expr::{Expr, Var};
use crate::field::{Domain, SmField, SmPoint};
use crate::grid::GridSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    ConformalTorus,
    ConformalDisk,
    Synthetic,
}

/// One of the three frame vector fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrameVector {
    X,
    H,
    V,
}

/// A first-order operator `c_x d/dx + c_y d/dy + c_theta d/dtheta`.
#[derive(Debug, Clone)]
pub struct FrameOperator {
    pub c: [SmField; 3],
}

impl FrameOperator {
    pub fn new(cx: SmField, cy: SmField, ctheta: SmField) -> FrameOperator {
        FrameOperator { c: [cx, cy, ctheta] }
    }

    /// `d/dtheta`.
    pub fn vertical() -> FrameOperator {
        FrameOperator::new(SmField::constant(0.0), SmField::constant(0.0), SmField::constant(1.0))
    }

    /// Applies the operator to `f` at `p`.
    pub fn apply(&self, f: &SmField, p: SmPoint) -> f64 {
        self.apply_coords(f, p.coords())
    }

    pub fn apply_coords(&self, f: &SmField, c: [f64; 3]) -> f64 {
        let mut acc = 0.0;
        for (v, coef) in Var::ALL.iter().zip(&self.c) {
            if coef.as_const() == Some(0.0) {
                continue;
            }
            acc += coef.eval_coords(c) * f.partial(*v).eval_coords(c);
        }
        acc
    }

    /// The function `p -> Op(f)(p)` as a field, so operators compose.
    pub fn apply_field(&self, f: &SmField) -> SmField {
        let mut acc = SmField::constant(0.0);
        for (v, coef) in Var::ALL.iter().zip(&self.c) {
            acc = acc.add(&coef.mul(&f.partial(*v)));
        }
        acc
    }

    /// Coefficient vector at a point.
    pub fn coefficients(&self, c: [f64; 3]) -> [f64; 3] {
        [
            self.c[0].eval_coords(c),
            self.c[1].eval_coords(c),
            self.c[2].eval_coords(c),
        ]
    }

    /// `self + f * other`.
    pub fn add_scaled(&self, f: &SmField, other: &FrameOperator) -> FrameOperator {
        FrameOperator {
            c: [0, 1, 2].map(|i| self.c[i].add(&f.mul(&other.c[i]))),
        }
    }

    /// Linear combination `sum_k f_k Op_k`.
    pub fn combination(terms: &[(SmField, &FrameOperator)]) -> FrameOperator {
        let mut c = [SmField::constant(0.0), SmField::constant(0.0), SmField::constant(0.0)];
        for (f, op) in terms {
            for i in 0..3 {
                c[i] = c[i].add(&f.mul(&op.c[i]));
            }
        }
        FrameOperator { c }
    }

    /// Lie bracket `[self, other]`, coefficient-wise `self(b_i) - other(a_i)`.
    pub fn bracket(&self, other: &FrameOperator) -> FrameOperator {
        FrameOperator {
            c: [0, 1, 2].map(|i| self.apply_field(&other.c[i]).sub(&other.apply_field(&self.c[i]))),
        }
    }

    pub fn sub(&self, other: &FrameOperator) -> FrameOperator {
        FrameOperator {
            c: [0, 1, 2].map(|i| self.c[i].sub(&other.c[i])),
        }
    }

    /// Same operator with every coefficient differentiated by finite differences.
    pub fn to_finite_difference(&self, h: f64, domain: Domain) -> FrameOperator {
        FrameOperator {
            c: [0, 1, 2].map(|i| self.c[i].to_finite_difference(h, domain)),
        }
    }
}

/// User-supplied frame and structure scalars.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub domain: Domain,
    pub x: FrameOperator,
    pub h: FrameOperator,
    pub v: FrameOperator,
    pub i: SmField,
    pub j: SmField,
    pub k: SmField,
    /// Conformal exponent, when the frame comes from a conformal metric;
    /// enables the unit-speed monitor.
    pub phi: Option<Expr>,
    pub validation_grid: GridSpec,
}

/// A surface with its canonical frame.
#[derive(Debug, Clone)]
pub struct SurfaceModel {
    pub kind: SurfaceKind,
    pub domain: Domain,
    pub phi: Option<Expr>,
    pub x: FrameOperator,
    pub h: FrameOperator,
    pub v: FrameOperator,
    pub i: SmField,
    pub j: SmField,
    pub k: SmField,
    /// Liouville density with respect to `dx dy dtheta`.
    pub density: SmField,
    pub tolerance: f64,
}

/// Residual of one frame relation over a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelationResidual {
    pub relation: String,
    pub max: f64,
    pub rms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureReport {
    pub grid_points: usize,
    pub relations: Vec<RelationResidual>,
}

impl StructureReport {
    pub fn max_residual(&self) -> f64 {
        self.relations.iter().map(|r| r.max).fold(0.0, f64::max)
    }

    pub fn get(&self, relation: &str) -> Option<&RelationResidual> {
        self.relations.iter().find(|r| r.relation == relation)
    }
}

/// How nested derivatives are taken during validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeMode {
    Analytic,
    FiniteDifference { h: f64 },
}

/// Curvature-type scalars attached to a thermostat.
#[derive(Debug, Clone)]
pub struct DerivedCurvatures {
    /// `K - H(lambda) - lambda J + lambda^2`.
    pub k0: SmField,
    pub lambda_i: SmField,
    pub v_lambda: SmField,
    pub big_k: SmField,
    pub k_lambda: SmField,
    pub anosov_d: SmField,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MagneticReport {
    pub magnetic: bool,
    pub residual: f64,
}

fn conformal_frame(phi: &Expr) -> (FrameOperator, FrameOperator, SmField, SmField) {
    let t = Expr::theta();
    let (c, s) = (t.cos(), t.sin());
    let px = phi.derivative(Var::X);
    let py = phi.derivative(Var::Y);
    let e = phi.neg().exp();
    let x = FrameOperator::new(
        e.mul(&c).into(),
        e.mul(&s).into(),
        e.mul(&px.neg().mul(&s).add(&py.mul(&c))).into(),
    );
    let h = FrameOperator::new(
        e.mul(&s).neg().into(),
        e.mul(&c).into(),
        e.mul(&px.mul(&c).add(&py.mul(&s))).neg().into(),
    );
    let lap = px.derivative(Var::X).add(&py.derivative(Var::Y));
    let k = phi.scale(-2.0).exp().mul(&lap).neg();
    let density = phi.scale(2.0).exp();
    (x, h, k.into(), density.into())
}

fn default_grid(domain: Domain) -> GridSpec {
    match domain {
        Domain::Torus => GridSpec::torus(8),
        Domain::Disk => GridSpec::polar(6, 8, 8),
        Domain::Plane => GridSpec::Box {
            x0: -1.0,
            x1: 1.0,
            y0: -1.0,
            y1: 1.0,
            n_x: 6,
            n_y: 6,
            n_theta: 8,
        },
        Domain::UpperHalfPlane => GridSpec::Box {
            x0: -1.0,
            x1: 1.0,
            y0: 0.5,
            y1: 2.0,
            n_x: 6,
            n_y: 6,
            n_theta: 8,
        },
    }
}

fn synthetic_density(x: &FrameOperator, h: &FrameOperator, v: &FrameOperator) -> SmField {
    let all: Option<Vec<&Expr>> = [x, h, v]
        .iter()
        .flat_map(|op| op.c.iter().map(|c| c.as_expr()))
        .collect();
    if let Some(e) = all {
        let m = |r: usize, c: usize| e[3 * r + c];
        let det = m(0, 0)
            .mul(&m(1, 1).mul(m(2, 2)).sub(&m(1, 2).mul(m(2, 1))))
            .sub(&m(0, 1).mul(&m(1, 0).mul(m(2, 2)).sub(&m(1, 2).mul(m(2, 0)))))
            .add(&m(0, 2).mul(&m(1, 0).mul(m(2, 1)).sub(&m(1, 1).mul(m(2, 0)))));
        return Expr::constant(1.0)
            .div(&Expr::apply(crate::expr::Func::Abs, &det))
            .into();
    }
    let (x, h, v) = (x.clone(), h.clone(), v.clone());
    SmField::from_fn(
        move |p| {
            let c = p.coords();
            let a = x.coefficients(c);
            let b = h.coefficients(c);
            let d = v.coefficients(c);
            let det = a[0] * (b[1] * d[2] - b[2] * d[1]) - a[1] * (b[0] * d[2] - b[2] * d[0])
                + a[2] * (b[0] * d[1] - b[1] * d[0]);
            1.0 / det.abs()
        },
        Default::default(),
    )
}

impl SurfaceModel {
    /// Conformal model `e^{2 phi}(dx^2 + dy^2)` on the torus or the disk.
    pub fn conformal(kind: SurfaceKind, phi: Expr, tolerance: f64) -> Result<SurfaceModel> {
        let domain = match kind {
            SurfaceKind::ConformalTorus => Domain::Torus,
            SurfaceKind::ConformalDisk => Domain::Disk,
            SurfaceKind::Synthetic => {
                return Err(LabError::Config("conformal constructor needs a conformal kind".into()))
            }
        };
        if domain == Domain::Torus {
            check_periodic(&phi)?;
        }
        let (x, h, k, density) = conformal_frame(&phi);
        let model = SurfaceModel {
            kind,
            domain,
            phi: Some(phi),
            x,
            h,
            v: FrameOperator::vertical(),
            i: SmField::constant(0.0),
            j: SmField::constant(0.0),
            k,
            density,
            tolerance,
        };
        model.require_valid(&default_grid(domain))?;
        Ok(model)
    }

    pub fn flat_torus() -> SurfaceModel {
        SurfaceModel::conformal(SurfaceKind::ConformalTorus, Expr::constant(0.0), 1e-9).expect("flat torus is valid")
    }

    pub fn flat_disk() -> SurfaceModel {
        SurfaceModel::conformal(SurfaceKind::ConformalDisk, Expr::constant(0.0), 1e-9).expect("flat disk is valid")
    }

    /// A user-supplied frame, accepted only if it satisfies the structure
    /// relations on its validation grid.
    pub fn synthetic(spec: SyntheticSpec, tolerance: f64) -> Result<SurfaceModel> {
        let density = synthetic_density(&spec.x, &spec.h, &spec.v);
        let model = SurfaceModel {
            kind: SurfaceKind::Synthetic,
            domain: spec.domain,
            phi: spec.phi,
            x: spec.x,
            h: spec.h,
            v: spec.v,
            i: spec.i,
            j: spec.j,
            k: spec.k,
            density,
            tolerance,
        };
        model.require_valid(&spec.validation_grid)?;
        Ok(model)
    }

    /// Synthetic frame from a conformal exponent on an arbitrary chart.
    pub fn conformal_chart(phi: Expr, domain: Domain, tolerance: f64) -> Result<SurfaceModel> {
        let (x, h, k, _) = conformal_frame(&phi);
        SurfaceModel::synthetic(
            SyntheticSpec {
                domain,
                x,
                h,
                v: FrameOperator::vertical(),
                i: SmField::constant(0.0),
                j: SmField::constant(0.0),
                k,
                phi: Some(phi),
                validation_grid: default_grid(domain),
            },
            tolerance,
        )
    }

    /// Upper half-plane with `phi = -ln y`, curvature `-1`.
    pub fn hyperbolic_half_plane() -> SurfaceModel {
        SurfaceModel::conformal_chart(Expr::y().ln().neg(), Domain::UpperHalfPlane, 1e-9)
            .expect("hyperbolic chart is valid")
    }

    /// Stereographic chart of the unit sphere, curvature `+1`.
    pub fn round_sphere_chart() -> SurfaceModel {
        let r2 = Expr::x().powi(2).add(&Expr::y().powi(2));
        let phi = Expr::constant(2.0).div(&Expr::constant(1.0).add(&r2)).ln();
        SurfaceModel::conformal_chart(phi, Domain::Plane, 1e-9).expect("sphere chart is valid")
    }

    /// A flat Finsler-type frame with constant main scalar `I = c`, `|c| < 2`:
    /// `X = e^{-c theta/2}(cos w theta, sin w theta, 0)`, `w = sqrt(1 - c^2/4)`,
    /// `H = [V, X]`, `J = K = 0`.
    pub fn constant_main_scalar(c: f64) -> Result<SurfaceModel> {
        if !(c.abs() < 2.0) {
            return Err(LabError::Config(format!("main scalar {c} must satisfy |c| < 2")));
        }
        let w = (1.0 - c * c / 4.0).sqrt();
        let t = Expr::theta();
        let amp = t.scale(-c / 2.0).exp();
        let (cw, sw) = (t.scale(w).cos(), t.scale(w).sin());
        let zero = SmField::constant(0.0);
        let x = FrameOperator::new(amp.mul(&cw).into(), amp.mul(&sw).into(), zero.clone());
        let h = FrameOperator::new(
            amp.mul(&cw.scale(-c / 2.0).sub(&sw.scale(w))).into(),
            amp.mul(&sw.scale(-c / 2.0).add(&cw.scale(w))).into(),
            zero.clone(),
        );
        SurfaceModel::synthetic(
            SyntheticSpec {
                domain: Domain::Plane,
                x,
                h,
                v: FrameOperator::vertical(),
                i: SmField::constant(c),
                j: zero.clone(),
                k: zero,
                phi: None,
                validation_grid: default_grid(Domain::Plane),
            },
            1e-9,
        )
    }

    pub fn frame(&self, which: FrameVector) -> &FrameOperator {
        match which {
            FrameVector::X => &self.x,
            FrameVector::H => &self.h,
            FrameVector::V => &self.v,
        }
    }

    pub fn check_point(&self, p: SmPoint) -> Result<()> {
        if self.domain.contains(p.x, p.y) {
            Ok(())
        } else {
            Err(LabError::Domain(format!(
                "point ({}, {}) lies outside the {:?} domain",
                p.x, p.y, self.domain
            )))
        }
    }

    /// `Op(f)(p)` for one of the frame vectors.
    pub fn apply_frame_operator(&self, which: FrameVector, f: &SmField, p: SmPoint) -> Result<f64> {
        self.check_point(p)?;
        Ok(self.frame(which).apply(f, p))
    }

    /// The thermostat generator `F = X + lambda V`.
    pub fn generator(&self, lambda: &SmField) -> FrameOperator {
        self.x.add_scaled(lambda, &self.v)
    }

    /// Default validation grid for the model's domain.
    pub fn default_grid(&self) -> GridSpec {
        default_grid(self.domain)
    }

    fn require_valid(&self, grid: &GridSpec) -> Result<()> {
        let report = self.validate_structure_relations(grid, None, DerivativeMode::Analytic);
        for r in &report.relations {
            if !(r.max <= self.tolerance) {
                return Err(LabError::ValidationFailed {
                    relation: r.relation.clone(),
                    residual: r.max,
                    tolerance: self.tolerance,
                });
            }
        }
        Ok(())
    }

    /// Residuals of the frame commutation relations, and of the thermostat
    /// relations when `lambda` is given, by nested operator application.
    pub fn validate_structure_relations(
        &self,
        grid: &GridSpec,
        lambda: Option<&SmField>,
        mode: DerivativeMode,
    ) -> StructureReport {
        let (x, h, v, i, j, k, lam) = match mode {
            DerivativeMode::Analytic => (
                self.x.clone(),
                self.h.clone(),
                self.v.clone(),
                self.i.clone(),
                self.j.clone(),
                self.k.clone(),
                lambda.cloned(),
            ),
            DerivativeMode::FiniteDifference { h: step } => {
                let d = self.domain;
                (
                    self.x.to_finite_difference(step, d),
                    self.h.to_finite_difference(step, d),
                    self.v.to_finite_difference(step, d),
                    self.i.to_finite_difference(step, d),
                    self.j.to_finite_difference(step, d),
                    self.k.to_finite_difference(step, d),
                    lambda.map(|l| l.to_finite_difference(step, d)),
                )
            }
        };
        let one = SmField::constant(1.0);
        let mut relations: Vec<(String, FrameOperator)> = vec![
            ("[V,X]-H".into(), v.bracket(&x).sub(&h)),
            (
                "[H,V]-X-IH-JV".into(),
                h.bracket(&v).sub(&FrameOperator::combination(&[
                    (one.clone(), &x),
                    (i.clone(), &h),
                    (j.clone(), &v),
                ])),
            ),
            (
                "[X,H]-KV".into(),
                x.bracket(&h).sub(&FrameOperator::combination(&[(k.clone(), &v)])),
            ),
        ];
        if let Some(lam) = lam {
            let f = x.add_scaled(&lam, &v);
            let v_lam = v.apply_field(&lam);
            let k0 = k.sub(&h.apply_field(&lam)).sub(&lam.mul(&j)).add(&lam.square());
            relations.push((
                "[V,F]-H-V(lambda)V".into(),
                v.bracket(&f)
                    .sub(&FrameOperator::combination(&[(one.clone(), &h), (v_lam, &v)])),
            ));
            relations.push((
                "[H,V]-F-IH-(J-lambda)V".into(),
                h.bracket(&v).sub(&FrameOperator::combination(&[
                    (one.clone(), &f),
                    (i.clone(), &h),
                    (j.sub(&lam), &v),
                ])),
            ));
            relations.push((
                "[F,H]-K0 V+lambda F+lambda I H".into(),
                f.bracket(&h).sub(&FrameOperator::combination(&[
                    (k0, &v),
                    (lam.neg(), &f),
                    (lam.mul(&i).neg(), &h),
                ])),
            ));
        }
        let points = grid.points();
        let relations = relations
            .into_iter()
            .map(|(name, op)| {
                let vals: Vec<f64> = points
                    .par_iter()
                    .map(|p| {
                        let c = op.coefficients(p.coords());
                        c.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                    })
                    .collect();
                let max = vals.iter().cloned().fold(0.0, f64::max);
                let rms = (vals.iter().map(|v| v * v).sum::<f64>() / vals.len().max(1) as f64).sqrt();
                RelationResidual {
                    relation: name,
                    max,
                    rms,
                }
            })
            .collect();
        StructureReport {
            grid_points: points.len(),
            relations,
        }
    }

    /// Curvatures of the thermostat with geodesic-curvature function `lambda`.
    pub fn derived_curvatures(&self, lambda: &SmField) -> DerivedCurvatures {
        let f = self.generator(lambda);
        let k0 = self
            .k
            .sub(&self.h.apply_field(lambda))
            .sub(&lambda.mul(&self.j))
            .add(&lambda.square());
        let lambda_i = lambda.mul(&self.i);
        let v_lambda = self.v.apply_field(lambda);
        let li_vl = lambda_i.mul(&v_lambda);
        let big_k = k0.add(&li_vl).add(&f.apply_field(&v_lambda));
        let k_lambda = k0.add(&li_vl).sub(&f.apply_field(&lambda_i));
        let anosov_d = k0.add(&lambda_i.add(&v_lambda).square().scale(0.25));
        DerivedCurvatures {
            k0,
            lambda_i,
            v_lambda,
            big_k,
            k_lambda,
            anosov_d,
        }
    }

    /// Whether `V(lambda) = -lambda I` on the grid.
    pub fn classify_magnetic(&self, lambda: &SmField, grid: &GridSpec, tolerance: f64) -> MagneticReport {
        let defect = self.v.apply_field(lambda).add(&lambda.mul(&self.i));
        let residual = grid
            .points()
            .par_iter()
            .map(|p| defect.eval(*p).abs())
            .reduce(|| 0.0, f64::max);
        MagneticReport {
            magnetic: residual < tolerance,
            residual,
        }
    }

    /// Base speed `F(gamma')` of a velocity, when the metric is conformal.
    pub fn base_speed(&self, c: [f64; 3], vx: f64, vy: f64) -> Option<f64> {
        let phi = self.phi.as_ref()?;
        Some(phi.eval(c).exp() * vx.hypot(vy))
    }
}

fn check_periodic(phi: &Expr) -> Result<()> {
    let samples = [0.0, 0.137, 0.31, 0.5, 0.77];
    for &x in &samples {
        for &y in &samples {
            let base = phi.eval([x, y, 0.0]);
            for (dx, dy) in [(1.0, 0.0), (0.0, 1.0)] {
                let shifted = phi.eval([x + dx, y + dy, 0.0]);
                if !((shifted - base).abs() <= 1e-9 * (1.0 + base.abs())) {
                    return Err(LabError::Domain(format!(
                        "conformal factor is not 1-periodic: phi({x}, {y}) = {base}, shifted {shifted}"
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    fn bumpy() -> SurfaceModel {
        SurfaceModel::conformal(
            SurfaceKind::ConformalTorus,
            parse_expression("0.1*sin(2*pi*x)*cos(2*pi*y)").unwrap(),
            1e-6,
        )
        .unwrap()
    }

    #[test]
    fn flat_torus_frame_is_euclidean() {
        let m = SurfaceModel::flat_torus();
        let f = SmField::parse("sin(2*pi*x)").unwrap();
        let p = SmPoint::new(0.0, 0.3, 0.0);
        let val = m.apply_frame_operator(FrameVector::X, &f, p).unwrap();
        assert!((val - std::f64::consts::TAU).abs() < 1e-12);
        assert_eq!(m.k.eval(p), 0.0);
        let g = SmField::parse("sin(theta)").unwrap();
        let q = SmPoint::new(0.2, 0.4, 1.3);
        assert!((m.apply_frame_operator(FrameVector::V, &g, q).unwrap() - 1.3f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn curvature_matches_laplacian_formula() {
        let m = bumpy();
        let p = SmPoint::new(0.21, 0.63, 0.0);
        let tau = std::f64::consts::TAU;
        let phi = 0.1 * (tau * p.x).sin() * (tau * p.y).cos();
        let lap = -2.0 * tau * tau * phi;
        assert!((m.k.eval(p) + (-2.0 * phi).exp() * lap).abs() < 1e-12);
    }

    #[test]
    fn non_periodic_torus_factor_is_rejected() {
        let err =
            SurfaceModel::conformal(SurfaceKind::ConformalTorus, parse_expression("0.1*x").unwrap(), 1e-6).unwrap_err();
        assert!(matches!(err, LabError::Domain(_)));
    }

    #[test]
    fn misdeclared_curvature_fails_validation() {
        let good = SurfaceModel::hyperbolic_half_plane();
        let spec = SyntheticSpec {
            domain: good.domain,
            x: good.x.clone(),
            h: good.h.clone(),
            v: good.v.clone(),
            i: good.i.clone(),
            j: good.j.clone(),
            k: good.k.add(&SmField::constant(1.0)),
            phi: good.phi.clone(),
            validation_grid: good.default_grid(),
        };
        match SurfaceModel::synthetic(spec, 1e-6) {
            Err(LabError::ValidationFailed { relation, residual, .. }) => {
                assert_eq!(relation, "[X,H]-KV");
                assert!((residual - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synthetic_models_have_declared_curvature() {
        let p = SmPoint::new(0.1, 0.8, 0.4);
        assert!((SurfaceModel::hyperbolic_half_plane().k.eval(p) + 1.0).abs() < 1e-12);
        assert!((SurfaceModel::round_sphere_chart().k.eval(p) - 1.0).abs() < 1e-12);
        let m = SurfaceModel::constant_main_scalar(0.6).unwrap();
        assert_eq!(m.i.eval(p), 0.6);
        assert!(SurfaceModel::constant_main_scalar(2.5).is_err());
    }

    #[test]
    fn curvatures_reduce_to_k_without_thermostat() {
        let m = bumpy();
        let d = m.derived_curvatures(&SmField::constant(0.0));
        for p in GridSpec::torus(5).points() {
            let k = m.k.eval(p);
            assert!((d.big_k.eval(p) - k).abs() < 1e-12);
            assert!((d.k_lambda.eval(p) - k).abs() < 1e-12);
            assert!((d.anosov_d.eval(p) - k).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_lambda_on_flat_torus() {
        let m = SurfaceModel::flat_torus();
        let c = 0.7;
        let d = m.derived_curvatures(&SmField::constant(c));
        let p = SmPoint::new(0.3, 0.2, 2.0);
        for f in [&d.big_k, &d.k_lambda, &d.anosov_d] {
            assert!((f.eval(p) - c * c).abs() < 1e-15);
        }
        let r = m.validate_structure_relations(
            &GridSpec::torus(6),
            Some(&SmField::constant(c)),
            DerivativeMode::Analytic,
        );
        assert!(r.max_residual() < 1e-9);
    }

    #[test]
    fn magnetic_classification() {
        let m = SurfaceModel::flat_torus();
        let g = GridSpec::torus(6);
        let base = SmField::parse("sin(2*pi*x)*cos(2*pi*y)").unwrap();
        assert!(m.classify_magnetic(&base, &g, 1e-10).magnetic);
        let r = m.classify_magnetic(&SmField::parse("sin(theta)").unwrap(), &g, 1e-10);
        assert!(!r.magnetic);
        assert!((r.residual - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frame_operator_is_linear() {
        let m = bumpy();
        let f = SmField::parse("sin(2*pi*x)*cos(theta)").unwrap();
        let g = SmField::parse("cos(2*pi*y)*sin(2*theta)").unwrap();
        let (a, b) = (1.7, -0.4);
        let comb = f.scale(a).add(&g.scale(b));
        for p in GridSpec::torus(4).points() {
            for w in [FrameVector::X, FrameVector::H, FrameVector::V] {
                let lhs = m.apply_frame_operator(w, &comb, p).unwrap();
                let rhs = a * m.apply_frame_operator(w, &f, p).unwrap() + b * m.apply_frame_operator(w, &g, p).unwrap();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disk_operator_rejects_outside_points() {
        let m = SurfaceModel::flat_disk();
        let f = SmField::parse("x").unwrap();
        assert!(matches!(
            m.apply_frame_operator(FrameVector::X, &f, SmPoint::new(1.5, 0.0, 0.0)),
            Err(LabError::Domain(_))
        ));
    }
}
