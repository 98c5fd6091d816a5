//! Scalar fields on the unit sphere bundle.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::expr::{Expr, Tape, Var};

/// A point `(x, y, theta)` of the unit sphere bundle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SmPoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl SmPoint {
    /// Builds a point, normalizing the angle to `[0, 2pi)`.
    pub fn new(x: f64, y: f64, theta: f64) -> SmPoint {
        let mut theta = theta.rem_euclid(TAU);
        if theta >= TAU {
            theta = 0.0;
        }
        SmPoint { x, y, theta }
    }

    pub fn coords(&self) -> [f64; 3] {
        [self.x, self.y, self.theta]
    }

    pub fn from_coords(c: [f64; 3]) -> SmPoint {
        SmPoint::new(c[0], c[1], c[2])
    }

    fn shifted(&self, i: usize, d: f64) -> [f64; 3] {
        let mut c = [self.x, self.y, self.theta];
        c[i] += d;
        c
    }
}

/// Base domain of a surface model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    /// Periodic unit square.
    Torus,
    /// Closed unit disk.
    Disk,
    /// Whole plane, for synthetic charts.
    Plane,
    /// `y > 0`, for the hyperbolic chart.
    UpperHalfPlane,
}

impl Domain {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Domain::Torus | Domain::Plane => x.is_finite() && y.is_finite(),
            Domain::Disk => x * x + y * y <= 1.0 + 1e-12,
            Domain::UpperHalfPlane => y > 0.0,
        }
    }

    pub fn has_boundary(&self) -> bool {
        matches!(self, Domain::Disk)
    }

    /// Whether a symmetric stencil of half-width `reach` along coordinate `i`
    /// stays in the domain.
    fn stencil_fits(&self, c: [f64; 3], i: usize, reach: f64) -> bool {
        if i == 2 {
            return true;
        }
        let mut lo = c;
        let mut hi = c;
        lo[i] -= reach;
        hi[i] += reach;
        self.contains(lo[0], lo[1]) && self.contains(hi[0], hi[1])
    }
}

/// Finite-difference rule: fourth-order central with step `h`, one-sided
/// fourth-order where the central stencil would leave the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdRule {
    pub h: f64,
    pub domain: Domain,
}

impl Default for FdRule {
    fn default() -> Self {
        FdRule {
            h: 1e-4,
            domain: Domain::Plane,
        }
    }
}

impl FdRule {
    pub fn new(h: f64, domain: Domain) -> FdRule {
        FdRule { h, domain }
    }

    pub fn derivative(&self, f: &dyn Fn([f64; 3]) -> f64, p: SmPoint, i: usize) -> f64 {
        let h = self.h;
        let c = p.coords();
        if self.domain.stencil_fits(c, i, 2.0 * h) {
            let at = |k: f64| {
                let mut q = c;
                q[i] += k * h;
                f(q)
            };
            return (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h);
        }
        // step toward the side that stays inside
        let s = if self.domain.contains(p.shifted(i, 4.0 * h)[0], p.shifted(i, 4.0 * h)[1]) {
            1.0
        } else {
            -1.0
        };
        let at = |k: f64| {
            let mut q = c;
            q[i] += s * k * h;
            f(q)
        };
        s * (-25.0 * at(0.0) + 48.0 * at(1.0) - 36.0 * at(2.0) + 16.0 * at(3.0) - 3.0 * at(4.0)) / (12.0 * h)
    }
}

type EvalFn = Arc<dyn Fn([f64; 3]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn([f64; 3]) -> [f64; 3] + Send + Sync>;

enum Inner {
    Symbolic {
        expr: Expr,
        tape: OnceLock<Tape>,
        partials: OnceLock<[SmField; 3]>,
    },
    Closure {
        eval: EvalFn,
        grad: Option<GradFn>,
        fd: FdRule,
        partials: OnceLock<[SmField; 3]>,
    },
    Sum(SmField, SmField),
    Product(SmField, SmField),
    Scaled(f64, SmField),
}

/// A scalar function on the bundle with first partial derivatives.
///
/// Symbolic fields differentiate exactly and to any order. Closure fields use
/// an analytic gradient when one is supplied and finite differences
/// otherwise. Sums and products of fields keep track of their structure, so a
/// product of symbolic fields is itself symbolic.
#[derive(Clone)]
pub struct SmField(Arc<Inner>);

impl fmt::Debug for SmField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &*self.0 {
            Inner::Symbolic { expr, .. } => write!(f, "SmField({expr})"),
            Inner::Closure { grad, fd, .. } => write!(
                f,
                "SmField(closure, {} derivatives, h = {})",
                if grad.is_some() {
                    "analytic"
                } else {
                    "finite-difference"
                },
                fd.h
            ),
            Inner::Sum(a, b) => write!(f, "({a:?} + {b:?})"),
            Inner::Product(a, b) => write!(f, "({a:?} * {b:?})"),
            Inner::Scaled(c, a) => write!(f, "({c} * {a:?})"),
        }
    }
}

impl From<Expr> for SmField {
    fn from(expr: Expr) -> SmField {
        SmField::symbolic(expr)
    }
}

impl SmField {
    pub fn symbolic(expr: Expr) -> SmField {
        SmField(Arc::new(Inner::Symbolic {
            expr,
            tape: OnceLock::new(),
            partials: OnceLock::new(),
        }))
    }

    pub fn constant(c: f64) -> SmField {
        SmField::symbolic(Expr::constant(c))
    }

    /// Parses an expression in `x`, `y`, `theta`.
    pub fn parse(text: &str) -> crate::Result<SmField> {
        Ok(SmField::symbolic(crate::expr::parse_expression(text)?))
    }

    /// A field given by a closure, differentiated by finite differences.
    pub fn from_fn<F>(f: F, fd: FdRule) -> SmField
    where
        F: Fn(SmPoint) -> f64 + Send + Sync + 'static,
    {
        SmField(Arc::new(Inner::Closure {
            eval: Arc::new(move |c| f(SmPoint::from_coords(c))),
            grad: None,
            fd,
            partials: OnceLock::new(),
        }))
    }

    /// A field given by a closure together with its analytic gradient
    /// `[d/dx, d/dy, d/dtheta]`. Second derivatives fall back to `fd`.
    pub fn with_gradient<F, G>(f: F, grad: G, fd: FdRule) -> SmField
    where
        F: Fn(SmPoint) -> f64 + Send + Sync + 'static,
        G: Fn(SmPoint) -> [f64; 3] + Send + Sync + 'static,
    {
        SmField(Arc::new(Inner::Closure {
            eval: Arc::new(move |c| f(SmPoint::from_coords(c))),
            grad: Some(Arc::new(move |c| grad(SmPoint::from_coords(c)))),
            fd,
            partials: OnceLock::new(),
        }))
    }

    fn raw_closure(eval: EvalFn, fd: FdRule) -> SmField {
        SmField(Arc::new(Inner::Closure {
            eval,
            grad: None,
            fd,
            partials: OnceLock::new(),
        }))
    }

    /// The underlying expression, when the field is symbolic.
    pub fn as_expr(&self) -> Option<&Expr> {
        match &*self.0 {
            Inner::Symbolic { expr, .. } => Some(expr),
            _ => None,
        }
    }

    pub fn is_symbolic(&self) -> bool {
        self.as_expr().is_some()
    }

    /// Constant value, if the field is a literal constant.
    pub fn as_const(&self) -> Option<f64> {
        self.as_expr().and_then(|e| e.as_const())
    }

    #[inline]
    pub fn eval(&self, p: SmPoint) -> f64 {
        self.eval_coords(p.coords())
    }

    /// Evaluates without normalizing the angle.
    pub fn eval_coords(&self, c: [f64; 3]) -> f64 {
        match &*self.0 {
            Inner::Symbolic { expr, tape, .. } => tape.get_or_init(|| expr.compile()).eval(c),
            Inner::Closure { eval, .. } => eval(c),
            Inner::Sum(a, b) => a.eval_coords(c) + b.eval_coords(c),
            Inner::Product(a, b) => a.eval_coords(c) * b.eval_coords(c),
            Inner::Scaled(k, a) => k * a.eval_coords(c),
        }
    }

    /// Partial derivative as a field.
    pub fn partial(&self, v: Var) -> SmField {
        let i = v.index();
        match &*self.0 {
            Inner::Symbolic { expr, partials, .. } => {
                partials.get_or_init(|| Var::ALL.map(|w| SmField::symbolic(expr.derivative(w))))[i].clone()
            }
            Inner::Closure {
                eval,
                grad,
                fd,
                partials,
            } => partials.get_or_init(|| {
                let fd = *fd;
                Var::ALL.map(|w| {
                    let k = w.index();
                    match grad {
                        Some(g) => {
                            let g = g.clone();
                            SmField::raw_closure(Arc::new(move |c| g(c)[k]), fd)
                        }
                        None => {
                            let f = eval.clone();
                            SmField::raw_closure(
                                Arc::new(move |c| {
                                    fd.derivative(
                                        &*f,
                                        SmPoint {
                                            x: c[0],
                                            y: c[1],
                                            theta: c[2],
                                        },
                                        k,
                                    )
                                }),
                                fd,
                            )
                        }
                    }
                })
            })[i]
                .clone(),
            Inner::Sum(a, b) => a.partial(v).add(&b.partial(v)),
            Inner::Product(a, b) => a.partial(v).mul(b).add(&a.mul(&b.partial(v))),
            Inner::Scaled(k, a) => a.partial(v).scale(*k),
        }
    }

    /// Gradient `[d/dx, d/dy, d/dtheta]` at a point.
    pub fn gradient(&self, p: SmPoint) -> [f64; 3] {
        Var::ALL.map(|v| self.partial(v).eval(p))
    }

    pub fn add(&self, other: &SmField) -> SmField {
        match (self.as_expr(), other.as_expr()) {
            (Some(a), Some(b)) => SmField::symbolic(a.add(b)),
            _ => {
                if self.as_const() == Some(0.0) {
                    return other.clone();
                }
                if other.as_const() == Some(0.0) {
                    return self.clone();
                }
                SmField(Arc::new(Inner::Sum(self.clone(), other.clone())))
            }
        }
    }

    pub fn sub(&self, other: &SmField) -> SmField {
        match (self.as_expr(), other.as_expr()) {
            (Some(a), Some(b)) => SmField::symbolic(a.sub(b)),
            _ => self.add(&other.scale(-1.0)),
        }
    }

    pub fn mul(&self, other: &SmField) -> SmField {
        match (self.as_expr(), other.as_expr()) {
            (Some(a), Some(b)) => SmField::symbolic(a.mul(b)),
            _ => {
                if let Some(c) = self.as_const() {
                    return other.scale(c);
                }
                if let Some(c) = other.as_const() {
                    return self.scale(c);
                }
                SmField(Arc::new(Inner::Product(self.clone(), other.clone())))
            }
        }
    }

    pub fn scale(&self, c: f64) -> SmField {
        match self.as_expr() {
            Some(e) => SmField::symbolic(e.scale(c)),
            None if c == 0.0 => SmField::constant(0.0),
            None if c == 1.0 => self.clone(),
            None => SmField(Arc::new(Inner::Scaled(c, self.clone()))),
        }
    }

    pub fn neg(&self) -> SmField {
        self.scale(-1.0)
    }

    pub fn square(&self) -> SmField {
        self.mul(self)
    }

    /// The same function, differentiated by finite differences with step `h`.
    pub fn to_finite_difference(&self, h: f64, domain: Domain) -> SmField {
        let this = self.clone();
        SmField::raw_closure(Arc::new(move |c| this.eval_coords(c)), FdRule::new(h, domain))
    }
}

impl fmt::Display for SmField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.as_expr() {
            Some(e) => write!(f, "{e}"),
            None => write!(f, "{self:?}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn angle_is_normalized() {
        let p = SmPoint::new(0.0, 0.0, -0.5);
        assert!((p.theta - (TAU - 0.5)).abs() < 1e-15);
        assert_eq!(SmPoint::new(0.0, 0.0, TAU).theta, 0.0);
    }

    #[test]
    fn analytic_and_fd_partials_agree_to_fourth_order() {
        let f = SmField::parse("sin(2*pi*x)*cos(3*y)*exp(0.3*sin(theta))").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let p = SmPoint::new(rng.random(), rng.random(), rng.random::<f64>() * TAU);
            for v in Var::ALL {
                let exact = f.partial(v).eval(p);
                let e1 = (f.to_finite_difference(1e-2, Domain::Plane).partial(v).eval(p) - exact).abs();
                let e2 = (f.to_finite_difference(5e-3, Domain::Plane).partial(v).eval(p) - exact).abs();
                assert!(e1 < 1e-5, "{e1}");
                // halving h should cut the error by about 16
                if e1 > 1e-11 {
                    assert!(e1 / e2 > 10.0, "ratio {}", e1 / e2);
                }
            }
        }
    }

    #[test]
    fn one_sided_stencil_near_disk_boundary() {
        let f = SmField::parse("x^3 + x*y").unwrap();
        let g = f.to_finite_difference(1e-3, Domain::Disk);
        let p = SmPoint::new(0.9995, 0.0, 0.0);
        let exact = 3.0 * p.x * p.x;
        assert!((g.partial(Var::X).eval(p) - exact).abs() < 1e-8);
        let q = SmPoint::new(-0.9995, 0.0, 0.0);
        assert!((g.partial(Var::X).eval(q) - 3.0 * q.x * q.x).abs() < 1e-8);
    }

    #[test]
    fn mixed_products_use_product_rule() {
        let a = SmField::parse("x*y").unwrap();
        let b = SmField::with_gradient(|p| p.theta.sin(), |p| [0.0, 0.0, p.theta.cos()], FdRule::default());
        let c = a.mul(&b).add(&b.scale(2.0));
        let p = SmPoint::new(0.3, 0.7, 1.1);
        let dt = c.partial(Var::Theta).eval(p);
        assert!((dt - (0.21 + 2.0) * 1.1f64.cos()).abs() < 1e-14);
        let dx = c.partial(Var::X).eval(p);
        assert!((dx - 0.7 * 1.1f64.sin()).abs() < 1e-14);
    }
}
