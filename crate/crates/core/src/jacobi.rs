//! Jacobi fields, conjugate points and Riccati solutions along thermostat orbits.
//!
//! A tangent vector `a F + y H + z V` transported by the flow obeys
//! `a' = lambda y`, `y' = lambda I y + z`, `z' = -K0 y + V(lambda) z` with
//! `K0 = K - H(lambda) - lambda J + lambda^2`. Riccati solutions are never
//! integrated directly: `r = y'/y` is read off the linear system, which turns
//! blowups into plain zeros of `y`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::expr::{Expr, Var};
use crate::field::SmPoint;
use crate::flow::{uniform_times, Direction, Orbit, Thermostat, DEFAULT_HORIZON};
use crate::geometry::DerivedCurvatures;
use crate::grid::GridSpec;
use crate::ode::{dp_step, integrate, StepControl};

/// Components of a Jacobi field in the frame `(F, H, V)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobiState {
    pub a: f64,
    pub y: f64,
    pub z: f64,
}

impl JacobiState {
    pub fn new(a: f64, y: f64, z: f64) -> JacobiState {
        JacobiState { a, y, z }
    }

    /// Vanishing `y` with unit derivative: `y = 0`, `y' = 1`.
    pub fn vertical() -> JacobiState {
        JacobiState::new(0.0, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct JacobiSample {
    pub t: f64,
    pub state: [f64; 3],
    pub jacobi: JacobiState,
    /// `y' = lambda I y + z`.
    pub y_dot: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JacobiTrajectory {
    pub samples: Vec<JacobiSample>,
    /// Largest residual of the second-order Jacobi equation, measured with
    /// finite differences when the samples are uniform.
    pub equation_residual: Option<f64>,
}

/// Riccati solution along an orbit with its bound constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiccatiTrace {
    pub samples: Vec<(f64, f64)>,
    pub blowup_times: Vec<f64>,
    pub limit_value: Option<f64>,
    pub at_zero: f64,
    pub bound: Option<BoundConstants>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RiccatiSign {
    /// `r_R^+`, infinite at `t = -R`.
    Plus,
    /// `r_R^-`, infinite at `t = R`.
    Minus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiccatiLimits {
    pub plus: f64,
    pub minus: f64,
    /// Final doubling radius.
    pub radius: f64,
    pub plus_sequence: Vec<f64>,
    pub minus_sequence: Vec<f64>,
}

/// `B^2 >= sup |K_lambda|`, `C >= sup |lambda I + V(lambda)|`, `A = max(B, C)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl BoundConstants {
    /// `(A/2)(1 + sqrt 5)`.
    pub fn bound(&self) -> f64 {
        0.5 * self.a * (1.0 + 5f64.sqrt())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub constants: BoundConstants,
    pub bound: f64,
    pub states: Vec<BoundCheck>,
    pub comparison_residual_plus: f64,
    pub comparison_residual_minus: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub point: SmPoint,
    pub plus: f64,
    pub minus: f64,
}

/// Riccati data at a point reached from outside the disk.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FanSample {
    /// `z / y`.
    pub rho: f64,
    /// `y' / y = rho + lambda I`.
    pub r: f64,
    /// Derivative of `rho` along the flow.
    pub f_rho: f64,
    /// Derivative of `r` along the flow.
    pub f_r: f64,
    /// Signed start time of the Jacobi solution, beyond the boundary.
    pub start_time: f64,
}

/// Jacobi and Riccati computations for one thermostat.
#[derive(Debug, Clone)]
pub struct JacobiSolver {
    pub thermostat: Thermostat,
    pub curvatures: DerivedCurvatures,
    pub control: StepControl,
}

impl JacobiSolver {
    pub fn new(thermostat: &Thermostat) -> JacobiSolver {
        let curvatures = thermostat.model.derived_curvatures(&thermostat.lambda);
        JacobiSolver {
            thermostat: thermostat.clone(),
            curvatures,
            control: StepControl::default(),
        }
    }

    fn rhs6(&self, s: &[f64; 6]) -> [f64; 6] {
        let c = [s[0], s[1], s[2]];
        let v = self.thermostat.rhs(&c);
        let lam = self.thermostat.lambda.eval_coords(c);
        let li = self.curvatures.lambda_i.eval_coords(c);
        let vl = self.curvatures.v_lambda.eval_coords(c);
        let k0 = self.curvatures.k0.eval_coords(c);
        [v[0], v[1], v[2], lam * s[4], li * s[4] + s[5], -k0 * s[4] + vl * s[5]]
    }

    fn sample(&self, t: f64, s: &[f64; 6]) -> JacobiSample {
        let c = [s[0], s[1], s[2]];
        let li = self.curvatures.lambda_i.eval_coords(c);
        JacobiSample {
            t,
            state: c,
            jacobi: JacobiState::new(s[3], s[4], s[5]),
            y_dot: li * s[4] + s[5],
        }
    }

    /// Integrates the Jacobi system from state `c0` at time 0, reporting at
    /// the given times.
    pub fn integrate_from(
        &self,
        c0: [f64; 3],
        initial: JacobiState,
        t_end: f64,
        outputs: &[f64],
    ) -> Result<JacobiTrajectory> {
        let f = |_t: f64, s: &[f64; 6]| self.rhs6(s);
        let s0 = [c0[0], c0[1], c0[2], initial.a, initial.y, initial.z];
        let sol = integrate(&f, 0.0, s0, t_end, &self.control, outputs, None)?;
        let samples: Vec<JacobiSample> = if outputs.is_empty() {
            sol.steps.iter().map(|(t, s)| self.sample(*t, s)).collect()
        } else {
            sol.outputs.iter().map(|(t, s)| self.sample(*t, s)).collect()
        };
        let equation_residual = self.equation_residual(&samples);
        Ok(JacobiTrajectory {
            samples,
            equation_residual,
        })
    }

    /// Integrates along an orbit, reporting at the orbit's sample times.
    pub fn integrate_jacobi(&self, orbit: &Orbit, initial: JacobiState) -> Result<JacobiTrajectory> {
        let first = orbit
            .samples
            .first()
            .ok_or_else(|| LabError::Domain("empty orbit".into()))?;
        let times: Vec<f64> = orbit.samples.iter().map(|s| s.t - first.t).collect();
        let mut traj = self.integrate_from(first.state, initial, *times.last().unwrap_or(&0.0), &times)?;
        for s in &mut traj.samples {
            s.t += first.t;
        }
        Ok(traj)
    }

    /// `max |y'' - (lambda I + V(lambda)) y' + K_lambda y|` with `y''` from
    /// fourth-order differences of `y'` on uniform samples.
    pub fn equation_residual(&self, samples: &[JacobiSample]) -> Option<f64> {
        if samples.len() < 5 {
            return None;
        }
        let dt = samples[1].t - samples[0].t;
        if dt == 0.0 {
            return None;
        }
        let mut worst = 0.0f64;
        for k in 2..samples.len() - 2 {
            if ((samples[k + 2].t - samples[k - 2].t) - 4.0 * dt).abs() > 1e-9 * dt.abs() {
                return None;
            }
            let ydd = (samples[k - 2].y_dot - 8.0 * samples[k - 1].y_dot + 8.0 * samples[k + 1].y_dot
                - samples[k + 2].y_dot)
                / (12.0 * dt);
            let c = samples[k].state;
            let div = self.curvatures.lambda_i.eval_coords(c) + self.curvatures.v_lambda.eval_coords(c);
            let kl = self.curvatures.k_lambda.eval_coords(c);
            let res = ydd - div * samples[k].y_dot + kl * samples[k].jacobi.y;
            worst = worst.max(res.abs());
        }
        Some(worst)
    }

    /// Zeros of `y` on `(0, T]` for the solution with `y(0) = 0`, `y'(0) = 1`.
    pub fn detect_conjugate_points(&self, p0: SmPoint, horizon: f64) -> Result<Vec<f64>> {
        let li0 = self.curvatures.lambda_i.eval(p0);
        let init = JacobiState::new(0.0, 0.0, 1.0 - li0 * 0.0);
        self.zeros_of_y(p0.coords(), init, horizon)
    }

    /// Times in `(0, T]` (or `[T, 0)` backward) at which `y` vanishes.
    fn zeros_of_y(&self, c0: [f64; 3], init: JacobiState, t_end: f64) -> Result<Vec<f64>> {
        let f = |_t: f64, s: &[f64; 6]| self.rhs6(s);
        let s0 = [c0[0], c0[1], c0[2], init.a, init.y, init.z];
        let sol = integrate(&f, 0.0, s0, t_end, &self.control, &[], None)?;
        let mut zeros = Vec::new();
        for w in sol.steps.windows(2) {
            let (t0, s0) = w[0];
            let (t1, s1) = w[1];
            let (y0, y1) = (s0[4], s1[4]);
            if t0 == 0.0 && y0 == 0.0 {
                // the prescribed zero at the start
                if y1 == 0.0 {
                    zeros.push(t1);
                }
                continue;
            }
            if y1 == 0.0 {
                zeros.push(t1);
            } else if y0 * y1 < 0.0 {
                let (mut lo, mut hi) = (0.0, t1 - t0);
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    let ym = dp_step(&f, t0, &s0, mid).0[4];
                    if ym * y0 > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if (hi - lo).abs() < 1e-14 * t1.abs().max(1.0) {
                        break;
                    }
                }
                zeros.push(t0 + 0.5 * (lo + hi));
            }
        }
        Ok(zeros)
    }

    /// State of the orbit through `p0` at signed time `t`.
    fn state_at(&self, p0: SmPoint, t: f64) -> Result<[f64; 3]> {
        self.thermostat.flow(p0.coords(), t, &self.control)
    }

    /// `r_R^+` on `(-R, R]` or `r_R^-` on `[-R, R)` along the orbit through
    /// `p0`, from the linear solution with `y = 0`, `y' = 1` at `-R` (resp. `R`).
    pub fn solve_riccati_finite(&self, p0: SmPoint, radius: f64, sign: RiccatiSign) -> Result<RiccatiTrace> {
        let (start, end) = match sign {
            RiccatiSign::Plus => (-radius, radius),
            RiccatiSign::Minus => (radius, -radius),
        };
        let c_start = self.state_at(p0, start)?;
        let dt = (2.0 * radius / 400.0).min(0.05);
        let mut times: Vec<f64> = uniform_times(0.0, end - start, dt);
        let k_zero = times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 + start).abs().total_cmp(&(b.1 + start).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        times[k_zero] = -start;
        let traj = self.integrate_from(c_start, JacobiState::vertical(), end - start, &times)?;
        let zeros = self.zeros_of_y(c_start, JacobiState::vertical(), end - start)?;
        let blowup_times: Vec<f64> = zeros.iter().map(|t| t + start).collect();
        if let Some(&t) = blowup_times.first() {
            return Err(LabError::BlowupInsideWindow { t });
        }
        let samples: Vec<(f64, f64)> = traj
            .samples
            .iter()
            .skip(1)
            .map(|s| (s.t + start, s.y_dot / s.jacobi.y))
            .collect();
        let zs = &traj.samples[k_zero];
        Ok(RiccatiTrace {
            samples,
            blowup_times,
            limit_value: None,
            at_zero: zs.y_dot / zs.jacobi.y,
            bound: None,
        })
    }

    /// `r_R^{+-}(0)`, failing if `y` vanishes between `-+R` and `0`.
    pub fn riccati_at_zero(&self, p0: SmPoint, radius: f64, sign: RiccatiSign) -> Result<f64> {
        let start = match sign {
            RiccatiSign::Plus => -radius,
            RiccatiSign::Minus => radius,
        };
        let c_start = self.state_at(p0, start)?;
        let zeros = self.zeros_of_y(c_start, JacobiState::vertical(), -start)?;
        if let Some(&t) = zeros.first() {
            return Err(LabError::BlowupInsideWindow { t: t + start });
        }
        let f = |_t: f64, s: &[f64; 6]| self.rhs6(s);
        let s0 = [c_start[0], c_start[1], c_start[2], 0.0, 0.0, 1.0];
        let (_, s) = integrate(&f, 0.0, s0, -start, &self.control, &[], None)?.last();
        let smp = self.sample(0.0, &s);
        Ok(smp.y_dot / smp.jacobi.y)
    }

    /// Limit solutions `r^+-`, doubling `R` from 1 until successive values
    /// agree to `tol` or `R` exceeds `cap`.
    pub fn solve_riccati_limit(&self, p0: SmPoint, tol: f64, cap: f64) -> Result<RiccatiLimits> {
        let mut radius = 1.0;
        let mut plus_seq = vec![self.riccati_at_zero(p0, radius, RiccatiSign::Plus)?];
        let mut minus_seq = vec![self.riccati_at_zero(p0, radius, RiccatiSign::Minus)?];
        loop {
            let next = 2.0 * radius;
            if next > cap {
                return Err(LabError::NoConvergence(format!(
                    "r_R(0) still moving at R = {radius} (cap {cap}): +{:.3e}, -{:.3e}",
                    (plus_seq[plus_seq.len() - 1] - plus_seq[plus_seq.len().saturating_sub(2)]).abs(),
                    (minus_seq[minus_seq.len() - 1] - minus_seq[minus_seq.len().saturating_sub(2)]).abs()
                )));
            }
            radius = next;
            let p = self.riccati_at_zero(p0, radius, RiccatiSign::Plus)?;
            let m = self.riccati_at_zero(p0, radius, RiccatiSign::Minus)?;
            let (pp, mp) = (*plus_seq.last().unwrap(), *minus_seq.last().unwrap());
            let slack = 1e-9 * (1.0 + pp.abs().max(mp.abs()));
            if p > pp + slack || m < mp - slack {
                return Err(LabError::NoConvergence(format!(
                    "monotonicity fails at R = {radius}: r+ {pp} -> {p}, r- {mp} -> {m}"
                )));
            }
            if !(m < p) {
                return Err(LabError::NoConvergence(format!(
                    "ordering r- < r+ fails at R = {radius}: {m} >= {p}"
                )));
            }
            plus_seq.push(p);
            minus_seq.push(m);
            if (p - pp).abs() < tol && (m - mp).abs() < tol {
                return Ok(RiccatiLimits {
                    plus: p,
                    minus: m,
                    radius,
                    plus_sequence: plus_seq,
                    minus_sequence: minus_seq,
                });
            }
        }
    }

    /// Bound constants from sup norms over a grid.
    pub fn bound_constants(&self, grid: &GridSpec) -> BoundConstants {
        let div = self.curvatures.lambda_i.add(&self.curvatures.v_lambda);
        let (mut kl, mut c) = (0.0f64, 0.0f64);
        for p in grid.points() {
            kl = kl.max(self.curvatures.k_lambda.eval(p).abs());
            c = c.max(div.eval(p).abs());
        }
        let b = kl.sqrt();
        BoundConstants { a: b.max(c), b, c }
    }

    /// Checks `|r^+-| <= (A/2)(1 + sqrt 5)` at the given states and validates
    /// the closed-form comparison solutions.
    pub fn check_riccati_bound(
        &self,
        points: &[SmPoint],
        grid: &GridSpec,
        tol: f64,
        limit_tol: f64,
    ) -> Result<BoundReport> {
        let constants = self.bound_constants(grid);
        let bound = constants.bound();
        let mut states = Vec::new();
        for &p in points {
            let lim = self.solve_riccati_limit(p, limit_tol, 1024.0)?;
            for v in [lim.plus, lim.minus] {
                if v.abs() > bound + tol {
                    return Err(LabError::BoundViolated { value: v.abs(), bound });
                }
            }
            states.push(BoundCheck {
                point: p,
                plus: lim.plus,
                minus: lim.minus,
            });
        }
        let a = constants.a.max(1e-300);
        let ts: Vec<f64> = (1..=20).map(|k| 0.1 * k as f64).collect();
        let comparison_residual_plus = comparison_residual(a, 0.0, true, &ts);
        let ts_minus: Vec<f64> = ts.iter().map(|t| t + 0.05).collect();
        let comparison_residual_minus = comparison_residual(a, 0.0, false, &ts_minus);
        Ok(BoundReport {
            constants,
            bound,
            states,
            comparison_residual_plus,
            comparison_residual_minus,
            passed: true,
        })
    }

    /// Riccati data at `p` from the Jacobi solution started `offset` beyond
    /// the boundary along the backward orbit.
    pub fn fan_riccati(&self, p: SmPoint, offset: f64) -> Result<FanSample> {
        let tb = self.thermostat.exit_time(p, Direction::Backward, DEFAULT_HORIZON)?;
        let t0 = tb - offset;
        let c0 = self.state_at(p, t0)?;
        let zeros = self.zeros_of_y(c0, JacobiState::vertical(), -t0)?;
        if let Some(t) = zeros.first() {
            return Err(LabError::RiccatiUnavailable(format!(
                "conjugate point at t = {} on the fan orbit",
                t + t0
            )));
        }
        let f = |_t: f64, s: &[f64; 6]| self.rhs6(s);
        let s0 = [c0[0], c0[1], c0[2], 0.0, 0.0, 1.0];
        let (_, s) = integrate(&f, 0.0, s0, -t0, &self.control, &[], None)?.last();
        let c = [s[0], s[1], s[2]];
        let (y, z) = (s[4], s[5]);
        let li = self.curvatures.lambda_i.eval_coords(c);
        let vl = self.curvatures.v_lambda.eval_coords(c);
        let k0 = self.curvatures.k0.eval_coords(c);
        let gen = self.thermostat.generator();
        let f_li = gen.apply_coords(&self.curvatures.lambda_i, c);
        let y_dot = li * y + z;
        let z_dot = -k0 * y + vl * z;
        let rho = z / y;
        let f_rho = z_dot / y - z * y_dot / (y * y);
        Ok(FanSample {
            rho,
            r: rho + li,
            f_rho,
            f_r: f_rho + f_li,
            start_time: t0,
        })
    }
}

/// `w^+(t) = A/(1 - e^{-A sqrt5 t + D}) + A(sqrt5 - 1)/2 (1 + e^{..})/(1 - e^{..})`
/// or the matching `w^-` with constant `E`, as expressions in the variable `x`.
pub fn comparison_solution(a: f64, d: f64, plus: bool) -> Expr {
    let s5 = 5f64.sqrt();
    let t = Expr::x();
    let one = Expr::constant(1.0);
    if plus {
        let e = t.scale(-a * s5).add(&Expr::constant(d)).exp();
        Expr::constant(a)
            .div(&one.sub(&e))
            .add(&Expr::constant(a * (s5 - 1.0) / 2.0).mul(&one.add(&e).div(&one.sub(&e))))
    } else {
        let e = t.scale(a * s5).add(&Expr::constant(d)).exp();
        Expr::constant(-a)
            .mul(&e)
            .div(&e.sub(&one))
            .add(&Expr::constant(a * (1.0 + s5) / 2.0).mul(&e.add(&one).div(&e.sub(&one))))
    }
}

/// Largest residual of `w' -+ A w + w^2 - A^2` for the closed-form comparison
/// solution, with `w'` from symbolic differentiation.
pub fn comparison_residual(a: f64, d: f64, plus: bool, ts: &[f64]) -> f64 {
    let w = comparison_solution(a, d, plus);
    let dw = w.derivative(Var::X);
    let sgn = if plus { -1.0 } else { 1.0 };
    ts.iter()
        .map(|&t| {
            let c = [t, 0.0, 0.0];
            let wv = w.eval(c);
            (dw.eval(c) + sgn * a * wv + wv * wv - a * a).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SmField;
    use crate::flow::OrbitOptions;
    use crate::geometry::SurfaceModel;
    use std::f64::consts::PI;

    fn solver(model: SurfaceModel, lambda: f64) -> JacobiSolver {
        JacobiSolver::new(&Thermostat::new(model, SmField::constant(lambda)))
    }

    fn hyp_start() -> SmPoint {
        SmPoint::new(0.0, 1.0, PI / 2.0)
    }

    #[test]
    fn flat_jacobi_field_is_linear() {
        let s = solver(SurfaceModel::flat_torus(), 0.0);
        let orbit = s
            .thermostat
            .integrate_orbit(SmPoint::new(0.1, 0.2, 0.3), &OrbitOptions::until(3.0).sampled(0.1))
            .unwrap();
        let traj = s.integrate_jacobi(&orbit, JacobiState::vertical()).unwrap();
        for smp in &traj.samples {
            assert!((smp.jacobi.y - smp.t).abs() < 1e-12);
            assert!((smp.jacobi.z - 1.0).abs() < 1e-12);
            assert_eq!(smp.jacobi.a, 0.0);
        }
        assert!(traj.equation_residual.unwrap() < 1e-9);
    }

    #[test]
    fn positive_curvature_gives_sine() {
        let s = solver(SurfaceModel::round_sphere_chart(), 0.0);
        let traj = s
            .integrate_from(
                [1.0, 0.0, PI / 2.0],
                JacobiState::vertical(),
                4.0,
                &uniform_times(0.0, 4.0, 0.1),
            )
            .unwrap();
        for smp in &traj.samples {
            assert!((smp.jacobi.y - smp.t.sin()).abs() < 1e-8, "{}", smp.t);
        }
    }

    #[test]
    fn conjugate_points() {
        let sphere = solver(SurfaceModel::round_sphere_chart(), 0.0);
        let z = sphere
            .detect_conjugate_points(SmPoint::new(1.0, 0.0, PI / 2.0), 4.0)
            .unwrap();
        assert_eq!(z.len(), 1);
        assert!((z[0] - PI).abs() < 1e-8);
        let flat = solver(SurfaceModel::flat_torus(), 0.0);
        assert!(flat
            .detect_conjugate_points(SmPoint::new(0.0, 0.0, 0.3), 10.0)
            .unwrap()
            .is_empty());
        let hyp = solver(SurfaceModel::hyperbolic_half_plane(), 0.0);
        assert!(hyp.detect_conjugate_points(hyp_start(), 10.0).unwrap().is_empty());
    }

    #[test]
    fn finite_riccati_closed_forms() {
        let flat = solver(SurfaceModel::flat_torus(), 0.0);
        let tr = flat
            .solve_riccati_finite(SmPoint::new(0.0, 0.0, 0.0), 2.0, RiccatiSign::Plus)
            .unwrap();
        assert!((tr.at_zero - 0.5).abs() < 1e-12);
        let hyp = solver(SurfaceModel::hyperbolic_half_plane(), 0.0);
        for r in [0.5, 1.0, 3.0] {
            let tr = hyp.solve_riccati_finite(hyp_start(), r, RiccatiSign::Plus).unwrap();
            assert!((tr.at_zero - 1.0 / r.tanh()).abs() < 1e-8);
            let tm = hyp.solve_riccati_finite(hyp_start(), r, RiccatiSign::Minus).unwrap();
            assert!((tm.at_zero + 1.0 / r.tanh()).abs() < 1e-8);
            assert!(tm.at_zero < tr.at_zero);
        }
        let sphere = solver(SurfaceModel::round_sphere_chart(), 0.0);
        assert!(matches!(
            sphere.solve_riccati_finite(SmPoint::new(1.0, 0.0, PI / 2.0), 2.0, RiccatiSign::Plus),
            Err(LabError::BlowupInsideWindow { .. })
        ));
    }

    #[test]
    fn limits() {
        let hyp = solver(SurfaceModel::hyperbolic_half_plane(), 0.0);
        let lim = hyp.solve_riccati_limit(hyp_start(), 1e-6, 1024.0).unwrap();
        assert!((lim.plus - 1.0).abs() < 1e-6 && (lim.minus + 1.0).abs() < 1e-6);
        assert!(lim.radius <= 20.0);
        let circle = solver(SurfaceModel::flat_torus(), 1.0);
        assert!(circle
            .solve_riccati_limit(SmPoint::new(0.0, 0.0, 0.0), 1e-6, 1024.0)
            .is_err());
    }

    #[test]
    fn comparison_solutions_solve_their_equations() {
        let ts: Vec<f64> = (1..=20).map(|k| 0.1 * k as f64).collect();
        for (a, d) in [(1.0, 0.0), (0.7, -0.3), (2.0, 0.5)] {
            assert!(comparison_residual(a, d, true, &ts) < 1e-9);
            let ts_m: Vec<f64> = ts.iter().map(|t| t + d.abs() + 0.05).collect();
            assert!(comparison_residual(a, d, false, &ts_m) < 1e-9);
        }
        // a wrong sign in the equation is detected
        let w = comparison_solution(1.0, 0.0, true);
        let dw = w.derivative(Var::X);
        let c = [0.7, 0.0, 0.0];
        let wrong = dw.eval(c) + w.eval(c) + w.eval(c).powi(2) - 1.0;
        assert!(wrong.abs() > 1e-3);
    }
}
