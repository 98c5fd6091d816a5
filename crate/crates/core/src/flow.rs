//! Thermostat flow on the unit sphere bundle.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{Domain, SmField, SmPoint};
use crate::geometry::{FrameOperator, SurfaceModel};
use crate::grid::GridSpec;
use crate::ode::{integrate, StepControl};

/// Default horizon for exit searches.
pub const DEFAULT_HORIZON: f64 = 100.0;
/// Minimum `|<gamma', nu>|` for a transversal boundary crossing.
pub const TRANSVERSALITY_TOL: f64 = 1e-6;
/// Step cap on bounded domains, so boundary crossings are not stepped over.
pub const DISK_MAX_STEP: f64 = 0.05;

/// A surface model together with the geodesic-curvature function `lambda`.
#[derive(Debug, Clone)]
pub struct Thermostat {
    pub model: SurfaceModel,
    pub lambda: SmField,
    generator: FrameOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSample {
    pub t: f64,
    /// Raw coordinates; the angle is not reduced modulo `2 pi`.
    pub state: [f64; 3],
}

impl OrbitSample {
    pub fn point(&self) -> SmPoint {
        SmPoint::from_coords(self.state)
    }
}

/// A sampled orbit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Orbit {
    pub samples: Vec<OrbitSample>,
    /// Signed time at which the orbit first reaches the boundary.
    pub exit_time: Option<f64>,
    pub regular: bool,
    pub exit_transversal: bool,
}

impl Orbit {
    pub fn end(&self) -> OrbitSample {
        *self.samples.last().expect("orbit has samples")
    }

    /// Writes `t,x,y,theta` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,y,theta\n");
        for s in &self.samples {
            let p = s.point();
            out.push_str(&format!(
                "{},{},{},{}\n",
                crate::report::fmt_f64(s.t),
                crate::report::fmt_f64(p.x),
                crate::report::fmt_f64(p.y),
                crate::report::fmt_f64(p.theta)
            ));
        }
        out
    }
}

/// Options for [`Thermostat::integrate_orbit`].
#[derive(Debug, Clone, Copy)]
pub struct OrbitOptions {
    /// Signed final time.
    pub t_end: f64,
    /// Stop at the first boundary crossing on bounded domains.
    pub stop_at_boundary: bool,
    /// Emit samples on a uniform grid of this spacing instead of at the
    /// accepted steps.
    pub sample_dt: Option<f64>,
    pub control: StepControl,
}

impl OrbitOptions {
    pub fn until(t_end: f64) -> OrbitOptions {
        OrbitOptions {
            t_end,
            stop_at_boundary: true,
            sample_dt: None,
            control: StepControl::default(),
        }
    }

    pub fn sampled(mut self, dt: f64) -> OrbitOptions {
        self.sample_dt = Some(dt);
        self
    }

    pub fn through_boundary(mut self) -> OrbitOptions {
        self.stop_at_boundary = false;
        self
    }

    pub fn with_control(mut self, control: StepControl) -> OrbitOptions {
        self.control = control;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Regularity {
    pub regular: bool,
    pub forward_exit: f64,
    pub backward_exit: f64,
    pub forward_normal_speed: f64,
    pub backward_normal_speed: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NontrappingReport {
    pub checked: usize,
    pub horizon: f64,
    pub trapped: Vec<SmPoint>,
}

/// Uniform times `t0, t0 + dt, ...` up to `t1` (either direction), always
/// including `t1`.
pub fn uniform_times(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let n = ((t1 - t0).abs() / dt).round().max(1.0) as usize;
    (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
}

fn boundary_gap(c: &[f64; 3]) -> f64 {
    1.0 - c[0] * c[0] - c[1] * c[1]
}

impl Thermostat {
    pub fn new(model: SurfaceModel, lambda: SmField) -> Thermostat {
        let generator = model.generator(&lambda);
        Thermostat {
            model,
            lambda,
            generator,
        }
    }

    /// Geodesic flow of the model.
    pub fn geodesic(model: SurfaceModel) -> Thermostat {
        Thermostat::new(model, SmField::constant(0.0))
    }

    /// The generator `F = X + lambda V`.
    pub fn generator(&self) -> &FrameOperator {
        &self.generator
    }

    /// Vector field of the flow in coordinates.
    #[inline]
    pub fn rhs(&self, c: &[f64; 3]) -> [f64; 3] {
        self.generator.coefficients(*c)
    }

    fn bounded(&self) -> bool {
        self.model.domain == Domain::Disk
    }

    fn control(&self, base: StepControl) -> StepControl {
        if self.bounded() {
            base.with_max_step(base.max_step.min(DISK_MAX_STEP))
        } else {
            base
        }
    }

    /// Cosine between the base velocity and the outward normal at a boundary point.
    pub fn normal_speed(&self, c: &[f64; 3]) -> f64 {
        let v = self.rhs(c);
        let r = c[0].hypot(c[1]);
        let s = v[0].hypot(v[1]);
        if r == 0.0 || s == 0.0 {
            return 0.0;
        }
        (v[0] * c[0] + v[1] * c[1]) / (r * s)
    }

    /// Whether a boundary state leaves the disk immediately in direction `sign`.
    fn leaves_immediately(&self, c: &[f64; 3], sign: f64) -> bool {
        let h = sign * 1e-6;
        let (next, _) = crate::ode::dp_step(&|_t, y: &[f64; 3]| self.rhs(y), 0.0, c, h);
        boundary_gap(&next) < 0.0
    }

    /// Integrates the orbit through `p0`.
    pub fn integrate_orbit(&self, p0: SmPoint, opts: &OrbitOptions) -> Result<Orbit> {
        self.model.check_point(p0)?;
        let c0 = p0.coords();
        let sign = if opts.t_end >= 0.0 { 1.0 } else { -1.0 };
        let stop = opts.stop_at_boundary && self.bounded();
        let f = |_t: f64, y: &[f64; 3]| self.rhs(y);
        let ctrl = self.control(opts.control);

        if stop && boundary_gap(&c0).abs() < 1e-12 && self.leaves_immediately(&c0, sign) {
            return Ok(Orbit {
                samples: vec![OrbitSample { t: 0.0, state: c0 }],
                exit_time: Some(0.0),
                regular: false,
                exit_transversal: self.normal_speed(&c0).abs() > TRANSVERSALITY_TOL,
            });
        }
        let outputs = opts
            .sample_dt
            .map(|dt| uniform_times(0.0, opts.t_end, dt))
            .unwrap_or_default();
        let g = |_t: f64, y: &[f64; 3]| boundary_gap(y);
        let sol = integrate(
            &f,
            0.0,
            c0,
            opts.t_end,
            &ctrl,
            &outputs,
            if stop { Some(&g) } else { None },
        )?;
        let mut samples: Vec<OrbitSample> = if opts.sample_dt.is_some() {
            sol.outputs.iter().map(|&(t, state)| OrbitSample { t, state }).collect()
        } else {
            sol.steps.iter().map(|&(t, state)| OrbitSample { t, state }).collect()
        };
        let (exit_time, exit_transversal) = match sol.event {
            Some((te, ye)) => {
                if opts.sample_dt.is_some() {
                    samples.push(OrbitSample { t: te, state: ye });
                }
                (Some(te), self.normal_speed(&ye).abs() > TRANSVERSALITY_TOL)
            }
            None => {
                // the horizon may end exactly on the boundary
                let (te, ye) = sol.last();
                if stop && boundary_gap(&ye).abs() < 1e-12 && self.normal_speed(&ye) * sign > 0.0 {
                    (Some(te), self.normal_speed(&ye).abs() > TRANSVERSALITY_TOL)
                } else {
                    (None, false)
                }
            }
        };
        Ok(Orbit {
            samples,
            exit_time,
            regular: exit_transversal,
            exit_transversal,
        })
    }

    /// Endpoint of the flow for time `t`, ignoring the boundary.
    pub fn flow(&self, c0: [f64; 3], t: f64, control: &StepControl) -> Result<[f64; 3]> {
        let f = |_t: f64, y: &[f64; 3]| self.rhs(y);
        Ok(integrate(&f, 0.0, c0, t, &self.control(*control), &[], None)?.last().1)
    }

    /// Signed time of the first boundary crossing in the given direction.
    pub fn exit_time(&self, p0: SmPoint, dir: Direction, horizon: f64) -> Result<f64> {
        self.exit_state(p0, dir, horizon).map(|(t, _)| t)
    }

    /// Exit time and state at the boundary.
    pub fn exit_state(&self, p0: SmPoint, dir: Direction, horizon: f64) -> Result<(f64, [f64; 3])> {
        if !self.bounded() {
            return Err(LabError::Domain("exit times need a bounded domain".into()));
        }
        let orbit = self.integrate_orbit(p0, &OrbitOptions::until(dir.sign() * horizon))?;
        match orbit.exit_time {
            Some(t) => Ok((t, orbit.end().state)),
            None => Err(LabError::TrappedOrbit { horizon }),
        }
    }

    /// Base point reached from `(x, y)` in direction `xi` after time `t`.
    pub fn exp_map(&self, x: f64, y: f64, xi: f64, t: f64, control: &StepControl) -> Result<(f64, f64)> {
        if t < 0.0 {
            return Err(LabError::Domain(format!("exponential map needs t >= 0, got {t}")));
        }
        let c = self.flow([x, y, xi], t, control)?;
        Ok((c[0], c[1]))
    }

    /// Transversality of both boundary crossings of the orbit through `p0`.
    pub fn scan_regularity(&self, p0: SmPoint) -> Result<Regularity> {
        let (tf, yf) = self.exit_state(p0, Direction::Forward, DEFAULT_HORIZON)?;
        let (tb, yb) = self.exit_state(p0, Direction::Backward, DEFAULT_HORIZON)?;
        let nf = self.normal_speed(&yf);
        let nb = self.normal_speed(&yb);
        Ok(Regularity {
            regular: nf.abs() > TRANSVERSALITY_TOL && nb.abs() > TRANSVERSALITY_TOL,
            forward_exit: tf,
            backward_exit: tb,
            forward_normal_speed: nf,
            backward_normal_speed: nb,
        })
    }

    /// States on the grid whose orbit does not leave the disk within the
    /// horizon in at least one direction.
    pub fn nontrapping_scan(&self, grid: &GridSpec, horizon: f64) -> NontrappingReport {
        let points = grid.points();
        let trapped: Vec<SmPoint> = points
            .par_iter()
            .filter(|&&p| {
                [Direction::Forward, Direction::Backward]
                    .iter()
                    .any(|&d| self.exit_time(p, d, horizon).is_err())
            })
            .cloned()
            .collect();
        NontrappingReport {
            checked: points.len(),
            horizon,
            trapped,
        }
    }

    /// Largest `|F(gamma') - 1|` over an orbit sampled on a uniform grid,
    /// with velocities from fourth-order differences of the sampled positions.
    /// `None` when the metric is not conformal or the orbit is too short.
    pub fn speed_defect(&self, orbit: &Orbit) -> Option<f64> {
        let phi = self.model.phi.as_ref()?;
        let s = &orbit.samples;
        if s.len() < 5 {
            return None;
        }
        let dt = s[1].t - s[0].t;
        let mut worst = 0.0f64;
        for k in 2..s.len() - 2 {
            if ((s[k + 2].t - s[k - 2].t) - 4.0 * dt).abs() > 1e-9 * dt.abs() {
                continue;
            }
            let d = |i: usize| {
                (s[k - 2].state[i] - 8.0 * s[k - 1].state[i] + 8.0 * s[k + 1].state[i] - s[k + 2].state[i])
                    / (12.0 * dt)
            };
            let speed = phi.eval(s[k].state).exp() * d(0).hypot(d(1));
            worst = worst.max((speed - 1.0).abs());
        }
        Some(worst)
    }
}
