//! Dormand–Prince 5(4) integrator with step-size control and event location.
//!
//! Integration may run backward (`t_end < t0`); step sizes then carry the
//! sign of the direction.

use crate::error::{LabError, Result};

/// Step-size control.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Largest step magnitude.
    pub max_step: f64,
    /// Use this fixed step magnitude instead of adaptive control.
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-10,
            atol: 1e-10,
            max_step: f64::INFINITY,
            fixed_step: None,
            max_steps: 2_000_000,
        }
    }
}

impl StepControl {
    pub fn fixed(h: f64) -> StepControl {
        StepControl {
            fixed_step: Some(h),
            ..Default::default()
        }
    }

    pub fn with_max_step(mut self, h: f64) -> StepControl {
        self.max_step = h;
        self
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand–Prince step. Returns the fifth-order solution and the
/// embedded error estimate.
pub fn dp_step<const N: usize, F>(f: &F, t: f64, y: &[f64; N], h: f64) -> ([f64; N], [f64; N])
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let mut k = [[0.0; N]; 7];
    k[0] = f(t, y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            let a = A[s][j];
            if a != 0.0 {
                for n in 0..N {
                    ys[n] += h * a * kj[n];
                }
            }
        }
        k[s] = f(t + C[s] * h, &ys);
    }
    let mut y5 = *y;
    let mut err = [0.0; N];
    for s in 0..7 {
        for n in 0..N {
            y5[n] += h * B5[s] * k[s][n];
            err[n] += h * (B5[s] - B4[s]) * k[s][n];
        }
    }
    (y5, err)
}

/// Result of an integration.
#[derive(Debug, Clone)]
pub struct Solution<const N: usize> {
    /// Accepted steps, starting with the initial state.
    pub steps: Vec<(f64, [f64; N])>,
    /// States at the requested output times (those reached before any event).
    pub outputs: Vec<(f64, [f64; N])>,
    /// First event, located by bisection.
    pub event: Option<(f64, [f64; N])>,
}

impl<const N: usize> Solution<N> {
    pub fn last(&self) -> (f64, [f64; N]) {
        *self.steps.last().expect("solution has at least the initial state")
    }
}

/// A scalar event function; an event fires when it changes sign from
/// positive to non-positive.
pub type EventFn<'a, const N: usize> = &'a dyn Fn(f64, &[f64; N]) -> f64;

/// Integrates `y' = f(t, y)` from `t0` to `t_end`.
///
/// `outputs` are times between `t0` and `t_end`, sorted in the direction of
/// integration. Output states are produced by a single step from the last
/// accepted state, which keeps the local error at the controller's level.
pub fn integrate<const N: usize, F>(
    f: &F,
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    ctrl: &StepControl,
    outputs: &[f64],
    event: Option<EventFn<'_, N>>,
) -> Result<Solution<N>>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let span = (t_end - t0).abs();
    let mut sol = Solution {
        steps: vec![(t0, y0)],
        outputs: Vec::with_capacity(outputs.len()),
        event: None,
    };
    let mut next_out = 0;
    while next_out < outputs.len() && (outputs[next_out] - t0) * dir <= 0.0 {
        sol.outputs.push((outputs[next_out], y0));
        next_out += 1;
    }
    if span == 0.0 {
        return Ok(sol);
    }
    let mut t = t0;
    let mut y = y0;
    let mut g_prev = event.map(|g| g(t, &y));
    let max_step = ctrl.max_step.min(span);
    let mut h = match ctrl.fixed_step {
        Some(hf) => hf.min(max_step),
        None => initial_step(f, t0, &y0, ctrl).min(max_step),
    };
    let mut steps = 0usize;
    loop {
        let remaining = (t_end - t) * dir;
        if remaining <= 1e-15 * span.max(1.0) {
            break;
        }
        if steps >= ctrl.max_steps {
            return Err(LabError::StepFailure {
                t,
                reason: format!("step budget of {} exhausted", ctrl.max_steps),
            });
        }
        steps += 1;
        let last = h >= remaining;
        let h_try = h.min(remaining);
        let (y_new, err) = dp_step(f, t, &y, dir * h_try);
        if y_new.iter().any(|v| !v.is_finite()) {
            if ctrl.fixed_step.is_some() {
                return Err(LabError::StepFailure {
                    t,
                    reason: "non-finite state".into(),
                });
            }
            h = h_try * 0.25;
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(LabError::StepFailure {
                    t,
                    reason: "step size underflow".into(),
                });
            }
            continue;
        }
        let factor = if ctrl.fixed_step.is_some() {
            None
        } else {
            let mut e2 = 0.0;
            for n in 0..N {
                let sc = ctrl.atol + ctrl.rtol * y[n].abs().max(y_new[n].abs());
                e2 += (err[n] / sc).powi(2);
            }
            let e = (e2 / N as f64).sqrt();
            if e > 1.0 {
                h = h_try * (0.9 * e.powf(-0.2)).max(0.2);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(LabError::StepFailure {
                        t,
                        reason: "step size underflow".into(),
                    });
                }
                continue;
            }
            Some(if e == 0.0 {
                5.0
            } else {
                (0.9 * e.powf(-0.2)).clamp(0.2, 5.0)
            })
        };
        let t_new = if last { t_end } else { t + dir * h_try };

        if let (Some(g), Some(gp)) = (event, g_prev) {
            let g_new = g(t_new, &y_new);
            if gp > 0.0 && g_new <= 0.0 {
                let (te, ye) = locate_event(f, g, t, &y, dir * h_try);
                while next_out < outputs.len() && (outputs[next_out] - te) * dir < 0.0 {
                    let dt = outputs[next_out] - t;
                    sol.outputs.push((outputs[next_out], dp_step(f, t, &y, dt).0));
                    next_out += 1;
                }
                sol.steps.push((te, ye));
                sol.event = Some((te, ye));
                return Ok(sol);
            }
            g_prev = Some(g_new);
        }
        while next_out < outputs.len() && (outputs[next_out] - t_new) * dir <= 0.0 {
            let dt = outputs[next_out] - t;
            let ys = if dt == 0.0 { y } else { dp_step(f, t, &y, dt).0 };
            sol.outputs.push((outputs[next_out], ys));
            next_out += 1;
        }
        t = t_new;
        y = y_new;
        sol.steps.push((t, y));
        if let Some(fac) = factor {
            h = (h_try * fac).min(max_step);
        }
    }
    Ok(sol)
}

fn initial_step<const N: usize, F>(f: &F, t0: f64, y0: &[f64; N], ctrl: &StepControl) -> f64
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let d = f(t0, y0);
    let mut n0 = 0.0;
    let mut n1 = 0.0;
    for i in 0..N {
        let sc = ctrl.atol + ctrl.rtol * y0[i].abs();
        n0 += (y0[i] / sc).powi(2);
        n1 += (d[i] / sc).powi(2);
    }
    let (n0, n1) = ((n0 / N as f64).sqrt(), (n1 / N as f64).sqrt());
    let h = if n0 < 1e-5 || n1 < 1e-5 { 1e-6 } else { 0.01 * n0 / n1 };
    h.clamp(1e-8, 0.1)
}

/// Bisection on the step size `s` in `(0, h]` of a single step from `(t, y)`.
fn locate_event<const N: usize, F>(f: &F, g: EventFn<'_, N>, t: f64, y: &[f64; N], h: f64) -> (f64, [f64; N])
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let (mut lo, mut hi) = (0.0f64, h);
    let mut y_hi = dp_step(f, t, y, h).0;
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-13 * t.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let ym = dp_step(f, t, y, mid).0;
        if g(t + mid, &ym) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            y_hi = ym;
        }
    }
    (t + hi, y_hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(_t: f64, y: &[f64; 2]) -> [f64; 2] {
        [y[1], -y[0]]
    }

    #[test]
    fn harmonic_oscillator_to_tolerance() {
        let sol = integrate(&oscillator, 0.0, [0.0, 1.0], 10.0, &StepControl::default(), &[], None).unwrap();
        let (t, y) = sol.last();
        assert_eq!(t, 10.0);
        assert!((y[0] - 10f64.sin()).abs() < 1e-8);
        assert!((y[1] - 10f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn backward_integration_and_outputs() {
        let outs = [-0.5, -1.0, -2.0];
        let sol = integrate(&oscillator, 0.0, [0.0, 1.0], -2.0, &StepControl::default(), &outs, None).unwrap();
        assert_eq!(sol.outputs.len(), 3);
        for (t, y) in sol.outputs {
            assert!((y[0] - t.sin()).abs() < 1e-9, "{t}");
        }
    }

    #[test]
    fn event_is_located_precisely() {
        let g = |_t: f64, y: &[f64; 2]| y[0];
        let sol = integrate(
            &oscillator,
            0.0,
            [1.0, 0.0],
            10.0,
            &StepControl::default(),
            &[],
            Some(&g),
        )
        .unwrap();
        let (te, _) = sol.event.unwrap();
        assert!((te - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    }

    #[test]
    fn fixed_step_converges_at_fifth_order() {
        let run = |h: f64| {
            let sol = integrate(&oscillator, 0.0, [0.0, 1.0], 2.0, &StepControl::fixed(h), &[], None).unwrap();
            (sol.last().1[0] - 2f64.sin()).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 25.0, "ratio {ratio}");
    }

    #[test]
    fn blowup_reports_step_failure() {
        let f = |_t: f64, y: &[f64; 1]| [y[0] * y[0]];
        let res = integrate(&f, 0.0, [1.0], 2.0, &StepControl::default(), &[], None);
        assert!(matches!(res, Err(LabError::StepFailure { .. })));
    }
}
