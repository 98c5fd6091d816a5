//! Curvature criterion for hyperbolicity, the quadratic-form rate along Jacobi
//! fields, and least-squares probes of the cohomological equation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{Domain, SmField, SmPoint};
use crate::geometry::SurfaceModel;
use crate::grid::GridSpec;
use crate::jacobi::{JacobiSolver, JacobiTrajectory};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriterionReport {
    /// Largest `K0 + (lambda I + V(lambda))^2 / 4` over the grid.
    pub sup_value: f64,
    pub argmax: SmPoint,
    /// `sup_value < 0`.
    pub anosov_flag: bool,
}

/// Supremum of `K - H(lambda) - lambda J + lambda^2 + (lambda I + V(lambda))^2/4`.
pub fn hyperbolicity_criterion(model: &SurfaceModel, lambda: &SmField, grid: &GridSpec) -> CriterionReport {
    let d = model.derived_curvatures(lambda).anosov_d;
    let (sup_value, argmax) = grid.points().par_iter().map(|&p| (d.eval(p), p)).reduce(
        || (f64::NEG_INFINITY, SmPoint::new(0.0, 0.0, 0.0)),
        |a, b| {
            if b.0 > a.0 || (b.0 == a.0 && point_key(b.1) < point_key(a.1)) {
                b
            } else {
                a
            }
        },
    );
    CriterionReport {
        sup_value,
        argmax,
        anosov_flag: sup_value < 0.0,
    }
}

fn point_key(p: SmPoint) -> (u64, u64, u64) {
    (p.x.to_bits(), p.y.to_bits(), p.theta.to_bits())
}

/// The rate form `-K0 y^2 + c y z + z^2`, `c = lambda I + V(lambda)`, is
/// positive definite iff both leading minors of `[[-K0, c/2], [c/2, 1]]` are
/// positive.
pub fn sylvester_positive_definite(k0: f64, c: f64) -> bool {
    let m11 = -k0;
    let det = -k0 - c * c / 4.0;
    m11 > 0.0 && det > 0.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct QuadraticFormState {
    pub t: f64,
    pub y: f64,
    pub z: f64,
    /// `Q = y z`.
    pub q_value: f64,
    /// `-K0 y^2 + (V(lambda) + lambda I) y z + z^2`.
    pub rate: f64,
    pub positive_definite: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticFormSeries {
    pub states: Vec<QuadraticFormState>,
    /// Largest `|d(yz)/dt - rate|` with central differences of `yz`.
    pub max_fd_deviation: Option<f64>,
}

pub fn quadratic_form_rate(solver: &JacobiSolver, traj: &JacobiTrajectory) -> QuadraticFormSeries {
    let cur = &solver.curvatures;
    let states: Vec<QuadraticFormState> = traj
        .samples
        .iter()
        .map(|s| {
            let (k0, c) = (
                cur.k0.eval_coords(s.state),
                cur.lambda_i.eval_coords(s.state) + cur.v_lambda.eval_coords(s.state),
            );
            let (y, z) = (s.jacobi.y, s.jacobi.z);
            QuadraticFormState {
                t: s.t,
                y,
                z,
                q_value: y * z,
                rate: -k0 * y * y + c * y * z + z * z,
                positive_definite: sylvester_positive_definite(k0, c),
            }
        })
        .collect();
    let max_fd_deviation = if states.len() >= 3 {
        let mut worst = 0.0f64;
        for k in 1..states.len() - 1 {
            let dt = states[k + 1].t - states[k - 1].t;
            let d = (states[k + 1].q_value - states[k - 1].q_value) / dt;
            worst = worst.max((d - states[k].rate).abs());
        }
        Some(worst)
    } else {
        None
    };
    QuadraticFormSeries {
        states,
        max_fd_deviation,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SylvesterReport {
    pub checked: usize,
    pub skipped_near_zero: usize,
    pub mismatches: usize,
}

/// Compares positive definiteness of the rate form with the sign of the
/// criterion at every grid state where `|criterion| > 1e-9`.
pub fn sylvester_equivalence(model: &SurfaceModel, lambda: &SmField, grid: &GridSpec) -> SylvesterReport {
    let cur = model.derived_curvatures(lambda);
    let rows: Vec<(bool, bool)> = grid
        .points()
        .par_iter()
        .map(|&p| {
            let k0 = cur.k0.eval(p);
            let c = cur.lambda_i.eval(p) + cur.v_lambda.eval(p);
            let d = cur.anosov_d.eval(p);
            if d.abs() <= 1e-9 {
                (false, false)
            } else {
                (true, sylvester_positive_definite(k0, c) == (d < 0.0))
            }
        })
        .collect();
    SylvesterReport {
        checked: rows.iter().filter(|r| r.0).count(),
        skipped_near_zero: rows.iter().filter(|r| !r.0).count(),
        mismatches: rows.iter().filter(|r| r.0 && !r.1).count(),
    }
}

/// Finite-time growth rate `ln |(y, z)(T)| / T` of the Jacobi solution with
/// `y = 0`, `z = 1`. A diagnostic only.
pub fn finite_time_lyapunov(solver: &JacobiSolver, p: SmPoint, horizon: f64) -> Result<f64> {
    let traj = solver.integrate_from(p.coords(), crate::jacobi::JacobiState::vertical(), horizon, &[])?;
    let last = traj
        .samples
        .last()
        .ok_or_else(|| LabError::Domain("empty trajectory".into()))?;
    Ok(last.jacobi.y.hypot(last.jacobi.z).ln() / horizon)
}

/// Iterative solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Stop when `||r|| <= tol ||b||` (consistent systems) or
    /// `||B^T r|| <= tol ||B|| ||r||` (least-squares optimum reached).
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 10_000,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CohomologyResult {
    /// `||F u - rhs|| / ||rhs||` in the Liouville-weighted norm.
    pub residual: f64,
    pub iterations: usize,
    pub n: [usize; 3],
    /// Mean-zero minimizer, index `(i n_y + j) n_theta + k`.
    pub minimizer: Vec<f64>,
}

/// Fourth-order central difference weights for offsets 1 and 2.
const D1: f64 = 2.0 / 3.0;
const D2: f64 = -1.0 / 12.0;

/// Index of the neighbour at offset `o` along `axis`, ordering
/// `(i n_y + j) n_theta + k`.
fn shift_index(n: [usize; 3], idx: usize, axis: usize, o: isize) -> usize {
    let mut c = [idx / (n[1] * n[2]), (idx / n[2]) % n[1], idx % n[2]];
    c[axis] = (c[axis] as isize + o).rem_euclid(n[axis] as isize) as usize;
    (c[0] * n[1] + c[1]) * n[2] + c[2]
}

/// `F` on a periodic torus grid: frame coefficients times fourth-order
/// periodic differences, weighted by the square root of the density.
pub struct DiscreteGenerator {
    n: [usize; 3],
    h: [f64; 3],
    /// Coefficients of `d/dx`, `d/dy`, `d/dtheta` at each node.
    coef: [Vec<f64>; 3],
    sqrt_w: Vec<f64>,
    nodes: Vec<SmPoint>,
    /// Neighbours at offsets `+1, -1, +2, -2` along each axis.
    nbr: Vec<[u32; 12]>,
}

impl DiscreteGenerator {
    pub fn new(
        model: &SurfaceModel,
        lambda: &SmField,
        n_x: usize,
        n_y: usize,
        n_theta: usize,
    ) -> Result<DiscreteGenerator> {
        if model.domain != Domain::Torus {
            return Err(LabError::Domain(
                "the cohomological equation is solved on the torus".into(),
            ));
        }
        let f = model.generator(lambda);
        let tau = 2.0 * std::f64::consts::PI;
        let mut nodes = Vec::with_capacity(n_x * n_y * n_theta);
        for i in 0..n_x {
            for j in 0..n_y {
                for k in 0..n_theta {
                    nodes.push(SmPoint::new(
                        i as f64 / n_x as f64,
                        j as f64 / n_y as f64,
                        tau * k as f64 / n_theta as f64,
                    ));
                }
            }
        }
        let c: Vec<[f64; 3]> = nodes.par_iter().map(|p| f.coefficients(p.coords())).collect();
        let sqrt_w = nodes.par_iter().map(|p| model.density.eval(*p).sqrt()).collect();
        let n = [n_x, n_y, n_theta];
        let nbr = (0..nodes.len())
            .map(|idx| {
                let mut out = [0u32; 12];
                for a in 0..3 {
                    for (m, o) in [1isize, -1, 2, -2].into_iter().enumerate() {
                        out[4 * a + m] = shift_index(n, idx, a, o) as u32;
                    }
                }
                out
            })
            .collect();
        Ok(DiscreteGenerator {
            nbr,
            n,
            h: [1.0 / n_x as f64, 1.0 / n_y as f64, tau / n_theta as f64],
            coef: [
                c.iter().map(|v| v[0]).collect(),
                c.iter().map(|v| v[1]).collect(),
                c.iter().map(|v| v[2]).collect(),
            ],
            sqrt_w,
            nodes,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[SmPoint] {
        &self.nodes
    }

    #[inline]
    fn diff(&self, u: &[f64], idx: usize, axis: usize) -> f64 {
        let nb = &self.nbr[idx][4 * axis..4 * axis + 4];
        (D1 * (u[nb[0] as usize] - u[nb[1] as usize]) + D2 * (u[nb[2] as usize] - u[nb[3] as usize])) / self.h[axis]
    }

    /// Unweighted `F u` at the nodes.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|idx| (0..3).map(|a| self.coef[a][idx] * self.diff(u, idx, a)).sum())
            .collect()
    }

    /// `B = S A P` with `S` the weight roots and `P` the column scaling.
    fn apply_b(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = x.par_iter().zip(p).map(|(a, b)| a * b).collect();
        let au = self.apply(&u);
        au.par_iter().zip(&self.sqrt_w).map(|(a, s)| a * s).collect()
    }

    /// `B^T v`; the periodic central difference is antisymmetric.
    fn apply_bt(&self, v: &[f64], p: &[f64]) -> Vec<f64> {
        let weighted: [Vec<f64>; 3] = [0, 1, 2].map(|a| {
            (0..self.len())
                .into_par_iter()
                .map(|i| self.coef[a][i] * self.sqrt_w[i] * v[i])
                .collect()
        });
        (0..self.len())
            .into_par_iter()
            .map(|idx| -(0..3).map(|a| self.diff(&weighted[a], idx, a)).sum::<f64>() * p[idx])
            .collect()
    }

    /// Inverse column norms of `S A`.
    fn column_scaling(&self) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|j| {
                let mut s = 0.0;
                for a in 0..3 {
                    // row i sees j at offset o when i is j's neighbour at -o
                    for (m, w) in [(1usize, D1), (0, -D1), (3, D2), (2, -D2)] {
                        let i = self.nbr[j][4 * a + m] as usize;
                        let v = self.sqrt_w[i] * self.coef[a][i] * w / self.h[a];
                        s += v * v;
                    }
                }
                if s > 0.0 {
                    1.0 / s.sqrt()
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Weighted least squares `min ||F u - rhs||` by CGLS with column scaling.
    pub fn solve(&self, rhs: &[f64], opts: SolverOptions) -> Result<CohomologyResult> {
        let n = self.len();
        let p = self.column_scaling();
        let d: Vec<f64> = rhs.iter().zip(&self.sqrt_w).map(|(r, s)| r * s).collect();
        let norm = |v: &[f64]| v.par_iter().map(|a| a * a).sum::<f64>().sqrt();
        let d_norm = norm(&d);
        if d_norm == 0.0 {
            return Ok(CohomologyResult {
                residual: 0.0,
                iterations: 0,
                n: self.n,
                minimizer: vec![0.0; n],
            });
        }
        let mut x = vec![0.0; n];
        let mut r = d.clone();
        let mut s = self.apply_bt(&r, &p);
        let mut dir = s.clone();
        let mut gamma = norm(&s).powi(2);
        // scaled columns have unit norm, so this is the Frobenius norm
        let b_norm = (p.iter().filter(|&&v| v > 0.0).count() as f64).sqrt();
        let mut iterations = 0;
        loop {
            let r_norm = norm(&r);
            if r_norm <= opts.tolerance * d_norm || gamma.sqrt() <= opts.tolerance * b_norm * r_norm {
                break;
            }
            if iterations >= opts.max_iterations {
                return Err(LabError::SolverDiverged {
                    iterations,
                    residual: norm(&r) / d_norm,
                });
            }
            let q = self.apply_b(&dir, &p);
            let qq = norm(&q).powi(2);
            if qq == 0.0 {
                break;
            }
            let alpha = gamma / qq;
            x.par_iter_mut().zip(&dir).for_each(|(a, b)| *a += alpha * b);
            r.par_iter_mut().zip(&q).for_each(|(a, b)| *a -= alpha * b);
            s = self.apply_bt(&r, &p);
            let gamma_new = norm(&s).powi(2);
            let beta = gamma_new / gamma;
            gamma = gamma_new;
            dir.par_iter_mut().zip(&s).for_each(|(a, b)| *a = b + beta * *a);
            iterations += 1;
        }
        let mut u: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a * b).collect();
        let w_sum: f64 = self.sqrt_w.iter().map(|s| s * s).sum();
        let mean = u.iter().zip(&self.sqrt_w).map(|(a, s)| a * s * s).sum::<f64>() / w_sum;
        u.iter_mut().for_each(|a| *a -= mean);
        Ok(CohomologyResult {
            residual: norm(&r) / d_norm,
            iterations,
            n: self.n,
            minimizer: u,
        })
    }
}

/// `min_u ||F u - h o pi - theta(v)||` over grid functions on the torus
/// bundle, with `v` the unit base velocity.
pub fn cohomological_residual(
    model: &SurfaceModel,
    lambda: &SmField,
    h: &SmField,
    theta: (&SmField, &SmField),
    grid: &GridSpec,
    opts: SolverOptions,
) -> Result<CohomologyResult> {
    let GridSpec::Torus { n_x, n_y, n_theta } = *grid else {
        return Err(LabError::Config("the cohomology probe needs a torus grid".into()));
    };
    let gen = DiscreteGenerator::new(model, lambda, n_x, n_y, n_theta)?;
    let rhs: Vec<f64> = gen
        .nodes()
        .par_iter()
        .map(|&p| {
            let v = model.x.coefficients(p.coords());
            h.eval(p) + theta.0.eval(p) * v[0] + theta.1.eval(p) * v[1]
        })
        .collect();
    gen.solve(&rhs, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Thermostat;
    use crate::jacobi::JacobiState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f(s: &str) -> SmField {
        SmField::parse(s).unwrap()
    }

    #[test]
    fn criterion_values() {
        let flat = SurfaceModel::flat_torus();
        let g = GridSpec::torus(8);
        let r = hyperbolicity_criterion(&flat, &SmField::constant(0.0), &g);
        assert_eq!(r.sup_value, 0.0);
        assert!(!r.anosov_flag);
        let r = hyperbolicity_criterion(&flat, &SmField::constant(0.7), &g);
        assert!((r.sup_value - 0.49).abs() < 1e-15);
        let hyp = SurfaceModel::hyperbolic_half_plane();
        let r = hyperbolicity_criterion(&hyp, &SmField::constant(0.0), &hyp.default_grid());
        assert!((r.sup_value + 1.0).abs() < 1e-12 && r.anosov_flag);
    }

    #[test]
    fn sylvester_cases() {
        assert!(!sylvester_positive_definite(0.0, 0.0));
        assert!(sylvester_positive_definite(-1.0, 0.0));
        assert!(!sylvester_positive_definite(-1.0, 2.5));
        let m = SurfaceModel::flat_torus();
        let rep = sylvester_equivalence(&m, &f("0.3*sin(2*pi*x) + 0.5*cos(theta)"), &GridSpec::torus(8));
        assert_eq!(rep.mismatches, 0);
        assert!(rep.checked > 0);
    }

    #[test]
    fn rate_matches_derivative_of_yz() {
        let m = SurfaceModel::flat_torus();
        let th = Thermostat::new(m, f("0.3*sin(2*pi*x) + 0.2*cos(theta)"));
        let s = JacobiSolver::new(&th);
        let ts = crate::flow::uniform_times(0.0, 3.0, 5e-4);
        let traj = s
            .integrate_from([0.1, 0.2, 0.3], JacobiState::new(0.0, 1.0, 0.5), 3.0, &ts)
            .unwrap();
        let series = quadratic_form_rate(&s, &traj);
        let dev = series.max_fd_deviation.unwrap();
        assert!(dev < 1e-5, "{dev} {:?}", &series.states[..3]);
        // flat geodesic with (y, z) = (1, 0): rate zero
        let flat = JacobiSolver::new(&Thermostat::geodesic(SurfaceModel::flat_torus()));
        let t = flat
            .integrate_from([0.0, 0.0, 0.0], JacobiState::new(0.0, 1.0, 0.0), 1.0, &[0.5])
            .unwrap();
        assert_eq!(quadratic_form_rate(&flat, &t).states[0].rate, 0.0);
    }

    #[test]
    fn exact_coboundaries_are_solved() {
        let m = SurfaceModel::flat_torus();
        let lam = f("0.2*sin(2*pi*y)");
        let gen = DiscreteGenerator::new(&m, &lam, 12, 12, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..3 {
            // random trigonometric polynomial of low degree
            let c: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tau = 2.0 * std::f64::consts::PI;
            let w: Vec<f64> = gen
                .nodes()
                .iter()
                .map(|p| {
                    c[0] * (tau * p.x).sin()
                        + c[1] * (tau * p.y).cos()
                        + c[2] * p.theta.sin()
                        + c[3] * (tau * (p.x + p.y)).cos() * p.theta.cos()
                        + c[4] * (2.0 * p.theta).sin() * (tau * p.x).cos()
                        + c[5] * (tau * 2.0 * p.y).sin()
                        + c[6] * (tau * p.x).sin() * (3.0 * p.theta).cos()
                })
                .collect();
            let rhs = gen.apply(&w);
            let r = gen.solve(&rhs, SolverOptions::default()).unwrap();
            assert!(r.residual < 1e-8, "{r:?}");
        }
    }

    #[test]
    fn obstructed_right_hand_sides() {
        let m = SurfaceModel::flat_torus();
        let zero = SmField::constant(0.0);
        let r = cohomological_residual(
            &m,
            &zero,
            &zero,
            (&f("1"), &zero),
            &GridSpec::torus(12),
            SolverOptions::default(),
        )
        .unwrap();
        assert!((r.residual - 1.0).abs() < 1e-12);
        let r = cohomological_residual(
            &m,
            &zero,
            &zero,
            (&f("2*pi*cos(2*pi*x)"), &zero),
            &GridSpec::torus(16),
            SolverOptions::default(),
        )
        .unwrap();
        assert!(r.residual < 1e-8);
    }
}
