//! X-ray transform of function and 1-form pairs on the disk, its discrete
//! operator, and kernel analysis against the gauge `[0, d psi]`, `psi = 0` on
//! the boundary.
//!
//! Pairs are discretized in an orthonormal polynomial basis on the unit disk.
//! The gauge space is then representable exactly: `psi = (1 - r^2) p` with
//! `deg p <= degree - 1` gives `d psi` of degree `<= degree`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{Domain, FdRule, SmField, SmPoint};
use crate::flow::{Direction, Thermostat, DEFAULT_HORIZON, DISK_MAX_STEP};
use crate::geometry::SurfaceModel;
use crate::ode::{integrate, StepControl};
use crate::quadrature::{composite_gauss_legendre, gauss_legendre};
use crate::report::Table;

/// Panel length for quadrature along rays.
const PANEL: f64 = 0.25;
const PANEL_NODES: usize = 12;

/// A base function `phi` and base 1-form `w_x dx + w_y dy`.
#[derive(Debug, Clone)]
pub struct PairField {
    pub phi: SmField,
    pub w_x: SmField,
    pub w_y: SmField,
}

impl PairField {
    pub fn new(phi: SmField, w_x: SmField, w_y: SmField) -> PairField {
        PairField { phi, w_x, w_y }
    }

    pub fn parse(phi: &str, w_x: &str, w_y: &str) -> Result<PairField> {
        Ok(PairField::new(
            SmField::parse(phi)?,
            SmField::parse(w_x)?,
            SmField::parse(w_y)?,
        ))
    }

    pub fn zero() -> PairField {
        let z = SmField::constant(0.0);
        PairField::new(z.clone(), z.clone(), z)
    }

    /// `[0, d psi]`.
    pub fn gauge(psi: &SmField) -> PairField {
        use crate::expr::Var;
        PairField::new(SmField::constant(0.0), psi.partial(Var::X), psi.partial(Var::Y))
    }

    pub fn add(&self, other: &PairField) -> PairField {
        PairField::new(
            self.phi.add(&other.phi),
            self.w_x.add(&other.w_x),
            self.w_y.add(&other.w_y),
        )
    }

    /// `phi(x) + w_x(x) vx + w_y(x) vy` at a state with base velocity `(vx, vy)`.
    pub fn integrand(&self, c: [f64; 3], vx: f64, vy: f64) -> f64 {
        self.phi.eval_coords(c) + self.w_x.eval_coords(c) * vx + self.w_y.eval_coords(c) * vy
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RayRecord {
    pub entry: SmPoint,
    pub exit: SmPoint,
    pub length: f64,
    pub value: f64,
}

/// Gauss–Legendre nodes along `[0, l]` in composite panels.
fn ray_nodes(length: f64) -> Vec<(f64, f64)> {
    let panels = (length / PANEL).ceil().max(1.0) as usize;
    let mut q = composite_gauss_legendre(PANEL_NODES, panels, 0.0, length);
    q.sort_by(|a, b| a.0.total_cmp(&b.0));
    q
}

fn ray_control() -> StepControl {
    StepControl {
        rtol: 1e-12,
        atol: 1e-12,
        ..StepControl::default()
    }
    .with_max_step(DISK_MAX_STEP)
}

/// States along the ray through `p` from its backward to its forward exit,
/// at quadrature nodes, with the weights.
fn ray_states(th: &Thermostat, p: SmPoint) -> Result<(RayRecord, Vec<(f64, [f64; 3])>)> {
    let (tb, cb) = th.exit_state(p, Direction::Backward, DEFAULT_HORIZON)?;
    let (tf, cf) = th.exit_state(p, Direction::Forward, DEFAULT_HORIZON)?;
    let length = tf - tb;
    let nodes = ray_nodes(length);
    let times: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    let f = |_t: f64, y: &[f64; 3]| th.rhs(y);
    let sol = integrate(&f, 0.0, cb, length, &ray_control(), &times, None)?;
    if sol.outputs.len() != nodes.len() {
        return Err(LabError::StepFailure {
            t: length,
            reason: "missing ray outputs".into(),
        });
    }
    let states = nodes.iter().zip(&sol.outputs).map(|(n, o)| (n.1, o.1)).collect();
    let rec = RayRecord {
        entry: SmPoint::from_coords(cb),
        exit: SmPoint::from_coords(cf),
        length,
        value: 0.0,
    };
    Ok((rec, states))
}

/// `I[phi, w](gamma) = int (phi(gamma) + w(gamma')) dt` over the maximal
/// orbit through `p` inside the disk.
pub fn transform_pair(th: &Thermostat, pair: &PairField, p: SmPoint) -> Result<RayRecord> {
    let (mut rec, states) = ray_states(th, p)?;
    rec.value = states
        .iter()
        .map(|(w, c)| {
            let v = th.rhs(c);
            w * pair.integrand(*c, v[0], v[1])
        })
        .sum();
    Ok(rec)
}

/// `chi(s) = int_{l(s)}^0 q(phi_t s) dt` with `l(s) <= 0` the backward exit
/// time; `q` counts as zero outside the disk.
pub fn chi_field(th: &Thermostat, q: &SmField, p: SmPoint) -> Result<f64> {
    chi_with_tail(th, q, p, 0.0)
}

/// `chi` integrated from `tail` beyond the backward exit time. The tail lies
/// outside the disk, where the integrand is clamped to zero.
pub fn chi_with_tail(th: &Thermostat, q: &SmField, p: SmPoint, tail: f64) -> Result<f64> {
    if !Domain::Disk.contains(p.x, p.y) {
        return Ok(0.0);
    }
    let tb = th.exit_time(p, Direction::Backward, DEFAULT_HORIZON)?;
    let clamp = |c: &[f64; 3]| {
        if c[0] * c[0] + c[1] * c[1] <= 1.0 {
            q.eval_coords(*c)
        } else {
            0.0
        }
    };
    let f = |_t: f64, y: &[f64; 3]| th.rhs(y);
    let integrate_segment = |t0: f64, t1: f64, c0: [f64; 3]| -> Result<(f64, [f64; 3])> {
        if t1 == t0 {
            return Ok((0.0, c0));
        }
        // nodes in traversal order from t0 towards t1
        let mut nodes = ray_nodes((t1 - t0).abs());
        nodes.iter_mut().for_each(|n| n.0 *= (t1 - t0).signum());
        let times: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let sol = integrate(&f, 0.0, c0, t1 - t0, &ray_control(), &times, None)?;
        let sum = nodes.iter().zip(&sol.outputs).map(|(n, o)| n.1 * clamp(&o.1)).sum();
        Ok((sum, sol.last().1))
    };
    let (inside, at_exit) = integrate_segment(0.0, tb, p.coords())?;
    let (outside, _) = integrate_segment(0.0, -tail, at_exit)?;
    Ok(inside + outside)
}

/// Smooth cutoff, `1` on `[0, 0.1]` and `0` beyond `0.2`.
pub fn cutoff(s: f64) -> f64 {
    let e = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let t = (s - 0.1) / 0.1;
    1.0 - e(t) / (e(t) + e(1.0 - t))
}

/// `psi = -rho(s) s w(nu)` at the nearest boundary point, `s = 1 - |x|`, so
/// that `psi = 0` and `d psi(nu) = w(nu)` on the boundary circle.
pub fn boundary_corrector(model: &SurfaceModel, w_x: &SmField, w_y: &SmField) -> Result<SmField> {
    if model.domain != Domain::Disk {
        return Err(LabError::Domain("the boundary corrector needs the disk".into()));
    }
    if w_x.as_const() == Some(0.0) && w_y.as_const() == Some(0.0) {
        return Ok(SmField::constant(0.0));
    }
    let (wx, wy) = (w_x.clone(), w_y.clone());
    Ok(SmField::from_fn(
        move |p: SmPoint| {
            let c = p.coords();
            let r = c[0].hypot(c[1]);
            let s = 1.0 - r;
            let rho = cutoff(s);
            if rho == 0.0 || r == 0.0 {
                return 0.0;
            }
            let nu = [c[0] / r, c[1] / r];
            let b = [nu[0], nu[1], c[2]];
            -rho * s * (wx.eval_coords(b) * nu[0] + wy.eval_coords(b) * nu[1])
        },
        FdRule::new(1e-4, Domain::Disk),
    ))
}

/// `phi + (w - d psi_c)(v)` on the sphere bundle, `v` the unit base velocity.
pub fn corrected_integrand(model: &SurfaceModel, pair: &PairField, psi_c: &SmField) -> SmField {
    use crate::expr::Var;
    let pair = pair.clone();
    let (dx, dy) = (psi_c.partial(Var::X), psi_c.partial(Var::Y));
    let x = model.x.clone();
    SmField::from_fn(
        move |p: SmPoint| {
            let c = p.coords();
            let v = x.coefficients(c);
            pair.integrand(c, v[0], v[1]) - dx.eval_coords(c) * v[0] - dy.eval_coords(c) * v[1]
        },
        FdRule::new(1e-4, Domain::Disk),
    )
}

/// Orthonormal polynomials of total degree `<= degree` on the unit disk.
#[derive(Debug, Clone)]
pub struct PolynomialBasis {
    pub degree: u32,
    pub exponents: Vec<(u32, u32)>,
    /// Row `i` holds the monomial coefficients of basis polynomial `i`.
    pub transform: DMatrix<f64>,
}

fn disk_rule(degree: u32) -> Vec<(f64, f64, f64)> {
    let n_r = degree as usize + 2;
    let n_a = 2 * degree as usize + 4;
    let da = 2.0 * std::f64::consts::PI / n_a as f64;
    let mut out = Vec::new();
    for (r, wr) in gauss_legendre(n_r, 0.0, 1.0) {
        for k in 0..n_a {
            let a = k as f64 * da;
            out.push((r * a.cos(), r * a.sin(), r * wr * da));
        }
    }
    out
}

impl PolynomialBasis {
    pub fn new(degree: u32) -> PolynomialBasis {
        let exponents: Vec<(u32, u32)> = (0..=degree).flat_map(|d| (0..=d).map(move |i| (d - i, i))).collect();
        let n = exponents.len();
        let rule = disk_rule(2 * degree);
        let mut gram = DMatrix::<f64>::zeros(n, n);
        for &(x, y, w) in &rule {
            let m: Vec<f64> = exponents
                .iter()
                .map(|&(a, b)| x.powi(a as i32) * y.powi(b as i32))
                .collect();
            for i in 0..n {
                for j in 0..=i {
                    gram[(i, j)] += w * m[i] * m[j];
                }
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        let l = gram.cholesky().expect("monomial Gram matrix is positive definite").l();
        let transform = l
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .expect("triangular factor is invertible");
        PolynomialBasis {
            degree,
            exponents,
            transform,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    fn monomials(&self, x: f64, y: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.exponents.iter().map(|&(a, b)| x.powi(a as i32) * y.powi(b as i32)),
        )
    }

    fn monomial_gradients(&self, x: f64, y: f64) -> (DVector<f64>, DVector<f64>) {
        let pw = |v: f64, k: u32| if k == 0 { 0.0 } else { k as f64 * v.powi(k as i32 - 1) };
        let dx = self.exponents.iter().map(|&(a, b)| pw(x, a) * y.powi(b as i32));
        let dy = self.exponents.iter().map(|&(a, b)| x.powi(a as i32) * pw(y, b));
        (
            DVector::from_iterator(self.len(), dx),
            DVector::from_iterator(self.len(), dy),
        )
    }

    /// Values of the orthonormal polynomials at `(x, y)`.
    pub fn eval(&self, x: f64, y: f64) -> DVector<f64> {
        &self.transform * self.monomials(x, y)
    }

    pub fn eval_gradient(&self, x: f64, y: f64) -> (DVector<f64>, DVector<f64>) {
        let (dx, dy) = self.monomial_gradients(x, y);
        (&self.transform * dx, &self.transform * dy)
    }

    /// Orthonormal coefficients of the polynomial with the given monomial
    /// coefficients (indexed like `exponents`).
    pub fn from_monomials(&self, a: &DVector<f64>) -> DVector<f64> {
        let t_inv = self
            .transform
            .clone()
            .solve_lower_triangular(&DMatrix::identity(self.len(), self.len()))
            .expect("invertible");
        t_inv.transpose() * a
    }

    /// L^2 projection of a base function onto the span.
    pub fn project(&self, f: &SmField) -> DVector<f64> {
        let rule = disk_rule(2 * self.degree + 8);
        let mut c = DVector::zeros(self.len());
        for &(x, y, w) in &rule {
            c += self.eval(x, y) * (w * f.eval_coords([x, y, 0.0]));
        }
        c
    }

    /// Coefficient vector `[phi; w_x; w_y]` of a pair.
    pub fn discretize(&self, pair: &PairField) -> DVector<f64> {
        let mut v = DVector::zeros(3 * self.len());
        v.rows_mut(0, self.len()).copy_from(&self.project(&pair.phi));
        v.rows_mut(self.len(), self.len()).copy_from(&self.project(&pair.w_x));
        v.rows_mut(2 * self.len(), self.len())
            .copy_from(&self.project(&pair.w_y));
        v
    }

    /// Discretized `d[(1 - r^2) m]` for every monomial `m` of degree
    /// `<= degree - 1`, as columns.
    pub fn gauge_basis(&self) -> DMatrix<f64> {
        let index: BTreeMap<(u32, u32), usize> = self.exponents.iter().enumerate().map(|(k, e)| (*e, k)).collect();
        let mut cols = Vec::new();
        for &(a, b) in self.exponents.iter().filter(|e| e.0 + e.1 < self.degree) {
            // psi = x^a y^b - x^(a+2) y^b - x^a y^(b+2)
            let terms = [(1.0, a, b), (-1.0, a + 2, b), (-1.0, a, b + 2)];
            let mut gx = DVector::zeros(self.len());
            let mut gy = DVector::zeros(self.len());
            for (c, p, q) in terms {
                if p > 0 {
                    gx[index[&(p - 1, q)]] += c * p as f64;
                }
                if q > 0 {
                    gy[index[&(p, q - 1)]] += c * q as f64;
                }
            }
            let mut col = DVector::zeros(3 * self.len());
            col.rows_mut(self.len(), self.len())
                .copy_from(&self.from_monomials(&gx));
            col.rows_mut(2 * self.len(), self.len())
                .copy_from(&self.from_monomials(&gy));
            cols.push(col);
        }
        DMatrix::from_columns(&cols)
    }
}

/// Ray fan: `n_b` uniform boundary points times `n_a` uniform angles to the
/// inward normal in `[-max_angle, max_angle]`, restricted to boundary
/// parameters in `[s0, s0 + arc)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayFan {
    pub n_boundary: usize,
    pub n_angles: usize,
    /// Largest angle to the inward normal, in radians.
    pub max_angle: f64,
    pub arc_start: f64,
    pub arc_length: f64,
}

impl RayFan {
    pub fn new(n_boundary: usize, n_angles: usize) -> RayFan {
        RayFan {
            n_boundary,
            n_angles,
            max_angle: 85f64.to_radians(),
            arc_start: 0.0,
            arc_length: 2.0 * std::f64::consts::PI,
        }
    }

    pub fn on_arc(mut self, start: f64, length: f64) -> RayFan {
        self.arc_start = start;
        self.arc_length = length;
        self
    }

    /// `(s, angle)` pairs.
    pub fn parameters(&self) -> Vec<(f64, f64)> {
        let full = (self.arc_length - 2.0 * std::f64::consts::PI).abs() < 1e-12;
        let ds = if full {
            self.arc_length / self.n_boundary as f64
        } else {
            self.arc_length / (self.n_boundary.max(2) - 1) as f64
        };
        let da = if self.n_angles > 1 {
            2.0 * self.max_angle / (self.n_angles - 1) as f64
        } else {
            0.0
        };
        let mut out = Vec::with_capacity(self.n_boundary * self.n_angles);
        for i in 0..self.n_boundary {
            for j in 0..self.n_angles {
                let a = if self.n_angles > 1 {
                    -self.max_angle + j as f64 * da
                } else {
                    0.0
                };
                out.push((self.arc_start + i as f64 * ds, a));
            }
        }
        out
    }
}

/// Inward boundary state at boundary parameter `s` and angle `a` to the
/// inward normal.
pub fn entry_state(s: f64, a: f64) -> SmPoint {
    SmPoint::new(s.cos(), s.sin(), s + std::f64::consts::PI + a)
}

#[derive(Debug, Clone)]
pub struct DiscreteXRayOperator {
    pub matrix: DMatrix<f64>,
    /// `(s, angle)` of each kept ray.
    pub rays: Vec<(f64, f64)>,
    pub lengths: Vec<f64>,
    pub degree: u32,
    pub dropped: usize,
    pub lambda: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OperatorHeader {
    rows: usize,
    cols: usize,
    degree: u32,
    lambda: String,
    dropped: usize,
    rays: Vec<(f64, f64)>,
    lengths: Vec<f64>,
    ray_quadrature: String,
}

const MAGIC: &[u8; 8] = b"XRAYOP01";

impl DiscreteXRayOperator {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x
    }

    /// Binary container: magic, header length (u64 LE), JSON header, then the
    /// matrix as row-major f64 LE.
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(&OperatorHeader {
            rows: self.rows(),
            cols: self.cols(),
            degree: self.degree,
            lambda: self.lambda.clone(),
            dropped: self.dropped,
            rays: self.rays.clone(),
            lengths: self.lengths.clone(),
            ray_quadrature: format!("composite Gauss-Legendre, {PANEL_NODES} nodes per {PANEL} panel"),
        })?;
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(MAGIC)?;
        f.write_all(&(header.len() as u64).to_le_bytes())?;
        f.write_all(&header)?;
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                f.write_all(&self.matrix[(i, j)].to_le_bytes())?;
            }
        }
        f.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<DiscreteXRayOperator> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        f.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(LabError::Config(format!("{} is not an operator file", path.display())));
        }
        let mut len = [0u8; 8];
        f.read_exact(&mut len)?;
        let mut header = vec![0u8; u64::from_le_bytes(len) as usize];
        f.read_exact(&mut header)?;
        let h: OperatorHeader = serde_json::from_slice(&header)?;
        let mut matrix = DMatrix::zeros(h.rows, h.cols);
        let mut buf = [0u8; 8];
        for i in 0..h.rows {
            for j in 0..h.cols {
                f.read_exact(&mut buf)?;
                matrix[(i, j)] = f64::from_le_bytes(buf);
            }
        }
        Ok(DiscreteXRayOperator {
            matrix,
            rays: h.rays,
            lengths: h.lengths,
            degree: h.degree,
            dropped: h.dropped,
            lambda: h.lambda,
        })
    }
}

/// Rows are the transforms of the basis pairs along each ray of the fan;
/// trapped rays are dropped and counted.
pub fn assemble_discrete_operator(
    th: &Thermostat,
    basis: &PolynomialBasis,
    fan: &RayFan,
) -> Result<DiscreteXRayOperator> {
    let params = fan.parameters();
    let n = basis.len();
    let rows: Vec<Result<Option<(Vec<f64>, f64)>>> = params
        .par_iter()
        .map(|&(s, a)| {
            let (rec, states) = match ray_states(th, entry_state(s, a)) {
                Ok(v) => v,
                Err(LabError::TrappedOrbit { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let mut row = vec![0.0; 3 * n];
            for (w, c) in &states {
                let v = th.rhs(c);
                let b = basis.eval(c[0], c[1]);
                for k in 0..n {
                    row[k] += w * b[k];
                    row[n + k] += w * b[k] * v[0];
                    row[2 * n + k] += w * b[k] * v[1];
                }
            }
            Ok(Some((row, rec.length)))
        })
        .collect();
    let mut kept = Vec::new();
    let mut rays = Vec::new();
    let mut lengths = Vec::new();
    let mut dropped = 0;
    for (r, p) in rows.into_iter().zip(params) {
        match r? {
            Some((row, l)) => {
                kept.push(row);
                rays.push(p);
                lengths.push(l);
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        eprintln!("warning: {dropped} trapped rays dropped");
    }
    let matrix = DMatrix::from_fn(kept.len(), 3 * n, |i, j| kept[i][j]);
    Ok(DiscreteXRayOperator {
        matrix,
        rays,
        lengths,
        degree: basis.degree,
        dropped,
        lambda: th.lambda.as_expr().map_or("<closure>".to_string(), |e| e.to_string()),
    })
}

/// Ray data as `entry_s, entry_angle, length, value`.
pub fn rays_to_csv(op: &DiscreteXRayOperator, values: &[f64]) -> String {
    let mut t = Table::new(&["entry_s", "entry_angle", "length", "value"]);
    for (k, &(s, a)) in op.rays.iter().enumerate() {
        t.push(vec![s, a, op.lengths[k], values[k]]);
    }
    t.to_csv()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelReport {
    pub singular_values: Vec<f64>,
    /// Number of singular values above the gap.
    pub kept: usize,
    pub kernel_dimension: usize,
    pub gauge_dimension: usize,
    /// Ratio across the largest relative gap.
    pub gap: f64,
    /// Smallest kept over largest singular value.
    pub kept_condition: f64,
    pub principal_angles_deg: Vec<f64>,
    pub max_angle_deg: f64,
}

/// Thresholds for kernel detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelThresholds {
    /// Required ratio across the gap.
    pub min_gap: f64,
    /// Smallest acceptable kept singular value relative to the largest.
    pub min_kept_condition: f64,
}

impl Default for KernelThresholds {
    fn default() -> Self {
        KernelThresholds {
            min_gap: 10.0,
            min_kept_condition: 1e-6,
        }
    }
}

struct Split {
    svd: nalgebra::SVD<f64, nalgebra::Dyn, nalgebra::Dyn>,
    sigma: Vec<f64>,
    order: Vec<usize>,
    kept: usize,
    gap: f64,
    kept_condition: f64,
}

fn split_spectrum(m: &DMatrix<f64>, thr: KernelThresholds) -> Result<Split> {
    let svd = m.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    // columns beyond the row count belong to the kernel as well
    sigma.resize(m.ncols(), 0.0);
    let floor = sigma[0] * f64::EPSILON;
    let (mut kept, mut gap) = (sigma.len(), 1.0);
    for k in 0..sigma.len() - 1 {
        let ratio = sigma[k] / sigma[k + 1].max(floor);
        if ratio > gap {
            gap = ratio;
            kept = k + 1;
        }
    }
    let kept_condition = sigma[kept - 1] / sigma[0];
    if gap < thr.min_gap {
        return Err(LabError::IllConditioned {
            measure: "largest singular value gap".into(),
            value: gap,
            required: thr.min_gap,
        });
    }
    if kept_condition < thr.min_kept_condition {
        return Err(LabError::IllConditioned {
            measure: "smallest kept singular value relative to the largest".into(),
            value: kept_condition,
            required: thr.min_kept_condition,
        });
    }
    Ok(Split {
        svd,
        sigma,
        order,
        kept,
        gap,
        kept_condition,
    })
}

/// Orthonormal basis of the numerical near-kernel.
fn near_kernel(split: &Split, cols: usize) -> DMatrix<f64> {
    let v_t = split.svd.v_t.as_ref().expect("right singular vectors");
    let mut vecs: Vec<DVector<f64>> = split.order[split.kept.min(split.order.len())..]
        .iter()
        .map(|&k| v_t.row(k).transpose())
        .collect();
    if v_t.nrows() < cols {
        // complete with the orthogonal complement of the row space
        let row_space = DMatrix::from_columns(&split.order.iter().map(|&k| v_t.row(k).transpose()).collect::<Vec<_>>());
        let proj = DMatrix::identity(cols, cols) - &row_space * row_space.transpose();
        let qr = proj.svd(true, false);
        let u = qr.u.expect("left vectors");
        for k in 0..cols {
            if qr.singular_values[k] > 0.5 {
                vecs.push(u.column(k).into_owned());
            }
        }
    }
    DMatrix::from_columns(&vecs)
}

/// Principal angles, in degrees, between the column spans of `a` and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    if a.ncols() == 0 || b.ncols() == 0 {
        return Vec::new();
    }
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let s = (qa.transpose() * qb).singular_values();
    let mut angles: Vec<f64> = s.iter().map(|c| c.min(1.0).acos().to_degrees()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// SVD of the operator, split at the largest relative gap, compared with the
/// gauge span.
pub fn analyze_kernel(op: &DiscreteXRayOperator, gauge: &DMatrix<f64>, thr: KernelThresholds) -> Result<KernelReport> {
    let split = split_spectrum(&op.matrix, thr)?;
    let kernel = near_kernel(&split, op.cols());
    let angles = principal_angles(&kernel, gauge);
    Ok(KernelReport {
        kernel_dimension: op.cols() - split.kept,
        gauge_dimension: gauge.ncols(),
        kept: split.kept,
        gap: split.gap,
        kept_condition: split.kept_condition,
        max_angle_deg: angles.iter().copied().fold(0.0, f64::max),
        principal_angles_deg: angles,
        singular_values: split.sigma,
    })
}

/// Values of a recovered pair at the report nodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeValue {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    /// `d w = (d_x w_y - d_y w_x) dx ^ dy`.
    pub d_omega: f64,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub coefficients: DVector<f64>,
    pub kept: usize,
    pub degree: u32,
    basis: PolynomialBasis,
}

impl Reconstruction {
    pub fn phi(&self, x: f64, y: f64) -> f64 {
        let n = self.basis.len();
        self.basis.eval(x, y).dot(&self.coefficients.rows(0, n))
    }

    pub fn d_omega(&self, x: f64, y: f64) -> f64 {
        let n = self.basis.len();
        let (gx, gy) = self.basis.eval_gradient(x, y);
        gx.dot(&self.coefficients.rows(2 * n, n)) - gy.dot(&self.coefficients.rows(n, n))
    }

    /// Values on a polar node grid with radii `(i + 1/2)/n_r`.
    pub fn nodes(&self, n_r: usize, n_alpha: usize) -> Vec<NodeValue> {
        let mut out = Vec::with_capacity(n_r * n_alpha);
        for i in 0..n_r {
            let r = (i as f64 + 0.5) / n_r as f64;
            for j in 0..n_alpha {
                let a = 2.0 * std::f64::consts::PI * j as f64 / n_alpha as f64;
                let (x, y) = (r * a.cos(), r * a.sin());
                out.push(NodeValue {
                    x,
                    y,
                    phi: self.phi(x, y),
                    d_omega: self.d_omega(x, y),
                });
            }
        }
        out
    }
}

/// Minimum-norm least-squares solution truncated at the spectral gap.
pub fn reconstruct_pair(
    op: &DiscreteXRayOperator,
    basis: &PolynomialBasis,
    data: &[f64],
    thr: KernelThresholds,
) -> Result<Reconstruction> {
    if data.len() != op.rows() {
        return Err(LabError::Config(format!(
            "{} ray values for an operator with {} rays",
            data.len(),
            op.rows()
        )));
    }
    let split = split_spectrum(&op.matrix, thr)?;
    let u = split.svd.u.as_ref().expect("left vectors");
    let v_t = split.svd.v_t.as_ref().expect("right vectors");
    let b = DVector::from_column_slice(data);
    let mut x = DVector::zeros(op.cols());
    for &k in &split.order[..split.kept] {
        let coef = u.column(k).dot(&b) / split.svd.singular_values[k];
        x += v_t.row(k).transpose() * coef;
    }
    Ok(Reconstruction {
        coefficients: x,
        kept: split.kept,
        degree: basis.degree,
        basis: basis.clone(),
    })
}
