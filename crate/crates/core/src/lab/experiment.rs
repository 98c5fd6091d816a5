//! Dispatch from a config to the numerical modules, and report emission.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{ExperimentConfig, IdentityKind};
use crate::anosov::{
    cohomological_residual, hyperbolicity_criterion, quadratic_form_rate, sylvester_equivalence, SolverOptions,
};
use crate::error::{LabError, Result};
use crate::field::{Domain, SmPoint};
use crate::flow::{uniform_times, OrbitOptions, Thermostat};
use crate::geometry::{DerivativeMode, SurfaceModel};
use crate::grid::GridSpec;
use crate::identities::{
    check_integral_identity_boundary, check_integral_identity_closed, check_lie_derivatives, check_pestov_pointwise,
    check_second_identity, RiccatiVariable,
};
use crate::jacobi::{JacobiSolver, JacobiState, RiccatiSign};
use crate::quadrature::QuadratureGrid;
use crate::report::{to_json, write_text, Table};
use crate::xray::{
    analyze_kernel, assemble_discrete_operator, entry_state, reconstruct_pair, transform_pair, DiscreteXRayOperator,
    KernelThresholds, PairField, PolynomialBasis, RayFan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Validate,
    Flow,
    Jacobi,
    Riccati,
    Pestov,
    Identity,
    Xray,
    Invert,
    Anosov,
    Cohomology,
}

impl Subcommand {
    pub const ALL: [Subcommand; 10] = [
        Subcommand::Validate,
        Subcommand::Flow,
        Subcommand::Jacobi,
        Subcommand::Riccati,
        Subcommand::Pestov,
        Subcommand::Identity,
        Subcommand::Xray,
        Subcommand::Invert,
        Subcommand::Anosov,
        Subcommand::Cohomology,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Validate => "validate",
            Subcommand::Flow => "flow",
            Subcommand::Jacobi => "jacobi",
            Subcommand::Riccati => "riccati",
            Subcommand::Pestov => "pestov",
            Subcommand::Identity => "identity",
            Subcommand::Xray => "xray",
            Subcommand::Invert => "invert",
            Subcommand::Anosov => "anosov",
            Subcommand::Cohomology => "cohomology",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Subcommand> {
        Subcommand::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| LabError::Config(format!("unknown subcommand `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Format> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(LabError::Config(format!("unknown format `{s}`"))),
        }
    }
}

/// Structured result of one experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub experiment: String,
    pub subcommand: Subcommand,
    pub summary: Value,
    /// Plot-ready tables, written one file each in CSV mode.
    pub tables: BTreeMap<String, Table>,
    pub warnings: Vec<String>,
}

impl ReportBundle {
    fn new(cfg: &ExperimentConfig, sub: Subcommand, summary: Value) -> ReportBundle {
        ReportBundle {
            experiment: cfg.experiment.clone(),
            subcommand: sub,
            summary,
            tables: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn table(mut self, name: &str, t: Table) -> ReportBundle {
        self.tables.insert(name.to_string(), t);
        self
    }
}

fn value<T: Serialize>(v: &T) -> Result<Value> {
    Ok(serde_json::to_value(v)?)
}

fn derivative_mode(cfg: &ExperimentConfig) -> DerivativeMode {
    match cfg.params.fd_step {
        Some(h) => DerivativeMode::FiniteDifference { h },
        None => DerivativeMode::Analytic,
    }
}

fn scan_grid(cfg: &ExperimentConfig, model: &SurfaceModel) -> GridSpec {
    cfg.params.grid.unwrap_or_else(|| model.default_grid())
}

fn quadrature(cfg: &ExperimentConfig, model: &SurfaceModel) -> Result<QuadratureGrid> {
    let [a, b, c] = cfg.params.quadrature;
    match model.domain {
        Domain::Torus => Ok(QuadratureGrid::torus(model, a, b, c)),
        Domain::Disk => Ok(QuadratureGrid::disk(model, a, b, c)),
        d => Err(LabError::Domain(format!("no Liouville quadrature on the {d:?} chart"))),
    }
}

/// Uniform random bundle points inside a compact part of the chart.
fn random_points(domain: Domain, n: usize, seed: u64) -> Vec<SmPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tau = 2.0 * std::f64::consts::PI;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let (x, y) = match domain {
            Domain::Torus => (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)),
            Domain::UpperHalfPlane => (rng.random_range(-1.0..1.0), rng.random_range(0.5..2.0)),
            _ => (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        };
        if domain == Domain::Disk && x * x + y * y >= 0.95 * 0.95 {
            continue;
        }
        out.push(SmPoint::new(x, y, rng.random_range(0.0..tau)));
    }
    out
}

/// Runs one subcommand against a validated config.
pub fn run_experiment(cfg: &ExperimentConfig, sub: Subcommand) -> Result<ReportBundle> {
    cfg.validate()?;
    let model = cfg.model()?;
    let lambda = cfg.lambda()?;
    let p = &cfg.params;
    match sub {
        Subcommand::Validate => {
            let grid = scan_grid(cfg, &model);
            let rep = model.validate_structure_relations(&grid, Some(&lambda), derivative_mode(cfg));
            for r in &rep.relations {
                if !(r.max <= cfg.surface.tolerance) {
                    return Err(LabError::ValidationFailed {
                        relation: r.relation.clone(),
                        residual: r.max,
                        tolerance: cfg.surface.tolerance,
                    });
                }
            }
            let mut t = Table::new(&["index", "max", "rms"]);
            for (k, r) in rep.relations.iter().enumerate() {
                t.push(vec![k as f64, r.max, r.rms]);
            }
            let summary = json!({
                "grid_points": rep.grid_points,
                "max_residual": rep.max_residual(),
                "relations": value(&rep.relations)?,
                "tolerance": cfg.surface.tolerance,
            });
            Ok(ReportBundle::new(cfg, sub, summary).table("relations", t))
        }
        Subcommand::Flow => {
            let th = Thermostat::new(model, lambda);
            let orbit = th.integrate_orbit(cfg.start(), &OrbitOptions::until(p.horizon).sampled(p.sample_dt))?;
            let mut t = Table::new(&["t", "x", "y", "theta"]);
            for s in &orbit.samples {
                t.push(vec![s.t, s.state[0], s.state[1], s.state[2]]);
            }
            let end = orbit.end();
            let summary = json!({
                "samples": orbit.samples.len(),
                "end_time": end.t,
                "end_state": end.state,
                "exit_time": orbit.exit_time,
                "exit_transversal": orbit.exit_transversal,
                "speed_defect": th.speed_defect(&orbit),
            });
            Ok(ReportBundle::new(cfg, sub, summary).table("orbit", t))
        }
        Subcommand::Jacobi => {
            let th = Thermostat::new(model, lambda);
            let solver = JacobiSolver::new(&th);
            let [a, y, z] = p.jacobi_initial;
            let ts = uniform_times(0.0, p.horizon, p.sample_dt);
            let traj = solver.integrate_from(cfg.start().coords(), JacobiState::new(a, y, z), p.horizon, &ts)?;
            let conjugate = solver.detect_conjugate_points(cfg.start(), p.horizon)?;
            let mut t = Table::new(&["t", "a", "y", "z", "y_dot"]);
            for s in &traj.samples {
                t.push(vec![s.t, s.jacobi.a, s.jacobi.y, s.jacobi.z, s.y_dot]);
            }
            let summary = json!({
                "conjugate_times": conjugate,
                "equation_residual": traj.equation_residual,
                "samples": traj.samples.len(),
            });
            Ok(ReportBundle::new(cfg, sub, summary).table("jacobi", t))
        }
        Subcommand::Riccati => {
            let th = Thermostat::new(model, lambda);
            let solver = JacobiSolver::new(&th);
            let start = cfg.start();
            match p.riccati_radius {
                Some(r) => {
                    let plus = solver.solve_riccati_finite(start, r, RiccatiSign::Plus)?;
                    let minus = solver.solve_riccati_finite(start, r, RiccatiSign::Minus)?;
                    let mut t = Table::new(&["t", "r_plus", "r_minus"]);
                    for (a, b) in plus.samples.iter().zip(&minus.samples) {
                        t.push(vec![a.0, a.1, b.1]);
                    }
                    let summary = json!({
                        "radius": r,
                        "plus_at_zero": plus.at_zero,
                        "minus_at_zero": minus.at_zero,
                        "plus": value(&plus)?,
                        "minus": value(&minus)?,
                    });
                    Ok(ReportBundle::new(cfg, sub, summary).table("riccati", t))
                }
                None => {
                    let lim = solver.solve_riccati_limit(start, p.limit_tolerance, p.limit_cap)?;
                    let bound =
                        solver.check_riccati_bound(&[start], &scan_grid(cfg, &th.model), 1e-9, p.limit_tolerance)?;
                    let mut t = Table::new(&["index", "r_plus", "r_minus"]);
                    for (k, (a, b)) in lim.plus_sequence.iter().zip(&lim.minus_sequence).enumerate() {
                        t.push(vec![k as f64, *a, *b]);
                    }
                    let summary = json!({"limits": value(&lim)?, "bound": value(&bound)?});
                    Ok(ReportBundle::new(cfg, sub, summary).table("doubling", t))
                }
            }
        }
        Subcommand::Pestov => {
            let u = cfg.required_field("u")?;
            let points = random_points(model.domain, p.n_points, p.seed);
            let rep = check_pestov_pointwise(&model, &lambda, &u, &points, derivative_mode(cfg));
            Ok(ReportBundle::new(cfg, sub, value(&rep)?))
        }
        Subcommand::Identity => {
            let grid = quadrature(cfg, &model)?;
            let summary = match p.identity {
                IdentityKind::Closed => value(&check_integral_identity_closed(
                    &model,
                    &lambda,
                    &cfg.required_field("u")?,
                    &grid,
                )?)?,
                IdentityKind::Boundary => value(&check_integral_identity_boundary(
                    &model,
                    &lambda,
                    &cfg.required_field("u")?,
                    &grid,
                )?)?,
                IdentityKind::Lie => value(&check_lie_derivatives(
                    &model,
                    &lambda,
                    &grid,
                    &cfg.required_field("u")?,
                ))?,
                IdentityKind::Second => {
                    let psi = cfg.required_field("psi")?;
                    let th = Thermostat::new(model.clone(), lambda.clone());
                    let solver = JacobiSolver::new(&th);
                    let fan = |q: SmPoint| solver.fan_riccati(q, p.fan_offset);
                    json!({
                        "rho": value(&check_second_identity(&model, &lambda, &psi, &grid, fan, RiccatiVariable::Rho)?)?,
                        "r": value(&check_second_identity(&model, &lambda, &psi, &grid, fan, RiccatiVariable::R)?)?,
                    })
                }
            };
            Ok(ReportBundle::new(
                cfg,
                sub,
                json!({"kind": value(&p.identity)?, "report": summary}),
            ))
        }
        Subcommand::Xray | Subcommand::Invert => {
            let scan = cfg.params.grid.unwrap_or_else(|| GridSpec::polar(6, 12, 12));
            let th = Thermostat::new(model, lambda);
            let trapped = th.nontrapping_scan(&scan, p.horizon);
            let basis = PolynomialBasis::new(p.degree);
            let mut fan = RayFan::new(p.n_boundary, p.n_angles);
            if let Some([start, length]) = p.arc {
                fan = fan.on_arc(start, length);
            }
            let op = match p.operator_path.as_deref().map(Path::new) {
                Some(path) if sub == Subcommand::Invert && path.exists() => DiscreteXRayOperator::load(path)?,
                _ => assemble_discrete_operator(&th, &basis, &fan)?,
            };
            if op.degree != p.degree {
                return Err(LabError::Config(format!(
                    "stored operator has degree {}, config asks for {}",
                    op.degree, p.degree
                )));
            }
            let thr = KernelThresholds {
                min_gap: p.min_gap,
                min_kept_condition: p.min_kept_condition,
            };
            let mut warnings = Vec::new();
            if !trapped.trapped.is_empty() {
                warnings.push(format!(
                    "{} of {} interior states trapped within horizon {}",
                    trapped.trapped.len(),
                    trapped.checked,
                    trapped.horizon
                ));
            }
            if op.dropped > 0 {
                warnings.push(format!("{} trapped rays dropped from the fan", op.dropped));
            }
            let mut bundle = if sub == Subcommand::Xray {
                if let Some(path) = &p.operator_path {
                    op.save(Path::new(path))?;
                }
                let rep = analyze_kernel(&op, &basis.gauge_basis(), thr)?;
                let mut t = Table::new(&["index", "sigma"]);
                for (k, s) in rep.singular_values.iter().enumerate() {
                    t.push(vec![k as f64, *s]);
                }
                let summary = json!({
                    "rays": op.rows(),
                    "columns": op.cols(),
                    "dropped": op.dropped,
                    "trapped_states": trapped.trapped.len(),
                    "kernel": value(&rep)?,
                });
                ReportBundle::new(cfg, sub, summary).table("spectrum", t)
            } else {
                let pair = PairField::new(cfg.field("phi")?, cfg.field("w_x")?, cfg.field("w_y")?);
                let data: Vec<f64> = op
                    .rays
                    .par_iter()
                    .map(|&(s, a)| transform_pair(&th, &pair, entry_state(s, a)).map(|r| r.value))
                    .collect::<Result<_>>()?;
                let rec = reconstruct_pair(&op, &basis, &data, thr)?;
                let [n_r, n_a] = p.report_nodes;
                let nodes = rec.nodes(n_r, n_a);
                let mut t = Table::new(&["x", "y", "phi", "d_omega", "phi_true"]);
                let (mut err, mut norm) = (0.0, 0.0);
                for v in &nodes {
                    let truth = pair.phi.eval(SmPoint::new(v.x, v.y, 0.0));
                    err += (v.phi - truth).powi(2);
                    norm += truth * truth;
                    t.push(vec![v.x, v.y, v.phi, v.d_omega, truth]);
                }
                let summary = json!({
                    "rays": op.rows(),
                    "kept": rec.kept,
                    "phi_l2_error": err.sqrt(),
                    "phi_relative_l2_error": if norm > 0.0 { Some((err / norm).sqrt()) } else { None },
                });
                ReportBundle::new(cfg, sub, summary).table("reconstruction", t)
            };
            bundle.warnings = warnings;
            Ok(bundle)
        }
        Subcommand::Anosov => {
            let grid = scan_grid(cfg, &model);
            let crit = hyperbolicity_criterion(&model, &lambda, &grid);
            let syl = sylvester_equivalence(&model, &lambda, &grid);
            let th = Thermostat::new(model, lambda);
            let solver = JacobiSolver::new(&th);
            let [a, y, z] = p.jacobi_initial;
            let ts = uniform_times(0.0, p.horizon, p.sample_dt);
            let traj = solver.integrate_from(cfg.start().coords(), JacobiState::new(a, y, z), p.horizon, &ts)?;
            let series = quadratic_form_rate(&solver, &traj);
            let mut t = Table::new(&["t", "y", "z", "q", "rate"]);
            for s in &series.states {
                t.push(vec![s.t, s.y, s.z, s.q_value, s.rate]);
            }
            let summary = json!({
                "criterion": value(&crit)?,
                "sylvester": value(&syl)?,
                "rate_fd_deviation": series.max_fd_deviation,
            });
            Ok(ReportBundle::new(cfg, sub, summary).table("quadratic_form", t))
        }
        Subcommand::Cohomology => {
            let grid = match p.grid {
                Some(g) => g,
                None => {
                    let [n_x, n_y, n_theta] = p.quadrature;
                    GridSpec::Torus { n_x, n_y, n_theta }
                }
            };
            let opts = SolverOptions {
                max_iterations: p.max_iterations,
                tolerance: p.solver_tolerance,
            };
            let (h, tx, ty) = (cfg.field("h")?, cfg.field("theta_x")?, cfg.field("theta_y")?);
            let res = cohomological_residual(&model, &lambda, &h, (&tx, &ty), &grid, opts)?;
            let mut t = Table::new(&["x", "y", "theta", "u"]);
            for (q, u) in grid.points().iter().zip(&res.minimizer) {
                t.push(vec![q.x, q.y, q.theta, *u]);
            }
            let summary = json!({
                "residual": res.residual,
                "iterations": res.iterations,
                "grid": res.n,
            });
            Ok(ReportBundle::new(cfg, sub, summary).table("minimizer", t))
        }
    }
}

/// Writes the bundle under `dir`: one JSON file, or one CSV per table plus
/// the JSON summary. Returns the paths written.
pub fn write_report(bundle: &ReportBundle, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    let stem = format!("{}_{}", bundle.experiment, bundle.subcommand);
    let mut written = Vec::new();
    match format {
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_text(&path, &to_json(bundle)?)?;
            written.push(path);
        }
        Format::Csv => {
            let summary = json!({
                "experiment": bundle.experiment,
                "subcommand": bundle.subcommand,
                "summary": bundle.summary,
                "warnings": bundle.warnings,
            });
            let path = dir.join(format!("{stem}_summary.json"));
            write_text(&path, &to_json(&summary)?)?;
            written.push(path);
            for (name, t) in &bundle.tables {
                let path = dir.join(format!("{stem}_{name}.csv"));
                write_text(&path, &t.to_csv())?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
