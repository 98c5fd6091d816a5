//! JSON experiment configuration, schema 1.
//!
//! Every numeric default lives here so that a run is reproducible from its
//! config file alone.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::expr::parse_expression;
use crate::field::{SmField, SmPoint};
use crate::geometry::{SurfaceKind, SurfaceModel};
use crate::grid::GridSpec;

pub const SCHEMA_VERSION: u32 = 1;

/// Field names accepted in the `fields` table.
pub const FIELD_NAMES: [&str; 8] = ["phi", "w_x", "w_y", "u", "psi", "h", "theta_x", "theta_y"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub experiment: String,
    pub surface: SurfaceConfig,
    /// Thermostat coupling as an expression in `x, y, theta`.
    #[serde(default = "zero_expr")]
    pub lambda: String,
    #[serde(default)]
    pub fields: BTreeMap<String, String>,
    #[serde(default)]
    pub params: Params,
}

fn zero_expr() -> String {
    "0".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceName {
    FlatTorus,
    FlatDisk,
    ConformalTorus,
    ConformalDisk,
    /// Upper half-plane, curvature -1.
    Hyperbolic,
    /// Stereographic sphere chart, curvature +1.
    Sphere,
    /// Flat frame with constant main scalar `c`.
    ConstantMainScalar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub kind: SurfaceName,
    /// Conformal exponent for the conformal kinds.
    #[serde(default)]
    pub phi: Option<String>,
    /// Main scalar for `constant_main_scalar`.
    #[serde(default)]
    pub c: Option<f64>,
    /// Structure-relation tolerance.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    1e-6
}

/// Numeric parameters. Unused entries are ignored by a given subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Validation and scan grid; the model default when absent.
    pub grid: Option<GridSpec>,
    /// Finite-difference step for nested derivatives; analytic when absent.
    pub fd_step: Option<f64>,
    /// Starting state `(x, y, theta)` for orbit experiments.
    pub start: [f64; 3],
    /// Orbit and conjugate-point horizon.
    pub horizon: f64,
    /// Output spacing along orbits.
    pub sample_dt: f64,
    /// Jacobi initial data `(a, y, z)`.
    pub jacobi_initial: [f64; 3],
    /// Finite Riccati radius; the doubling limit when absent.
    pub riccati_radius: Option<f64>,
    pub limit_tolerance: f64,
    pub limit_cap: f64,
    /// Random bundle points for pointwise checks.
    pub n_points: usize,
    pub seed: u64,
    /// Quadrature grid: `[n, n, n]` on the torus, `[n_r, n_alpha, n_theta]` on the disk.
    pub quadrature: [usize; 3],
    pub identity: IdentityKind,
    /// Exterior offset for the Riccati fan on the disk.
    pub fan_offset: f64,
    pub degree: u32,
    pub n_boundary: usize,
    pub n_angles: usize,
    /// Boundary arc `[start, start + length]` in radians; the full circle when absent.
    pub arc: Option<[f64; 2]>,
    pub min_gap: f64,
    pub min_kept_condition: f64,
    /// Polar report grid for reconstructions.
    pub report_nodes: [usize; 2],
    /// Where to store the assembled X-ray operator.
    pub operator_path: Option<String>,
    pub max_iterations: usize,
    pub solver_tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    /// Closed-surface identities on the torus.
    Closed,
    /// Identity with the boundary form on the disk.
    Boundary,
    /// Quadratic identity with the Riccati fan on the disk.
    Second,
    /// Stokes consequences of the Liouville-form derivatives.
    Lie,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            grid: None,
            fd_step: None,
            start: [0.1, 0.2, 0.3],
            horizon: 10.0,
            sample_dt: 0.01,
            jacobi_initial: [0.0, 0.0, 1.0],
            riccati_radius: None,
            limit_tolerance: 1e-6,
            limit_cap: 1024.0,
            n_points: 1000,
            seed: 7,
            quadrature: [32, 32, 32],
            identity: IdentityKind::Closed,
            fan_offset: 0.1,
            degree: 8,
            n_boundary: 20,
            n_angles: 20,
            arc: None,
            min_gap: 10.0,
            min_kept_condition: 1e-6,
            report_nodes: [12, 12],
            operator_path: None,
            max_iterations: 10_000,
            solver_tolerance: 1e-10,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| LabError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the schema version, expressions, tolerances and grid sizes.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(LabError::Config(format!(
                "schema {} is not supported (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        if self.experiment.trim().is_empty() {
            return Err(LabError::Config("experiment name is empty".into()));
        }
        parse_expression(&self.lambda)?;
        for (name, text) in &self.fields {
            if !FIELD_NAMES.contains(&name.as_str()) {
                return Err(LabError::Config(format!("unknown field `{name}`")));
            }
            parse_expression(text)?;
        }
        if let Some(phi) = &self.surface.phi {
            parse_expression(phi)?;
        }
        let p = &self.params;
        let positive = [
            ("surface.tolerance", self.surface.tolerance),
            ("horizon", p.horizon),
            ("sample_dt", p.sample_dt),
            ("limit_tolerance", p.limit_tolerance),
            ("limit_cap", p.limit_cap),
            ("fan_offset", p.fan_offset),
            ("min_gap", p.min_gap),
            ("min_kept_condition", p.min_kept_condition),
            ("solver_tolerance", p.solver_tolerance),
        ];
        for (name, v) in positive.into_iter().chain(p.fd_step.map(|h| ("fd_step", h))) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if let Some(r) = p.riccati_radius {
            if !(r > 0.0) {
                return Err(LabError::Config(format!("riccati_radius must be positive, got {r}")));
            }
        }
        if let Some(g) = &p.grid {
            let sizes: Vec<usize> = match *g {
                GridSpec::Torus { n_x, n_y, n_theta } => vec![n_x, n_y, n_theta],
                GridSpec::Polar { n_r, n_alpha, n_theta } => vec![n_r, n_alpha, n_theta],
                GridSpec::Box { n_x, n_y, n_theta, .. } => vec![n_x, n_y, n_theta],
            };
            check_sizes("grid", &sizes)?;
        }
        check_sizes("quadrature", &p.quadrature)?;
        check_sizes("report_nodes", &p.report_nodes)?;
        check_sizes("ray fan", &[p.n_boundary, p.n_angles])?;
        if p.n_points == 0 || p.max_iterations == 0 {
            return Err(LabError::Config("n_points and max_iterations must be positive".into()));
        }
        Ok(())
    }

    /// Builds the surface model; conformal models are validated against
    /// their structure relations on construction.
    pub fn model(&self) -> Result<SurfaceModel> {
        let s = &self.surface;
        let phi = || -> Result<crate::expr::Expr> {
            let text = s
                .phi
                .as_deref()
                .ok_or_else(|| LabError::Config(format!("surface {:?} needs `phi`", s.kind)))?;
            parse_expression(text)
        };
        match s.kind {
            SurfaceName::FlatTorus => Ok(SurfaceModel::flat_torus()),
            SurfaceName::FlatDisk => Ok(SurfaceModel::flat_disk()),
            SurfaceName::ConformalTorus => SurfaceModel::conformal(SurfaceKind::ConformalTorus, phi()?, s.tolerance),
            SurfaceName::ConformalDisk => SurfaceModel::conformal(SurfaceKind::ConformalDisk, phi()?, s.tolerance),
            SurfaceName::Hyperbolic => Ok(SurfaceModel::hyperbolic_half_plane()),
            SurfaceName::Sphere => Ok(SurfaceModel::round_sphere_chart()),
            SurfaceName::ConstantMainScalar => SurfaceModel::constant_main_scalar(
                s.c.ok_or_else(|| LabError::Config("constant_main_scalar needs `c`".into()))?,
            ),
        }
    }

    pub fn lambda(&self) -> Result<SmField> {
        SmField::parse(&self.lambda)
    }

    /// A named field, or zero when absent.
    pub fn field(&self, name: &str) -> Result<SmField> {
        match self.fields.get(name) {
            Some(t) => SmField::parse(t),
            None => Ok(SmField::constant(0.0)),
        }
    }

    /// A named field that must be present.
    pub fn required_field(&self, name: &str) -> Result<SmField> {
        match self.fields.get(name) {
            Some(t) => SmField::parse(t),
            None => Err(LabError::Config(format!("field `{name}` is required"))),
        }
    }

    pub fn start(&self) -> SmPoint {
        let [x, y, t] = self.params.start;
        SmPoint::new(x, y, t)
    }
}

fn check_sizes(name: &str, sizes: &[usize]) -> Result<()> {
    if sizes.iter().any(|&n| n < 4) {
        return Err(LabError::Config(format!(
            "{name} sizes must be at least 4, got {sizes:?}"
        )));
    }
    Ok(())
}
