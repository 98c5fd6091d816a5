//! Quadrature rules on the unit sphere bundle.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::field::{Domain, SmField, SmPoint};
use crate::geometry::SurfaceModel;
use crate::grid::GridSpec;

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).expect("nonzero"));
    let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
    rule.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (mid + half * x, half * w))
        .collect()
}

/// Composite Gauss–Legendre rule with `panels` equal panels on `[a, b]`.
pub fn composite_gauss_legendre(n: usize, panels: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .flat_map(|k| gauss_legendre(n, a + k as f64 * h, a + (k + 1) as f64 * h))
        .collect()
}

/// Nodes on the boundary of the disk bundle, parametrized by `(alpha, theta)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryNodes {
    pub nodes: Vec<SmPoint>,
    /// Weights for `dalpha dtheta` times the density.
    pub weights: Vec<f64>,
    /// Outward unit normals of the base circle.
    pub normals: Vec<[f64; 2]>,
}

/// Nodes and weights for the Liouville measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadratureGrid {
    pub nodes: Vec<SmPoint>,
    pub weights: Vec<f64>,
    pub boundary: Option<BoundaryNodes>,
}

const CHUNK: usize = 4096;

impl QuadratureGrid {
    /// Periodic trapezoid rule on the torus bundle.
    pub fn torus(model: &SurfaceModel, n_x: usize, n_y: usize, n_theta: usize) -> QuadratureGrid {
        let spec = GridSpec::Torus { n_x, n_y, n_theta };
        let nodes = spec.points();
        let cell = 2.0 * std::f64::consts::PI / (n_x * n_y * n_theta) as f64;
        let weights = nodes.par_iter().map(|p| cell * model.density.eval(*p)).collect();
        QuadratureGrid {
            nodes,
            weights,
            boundary: None,
        }
    }

    /// Polar tensor grid on the unit disk bundle: Gauss–Legendre in the radius,
    /// trapezoid in the polar angle and in `theta`, plus boundary nodes.
    pub fn disk(model: &SurfaceModel, n_r: usize, n_alpha: usize, n_theta: usize) -> QuadratureGrid {
        let tau = 2.0 * std::f64::consts::PI;
        let (da, dt) = (tau / n_alpha as f64, tau / n_theta as f64);
        let radial = gauss_legendre(n_r, 0.0, 1.0);
        let mut nodes = Vec::with_capacity(n_r * n_alpha * n_theta);
        let mut base_w = Vec::with_capacity(nodes.capacity());
        for &(r, wr) in &radial {
            for i in 0..n_alpha {
                let a = i as f64 * da;
                for k in 0..n_theta {
                    nodes.push(SmPoint::new(r * a.cos(), r * a.sin(), k as f64 * dt));
                    base_w.push(r * wr * da * dt);
                }
            }
        }
        let weights = nodes
            .par_iter()
            .zip(base_w.par_iter())
            .map(|(p, w)| w * model.density.eval(*p))
            .collect();
        let mut bnodes = Vec::with_capacity(n_alpha * n_theta);
        let mut normals = Vec::with_capacity(n_alpha * n_theta);
        for i in 0..n_alpha {
            let a = i as f64 * da;
            for k in 0..n_theta {
                bnodes.push(SmPoint::new(a.cos(), a.sin(), k as f64 * dt));
                normals.push([a.cos(), a.sin()]);
            }
        }
        let bweights = bnodes.iter().map(|p| da * dt * model.density.eval(*p)).collect();
        QuadratureGrid {
            nodes,
            weights,
            boundary: Some(BoundaryNodes {
                nodes: bnodes,
                weights: bweights,
                normals,
            }),
        }
    }

    /// Quadrature for a grid specification: torus grids use the trapezoid
    /// rule, polar grids the disk rule with the same counts.
    pub fn from_spec(model: &SurfaceModel, spec: &GridSpec) -> Result<QuadratureGrid> {
        match (*spec, model.domain) {
            (GridSpec::Torus { n_x, n_y, n_theta }, Domain::Torus) => Ok(Self::torus(model, n_x, n_y, n_theta)),
            (GridSpec::Polar { n_r, n_alpha, n_theta }, Domain::Disk) => Ok(Self::disk(model, n_r, n_alpha, n_theta)),
            (s, d) => Err(LabError::Domain(format!("no quadrature for {s:?} on the {d:?} domain"))),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Values of a field at the interior nodes.
    pub fn values(&self, f: &SmField) -> Vec<f64> {
        self.nodes.par_iter().map(|p| f.eval(*p)).collect()
    }

    /// `sum w_k g(k)` with a fixed reduction order.
    pub fn sum_with<G>(&self, g: G) -> f64
    where
        G: Fn(usize) -> f64 + Sync,
    {
        let partial: Vec<f64> = (0..self.nodes.len())
            .collect::<Vec<_>>()
            .par_chunks(CHUNK)
            .map(|idx| idx.iter().map(|&k| self.weights[k] * g(k)).sum::<f64>())
            .collect();
        partial.iter().sum()
    }

    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        self.sum_with(|k| values[k])
    }
}

/// `int f dmu` over the grid.
pub fn liouville_integrate(grid: &QuadratureGrid, f: &SmField) -> f64 {
    grid.sum_with(|k| f.eval(grid.nodes[k]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::geometry::SurfaceKind;
    use std::f64::consts::PI;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let q = gauss_legendre(5, 0.0, 2.0);
        let s: f64 = q.iter().map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 2f64.powi(10) / 10.0).abs() < 1e-11);
        let c = composite_gauss_legendre(4, 3, -1.0, 2.0);
        assert_eq!(c.len(), 12);
        assert!((c.iter().map(|p| p.1).sum::<f64>() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn flat_volumes() {
        let t = QuadratureGrid::torus(&SurfaceModel::flat_torus(), 8, 8, 8);
        assert!((liouville_integrate(&t, &SmField::constant(1.0)) - 2.0 * PI).abs() < 1e-12);
        let s = SmField::parse("sin(2*pi*x)").unwrap();
        assert!(liouville_integrate(&t, &s).abs() < 1e-12);
        let d = QuadratureGrid::disk(&SurfaceModel::flat_disk(), 6, 8, 8);
        assert!((liouville_integrate(&d, &SmField::constant(1.0)) - 2.0 * PI * PI).abs() < 1e-12);
        let b = d.boundary.as_ref().unwrap();
        assert!((b.weights.iter().sum::<f64>() - 4.0 * PI * PI).abs() < 1e-12);
    }

    #[test]
    fn conformal_volume_matches_adaptive_oracle() {
        let phi = parse_expression("0.1*sin(2*pi*x)").unwrap();
        let m = SurfaceModel::conformal(SurfaceKind::ConformalTorus, phi, 1e-8).unwrap();
        let t = QuadratureGrid::torus(&m, 32, 4, 4);
        let got = liouville_integrate(&t, &SmField::constant(1.0));
        // adaptive Simpson on e^{0.2 sin(2 pi x)}, independent of the grid
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, whole: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (l, r) = (
                (m - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + m)) + f(m)),
                (b - m) / 6.0 * (f(m) + 4.0 * f(0.5 * (m + b)) + f(b)),
            );
            if depth == 0 || (l + r - whole).abs() < 15.0 * tol {
                l + r + (l + r - whole) / 15.0
            } else {
                simpson(f, a, m, tol / 2.0, l, depth - 1) + simpson(f, m, b, tol / 2.0, r, depth - 1)
            }
        }
        let f = |x: f64| (0.2 * (2.0 * PI * x).sin()).exp();
        let whole = (f(0.0) + 4.0 * f(0.5) + f(1.0)) / 6.0;
        let oracle = 2.0 * PI * simpson(&f, 0.0, 1.0, 1e-13, whole, 40);
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }
}
