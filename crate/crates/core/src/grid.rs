//! Sample grids on the bundle.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::field::SmPoint;

/// A tensor grid of bundle points used for validation scans and sup norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridSpec {
    /// `x_i = i/n_x`, `y_j = j/n_y`, `theta_k = 2 pi k/n_theta` on the periodic square.
    Torus { n_x: usize, n_y: usize, n_theta: usize },
    /// Polar grid on the disk: radii at cell midpoints `(i + 1/2)/n_r`, uniform angles.
    Polar { n_r: usize, n_alpha: usize, n_theta: usize },
    /// Cell-centred box `[x0, x1] x [y0, y1]`.
    Box {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
        n_x: usize,
        n_y: usize,
        n_theta: usize,
    },
}

impl GridSpec {
    pub fn torus(n: usize) -> GridSpec {
        GridSpec::Torus {
            n_x: n,
            n_y: n,
            n_theta: n,
        }
    }

    pub fn polar(n_r: usize, n_alpha: usize, n_theta: usize) -> GridSpec {
        GridSpec::Polar { n_r, n_alpha, n_theta }
    }

    pub fn n_theta(&self) -> usize {
        match *self {
            GridSpec::Torus { n_theta, .. } | GridSpec::Polar { n_theta, .. } | GridSpec::Box { n_theta, .. } => {
                n_theta
            }
        }
    }

    /// Same base grid with a different number of angles.
    pub fn with_n_theta(self, n: usize) -> GridSpec {
        match self {
            GridSpec::Torus { n_x, n_y, .. } => GridSpec::Torus { n_x, n_y, n_theta: n },
            GridSpec::Polar { n_r, n_alpha, .. } => GridSpec::Polar {
                n_r,
                n_alpha,
                n_theta: n,
            },
            GridSpec::Box {
                x0,
                x1,
                y0,
                y1,
                n_x,
                n_y,
                ..
            } => GridSpec::Box {
                x0,
                x1,
                y0,
                y1,
                n_x,
                n_y,
                n_theta: n,
            },
        }
    }

    pub fn len(&self) -> usize {
        match *self {
            GridSpec::Torus { n_x, n_y, n_theta } => n_x * n_y * n_theta,
            GridSpec::Polar { n_r, n_alpha, n_theta } => n_r * n_alpha * n_theta,
            GridSpec::Box { n_x, n_y, n_theta, .. } => n_x * n_y * n_theta,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn base_points(&self) -> Vec<(f64, f64)> {
        match *self {
            GridSpec::Torus { n_x, n_y, .. } => (0..n_x)
                .flat_map(|i| (0..n_y).map(move |j| (i as f64 / n_x as f64, j as f64 / n_y as f64)))
                .collect(),
            GridSpec::Polar { n_r, n_alpha, .. } => (0..n_r)
                .flat_map(|i| {
                    let r = (i as f64 + 0.5) / n_r as f64;
                    (0..n_alpha).map(move |j| {
                        let a = TAU * j as f64 / n_alpha as f64;
                        (r * a.cos(), r * a.sin())
                    })
                })
                .collect(),
            GridSpec::Box {
                x0,
                x1,
                y0,
                y1,
                n_x,
                n_y,
                ..
            } => (0..n_x)
                .flat_map(|i| {
                    let x = x0 + (x1 - x0) * (i as f64 + 0.5) / n_x as f64;
                    (0..n_y).map(move |j| (x, y0 + (y1 - y0) * (j as f64 + 0.5) / n_y as f64))
                })
                .collect(),
        }
    }

    pub fn thetas(&self) -> Vec<f64> {
        let n = self.n_theta();
        (0..n).map(|k| TAU * k as f64 / n as f64).collect()
    }

    /// All grid points, base-major.
    pub fn points(&self) -> Vec<SmPoint> {
        let thetas = self.thetas();
        self.base_points()
            .into_iter()
            .flat_map(|(x, y)| thetas.iter().map(move |&t| SmPoint { x, y, theta: t }))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_match_point_counts() {
        for g in [
            GridSpec::torus(5),
            GridSpec::polar(3, 4, 6),
            GridSpec::Box {
                x0: -1.0,
                x1: 1.0,
                y0: 0.5,
                y1: 2.0,
                n_x: 3,
                n_y: 2,
                n_theta: 4,
            },
        ] {
            assert_eq!(g.points().len(), g.len());
        }
    }

    #[test]
    fn polar_points_lie_inside_the_disk() {
        for p in GridSpec::polar(6, 8, 2).points() {
            assert!(p.x * p.x + p.y * p.y < 1.0);
        }
    }
}
