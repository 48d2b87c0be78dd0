//! Uniform MAC grids on the unit square (walls) or the 2π-periodic torus.
//!
//! Storage conventions used throughout the crate (all arrays row-major, the
//! x index running fastest):
//!
//! | quantity          | square               | torus      | position                |
//! |-------------------|----------------------|------------|-------------------------|
//! | cell centers      | `n × n`              | `n × n`    | `((i+½)h, (j+½)h)`      |
//! | nodes             | `(n+1) × (n+1)`      | `n × n`    | `(ih, jh)`              |
//! | x-velocity faces  | `(n+1) × n`          | `n × n`    | `(ih, (j+½)h)`          |
//! | y-velocity faces  | `n × (n+1)`          | `n × n`    | `((i+½)h, jh)`          |

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainKind {
    Square,
    Torus,
}

impl DomainKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DomainKind::Square => "square",
            DomainKind::Torus => "torus",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    kind: DomainKind,
    n: usize,
    h: f64,
    /// Distance to the boundary at every node (square only).
    rho: Option<Vec<f64>>,
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.n == other.n
    }
}

impl Grid {
    pub fn new(kind: DomainKind, n: usize) -> Result<Arc<Grid>> {
        match kind {
            DomainKind::Square => Self::square(n),
            DomainKind::Torus => Self::torus(n),
        }
    }

    /// Unit square `[0,1]²` split into `n × n` cells.
    pub fn square(n: usize) -> Result<Arc<Grid>> {
        if n < 4 {
            return Err(Error::InvalidGrid(format!(
                "square grid needs n >= 4, got {n}"
            )));
        }
        let h = 1.0 / n as f64;
        let mut rho = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                let steps = i.min(n - i).min(j).min(n - j);
                rho.push(steps as f64 * h);
            }
        }
        Ok(Arc::new(Grid {
            kind: DomainKind::Square,
            n,
            h,
            rho: Some(rho),
        }))
    }

    /// Periodic box `[0,2π)²` with `n × n` cells.
    pub fn torus(n: usize) -> Result<Arc<Grid>> {
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "torus grid needs even n >= 4, got {n}"
            )));
        }
        Ok(Arc::new(Grid {
            kind: DomainKind::Torus,
            n,
            h: 2.0 * PI / n as f64,
            rho: None,
        }))
    }

    pub fn kind(&self) -> DomainKind {
        self.kind
    }

    pub fn is_square(&self) -> bool {
        self.kind == DomainKind::Square
    }

    /// Cells per side (`nx = ny`).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn side_length(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn cell_area(&self) -> f64 {
        self.h * self.h
    }

    pub fn nodes_per_side(&self) -> usize {
        match self.kind {
            DomainKind::Square => self.n + 1,
            DomainKind::Torus => self.n,
        }
    }

    pub fn node_count(&self) -> usize {
        let s = self.nodes_per_side();
        s * s
    }

    pub fn cell_count(&self) -> usize {
        self.n * self.n
    }

    /// Shape `(columns, rows)` of the x-velocity array.
    pub fn u_shape(&self) -> (usize, usize) {
        match self.kind {
            DomainKind::Square => (self.n + 1, self.n),
            DomainKind::Torus => (self.n, self.n),
        }
    }

    /// Shape `(columns, rows)` of the y-velocity array.
    pub fn v_shape(&self) -> (usize, usize) {
        match self.kind {
            DomainKind::Square => (self.n, self.n + 1),
            DomainKind::Torus => (self.n, self.n),
        }
    }

    pub fn u_len(&self) -> usize {
        let (a, b) = self.u_shape();
        a * b
    }

    pub fn v_len(&self) -> usize {
        let (a, b) = self.v_shape();
        a * b
    }

    #[inline]
    pub fn u_index(&self, i: usize, j: usize) -> usize {
        j * self.u_shape().0 + i
    }

    #[inline]
    pub fn v_index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_per_side() + i
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Periodic wrap of a signed index (torus helper).
    #[inline]
    pub fn wrap(&self, k: isize) -> usize {
        k.rem_euclid(self.n as isize) as usize
    }

    pub fn node_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, j as f64 * self.h)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn u_position(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.h, (j as f64 + 0.5) * self.h)
    }

    pub fn v_position(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.h, j as f64 * self.h)
    }

    /// Precomputed node distances to the boundary.
    pub fn rho(&self) -> Result<&[f64]> {
        self.rho.as_deref().ok_or(Error::NoBoundary)
    }

    /// Distance from node `(i, j)` to the nearest wall.
    pub fn boundary_distance(&self, i: usize, j: usize) -> Result<f64> {
        let rho = self.rho()?;
        let s = self.nodes_per_side();
        if i >= s || j >= s {
            return Err(Error::InvalidParameter(format!(
                "node ({i}, {j}) outside grid"
            )));
        }
        Ok(rho[j * s + i])
    }

    /// Distance from an arbitrary point of the square to the nearest wall.
    pub fn distance_to_wall(&self, x: f64, y: f64) -> Result<f64> {
        if !self.is_square() {
            return Err(Error::NoBoundary);
        }
        Ok(x.min(1.0 - x).min(y).min(1.0 - y).max(0.0))
    }

    /// Whether node `(i, j)` lies on the boundary of the square.
    pub fn is_boundary_node(&self, i: usize, j: usize) -> bool {
        self.is_square() && (i == 0 || j == 0 || i == self.n || j == self.n)
    }

    /// Number of interior nodes, which equals the dimension of the discrete
    /// divergence-free space with zero trace (square) or of its zero-mean
    /// part (torus, with one node value removed by the mean constraint).
    pub fn solenoidal_dim(&self) -> usize {
        match self.kind {
            DomainKind::Square => (self.n - 1) * (self.n - 1),
            DomainKind::Torus => self.n * self.n - 1,
        }
    }

    pub fn same_as(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}
