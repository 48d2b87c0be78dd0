//! Stream-function form of the discrete solenoidal space on the square.
//!
//! Every discretely divergence-free MAC field with zero wall flux is `rot ψ`
//! for a nodal `ψ` vanishing on the walls, so the interior node values are
//! coordinates on that space. In those coordinates the L² Gram matrix is
//! `M = h² RᵀR` (the 5-point node Laplacian) and the Dirichlet form of the
//! no-slip vector Laplacian is `K = h² Rᵀ(−Δ)R` (a 13-point biharmonic).

use std::sync::Arc;

use crate::banded::{BandedCholesky, SymBanded};
use crate::error::{Error, Result};
use crate::field::{Location, ScalarField, VectorField};
use crate::grid::Grid;
use crate::ops::{laplacian, rot};

/// Stencil reach of `K` in grid steps.
const REACH: usize = 2;

pub fn interior_dim(grid: &Grid) -> usize {
    let n = grid.n();
    (n - 1) * (n - 1)
}

/// Nodal field with the given interior values and zero wall values.
pub fn embed(grid: &Arc<Grid>, interior: &[f64]) -> ScalarField {
    let n = grid.n();
    let mut psi = ScalarField::zeros(grid, Location::Node);
    let vals = psi.values_mut();
    for j in 1..n {
        for i in 1..n {
            vals[grid.node_index(i, j)] = interior[(j - 1) * (n - 1) + (i - 1)];
        }
    }
    psi
}

pub fn restrict(psi: &ScalarField) -> Vec<f64> {
    let g = psi.grid();
    let n = g.n();
    let mut out = vec![0.0; interior_dim(g)];
    for j in 1..n {
        for i in 1..n {
            out[(j - 1) * (n - 1) + (i - 1)] = psi.values()[g.node_index(i, j)];
        }
    }
    out
}

/// Adjoint of `rot` with respect to plain sums over faces, restricted to
/// interior nodes.
pub fn rot_adjoint(f: &VectorField) -> Vec<f64> {
    let g = f.grid();
    let n = g.n();
    let h = g.h();
    let mut node = vec![0.0; g.node_count()];
    for j in 0..n {
        for i in 0..=n {
            let a = f.u()[g.u_index(i, j)] / h;
            node[g.node_index(i, j + 1)] += a;
            node[g.node_index(i, j)] -= a;
        }
    }
    for j in 0..=n {
        for i in 0..n {
            let b = f.v()[g.v_index(i, j)] / h;
            node[g.node_index(i + 1, j)] -= b;
            node[g.node_index(i, j)] += b;
        }
    }
    let mut out = vec![0.0; interior_dim(g)];
    for j in 1..n {
        for i in 1..n {
            out[(j - 1) * (n - 1) + (i - 1)] = node[g.node_index(i, j)];
        }
    }
    out
}

/// Velocity `rot ψ` of interior stream-function coordinates.
pub fn velocity(grid: &Arc<Grid>, interior: &[f64]) -> VectorField {
    rot(&embed(grid, interior)).expect("nodal field")
}

#[derive(Debug, Clone)]
pub struct StreamOperator {
    grid: Arc<Grid>,
    stiffness: SymBanded,
    mass: SymBanded,
    factor: BandedCholesky,
}

impl StreamOperator {
    pub fn new(grid: &Arc<Grid>) -> Result<Self> {
        if !grid.is_square() {
            return Err(Error::NoBoundary);
        }
        let h2 = grid.cell_area();
        let stiffness = probe(grid, |x| {
            let u = velocity(grid, x);
            let mut r = rot_adjoint(&laplacian(&u));
            r.iter_mut().for_each(|v| *v *= -h2);
            r
        })?;
        let mass = probe(grid, |x| {
            let mut r = rot_adjoint(&velocity(grid, x));
            r.iter_mut().for_each(|v| *v *= h2);
            r
        })?;
        let factor = stiffness.cholesky()?;
        Ok(StreamOperator {
            grid: grid.clone(),
            stiffness,
            mass,
            factor,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn stiffness(&self) -> &SymBanded {
        &self.stiffness
    }

    pub fn mass(&self) -> &SymBanded {
        &self.mass
    }

    pub fn solve_stiffness(&self, b: &[f64]) -> Vec<f64> {
        self.factor.solve(b)
    }
}

/// Assemble a local symmetric operator on interior nodes by applying it to
/// interleaved unit impulses spaced wider than its stencil.
fn probe(grid: &Arc<Grid>, apply: impl Fn(&[f64]) -> Vec<f64>) -> Result<SymBanded> {
    let m = grid.n() - 1;
    let dim = m * m;
    let period = 2 * REACH + 1;
    let bw = REACH * m + REACH;
    let mut a = SymBanded::zeros(dim, bw);
    for cy in 0..period {
        for cx in 0..period {
            let mut x = vec![0.0; dim];
            for j in (cy..m).step_by(period) {
                for i in (cx..m).step_by(period) {
                    x[j * m + i] = 1.0;
                }
            }
            let y = apply(&x);
            for (r, &val) in y.iter().enumerate() {
                if val == 0.0 {
                    continue;
                }
                let (ri, rj) = (r % m, r / m);
                // the impulse responsible for row r is the colored node
                // within the stencil reach
                let ci = nearest_colored(ri, cx, period, m);
                let cj = nearest_colored(rj, cy, period, m);
                match (ci, cj) {
                    (Some(ci), Some(cj))
                        if ri.abs_diff(ci) <= REACH && rj.abs_diff(cj) <= REACH =>
                    {
                        let c = cj * m + ci;
                        if r >= c {
                            a.set(r, c, val);
                        }
                    }
                    _ => {
                        return Err(Error::SolverFailure {
                            what: "operator stencil exceeds probing reach".into(),
                            residual: val.abs(),
                        })
                    }
                }
            }
        }
    }
    Ok(a)
}

fn nearest_colored(r: usize, color: usize, period: usize, m: usize) -> Option<usize> {
    // colored indices are color, color + period, ...; the one within reach
    let base = r as isize - ((r as isize - color as isize).rem_euclid(period as isize));
    [base, base + period as isize]
        .into_iter()
        .filter(|&c| c >= 0 && (c as usize) < m)
        .map(|c| c as usize)
        .min_by_key(|&c| c.abs_diff(r))
}
