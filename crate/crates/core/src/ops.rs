//! Second-order MAC difference operators and midpoint quadrature.
//!
//! On the square, the tangential wall trace of a [`VectorField`] enters through
//! the ghost value `2·trace − interior` one half cell outside the wall. With
//! that closure the vector Laplacian is exactly minus the gradient of the
//! discrete Dirichlet energy, so `(−Δu, v) = ((u, v))` whenever `v` has zero
//! trace.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Location, ScalarField, VectorField, WallTrace};
use crate::grid::{DomainKind, Grid};
use crate::stokes::StokesBasis;

/// Discrete divergence at cell centers.
pub fn divergence(f: &VectorField) -> ScalarField {
    let g = f.grid();
    let n = g.n();
    let h = g.h();
    let mut out = ScalarField::zeros(g, Location::Center);
    let vals = out.values_mut();
    for j in 0..n {
        for i in 0..n {
            let (ip, jp) = match g.kind() {
                DomainKind::Square => (i + 1, j + 1),
                DomainKind::Torus => ((i + 1) % n, (j + 1) % n),
            };
            vals[g.cell_index(i, j)] = (f.u[g.u_index(ip, j)] - f.u[g.u_index(i, j)]
                + f.v[g.v_index(i, jp)]
                - f.v[g.v_index(i, j)])
                / h;
        }
    }
    out
}

/// `rot ψ = (∂ψ/∂y, −∂ψ/∂x)` for a nodal stream function, differenced onto
/// the faces. `divergence(rot(ψ))` vanishes identically.
pub fn rot(psi: &ScalarField) -> Result<VectorField> {
    if psi.location() != Location::Node {
        return Err(Error::InvalidParameter(
            "rot expects a nodal stream function".into(),
        ));
    }
    let g = psi.grid();
    let n = g.n();
    let h = g.h();
    let p = psi.values();
    let mut out = VectorField::zeros(g);
    let (ux, uy) = g.u_shape();
    for j in 0..uy {
        let jp = if g.is_square() { j + 1 } else { (j + 1) % n };
        for i in 0..ux {
            out.u[g.u_index(i, j)] = (p[g.node_index(i, jp)] - p[g.node_index(i, j)]) / h;
        }
    }
    let (vx, vy) = g.v_shape();
    for j in 0..vy {
        for i in 0..vx {
            let ip = if g.is_square() { i + 1 } else { (i + 1) % n };
            out.v[g.v_index(i, j)] = -(p[g.node_index(ip, j)] - p[g.node_index(i, j)]) / h;
        }
    }
    Ok(out)
}

/// Gradient of a cell-centered scalar onto the faces. Wall faces get zero
/// (homogeneous Neumann).
pub fn gradient(p: &ScalarField) -> Result<VectorField> {
    if p.location() != Location::Center {
        return Err(Error::InvalidParameter(
            "gradient expects a cell-centered field".into(),
        ));
    }
    let g = p.grid();
    let n = g.n();
    let h = g.h();
    let s = p.values();
    let mut out = VectorField::zeros(g);
    match g.kind() {
        DomainKind::Square => {
            for j in 0..n {
                for i in 1..n {
                    out.u[g.u_index(i, j)] =
                        (s[g.cell_index(i, j)] - s[g.cell_index(i - 1, j)]) / h;
                }
            }
            for j in 1..n {
                for i in 0..n {
                    out.v[g.v_index(i, j)] =
                        (s[g.cell_index(i, j)] - s[g.cell_index(i, j - 1)]) / h;
                }
            }
        }
        DomainKind::Torus => {
            for j in 0..n {
                for i in 0..n {
                    let im = (i + n - 1) % n;
                    let jm = (j + n - 1) % n;
                    out.u[g.u_index(i, j)] = (s[g.cell_index(i, j)] - s[g.cell_index(im, j)]) / h;
                    out.v[g.v_index(i, j)] = (s[g.cell_index(i, j)] - s[g.cell_index(i, jm)]) / h;
                }
            }
        }
    }
    Ok(out)
}

/// Accessors that resolve out-of-range neighbors through the ghost closure.
struct Stencil<'a> {
    grid: &'a Grid,
    f: &'a VectorField,
    trace: Option<&'a WallTrace>,
}

impl<'a> Stencil<'a> {
    fn new(f: &'a VectorField) -> Self {
        Stencil {
            grid: f.grid(),
            f,
            trace: f.trace(),
        }
    }

    /// x-velocity at column `i`, row `j` (row may be −1 or n on the square).
    #[inline]
    fn u(&self, i: isize, j: isize) -> f64 {
        let g = self.grid;
        let n = g.n() as isize;
        match g.kind() {
            DomainKind::Torus => self.f.u[g.u_index(g.wrap(i), g.wrap(j))],
            DomainKind::Square => {
                let i = i as usize;
                if j < 0 {
                    let t = self.trace.map_or(0.0, |t| t.bottom[i]);
                    2.0 * t - self.f.u[g.u_index(i, 0)]
                } else if j >= n {
                    let t = self.trace.map_or(0.0, |t| t.top[i]);
                    2.0 * t - self.f.u[g.u_index(i, (n - 1) as usize)]
                } else {
                    self.f.u[g.u_index(i, j as usize)]
                }
            }
        }
    }

    /// y-velocity at column `i` (may be −1 or n on the square), row `j`.
    #[inline]
    fn v(&self, i: isize, j: isize) -> f64 {
        let g = self.grid;
        let n = g.n() as isize;
        match g.kind() {
            DomainKind::Torus => self.f.v[g.v_index(g.wrap(i), g.wrap(j))],
            DomainKind::Square => {
                let j = j as usize;
                if i < 0 {
                    let t = self.trace.map_or(0.0, |t| t.left[j]);
                    2.0 * t - self.f.v[g.v_index(0, j)]
                } else if i >= n {
                    let t = self.trace.map_or(0.0, |t| t.right[j]);
                    2.0 * t - self.f.v[g.v_index((n - 1) as usize, j)]
                } else {
                    self.f.v[g.v_index(i as usize, j)]
                }
            }
        }
    }
}

/// Index ranges of the faces carrying unknowns: interior faces on the
/// square, all faces on the torus.
fn u_active(g: &Grid) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    match g.kind() {
        DomainKind::Square => (1..g.n(), 0..g.n()),
        DomainKind::Torus => (0..g.n(), 0..g.n()),
    }
}

fn v_active(g: &Grid) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    match g.kind() {
        DomainKind::Square => (0..g.n(), 1..g.n()),
        DomainKind::Torus => (0..g.n(), 0..g.n()),
    }
}

/// 5-point vector Laplacian at the active faces, with ghost closure from the
/// wall trace on the square. Wall-normal faces of the result are zero and
/// the result carries no trace.
pub fn laplacian(f: &VectorField) -> VectorField {
    let g = f.grid();
    let h2 = g.h() * g.h();
    let st = Stencil::new(f);
    let mut out = VectorField::zeros(g);
    let (ir, jr) = u_active(g);
    for j in jr {
        for i in ir.clone() {
            let (a, b) = (i as isize, j as isize);
            let c = st.u(a, b);
            out.u[g.u_index(i, j)] =
                (st.u(a + 1, b) + st.u(a - 1, b) + st.u(a, b + 1) + st.u(a, b - 1) - 4.0 * c) / h2;
        }
    }
    let (ir, jr) = v_active(g);
    for j in jr {
        for i in ir.clone() {
            let (a, b) = (i as isize, j as isize);
            let c = st.v(a, b);
            out.v[g.v_index(i, j)] =
                (st.v(a + 1, b) + st.v(a - 1, b) + st.v(a, b + 1) + st.v(a, b - 1) - 4.0 * c) / h2;
        }
    }
    out
}

/// 5-point scalar Laplacian. Cell-centered fields use homogeneous Neumann
/// closure on the square; nodal fields are evaluated at interior nodes with
/// the wall values acting as Dirichlet data (wall entries of the result are
/// zero).
pub fn laplacian_scalar(s: &ScalarField) -> ScalarField {
    let g = s.grid();
    let n = g.n();
    let h2 = g.h() * g.h();
    let x = s.values();
    let mut out = ScalarField::zeros(g, s.location());
    let o = out.values_mut();
    match (g.kind(), s.location()) {
        (DomainKind::Torus, _) => {
            for j in 0..n {
                for i in 0..n {
                    let c = x[j * n + i];
                    let sum = x[j * n + (i + 1) % n]
                        + x[j * n + (i + n - 1) % n]
                        + x[((j + 1) % n) * n + i]
                        + x[((j + n - 1) % n) * n + i];
                    o[j * n + i] = (sum - 4.0 * c) / h2;
                }
            }
        }
        (DomainKind::Square, Location::Center) => {
            for j in 0..n {
                for i in 0..n {
                    let c = x[j * n + i];
                    let mut acc = 0.0;
                    if i + 1 < n {
                        acc += x[j * n + i + 1] - c;
                    }
                    if i > 0 {
                        acc += x[j * n + i - 1] - c;
                    }
                    if j + 1 < n {
                        acc += x[(j + 1) * n + i] - c;
                    }
                    if j > 0 {
                        acc += x[(j - 1) * n + i] - c;
                    }
                    o[j * n + i] = acc / h2;
                }
            }
        }
        (DomainKind::Square, Location::Node) => {
            let s1 = n + 1;
            for j in 1..n {
                for i in 1..n {
                    let c = x[j * s1 + i];
                    let sum = x[j * s1 + i + 1]
                        + x[j * s1 + i - 1]
                        + x[(j + 1) * s1 + i]
                        + x[(j - 1) * s1 + i];
                    o[j * s1 + i] = (sum - 4.0 * c) / h2;
                }
            }
        }
    }
    out
}

/// Advective derivative `(a·∇)b` sampled at the active faces, with centered
/// differences for `∇b` and four-point averages for the cross component of
/// `a`.
pub fn advect(a: &VectorField, b: &VectorField) -> Result<VectorField> {
    a.grid().same_as(b.grid())?;
    let g = a.grid();
    let inv2h = 0.5 / g.h();
    let sa = Stencil::new(a);
    let sb = Stencil::new(b);
    let mut out = VectorField::zeros(g);
    let (ir, jr) = u_active(g);
    for j in jr {
        for i in ir.clone() {
            let (x, y) = (i as isize, j as isize);
            let ax = sa.u(x, y);
            let ay = 0.25 * (sa.v(x - 1, y) + sa.v(x, y) + sa.v(x - 1, y + 1) + sa.v(x, y + 1));
            let dx = (sb.u(x + 1, y) - sb.u(x - 1, y)) * inv2h;
            let dy = (sb.u(x, y + 1) - sb.u(x, y - 1)) * inv2h;
            out.u[g.u_index(i, j)] = ax * dx + ay * dy;
        }
    }
    let (ir, jr) = v_active(g);
    for j in jr {
        for i in ir.clone() {
            let (x, y) = (i as isize, j as isize);
            let ax = 0.25 * (sa.u(x, y - 1) + sa.u(x + 1, y - 1) + sa.u(x, y) + sa.u(x + 1, y));
            let ay = sa.v(x, y);
            let dx = (sb.v(x + 1, y) - sb.v(x - 1, y)) * inv2h;
            let dy = (sb.v(x, y + 1) - sb.v(x, y - 1)) * inv2h;
            out.v[g.v_index(i, j)] = ax * dx + ay * dy;
        }
    }
    Ok(out)
}

/// Skew-symmetrized trilinear form `½[((u·∇)v, w) − ((u·∇)w, v)]`.
///
/// Antisymmetric in its last two arguments for any inputs, so
/// `trilinear(u, v, v) == 0` up to rounding.
pub fn trilinear(u: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64> {
    u.grid().same_as(v.grid())?;
    u.grid().same_as(w.grid())?;
    let a = inner_l2(&advect(u, v)?, w)?;
    let b = inner_l2(&advect(u, w)?, v)?;
    Ok(0.5 * (a - b))
}

/// Midpoint-rule weight of each face (wall-normal faces cover half a cell).
pub fn face_weights(g: &Grid) -> (Vec<f64>, Vec<f64>) {
    let a = g.cell_area();
    let mut wu = vec![a; g.u_len()];
    let mut wv = vec![a; g.v_len()];
    if g.is_square() {
        let n = g.n();
        for j in 0..n {
            wu[g.u_index(0, j)] = 0.5 * a;
            wu[g.u_index(n, j)] = 0.5 * a;
        }
        for i in 0..n {
            wv[g.v_index(i, 0)] = 0.5 * a;
            wv[g.v_index(i, n)] = 0.5 * a;
        }
    }
    (wu, wv)
}

/// L² inner product `(a, b)` of velocities by midpoint quadrature.
pub fn inner_l2(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.grid().same_as(b.grid())?;
    let g = a.grid();
    let area = g.cell_area();
    let mut s: f64 = a.u.iter().zip(&b.u).map(|(x, y)| x * y).sum::<f64>()
        + a.v.iter().zip(&b.v).map(|(x, y)| x * y).sum::<f64>();
    if g.is_square() {
        let n = g.n();
        let mut edge = 0.0;
        for j in 0..n {
            for i in [0, n] {
                let k = g.u_index(i, j);
                edge += a.u[k] * b.u[k];
            }
        }
        for i in 0..n {
            for j in [0, n] {
                let k = g.v_index(i, j);
                edge += a.v[k] * b.v[k];
            }
        }
        s -= 0.5 * edge;
    }
    Ok(s * area)
}

/// H¹ inner product `((a, b)) = (∇a, ∇b)` assembled from the face
/// differences; wall gradients use the trace and carry half-cell weight.
pub fn inner_h1(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.grid().same_as(b.grid())?;
    let g = a.grid();
    let n = g.n() as isize;
    let sa = Stencil::new(a);
    let sb = Stencil::new(b);
    let mut acc = 0.0;
    match g.kind() {
        DomainKind::Torus => {
            for j in 0..n {
                for i in 0..n {
                    acc += (sa.u(i + 1, j) - sa.u(i, j)) * (sb.u(i + 1, j) - sb.u(i, j));
                    acc += (sa.u(i, j) - sa.u(i, j - 1)) * (sb.u(i, j) - sb.u(i, j - 1));
                    acc += (sa.v(i, j + 1) - sa.v(i, j)) * (sb.v(i, j + 1) - sb.v(i, j));
                    acc += (sa.v(i, j) - sa.v(i - 1, j)) * (sb.v(i, j) - sb.v(i - 1, j));
                }
            }
        }
        DomainKind::Square => {
            // ∂x u and ∂y v at cell centers
            for j in 0..n {
                for i in 0..n {
                    acc += (sa.u(i + 1, j) - sa.u(i, j)) * (sb.u(i + 1, j) - sb.u(i, j));
                    acc += (sa.v(i, j + 1) - sa.v(i, j)) * (sb.v(i, j + 1) - sb.v(i, j));
                }
            }
            // ∂y u at nodes of interior columns, ∂x v at nodes of interior rows
            for k in 1..n {
                for l in 0..=n {
                    let wt = if l == 0 || l == n { 0.5 } else { 1.0 };
                    acc += wt * (sa.u(k, l) - sa.u(k, l - 1)) * (sb.u(k, l) - sb.u(k, l - 1));
                    acc += wt * (sa.v(l, k) - sa.v(l - 1, k)) * (sb.v(l, k) - sb.v(l - 1, k));
                }
            }
        }
    }
    Ok(acc)
}

/// Midpoint-rule L² product of scalar fields (trapezoid weights for nodal
/// samples on the square).
pub fn inner_l2_scalar(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.grid().same_as(b.grid())?;
    if a.location() != b.location() {
        return Err(Error::InvalidParameter(
            "scalar fields at different locations".into(),
        ));
    }
    let g = a.grid();
    let area = g.cell_area();
    let (x, y) = (a.values(), b.values());
    if a.location() == Location::Node && g.is_square() {
        let s = g.nodes_per_side();
        let mut acc = 0.0;
        for j in 0..s {
            let wj = if j == 0 || j == s - 1 { 0.5 } else { 1.0 };
            for i in 0..s {
                let wi = if i == 0 || i == s - 1 { 0.5 } else { 1.0 };
                let k = j * s + i;
                acc += wi * wj * x[k] * y[k];
            }
        }
        Ok(acc * area)
    } else {
        Ok(x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() * area)
    }
}

/// `(∇a, ∇b)` for scalar fields; nodal fields on the square give half
/// weight to links lying along a wall, so that `‖ψ‖ = |rot ψ|`.
pub fn inner_h1_scalar(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.grid().same_as(b.grid())?;
    if a.location() != b.location() {
        return Err(Error::InvalidParameter(
            "scalar fields at different locations".into(),
        ));
    }
    let g = a.grid();
    let (x, y) = (a.values(), b.values());
    let n = g.n();
    let mut acc = 0.0;
    match (g.kind(), a.location()) {
        (DomainKind::Torus, _) => {
            for j in 0..n {
                for i in 0..n {
                    let k = j * n + i;
                    let kx = j * n + (i + 1) % n;
                    let ky = ((j + 1) % n) * n + i;
                    acc += (x[kx] - x[k]) * (y[kx] - y[k]) + (x[ky] - x[k]) * (y[ky] - y[k]);
                }
            }
        }
        (DomainKind::Square, Location::Center) => {
            for j in 0..n {
                for i in 0..n {
                    let k = j * n + i;
                    if i + 1 < n {
                        acc += (x[k + 1] - x[k]) * (y[k + 1] - y[k]);
                    }
                    if j + 1 < n {
                        acc += (x[k + n] - x[k]) * (y[k + n] - y[k]);
                    }
                }
            }
        }
        (DomainKind::Square, Location::Node) => {
            let s = n + 1;
            for j in 0..s {
                for i in 0..s {
                    let k = j * s + i;
                    if i + 1 < s {
                        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                        acc += w * (x[k + 1] - x[k]) * (y[k + 1] - y[k]);
                    }
                    if j + 1 < s {
                        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                        acc += w * (x[k + s] - x[k]) * (y[k + s] - y[k]);
                    }
                }
            }
        }
    }
    Ok(acc)
}

/// `|a|`, `‖a‖` and, when a basis is supplied, `|A a|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub l2: f64,
    pub h1: f64,
    pub h2proxy: Option<f64>,
}

pub fn norms(a: &VectorField, basis: Option<&StokesBasis>) -> Result<NormReport> {
    let l2 = inner_l2(a, a)?.max(0.0).sqrt();
    let h1 = inner_h1(a, a)?.max(0.0).sqrt();
    let h2proxy = match basis {
        Some(b) => {
            let au = b.projector().apply_stokes(a)?;
            Some(inner_l2(&au, &au)?.max(0.0).sqrt())
        }
        None => None,
    };
    Ok(NormReport { l2, h1, h2proxy })
}
