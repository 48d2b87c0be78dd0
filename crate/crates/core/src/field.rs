use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Where the samples of a scalar field sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Center,
    Node,
}

#[derive(Debug, Clone)]
pub struct ScalarField {
    grid: Arc<Grid>,
    location: Location,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>, location: Location) -> Self {
        let len = match location {
            Location::Center => grid.cell_count(),
            Location::Node => grid.node_count(),
        };
        ScalarField {
            grid: grid.clone(),
            location,
            values: vec![0.0; len],
        }
    }

    pub fn from_values(grid: &Arc<Grid>, location: Location, values: Vec<f64>) -> Result<Self> {
        let f = Self::zeros(grid, location);
        if values.len() != f.values.len() {
            return Err(Error::InvalidParameter(format!(
                "expected {} scalar samples, got {}",
                f.values.len(),
                values.len()
            )));
        }
        Ok(ScalarField { values, ..f })
    }

    /// Sample `f(x, y)` at the field's locations.
    pub fn from_fn(grid: &Arc<Grid>, location: Location, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid, location);
        match location {
            Location::Center => {
                for j in 0..grid.n() {
                    for i in 0..grid.n() {
                        let (x, y) = grid.cell_center(i, j);
                        out.values[grid.cell_index(i, j)] = f(x, y);
                    }
                }
            }
            Location::Node => {
                let s = grid.nodes_per_side();
                for j in 0..s {
                    for i in 0..s {
                        let (x, y) = grid.node_position(i, j);
                        out.values[grid.node_index(i, j)] = f(x, y);
                    }
                }
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn location(&self) -> Location {
        self.location
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Pointwise product with another field at the same locations.
    pub fn mul(&self, other: &ScalarField) -> Result<ScalarField> {
        self.grid.same_as(&other.grid)?;
        if self.location != other.location {
            return Err(Error::InvalidParameter(
                "scalar fields at different locations".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        Ok(ScalarField {
            values,
            ..self.clone()
        })
    }

    pub fn scaled(&self, s: f64) -> ScalarField {
        ScalarField {
            values: self.values.iter().map(|v| v * s).collect(),
            ..self.clone()
        }
    }
}

/// Tangential velocity prescribed on the four walls of the square, stored as
/// Cartesian components at node positions along each wall: the x-velocity on
/// the bottom and top walls, the y-velocity on the left and right walls. Each
/// array has `n + 1` samples ordered by increasing coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTrace {
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl WallTrace {
    pub fn zeros(n: usize) -> Self {
        WallTrace {
            bottom: vec![0.0; n + 1],
            top: vec![0.0; n + 1],
            left: vec![0.0; n + 1],
            right: vec![0.0; n + 1],
        }
    }

    pub fn walls(&self) -> [&Vec<f64>; 4] {
        [&self.bottom, &self.right, &self.top, &self.left]
    }

    pub fn max_abs(&self) -> f64 {
        self.walls()
            .iter()
            .flat_map(|w| w.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }

    pub fn axpy(&mut self, a: f64, x: &WallTrace) {
        for (dst, src) in [
            (&mut self.bottom, &x.bottom),
            (&mut self.top, &x.top),
            (&mut self.left, &x.left),
            (&mut self.right, &x.right),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += a * s;
            }
        }
    }

    pub fn max_diff(&self, other: &WallTrace) -> f64 {
        self.walls()
            .iter()
            .zip(other.walls())
            .flat_map(|(a, b)| a.iter().zip(b.iter()))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// MAC-staggered velocity: x-component on vertical faces, y-component on
/// horizontal faces. On the square an optional wall trace carries the
/// tangential boundary value used by the ghost-cell closure; `None` means a
/// no-slip wall.
#[derive(Debug, Clone)]
pub struct VectorField {
    grid: Arc<Grid>,
    pub(crate) u: Vec<f64>,
    pub(crate) v: Vec<f64>,
    pub(crate) trace: Option<WallTrace>,
}

impl VectorField {
    pub fn zeros(grid: &Arc<Grid>) -> Self {
        VectorField {
            grid: grid.clone(),
            u: vec![0.0; grid.u_len()],
            v: vec![0.0; grid.v_len()],
            trace: None,
        }
    }

    pub fn from_components(grid: &Arc<Grid>, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != grid.u_len() || v.len() != grid.v_len() {
            return Err(Error::InvalidParameter(format!(
                "velocity layout mismatch: got ({}, {}), expected ({}, {})",
                u.len(),
                v.len(),
                grid.u_len(),
                grid.v_len()
            )));
        }
        Ok(VectorField {
            grid: grid.clone(),
            u,
            v,
            trace: None,
        })
    }

    /// Sample an analytic velocity at the staggered face positions. On the
    /// square the tangential wall trace is sampled too and normal components
    /// on the walls are taken from `f` as well.
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(grid);
        let (ux, uy) = grid.u_shape();
        for j in 0..uy {
            for i in 0..ux {
                let (x, y) = grid.u_position(i, j);
                out.u[grid.u_index(i, j)] = f(x, y).0;
            }
        }
        let (vx, vy) = grid.v_shape();
        for j in 0..vy {
            for i in 0..vx {
                let (x, y) = grid.v_position(i, j);
                out.v[grid.v_index(i, j)] = f(x, y).1;
            }
        }
        if grid.is_square() {
            let n = grid.n();
            let h = grid.h();
            let mut t = WallTrace::zeros(n);
            for k in 0..=n {
                let s = k as f64 * h;
                t.bottom[k] = f(s, 0.0).0;
                t.top[k] = f(s, 1.0).0;
                t.left[k] = f(0.0, s).1;
                t.right[k] = f(1.0, s).1;
            }
            if !t.is_zero() {
                out.trace = Some(t);
            }
        }
        out
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    pub fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn trace(&self) -> Option<&WallTrace> {
        self.trace.as_ref()
    }

    /// Replace the tangential wall trace. Ignored (dropped) on the torus.
    pub fn set_trace(&mut self, trace: Option<WallTrace>) {
        self.trace = if self.grid.is_square() { trace } else { None };
    }

    pub fn with_trace(mut self, trace: Option<WallTrace>) -> Self {
        self.set_trace(trace);
        self
    }

    /// The trace with `None` materialized as zeros.
    pub fn trace_or_zero(&self) -> WallTrace {
        self.trace
            .clone()
            .unwrap_or_else(|| WallTrace::zeros(self.grid.n()))
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(&self.v)
            .fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max_abs_diff(&self, other: &VectorField) -> f64 {
        self.u
            .iter()
            .zip(&other.u)
            .chain(self.v.iter().zip(&other.v))
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// `self += a * x`, traces included.
    pub fn axpy(&mut self, a: f64, x: &VectorField) {
        debug_assert!(self.grid == x.grid);
        for (d, s) in self.u.iter_mut().zip(&x.u) {
            *d += a * s;
        }
        for (d, s) in self.v.iter_mut().zip(&x.v) {
            *d += a * s;
        }
        if let Some(xt) = &x.trace {
            let mut t = self.trace_or_zero();
            t.axpy(a, xt);
            self.trace = Some(t);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.u
            .iter_mut()
            .chain(self.v.iter_mut())
            .for_each(|x| *x *= s);
        if let Some(t) = &mut self.trace {
            for w in [&mut t.bottom, &mut t.top, &mut t.left, &mut t.right] {
                w.iter_mut().for_each(|x| *x *= s);
            }
        }
    }

    pub fn scaled(&self, s: f64) -> VectorField {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn add(&self, other: &VectorField) -> VectorField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &VectorField) -> VectorField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Largest normal velocity on the walls of the square (zero on the torus).
    pub fn max_normal_trace(&self) -> f64 {
        if !self.grid.is_square() {
            return 0.0;
        }
        let g = &self.grid;
        let n = g.n();
        let mut m = 0.0f64;
        for j in 0..n {
            m = m
                .max(self.u[g.u_index(0, j)].abs())
                .max(self.u[g.u_index(n, j)].abs());
        }
        for i in 0..n {
            m = m
                .max(self.v[g.v_index(i, 0)].abs())
                .max(self.v[g.v_index(i, n)].abs());
        }
        m
    }

    /// Zero the normal components on the walls.
    pub fn clear_normal_trace(&mut self) {
        if !self.grid.is_square() {
            return;
        }
        let n = self.grid.n();
        for j in 0..n {
            let a = self.grid.u_index(0, j);
            let b = self.grid.u_index(n, j);
            self.u[a] = 0.0;
            self.u[b] = 0.0;
        }
        for i in 0..n {
            let a = self.grid.v_index(i, 0);
            let b = self.grid.v_index(i, n);
            self.v[a] = 0.0;
            self.v[b] = 0.0;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|x| x.is_finite())
    }
}
