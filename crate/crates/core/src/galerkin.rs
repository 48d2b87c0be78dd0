//! Galerkin system on the Stokes eigenbasis for the homogenized unknown
//! `u = v − G_ε`, its time integration, and reconstruction of velocity and
//! pressure.
//!
//! With `u_m = Σ c_j w_j` the coefficients obey
//!
//! ```text
//! c′_j = −ν λ_j c_j − Σ_{i,l} B_{ilj} c_i c_l − Σ_i (D_ij + E_ij) c_i + F_j
//! ```
//!
//! with `B_{ilj} = b̃(w_i, w_l, w_j)`, `D_ij = b̃(w_i, G_ε, w_j)`,
//! `E_ij = b̃(G_ε, w_i, w_j)` and `F_j = (f_ε, w_j)`. Time stepping treats the
//! diagonal Stokes term exactly through the integrating factor
//! `exp(−νλ_j t)` and everything else by Heun's method (second order).

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::grid::{DomainKind, Grid};
use crate::lift::{compute_forcing, LiftData, TimeProfile};
use crate::ops::{advect, divergence, face_weights, gradient, inner_h1, inner_l2};
use crate::stokes::StokesBasis;
use crate::ScalarField;

/// Coefficient magnitude treated as blowup.
pub const DEFAULT_BLOWUP: f64 = 1e6;

/// Discretization and tolerance parameters of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub domain: DomainKind,
    /// Cells per side.
    pub n: usize,
    /// Number of Stokes modes.
    pub m: usize,
    pub nu: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Lift cutoff parameter `ε ∈ (0, 1]`.
    pub epsilon: f64,
    /// Relative residual for the stream-function solve.
    pub tol_linear: f64,
    /// Residual target of the reproductive iteration.
    pub tol_fixed_point: f64,
    /// Largest allowed mismatch between the initial wall trace and the
    /// boundary datum.
    pub tol_compat: f64,
    /// `|c|_∞` beyond which the run aborts.
    pub blowup: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            domain: DomainKind::Square,
            n: 48,
            m: 32,
            nu: 1.0,
            t_final: 1.0,
            dt: 1e-3,
            epsilon: 0.05,
            tol_linear: 1e-10,
            tol_fixed_point: 1e-10,
            tol_compat: 1e-10,
            blowup: DEFAULT_BLOWUP,
        }
    }
}

impl SolverConfig {
    /// Field-level validation, independent of the assembled system.
    pub fn validate(&self) -> Result<()> {
        let bad =
            |field: &str, why: String| Err(Error::InvalidParameter(format!("{field}: {why}")));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu", format!("viscosity must be positive, got {}", self.nu));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return bad(
                "t_final",
                format!("horizon must be positive, got {}", self.t_final),
            );
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("time step must be positive, got {}", self.dt));
        }
        let steps = (self.t_final / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final {
            return bad(
                "dt",
                format!(
                    "time step {} does not divide t_final = {}",
                    self.dt, self.t_final
                ),
            );
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return bad(
                "epsilon",
                format!("must lie in (0, 1], got {}", self.epsilon),
            );
        }
        if self.m == 0 {
            return bad("m", "need at least one mode".into());
        }
        for (name, v) in [
            ("tol_linear", self.tol_linear),
            ("tol_fixed_point", self.tol_fixed_point),
            ("tol_compat", self.tol_compat),
            ("blowup", self.blowup),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("must be positive, got {v}"));
            }
        }
        let grid = Grid::new(self.domain, self.n)?;
        let cap = crate::stokes::max_modes(&grid);
        if self.m > cap {
            return bad(
                "m",
                format!("{} modes exceed the cap {cap} for n = {}", self.m, self.n),
            );
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn grid(&self) -> Result<Arc<Grid>> {
        Grid::new(self.domain, self.n)
    }
}

/// Galerkin coefficients `c_j = g_{jm}(t)` at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GalerkinState {
    pub t: f64,
    pub c: Vec<f64>,
}

impl GalerkinState {
    pub fn zeros(m: usize) -> Self {
        GalerkinState {
            t: 0.0,
            c: vec![0.0; m],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.c.iter().all(|x| x.is_finite())
    }

    /// `|u_m|²`.
    pub fn l2_sq(&self) -> f64 {
        self.c.iter().map(|x| x * x).sum()
    }

    /// `‖u_m‖² = Σ λ_j c_j²`.
    pub fn h1_sq(&self, lambda: &[f64]) -> f64 {
        self.c.iter().zip(lambda).map(|(x, l)| l * x * x).sum()
    }

    /// `|A u_m|² = Σ λ_j² c_j²`.
    pub fn a_sq(&self, lambda: &[f64]) -> f64 {
        self.c.iter().zip(lambda).map(|(x, l)| l * l * x * x).sum()
    }
}

/// Energy quantities of one trajectory sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub t: f64,
    /// `|u_m|²`.
    pub l2_sq: f64,
    /// `‖u_m‖²`.
    pub h1_sq: f64,
    /// `|A u_m|²`.
    pub a_sq: f64,
    /// `|f_ε|²` of the forcing field.
    pub f_sq: f64,
    /// `Σ_j (f_ε, w_j)²`, the part of the forcing the Galerkin system sees.
    pub f_proj_sq: f64,
}

/// States at `t_n = n·dt`, `n = 0..=N`, with their energy records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub nu: f64,
    pub states: Vec<GalerkinState>,
    pub energy: Vec<EnergyRecord>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&GalerkinState> {
        self.states.last()
    }

    /// `sup_n ‖u_m(t_n)‖`.
    pub fn max_h1(&self) -> f64 {
        self.energy
            .iter()
            .fold(0.0, |m, e| m.max(e.h1_sq.max(0.0).sqrt()))
    }
}

/// Projected coefficients of the Galerkin system.
#[derive(Debug, Clone)]
pub struct Tensors {
    m: usize,
    nu: f64,
    lambda: Vec<f64>,
    /// `B[(i·m + l)·m + j]`.
    b: Arc<Vec<f64>>,
    /// `D[i·m + j]`.
    d: Vec<f64>,
    e: Vec<f64>,
    /// `(G_ε, w_j)`, `(νΔG_ε, w_j)`, `((G_ε·∇)G_ε, w_j)`.
    f_t: Vec<f64>,
    f_v: Vec<f64>,
    f_c: Vec<f64>,
    /// Gram matrix of the three forcing pieces, for `|f_ε(t)|²`.
    f_gram: [[f64; 3]; 3],
    time: TimeProfile,
}

/// Flatten a field's face values, multiplied by quadrature weights.
fn weighted(f: &VectorField, wu: &[f64], wv: &[f64]) -> Vec<f64> {
    f.u()
        .iter()
        .zip(wu)
        .map(|(a, w)| a * w)
        .chain(f.v().iter().zip(wv).map(|(a, w)| a * w))
        .collect()
}

fn flat(f: &VectorField) -> Vec<f64> {
    f.u().iter().chain(f.v()).copied().collect()
}

/// `B_{ilj}`, computed once per basis and cached in it.
fn convection_tensor(basis: &StokesBasis) -> Result<Arc<Vec<f64>>> {
    if let Some(b) = basis.convection_cell().get() {
        return Ok(b.clone());
    }
    let m = basis.len();
    let (wu, wv) = face_weights(basis.grid());
    let faces = wu.len() + wv.len();
    let wt = DMatrix::from_fn(faces, m, |_, _| 0.0);
    let mut wt = wt;
    for (j, w) in basis.modes().iter().enumerate() {
        wt.column_mut(j).copy_from_slice(&weighted(w, &wu, &wv));
    }
    let slabs: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let mut adv = DMatrix::zeros(faces, m);
            for l in 0..m {
                let a = advect(basis.mode(i), basis.mode(l))?;
                adv.column_mut(l).copy_from_slice(&flat(&a));
            }
            // p[(l, j)] = ((w_i·∇)w_l, w_j)
            let p = adv.transpose() * &wt;
            let mut slab = vec![0.0; m * m];
            for l in 0..m {
                for j in 0..m {
                    slab[l * m + j] = 0.5 * (p[(l, j)] - p[(j, l)]);
                }
            }
            Ok(slab)
        })
        .collect::<Result<_>>()?;
    let b = Arc::new(slabs.concat());
    let _ = basis.convection_cell().set(b.clone());
    Ok(basis.convection_cell().get().cloned().unwrap_or(b))
}

/// Assemble `B`, `D`, `E` and the forcing projections for viscosity `nu`.
pub fn assemble_tensors(basis: &StokesBasis, lift: &LiftData, nu: f64) -> Result<Tensors> {
    basis.grid().same_as(lift.grid())?;
    let m = basis.len();
    let b = convection_tensor(basis)?;
    let mut d = vec![0.0; m * m];
    let mut e = vec![0.0; m * m];
    let mut f_t = vec![0.0; m];
    let mut f_v = vec![0.0; m];
    let mut f_c = vec![0.0; m];
    let mut f_gram = [[0.0; 3]; 3];
    if !lift.is_zero() {
        let g = lift.g_eps();
        let (wu, wv) = face_weights(basis.grid());
        let gw = weighted(g, &wu, &wv);
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..m)
            .into_par_iter()
            .map(|i| -> Result<(Vec<f64>, Vec<f64>)> {
                let wi = basis.mode(i);
                let adv_ig = advect(wi, g)?;
                let adv_gi = advect(g, wi)?;
                let mut d_row = vec![0.0; m];
                let mut x_row = vec![0.0; m];
                for j in 0..m {
                    let wj = basis.mode(j);
                    let q = dot(&flat(&advect(wi, wj)?), &gw);
                    d_row[j] = 0.5 * (inner_l2(&adv_ig, wj)? - q);
                    x_row[j] = inner_l2(&adv_gi, wj)?;
                }
                Ok((d_row, x_row))
            })
            .collect::<Result<_>>()?;
        for (i, (d_row, x_row)) in rows.iter().enumerate() {
            d[i * m..(i + 1) * m].copy_from_slice(d_row);
            for j in 0..m {
                e[i * m + j] += 0.5 * x_row[j];
                e[j * m + i] -= 0.5 * x_row[j];
            }
        }
        let forcing = compute_forcing(lift, nu)?;
        let (gt, gv, gc) = forcing.parts();
        for j in 0..m {
            let wj = basis.mode(j);
            f_t[j] = inner_l2(gt, wj)?;
            f_v[j] = inner_l2(gv, wj)?;
            f_c[j] = inner_l2(gc, wj)?;
        }
        let pieces = [gt, gv, gc];
        for r in 0..3 {
            for s in 0..3 {
                f_gram[r][s] = inner_l2(pieces[r], pieces[s])?;
            }
        }
    }
    Ok(Tensors {
        m,
        nu,
        lambda: basis.eigenvalues().to_vec(),
        b,
        d,
        e,
        f_t,
        f_v,
        f_c,
        f_gram,
        time: lift.data().time,
    })
}

impl Tensors {
    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn b(&self, i: usize, l: usize, j: usize) -> f64 {
        self.b[(i * self.m + l) * self.m + j]
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.m + j]
    }

    pub fn e(&self, i: usize, j: usize) -> f64 {
        self.e[i * self.m + j]
    }

    /// Whether the boundary datum is constant in time.
    pub fn is_steady(&self) -> bool {
        self.time.is_steady()
    }

    /// Time modulation of the boundary datum.
    pub fn factor(&self, t: f64) -> f64 {
        self.time.factor(t)
    }

    /// `F_j(t)`; `dt` is the step of the time grid used for `a′(t)`.
    pub fn forcing(&self, t: f64, dt: f64) -> Vec<f64> {
        let (wt, wv, wc) = self.forcing_weights(t, dt);
        (0..self.m)
            .map(|j| wt * self.f_t[j] + wv * self.f_v[j] - wc * self.f_c[j])
            .collect()
    }

    fn forcing_weights(&self, t: f64, dt: f64) -> (f64, f64, f64) {
        let a = self.time.factor(t);
        (-self.time.derivative(t, dt), a, a * a)
    }

    /// `|f_ε(t)|²` of the forcing field.
    pub fn forcing_field_sq(&self, t: f64, dt: f64) -> f64 {
        let (wt, wv, wc) = self.forcing_weights(t, dt);
        let w = [wt, wv, -wc];
        let mut s = 0.0;
        for r in 0..3 {
            for q in 0..3 {
                s += w[r] * w[q] * self.f_gram[r][q];
            }
        }
        s.max(0.0)
    }

    /// `Σ_{i,l} B_{ilj} c_i c_l` for every `j`.
    pub fn convection(&self, c: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m];
        for i in 0..m {
            if c[i] == 0.0 {
                continue;
            }
            for l in 0..m {
                let a = c[i] * c[l];
                if a == 0.0 {
                    continue;
                }
                let row = &self.b[(i * m + l) * m..(i * m + l + 1) * m];
                for (o, bv) in out.iter_mut().zip(row) {
                    *o += a * bv;
                }
            }
        }
        out
    }

    /// `Σ_i (D_ij + E_ij) c_i` for every `j`, scaled by `a(t)`.
    pub fn coupling(&self, c: &[f64], t: f64) -> Vec<f64> {
        let m = self.m;
        let a = self.time.factor(t);
        let mut out = vec![0.0; m];
        if a == 0.0 {
            return out;
        }
        for i in 0..m {
            if c[i] == 0.0 {
                continue;
            }
            let ci = a * c[i];
            for j in 0..m {
                out[j] += ci * (self.d[i * m + j] + self.e[i * m + j]);
            }
        }
        out
    }

    /// `b̃(u_m, G_ε(t), u_m) = a(t) Σ D_ij c_i c_j`.
    pub fn cross_energy(&self, c: &[f64], t: f64) -> f64 {
        let m = self.m;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                s += c[i] * self.d[i * m + j] * c[j];
            }
        }
        self.time.factor(t) * s
    }

    /// Explicit part of the right side: everything but `−νλ_j c_j`.
    fn explicit(&self, c: &[f64], t: f64, dt: f64) -> Vec<f64> {
        let n = self.convection(c);
        let k = self.coupling(c, t);
        let f = self.forcing(t, dt);
        (0..self.m).map(|j| f[j] - n[j] - k[j]).collect()
    }

    /// Conservative explicit step limit
    /// `0.5 / (max_j Σ_i |D_ij + E_ij| + |c₀|·max_j Σ_{i,l} |B_ilj|)`.
    pub fn stability_bound(&self, c0: &[f64]) -> f64 {
        let m = self.m;
        let a = self.time.sup_factor();
        let mut coupling = 0.0f64;
        let mut conv = 0.0f64;
        for j in 0..m {
            let mut s = 0.0;
            for i in 0..m {
                s += (self.d[i * m + j] + self.e[i * m + j]).abs();
            }
            coupling = coupling.max(a * s);
            let mut s = 0.0;
            for i in 0..m {
                for l in 0..m {
                    s += self.b[(i * m + l) * m + j].abs();
                }
            }
            conv = conv.max(s);
        }
        let norm = c0.iter().map(|x| x * x).sum::<f64>().sqrt();
        let denom = coupling + norm * conv;
        if denom == 0.0 {
            f64::INFINITY
        } else {
            0.5 / denom
        }
    }

    fn record(&self, s: &GalerkinState, dt: f64) -> EnergyRecord {
        let f = self.forcing(s.t, dt);
        EnergyRecord {
            t: s.t,
            l2_sq: s.l2_sq(),
            h1_sq: s.h1_sq(&self.lambda),
            a_sq: s.a_sq(&self.lambda),
            f_sq: self.forcing_field_sq(s.t, dt),
            f_proj_sq: f.iter().map(|x| x * x).sum(),
        }
    }
}

/// Full time derivative `c′` of the Galerkin system.
pub fn rhs(state: &GalerkinState, tensors: &Tensors, nu: f64, dt: f64) -> Vec<f64> {
    let mut out = tensors.explicit(&state.c, state.t, dt);
    for (j, o) in out.iter_mut().enumerate() {
        *o -= nu * tensors.lambda[j] * state.c[j];
    }
    out
}

/// Coefficients of `v₀ − G_ε(·, 0)` and the V-norm of the part the basis
/// misses.
pub fn project_initial(
    v0: &VectorField,
    lift: &LiftData,
    basis: &StokesBasis,
    tol_compat: f64,
) -> Result<(GalerkinState, f64)> {
    basis.grid().same_as(v0.grid())?;
    basis.grid().same_as(lift.grid())?;
    let scale = v0.max_abs().max(1.0);
    let div = divergence(v0).max_abs();
    if div > 1e-8 * scale / basis.grid().h() {
        return Err(Error::InvalidParameter(format!(
            "initial velocity is not divergence-free (max |div| = {div:.3e})"
        )));
    }
    if v0.max_normal_trace() > 1e-12 * scale {
        return Err(Error::InvalidParameter(
            "initial velocity has nonzero wall flux".into(),
        ));
    }
    let g0 = lift.g_eps_at(0.0);
    if basis.grid().is_square() {
        let mismatch = g0.trace_or_zero().max_diff(&v0.trace_or_zero());
        if mismatch > tol_compat {
            return Err(Error::Compatibility {
                mismatch,
                tol: tol_compat,
            });
        }
    }
    let u0 = v0.sub(&g0).with_trace(None);
    let c = basis.coefficients(&u0)?;
    let mut rest = u0.clone();
    rest.axpy(-1.0, &basis.synthesize(&c));
    let err = inner_h1(&rest, &rest)?.max(0.0).sqrt();
    Ok((GalerkinState { t: 0.0, c }, err))
}

/// One integrating-factor Heun step:
///
/// ```text
/// k₁ = N(c_n, t_n)
/// c* = E (c_n + dt k₁)
/// k₂ = N(c*, t_n + dt)
/// c_{n+1} = E c_n + dt/2 (E k₁ + k₂),      E = diag(exp(−νλ_j dt))
/// ```
pub fn step(state: &GalerkinState, tensors: &Tensors, nu: f64, dt: f64) -> GalerkinState {
    let m = tensors.m;
    let decay: Vec<f64> = tensors
        .lambda
        .iter()
        .map(|l| (-nu * l * dt).exp())
        .collect();
    let k1 = tensors.explicit(&state.c, state.t, dt);
    let pred: Vec<f64> = (0..m)
        .map(|j| decay[j] * (state.c[j] + dt * k1[j]))
        .collect();
    let t1 = state.t + dt;
    let k2 = tensors.explicit(&pred, t1, dt);
    let c = (0..m)
        .map(|j| decay[j] * state.c[j] + 0.5 * dt * (decay[j] * k1[j] + k2[j]))
        .collect();
    GalerkinState { t: t1, c }
}

/// Integrate from `u0` over `[0, T]`.
pub fn solve(config: &SolverConfig, u0: &GalerkinState, tensors: &Tensors) -> Result<Trajectory> {
    config.validate()?;
    if u0.c.len() != tensors.m {
        return Err(Error::InvalidParameter(format!(
            "initial state has {} coefficients, system has {} modes",
            u0.c.len(),
            tensors.m
        )));
    }
    if (tensors.nu - config.nu).abs() > 1e-15 * config.nu {
        return Err(Error::InvalidParameter(format!(
            "tensors were assembled for ν = {}, config has ν = {}",
            tensors.nu, config.nu
        )));
    }
    let bound = tensors.stability_bound(&u0.c);
    if config.dt > bound {
        return Err(Error::InvalidParameter(format!(
            "dt: {} exceeds the explicit stability bound {bound:.3e}",
            config.dt
        )));
    }
    let steps = config.steps();
    let dt = config.dt;
    let mut traj = Trajectory {
        dt,
        nu: config.nu,
        states: Vec::with_capacity(steps + 1),
        energy: Vec::with_capacity(steps + 1),
    };
    let mut s = GalerkinState {
        t: 0.0,
        c: u0.c.clone(),
    };
    traj.energy.push(tensors.record(&s, dt));
    traj.states.push(s.clone());
    for n in 1..=steps {
        let mut next = step(&s, tensors, config.nu, dt);
        // pin the clock to the grid so t_N = T exactly
        next.t = n as f64 * dt;
        let big = next.c.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if !next.is_finite() || big > config.blowup {
            log::warn!("blowup at step {n}: |c|_inf = {big:.3e}");
            return Err(Error::Blowup {
                step: n,
                partial: Box::new(traj),
            });
        }
        traj.energy.push(tensors.record(&next, dt));
        traj.states.push(next.clone());
        s = next;
    }
    Ok(traj)
}

/// `v = Σ c_j w_j + G_ε(t)`.
pub fn reconstruct_state(
    state: &GalerkinState,
    basis: &StokesBasis,
    lift: &LiftData,
) -> VectorField {
    let mut v = basis.synthesize(&state.c);
    if !lift.is_zero() {
        v.axpy(1.0, &lift.g_eps_at(state.t));
    }
    v
}

/// Velocity at every sample of the trajectory.
pub fn reconstruct(traj: &Trajectory, basis: &StokesBasis, lift: &LiftData) -> Vec<VectorField> {
    traj.states
        .iter()
        .map(|s| reconstruct_state(s, basis, lift))
        .collect()
}

/// Pressure recovered from the momentum residual, with the residual norms
/// before and after removing its gradient part.
#[derive(Debug, Clone)]
pub struct Pressure {
    /// Zero-mean, cell-centered.
    pub p: ScalarField,
    /// `|r|` with `r = −∂_t v + νΔv − (v·∇)v`.
    pub residual_before: f64,
    /// `|r − ∇p|`.
    pub residual_after: f64,
}

/// Pressure at the later of two consecutive states: the gradient part of
/// the momentum residual, with `∂_t v` by a backward difference.
pub fn recover_pressure(
    prev: &GalerkinState,
    next: &GalerkinState,
    basis: &StokesBasis,
    lift: &LiftData,
    nu: f64,
) -> Result<Pressure> {
    let dt = next.t - prev.t;
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(
            "states must be in increasing time order".into(),
        ));
    }
    let v0 = reconstruct_state(prev, basis, lift);
    let v1 = reconstruct_state(next, basis, lift);
    let mut r = crate::ops::laplacian(&v1);
    r.scale(nu);
    r.axpy(-1.0, &advect(&v1, &v1)?);
    let mut dvdt = v1.sub(&v0).with_trace(None);
    dvdt.scale(1.0 / dt);
    r.axpy(-1.0, &dvdt);
    let r = r.with_trace(None);
    let p = basis.projector().gradient_part(&r)?;
    let after = r.sub(&gradient(&p)?);
    Ok(Pressure {
        residual_before: inner_l2(&r, &r)?.max(0.0).sqrt(),
        residual_after: inner_l2(&after, &after)?.max(0.0).sqrt(),
        p,
    })
}
