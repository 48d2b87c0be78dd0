//! Leray projection and the eigenbasis of the discrete Stokes operator
//! `A = −PΔ`.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::field::{Location, ScalarField, VectorField};
use crate::grid::{DomainKind, Grid};
use crate::lanczos::{smallest_eigenpairs, LanczosOptions};
use crate::ops::{divergence, gradient, inner_h1, inner_l2, laplacian};
use crate::poisson::{Closure, SeparablePoisson};
use crate::stream::{self, StreamOperator};

/// L²-orthogonal projection onto discretely divergence-free fields with
/// zero wall flux.
#[derive(Debug, Clone)]
pub struct LerayProjector {
    grid: Arc<Grid>,
    poisson: SeparablePoisson,
}

impl LerayProjector {
    pub fn new(grid: &Arc<Grid>) -> Self {
        let closure = match grid.kind() {
            DomainKind::Square => Closure::Neumann,
            DomainKind::Torus => Closure::Periodic,
        };
        LerayProjector {
            grid: grid.clone(),
            poisson: SeparablePoisson::new(closure, grid.n(), grid.h()),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Zero-mean `φ` with `Δφ = div u` and `∂φ/∂n = u·n`.
    pub fn potential(&self, u: &VectorField) -> Result<ScalarField> {
        self.grid.same_as(u.grid())?;
        let mut interior = u.clone();
        interior.clear_normal_trace();
        let d = divergence(&interior);
        let rhs: Vec<f64> = d.values().iter().map(|v| -v).collect();
        let phi = self.poisson.solve(&rhs);
        ScalarField::from_values(&self.grid, Location::Center, phi)
    }

    /// `P u = u − ∇φ`; the result has zero normal trace and no tangential
    /// trace.
    pub fn project(&self, u: &VectorField) -> Result<VectorField> {
        let phi = self.potential(u)?;
        let mut out = u.clone().with_trace(None);
        out.clear_normal_trace();
        out.axpy(-1.0, &gradient(&phi)?);
        Ok(out)
    }

    /// `A u = −P Δu` with the no-slip (or trace) ghost closure.
    pub fn apply_stokes(&self, u: &VectorField) -> Result<VectorField> {
        let mut lap = self.project(&laplacian(u))?;
        lap.scale(-1.0);
        Ok(lap)
    }

    /// Zero-mean scalar whose gradient is the gradient part of `r`
    /// (`r = P r + ∇p`).
    pub fn gradient_part(&self, r: &VectorField) -> Result<ScalarField> {
        let mut phi = self.potential(r)?;
        let mean = phi.mean();
        phi.values_mut().iter_mut().for_each(|v| *v -= mean);
        Ok(phi)
    }
}

/// Free-function form of [`LerayProjector::project`].
pub fn leray_project(u: &VectorField, p: &LerayProjector) -> Result<VectorField> {
    p.project(u)
}

/// Free-function form of [`LerayProjector::apply_stokes`].
pub fn apply_stokes(u: &VectorField, p: &LerayProjector) -> Result<VectorField> {
    p.apply_stokes(u)
}

#[derive(Debug, Clone)]
pub struct EigenOptions {
    pub seed: u64,
    /// Relative eigen-residual target.
    pub tol: f64,
    /// Residual accepted when the iteration stagnates above `tol`.
    pub accept_tol: f64,
    pub block: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            seed: 0x5eed,
            tol: 1e-11,
            accept_tol: 1e-9,
            block: 8,
        }
    }
}

/// First `m` eigenpairs `(w_j, λ_j)` of the discrete Stokes operator,
/// L²-orthonormal with ascending eigenvalues.
#[derive(Debug)]
pub struct StokesBasis {
    grid: Arc<Grid>,
    modes: Vec<VectorField>,
    eigenvalues: Vec<f64>,
    projector: LerayProjector,
    convection: OnceLock<Arc<Vec<f64>>>,
}

impl Clone for StokesBasis {
    fn clone(&self) -> Self {
        let convection = OnceLock::new();
        if let Some(c) = self.convection.get() {
            let _ = convection.set(c.clone());
        }
        StokesBasis {
            grid: self.grid.clone(),
            modes: self.modes.clone(),
            eigenvalues: self.eigenvalues.clone(),
            projector: self.projector.clone(),
            convection,
        }
    }
}

impl StokesBasis {
    /// Wrap precomputed modes (for example from a cache file). No checks are
    /// made here; see [`StokesBasis::orthonormality_error`].
    pub fn from_parts(
        grid: &Arc<Grid>,
        eigenvalues: Vec<f64>,
        modes: Vec<VectorField>,
    ) -> Result<Self> {
        if eigenvalues.len() != modes.len() || modes.is_empty() {
            return Err(Error::InvalidParameter(
                "eigenvalue/mode count mismatch".into(),
            ));
        }
        for w in &modes {
            grid.same_as(w.grid())?;
        }
        Ok(StokesBasis {
            grid: grid.clone(),
            modes,
            eigenvalues,
            projector: LerayProjector::new(grid),
            convection: OnceLock::new(),
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[VectorField] {
        &self.modes
    }

    pub fn mode(&self, j: usize) -> &VectorField {
        &self.modes[j]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projector(&self) -> &LerayProjector {
        &self.projector
    }

    /// Sharp discrete Poincaré constant `1/√λ₁`.
    pub fn poincare_constant(&self) -> f64 {
        1.0 / self.eigenvalues[0].sqrt()
    }

    /// The first `m` modes as a new basis.
    pub fn truncated(&self, m: usize) -> Result<StokesBasis> {
        if m == 0 || m > self.len() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate {} modes to {m}",
                self.len()
            )));
        }
        StokesBasis::from_parts(
            &self.grid,
            self.eigenvalues[..m].to_vec(),
            self.modes[..m].to_vec(),
        )
    }

    /// `Σ c_j w_j`.
    pub fn synthesize(&self, coeffs: &[f64]) -> VectorField {
        let mut out = VectorField::zeros(&self.grid);
        for (c, w) in coeffs.iter().zip(&self.modes) {
            if *c != 0.0 {
                out.axpy(*c, w);
            }
        }
        out
    }

    /// L² coefficients `(u, w_j)`.
    pub fn coefficients(&self, u: &VectorField) -> Result<Vec<f64>> {
        self.modes.iter().map(|w| inner_l2(u, w)).collect()
    }

    /// `max |(w_i, w_j) − δ_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let m = self.len();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..=i {
                let ip = inner_l2(&self.modes[i], &self.modes[j]).unwrap_or(f64::NAN);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ip - target).abs());
            }
        }
        worst
    }

    /// `max |((w_i, w_j)) − λ_i δ_ij| / λ_max`.
    pub fn h1_orthogonality_error(&self) -> f64 {
        let m = self.len();
        let scale = self.eigenvalues[m - 1];
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..=i {
                let ip = inner_h1(&self.modes[i], &self.modes[j]).unwrap_or(f64::NAN);
                let target = if i == j { self.eigenvalues[i] } else { 0.0 };
                worst = worst.max((ip - target).abs() / scale);
            }
        }
        worst
    }

    /// `‖A w_j − λ_j w_j‖ / λ_j` for every mode, with `A` applied through
    /// the Leray projector.
    pub fn eigen_residuals(&self) -> Result<Vec<f64>> {
        self.modes
            .iter()
            .zip(&self.eigenvalues)
            .map(|(w, &lam)| {
                let mut r = self.projector.apply_stokes(w)?;
                r.axpy(-lam, w);
                Ok(inner_l2(&r, &r)?.max(0.0).sqrt() / lam)
            })
            .collect()
    }

    pub(crate) fn convection_cell(&self) -> &OnceLock<Arc<Vec<f64>>> {
        &self.convection
    }
}

/// Largest admissible mode count: a quarter of the discrete solenoidal
/// dimension.
pub fn max_modes(grid: &Grid) -> usize {
    grid.solenoidal_dim() / 4
}

pub fn compute_eigenbasis(grid: &Arc<Grid>, m: usize, opts: &EigenOptions) -> Result<StokesBasis> {
    if m == 0 || m > max_modes(grid) {
        return Err(Error::InvalidParameter(format!(
            "mode count {m} outside 1..={} for this grid",
            max_modes(grid)
        )));
    }
    let (eigenvalues, mut modes) = match grid.kind() {
        DomainKind::Square => square_modes(grid, m, opts)?,
        DomainKind::Torus => torus_modes(grid, m),
    };
    for w in &mut modes {
        fix_sign(w);
    }
    log::debug!("stokes basis: {} modes, λ₁ = {:.6}", m, eigenvalues[0]);
    StokesBasis::from_parts(grid, eigenvalues, modes)
}

fn square_modes(
    grid: &Arc<Grid>,
    m: usize,
    opts: &EigenOptions,
) -> Result<(Vec<f64>, Vec<VectorField>)> {
    let op = StreamOperator::new(grid)?;
    let lopts = LanczosOptions {
        block: opts.block,
        tol: opts.tol,
        accept_tol: opts.accept_tol,
        max_dim: stream::interior_dim(grid).min(20 * m + 400),
        seed: opts.seed,
    };
    let pairs = smallest_eigenpairs(op.stiffness(), op.mass(), m, &lopts)?;
    let modes = pairs
        .vectors
        .iter()
        .map(|psi| {
            let mut w = stream::velocity(grid, psi);
            let norm = inner_l2(&w, &w).unwrap().sqrt();
            w.scale(1.0 / norm);
            w
        })
        .collect();
    Ok((pairs.values, modes))
}

/// Closed-form modes on the torus: `rot` of discrete Fourier stream
/// functions, which diagonalize the periodic MAC Stokes operator exactly.
fn torus_modes(grid: &Arc<Grid>, m: usize) -> (Vec<f64>, Vec<VectorField>) {
    let n = grid.n() as i64;
    let h = grid.h();
    let half = n / 2;
    let wrap = |k: i64| -> i64 {
        let r = k.rem_euclid(n);
        if r > half {
            r - n
        } else {
            r
        }
    };
    let sym = |k: i64| -> f64 { (k as f64 * h / 2.0).sin().powi(2) };
    // one representative per ± pair, then cos/sin variants
    let mut waves: Vec<(f64, i64, i64, bool)> = Vec::new();
    for k1 in -half + 1..=half {
        for k2 in -half + 1..=half {
            if k1 == 0 && k2 == 0 {
                continue;
            }
            let partner = (wrap(-k1), wrap(-k2));
            if (k1, k2) < partner {
                continue;
            }
            let lam = 4.0 / (h * h) * (sym(k1) + sym(k2));
            waves.push((lam, k1, k2, false));
            if (k1, k2) != partner {
                waves.push((lam, k1, k2, true));
            }
        }
    }
    waves.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.abs().cmp(&b.1.abs()))
            .then(b.1.cmp(&a.1))
            .then(b.2.cmp(&a.2))
            .then(a.3.cmp(&b.3))
    });
    let mut values = Vec::with_capacity(m);
    let mut modes = Vec::with_capacity(m);
    for &(lam, k1, k2, is_sin) in &waves {
        if modes.len() == m {
            break;
        }
        let psi = ScalarField::from_fn(grid, Location::Node, |x, y| {
            let phase = k1 as f64 * x + k2 as f64 * y;
            if is_sin {
                phase.sin()
            } else {
                phase.cos()
            }
        });
        let mut w = crate::ops::rot(&psi).expect("nodal field");
        let norm = inner_l2(&w, &w).unwrap().sqrt();
        if norm < 1e-12 {
            continue;
        }
        w.scale(1.0 / norm);
        values.push(lam);
        modes.push(w);
    }
    (values, modes)
}

/// Make the first significant sample of the mode positive.
fn fix_sign(w: &mut VectorField) {
    let max = w.max_abs();
    let first = w
        .u()
        .iter()
        .chain(w.v())
        .copied()
        .find(|x| x.abs() > 1e-8 * max)
        .unwrap_or(0.0);
    if first < 0.0 {
        w.scale(-1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{divergence, inner_l2};
    use crate::stream::{interior_dim, StreamOperator};
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(g: &Arc<Grid>, seed: u64) -> VectorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = (0..g.u_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let v = (0..g.v_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        VectorField::from_components(g, u, v).unwrap()
    }

    #[test]
    fn projection_leaves_solenoidal_fields_unchanged() {
        let g = Grid::square(12).unwrap();
        let p = LerayProjector::new(&g);
        let u = p.project(&random_field(&g, 1)).unwrap();
        let pu = p.project(&u).unwrap();
        assert!(pu.max_abs_diff(&u) < 1e-12);
        assert!(divergence(&u).max_abs() < 1e-11);
    }

    #[test]
    fn projection_is_idempotent_and_symmetric() {
        for g in [Grid::square(10).unwrap(), Grid::torus(10).unwrap()] {
            let p = LerayProjector::new(&g);
            let a = random_field(&g, 2);
            let b = random_field(&g, 3);
            let pa = p.project(&a).unwrap();
            let ppa = p.project(&pa).unwrap();
            let d = ppa.sub(&pa);
            assert!(inner_l2(&d, &d).unwrap().sqrt() < 1e-12);
            let mut a0 = a.clone();
            a0.clear_normal_trace();
            let mut b0 = b.clone();
            b0.clear_normal_trace();
            let lhs = inner_l2(&pa, &b0).unwrap();
            let rhs = inner_l2(&a0, &p.project(&b).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_removes_gradients() {
        let g = Grid::square(32).unwrap();
        let p = LerayProjector::new(&g);
        // ∇ of cos(πx)cos(πy) has zero normal component on the walls
        let u = VectorField::from_fn(&g, |x, y| {
            let pi = std::f64::consts::PI;
            (
                -pi * (pi * x).sin() * (pi * y).cos(),
                -pi * (pi * x).cos() * (pi * y).sin(),
            )
        })
        .with_trace(None);
        let pu = p.project(&u).unwrap();
        let rel = (inner_l2(&pu, &pu).unwrap() / inner_l2(&u, &u).unwrap()).sqrt();
        assert!(rel < 5e-3, "{rel}");
    }

    #[test]
    fn torus_fourier_mode_eigenvalue() {
        let g = Grid::torus(32).unwrap();
        let p = LerayProjector::new(&g);
        let w = VectorField::from_fn(&g, |x, y| (x.sin() * y.cos(), -x.cos() * y.sin()));
        let aw = p.apply_stokes(&w).unwrap();
        let lam = inner_l2(&aw, &w).unwrap() / inner_l2(&w, &w).unwrap();
        assert!((lam - 2.0).abs() < 2.0 * (g.h() * g.h()) / 6.0, "{lam}");
        let mut r = aw.clone();
        r.axpy(-lam, &w);
        assert!(inner_l2(&r, &r).unwrap().sqrt() < 1e-10);
    }

    #[test]
    fn stokes_form_equals_dirichlet_form_on_v() {
        let g = Grid::square(10).unwrap();
        let p = LerayProjector::new(&g);
        let u = p.project(&random_field(&g, 4)).unwrap();
        let au = p.apply_stokes(&u).unwrap();
        let a = inner_l2(&au, &u).unwrap();
        let b = inner_h1(&u, &u).unwrap();
        assert!((a - b).abs() < 1e-8 * b, "{a} vs {b}");
    }

    #[test]
    fn square_basis_matches_dense_oracle() {
        let g = Grid::square(10).unwrap();
        let m = 12;
        let basis = compute_eigenbasis(&g, m, &EigenOptions::default()).unwrap();
        // dense generalized eigensolve of the same pencil
        let op = StreamOperator::new(&g).unwrap();
        let dim = interior_dim(&g);
        let k = DMatrix::from_fn(dim, dim, |r, c| op.stiffness().get(r, c));
        let mm = DMatrix::from_fn(dim, dim, |r, c| op.mass().get(r, c));
        let l = mm.cholesky().unwrap().l();
        let linv = l.clone().try_inverse().unwrap();
        let c = &linv * k * linv.transpose();
        let mut ev: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        for j in 0..m {
            assert!((basis.eigenvalues()[j] - ev[j]).abs() < 1e-9 * ev[j], "{j}");
        }
        assert!(basis.orthonormality_error() < 1e-10);
        assert!(basis.h1_orthogonality_error() < 1e-8);
        for r in basis.eigen_residuals().unwrap() {
            assert!(r < 1e-8, "{r}");
        }
    }

    #[test]
    fn modes_are_solenoidal_and_sorted() {
        let g = Grid::square(12).unwrap();
        let basis = compute_eigenbasis(&g, 8, &EigenOptions::default()).unwrap();
        for w in basis.modes() {
            assert!(divergence(w).max_abs() < 1e-10);
            assert!(w.max_normal_trace() == 0.0);
        }
        assert!(basis.eigenvalues().windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn torus_smallest_eigenvalue_is_one() {
        let g = Grid::torus(64).unwrap();
        let basis = compute_eigenbasis(&g, 8, &EigenOptions::default()).unwrap();
        assert!((basis.eigenvalues()[0] - 1.0).abs() < 1e-3);
        assert!((basis.eigenvalues()[4] - 2.0).abs() < 2e-3);
        assert!(basis.orthonormality_error() < 1e-10);
        for r in basis.eigen_residuals().unwrap() {
            assert!(r < 1e-8);
        }
    }

    #[test]
    fn rejects_too_many_modes() {
        let g = Grid::square(8).unwrap();
        assert!(compute_eigenbasis(&g, 20, &EigenOptions::default()).is_err());
    }
}
