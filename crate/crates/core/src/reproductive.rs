//! Reproductive solutions: the map `L: u₀ ↦ u(T)` of the homogenized
//! problem, measurement of its contraction constant, and Picard iteration to
//! its fixed point `u₀* = L(u₀*)`, which yields a flow with `v(T) = v(0)`.
//!
//! The contraction argument only holds for small data. The smallness
//! constants are not constructive, so they are calibrated empirically by an
//! amplitude sweep ([`amplitude_sweep`], [`Calibration::from_sweep`]) and every
//! run's actual data are checked against them ([`validate_budget`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::galerkin::{reconstruct_state, solve, GalerkinState, SolverConfig, Tensors};
use crate::grid::Grid;
use crate::lift::{BoundaryData, LiftData};
use crate::stokes::StokesBasis;

/// Relative slack on the `e^{−νT}` contraction envelope.
pub const DEFAULT_CONTRACTION_TOLERANCE: f64 = 0.1;

/// `‖a − b‖ = (Σ λ_j (a_j − b_j)²)^{1/2}`, the V-norm of a coefficient
/// difference.
pub fn v_distance(a: &[f64], b: &[f64], lambda: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lambda)
        .map(|((x, y), l)| l * (x - y) * (x - y))
        .sum::<f64>()
        .max(0.0)
        .sqrt()
}

/// `|a − b|`, the L² norm of a coefficient difference.
pub fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Result of one application of `L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapOutput {
    /// `u(T)`, with its time reset to 0 so it can be fed back as a datum.
    pub state: GalerkinState,
    /// `sup_t ‖u(t)‖` along the trajectory.
    pub sup_h1: f64,
    /// Whether the trajectory left the ball `{‖u‖ ≤ M}` (when `M` is given).
    pub left_ball: bool,
}

/// `L(u₀) = u(T)` for steady boundary data.
///
/// Leaving the ball `{‖u‖ ≤ M}` is logged as a warning and flagged in the
/// output, not treated as an error.
pub fn map_l(
    u0: &GalerkinState,
    config: &SolverConfig,
    tensors: &Tensors,
    ball: Option<f64>,
) -> Result<MapOutput> {
    if !tensors.is_steady() {
        return Err(Error::InvalidParameter(
            "the reproductive map needs boundary data constant in time".into(),
        ));
    }
    let start = GalerkinState {
        t: 0.0,
        c: u0.c.clone(),
    };
    let traj = solve(config, &start, tensors)?;
    let sup_h1 = traj.max_h1();
    let left_ball = ball.is_some_and(|m| sup_h1 > m);
    if left_ball {
        log::warn!(
            "trajectory left the ball: sup ‖u‖ = {sup_h1:.3e} > M = {:.3e}",
            ball.unwrap_or(0.0)
        );
    }
    let last = traj.states.last().cloned().unwrap_or(start);
    Ok(MapOutput {
        state: GalerkinState { t: 0.0, c: last.c },
        sup_h1,
        left_ball,
    })
}

/// Empirical smallness constants for one grid and viscosity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Largest admissible boundary-norm proxy `‖g‖`.
    pub alpha: f64,
    /// Largest admissible forcing norm `|f_ε|`.
    pub k_force: f64,
    /// Radius `M` of the invariant ball `{‖u‖ ≤ M}`.
    pub m_ball: f64,
}

/// The run's actual data checked against a [`Calibration`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallnessBudget {
    pub alpha: f64,
    pub k_force: f64,
    pub m_ball: f64,
    /// `‖g‖` proxy of the run: `(∫_Γ g² ds + ∫_Γ (∂_s g)² ds)^{1/2}`.
    pub g_norm: f64,
    /// `sup_t |f_ε(t)|` of the run (steady data: the single value).
    pub f_norm: f64,
    pub alpha_ok: bool,
    pub k_ok: bool,
}

impl SmallnessBudget {
    pub fn passed(&self) -> bool {
        self.alpha_ok && self.k_ok
    }
}

/// Evaluate the run's `‖g‖` and `|f_ε|` against the calibrated constants.
/// Zero data satisfy every budget.
pub fn validate_budget(
    g: &BoundaryData,
    grid: &Grid,
    tensors: &Tensors,
    dt: f64,
    calibration: &Calibration,
) -> Result<SmallnessBudget> {
    let (g_norm, f_norm) = if g.is_zero() || !grid.is_square() {
        (0.0, 0.0)
    } else {
        (
            g.norm_proxy(grid)?,
            tensors.forcing_field_sq(0.0, dt).sqrt(),
        )
    };
    Ok(SmallnessBudget {
        alpha: calibration.alpha,
        k_force: calibration.k_force,
        m_ball: calibration.m_ball,
        g_norm,
        f_norm,
        alpha_ok: g_norm <= calibration.alpha,
        k_ok: f_norm <= calibration.k_force,
    })
}

/// One measured pair `(u₀, y₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMeasurement {
    pub index: usize,
    /// `‖u₀ − y₀‖`.
    pub initial: f64,
    /// `‖L u₀ − L y₀‖`.
    pub mapped: f64,
    /// `mapped / initial`, 0 for coincident data.
    pub ratio: f64,
    pub left_ball: bool,
}

/// Contraction measurement over seeded random pairs in `B_M`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub pairs: Vec<PairMeasurement>,
    /// Largest ratio over pairs with distinct data.
    pub max_ratio: f64,
    /// `e^{−νT}`.
    pub envelope: f64,
}

impl ContractionReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_ratio <= self.envelope * (1.0 + tol)
    }
}

/// A random state with `‖u‖ = radius`: Gaussian coefficients scaled by
/// `λ_j^{-1/2}` (so every mode has equal V-norm weight), then normalized.
pub fn random_state(rng: &mut impl Rng, lambda: &[f64], radius: f64) -> GalerkinState {
    let mut c: Vec<f64> = lambda
        .iter()
        .map(|l| rng.sample::<f64, _>(StandardNormal) / l.sqrt())
        .collect();
    let zero = vec![0.0; c.len()];
    let norm = v_distance(&c, &zero, lambda);
    if norm > 0.0 {
        c.iter_mut().for_each(|x| *x *= radius / norm);
    }
    GalerkinState { t: 0.0, c }
}

/// [`random_state`] drawn from a generator seeded with `seed`.
pub fn seeded_state(lambda: &[f64], radius: f64, seed: u64) -> GalerkinState {
    random_state(&mut ChaCha8Rng::seed_from_u64(seed), lambda, radius)
}

/// `pairs` seeded random pairs with norms uniform in `[M/10, M]`.
pub fn sample_pairs(
    lambda: &[f64],
    m_ball: f64,
    pairs: usize,
    seed: u64,
) -> Vec<(GalerkinState, GalerkinState)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pairs)
        .map(|_| {
            let ru = m_ball * rng.random_range(0.1..=1.0);
            let ry = m_ball * rng.random_range(0.1..=1.0);
            (
                random_state(&mut rng, lambda, ru),
                random_state(&mut rng, lambda, ry),
            )
        })
        .collect()
}

/// Largest measured `‖L u₀ − L y₀‖ / ‖u₀ − y₀‖` over seeded random pairs in
/// `B_M`. Pairs run in parallel; the result does not depend on scheduling.
pub fn measure_contraction(
    config: &SolverConfig,
    tensors: &Tensors,
    budget: &SmallnessBudget,
    pairs: usize,
    seed: u64,
) -> Result<ContractionReport> {
    if !budget.passed() {
        return Err(Error::RegimeViolation(format!(
            "data outside the calibrated budget: ‖g‖ = {:.3e} (α = {:.3e}), |f| = {:.3e} (K = {:.3e})",
            budget.g_norm, budget.alpha, budget.f_norm, budget.k_force
        )));
    }
    let lambda = tensors.lambda();
    let samples = sample_pairs(lambda, budget.m_ball, pairs, seed);
    let measured: Vec<PairMeasurement> = samples
        .par_iter()
        .enumerate()
        .map(|(index, (u0, y0))| -> Result<PairMeasurement> {
            let lu = map_l(u0, config, tensors, Some(budget.m_ball))?;
            let ly = map_l(y0, config, tensors, Some(budget.m_ball))?;
            let initial = v_distance(&u0.c, &y0.c, lambda);
            let mapped = v_distance(&lu.state.c, &ly.state.c, lambda);
            let ratio = if initial == 0.0 {
                log::info!("pair {index}: coincident data, excluded");
                0.0
            } else {
                mapped / initial
            };
            Ok(PairMeasurement {
                index,
                initial,
                mapped,
                ratio,
                left_ball: lu.left_ball || ly.left_ball,
            })
        })
        .collect::<Result<_>>()?;
    let max_ratio = measured.iter().map(|p| p.ratio).fold(0.0, f64::max);
    Ok(ContractionReport {
        pairs: measured,
        max_ratio,
        envelope: (-config.nu * config.t_final).exp(),
    })
}

/// One Picard iterate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub k: usize,
    /// `r_k = ‖L u_k − u_k‖`.
    pub residual: f64,
    /// `|L u_k − u_k|`.
    pub residual_l2: f64,
    /// `r_k / r_{k−1}` (absent for `k = 0` or `r_{k−1} = 0`).
    pub ratio: Option<f64>,
    pub sup_h1: f64,
}

/// Outcome of the reproductive iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub iterates: Vec<Iterate>,
    pub converged: bool,
    pub tol: f64,
    /// `u₀*`: the last iterate `u_K`, for which `‖L u_K − u_K‖ = r_K`.
    pub datum: GalerkinState,
    /// `L u₀*`.
    pub image: GalerkinState,
}

impl FixedPointReport {
    pub fn residuals(&self) -> Vec<f64> {
        self.iterates.iter().map(|i| i.residual).collect()
    }

    /// Largest `r_{k+1}/r_k`, ignoring steps that start at a zero residual.
    pub fn max_ratio(&self) -> f64 {
        self.iterates
            .iter()
            .filter_map(|i| i.ratio)
            .fold(0.0, f64::max)
    }

    /// Number of applications of `L` performed.
    pub fn iterations(&self) -> usize {
        self.iterates.len()
    }

    /// Reproductive velocity `v₀ = u₀* + G_ε`.
    pub fn velocity(&self, basis: &StokesBasis, lift: &LiftData) -> VectorField {
        reconstruct_state(&self.datum, basis, lift)
    }
}

/// Options of the Picard iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Ball radius `M` for the exit warning.
    pub ball: Option<f64>,
}

/// Picard iteration `u_{k+1} = L(u_k)` from `u_init` until
/// `‖L u_k − u_k‖ ≤ tol`; fails with [`Error::NonConvergence`] after
/// `max_iter` applications of `L`.
pub fn find_reproductive(
    config: &SolverConfig,
    tensors: &Tensors,
    u_init: &GalerkinState,
    opts: &PicardOptions,
) -> Result<FixedPointReport> {
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::InvalidParameter(
            "need tol > 0 and max_iter ≥ 1".into(),
        ));
    }
    let lambda = tensors.lambda();
    let mut u = GalerkinState {
        t: 0.0,
        c: u_init.c.clone(),
    };
    let mut iterates: Vec<Iterate> = Vec::new();
    for k in 0..opts.max_iter {
        let out = map_l(&u, config, tensors, opts.ball)?;
        let residual = v_distance(&out.state.c, &u.c, lambda);
        let residual_l2 = l2_distance(&out.state.c, &u.c);
        let ratio = iterates
            .last()
            .filter(|p| p.residual > 0.0)
            .map(|p| residual / p.residual);
        log::info!("picard k = {k}: residual {residual:.3e} (L2 {residual_l2:.3e})");
        iterates.push(Iterate {
            k,
            residual,
            residual_l2,
            ratio,
            sup_h1: out.sup_h1,
        });
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tol {
            return Ok(FixedPointReport {
                iterates,
                converged: true,
                tol: opts.tol,
                datum: u,
                image: out.state,
            });
        }
        u = out.state;
    }
    let residuals: Vec<f64> = iterates.iter().map(|i| i.residual).collect();
    Err(Error::NonConvergence {
        iterations: iterates.len(),
        last: residuals.last().copied().unwrap_or(f64::NAN),
        residuals,
    })
}

/// `⌈ln(r₀/tol)/(νT)⌉ + 2`: iterations a contraction with constant
/// `e^{−νT}` needs to bring `r₀` below `tol`.
pub fn iteration_bound(r0: f64, tol: f64, nu: f64, t_final: f64) -> usize {
    if r0 <= tol {
        return 2;
    }
    ((r0 / tol).ln() / (nu * t_final)).ceil() as usize + 2
}

/// One amplitude of a regime sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub amplitude: f64,
    pub g_norm: f64,
    pub f_norm: f64,
    /// `sup_t ‖u(t)‖` of the run from `u₀ = 0`.
    pub sup_h1: f64,
    /// Largest contraction ratio over pairs in the ball of radius
    /// `2·sup_h1` (`NaN` if a run blew up or violated the step limit).
    pub max_ratio: f64,
    /// `max_ratio ≤ e^{−νT}(1 + tol)`.
    pub within: bool,
}

/// Contraction measured at each amplitude of `data(amplitude)`.
///
/// For every amplitude the ball radius is twice the largest norm reached
/// from `u₀ = 0`.
pub fn amplitude_sweep(
    config: &SolverConfig,
    basis: &StokesBasis,
    data: impl Fn(f64) -> BoundaryData,
    amplitudes: &[f64],
    pairs: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<SweepRow>> {
    let grid = basis.grid();
    let mut rows = Vec::with_capacity(amplitudes.len());
    for &amplitude in amplitudes {
        let g = data(amplitude);
        let lift = crate::lift::build_lift(&g, config.epsilon, grid)?;
        let tensors = crate::galerkin::assemble_tensors(basis, &lift, config.nu)?;
        let g_norm = g.norm_proxy(grid)?;
        let f_norm = tensors.forcing_field_sq(0.0, config.dt).sqrt();
        let row = |sup_h1: f64, max_ratio: f64| SweepRow {
            amplitude,
            g_norm,
            f_norm,
            sup_h1,
            max_ratio,
            within: max_ratio <= (-config.nu * config.t_final).exp() * (1.0 + tol),
        };
        let base = match map_l(&GalerkinState::zeros(basis.len()), config, &tensors, None) {
            Ok(out) => out,
            Err(Error::Blowup { .. }) | Err(Error::InvalidParameter(_)) => {
                rows.push(row(f64::NAN, f64::NAN));
                continue;
            }
            Err(e) => return Err(e),
        };
        let open = SmallnessBudget {
            alpha: f64::INFINITY,
            k_force: f64::INFINITY,
            m_ball: 2.0 * base.sup_h1.max(f64::MIN_POSITIVE),
            g_norm,
            f_norm,
            alpha_ok: true,
            k_ok: true,
        };
        match measure_contraction(config, &tensors, &open, pairs, seed) {
            Ok(rep) => rows.push(row(base.sup_h1, rep.max_ratio)),
            Err(Error::Blowup { .. }) | Err(Error::InvalidParameter(_)) => {
                rows.push(row(base.sup_h1, f64::NAN))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(rows)
}

/// Smallest swept amplitude at which contraction fails, if any.
pub fn regime_edge(rows: &[SweepRow]) -> Option<f64> {
    rows.iter().find(|r| !r.within).map(|r| r.amplitude)
}

impl Calibration {
    /// Constants of the largest amplitude below the regime edge, with the
    /// ball radius of that amplitude. `None` if no amplitude contracted.
    pub fn from_sweep(rows: &[SweepRow]) -> Option<Calibration> {
        let last = rows.iter().take_while(|r| r.within).last()?;
        Some(Calibration {
            alpha: last.g_norm,
            k_force: last.f_norm,
            m_ball: 2.0 * last.sup_h1,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::assemble_tensors;
    use crate::grid::DomainKind;
    use crate::lift::{build_lift, TimeProfile};
    use crate::stokes::{compute_eigenbasis, EigenOptions};

    const N: usize = 28;

    fn basis(m: usize) -> StokesBasis {
        compute_eigenbasis(&Grid::square(N).unwrap(), m, &EigenOptions::default()).unwrap()
    }

    fn tensors(basis: &StokesBasis, g: &BoundaryData) -> Tensors {
        let lift = build_lift(g, 0.05, basis.grid()).unwrap();
        assemble_tensors(basis, &lift, 1.0).unwrap()
    }

    fn config(m: usize) -> SolverConfig {
        SolverConfig {
            domain: DomainKind::Square,
            n: N,
            m,
            t_final: 0.2,
            dt: 2e-3,
            ..SolverConfig::default()
        }
    }

    fn open_budget(m_ball: f64) -> SmallnessBudget {
        SmallnessBudget {
            alpha: 1.0,
            k_force: 1.0,
            m_ball,
            g_norm: 0.0,
            f_norm: 0.0,
            alpha_ok: true,
            k_ok: true,
        }
    }

    #[test]
    fn zero_maps_to_zero_without_data() {
        let b = basis(6);
        let t = tensors(&b, &BoundaryData::zero());
        let out = map_l(&GalerkinState::zeros(6), &config(6), &t, Some(1.0)).unwrap();
        assert!(out.state.c.iter().all(|x| *x == 0.0));
        assert!(!out.left_ball);
    }

    #[test]
    fn small_mode_decays_linearly() {
        let b = basis(6);
        let t = tensors(&b, &BoundaryData::zero());
        let mut u0 = GalerkinState::zeros(6);
        u0.c[0] = 1e-6;
        let cfg = config(6);
        let out = map_l(&u0, &cfg, &t, None).unwrap();
        let expect = 1e-6 * (-cfg.nu * b.eigenvalues()[0] * cfg.t_final).exp();
        assert!((out.state.c[0] - expect).abs() <= 1e-8 * expect);
    }

    #[test]
    fn unsteady_data_is_rejected() {
        let b = basis(4);
        let g = BoundaryData::bottom_bump(0.1).with_time(TimeProfile::Ramp { tau: 0.1 });
        let t = tensors(&b, &g);
        assert!(map_l(&GalerkinState::zeros(4), &config(4), &t, None).is_err());
    }

    #[test]
    fn random_states_have_requested_norm() {
        let b = basis(6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = random_state(&mut rng, b.eigenvalues(), 0.7);
        let zero = vec![0.0; 6];
        assert!((v_distance(&s.c, &zero, b.eigenvalues()) - 0.7).abs() < 1e-12);
        let p1 = sample_pairs(b.eigenvalues(), 1.0, 3, 11);
        let p2 = sample_pairs(b.eigenvalues(), 1.0, 3, 11);
        assert_eq!(p1, p2);
    }

    #[test]
    fn contraction_below_envelope_for_small_bump() {
        let b = basis(8);
        let t = tensors(&b, &BoundaryData::bottom_bump(0.1));
        let rep = measure_contraction(&config(8), &t, &open_budget(0.5), 4, 1).unwrap();
        assert_eq!(rep.pairs.len(), 4);
        assert!(
            rep.passed(DEFAULT_CONTRACTION_TOLERANCE),
            "{}",
            rep.max_ratio
        );
        // linear decay bound with the first eigenvalue
        assert!(rep.max_ratio < 1.5 * (-config(8).t_final * b.eigenvalues()[0]).exp());
    }

    #[test]
    fn contraction_requires_budget() {
        let b = basis(4);
        let t = tensors(&b, &BoundaryData::bottom_bump(0.1));
        let mut budget = open_budget(0.5);
        budget.k_ok = false;
        let err = measure_contraction(&config(4), &t, &budget, 2, 1).unwrap_err();
        assert!(matches!(err, Error::RegimeViolation(_)));
    }

    #[test]
    fn zero_data_fixed_point_is_immediate() {
        let b = basis(6);
        let t = tensors(&b, &BoundaryData::zero());
        let opts = PicardOptions {
            tol: 1e-10,
            max_iter: 5,
            ball: Some(1.0),
        };
        let rep = find_reproductive(&config(6), &t, &GalerkinState::zeros(6), &opts).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations(), 1);
        assert!(rep.datum.c.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn bump_fixed_point_converges_and_is_unique() {
        let b = basis(8);
        let g = BoundaryData::bottom_bump(0.2);
        let lift = build_lift(&g, 0.05, b.grid()).unwrap();
        let t = assemble_tensors(&b, &lift, 1.0).unwrap();
        let cfg = config(8);
        let opts = PicardOptions {
            tol: 1e-10,
            max_iter: 40,
            ball: None,
        };
        let a = find_reproductive(&cfg, &t, &GalerkinState::zeros(8), &opts).unwrap();
        assert!(a.converged);
        let r = a.residuals();
        assert!(r.windows(2).all(|w| w[1] < w[0]));
        assert!(a.iterations() <= iteration_bound(r[0], 1e-10, 1.0, cfg.t_final));
        let mut start = GalerkinState::zeros(8);
        start.c[1] = 0.05;
        let c = find_reproductive(&cfg, &t, &start, &opts).unwrap();
        assert!(v_distance(&a.datum.c, &c.datum.c, b.eigenvalues()) <= 2e-10);
        let v0 = a.velocity(&b, &lift);
        assert!(crate::ops::divergence(&v0).max_abs() < 1e-10);
    }

    #[test]
    fn nonconvergence_reports_history() {
        let b = basis(6);
        let t = tensors(&b, &BoundaryData::bottom_bump(0.2));
        let opts = PicardOptions {
            tol: 1e-300,
            max_iter: 2,
            ball: None,
        };
        match find_reproductive(&config(6), &t, &GalerkinState::zeros(6), &opts) {
            Err(Error::NonConvergence {
                iterations,
                residuals,
                ..
            }) => {
                assert_eq!(iterations, 2);
                assert_eq!(residuals.len(), 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn budget_checks_actual_data() {
        let b = basis(4);
        let g = BoundaryData::bottom_bump(0.1);
        let t = tensors(&b, &g);
        let grid = b.grid();
        let big = Calibration {
            alpha: 1.0,
            k_force: 1e3,
            m_ball: 1.0,
        };
        let bud = validate_budget(&g, grid, &t, 1e-3, &big).unwrap();
        assert!(bud.passed());
        assert!((bud.g_norm - g.norm_proxy(grid).unwrap()).abs() < 1e-15);
        let tight = Calibration { alpha: 1e-3, ..big };
        assert!(!validate_budget(&g, grid, &t, 1e-3, &tight)
            .unwrap()
            .passed());
        let z = tensors(&b, &BoundaryData::zero());
        let zero = Calibration {
            alpha: 1e-300,
            k_force: 1e-300,
            m_ball: 1.0,
        };
        assert!(
            validate_budget(&BoundaryData::zero(), grid, &z, 1e-3, &zero)
                .unwrap()
                .passed()
        );
        // forcing grows linearly with amplitude at small amplitude
        let t2 = tensors(&b, &BoundaryData::bottom_bump(0.2));
        let f1 = t.forcing_field_sq(0.0, 1e-3).sqrt();
        let f2 = t2.forcing_field_sq(0.0, 1e-3).sqrt();
        assert!((f2 / f1 - 2.0).abs() < 0.05, "{}", f2 / f1);
    }

    #[test]
    fn bound_formula() {
        assert_eq!(iteration_bound(1.0, 1e-10, 1.0, 1.0), 26);
        assert_eq!(iteration_bound(1e-12, 1e-10, 1.0, 1.0), 2);
    }

    #[test]
    fn sweep_calibrates_from_contracting_rows() {
        let b = basis(6);
        let rows = amplitude_sweep(
            &config(6),
            &b,
            BoundaryData::bottom_bump,
            &[0.01, 0.1],
            2,
            5,
            0.1,
        )
        .unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.within));
        assert_eq!(regime_edge(&rows), None);
        let cal = Calibration::from_sweep(&rows).unwrap();
        assert!((cal.alpha - rows[1].g_norm).abs() < 1e-15);
        let fake = [SweepRow {
            within: false,
            ..rows[0]
        }];
        assert!(Calibration::from_sweep(&fake).is_none());
        assert_eq!(regime_edge(&fake), Some(0.01));
    }
}
