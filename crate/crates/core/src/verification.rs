//! Monitors for the a priori estimates of the Galerkin system.
//!
//! Every monitor is a pure function of a [`Trajectory`] (plus the scalars
//! defining the inequality), so the same trajectory always yields the same
//! report. Continuous-time inequalities are checked on the time grid with
//! difference quotients; the gap between the discrete and the continuous
//! statement is covered by an additive slack `κ·dt`, with `κ` measured from a
//! pair of runs at `dt` and `dt/2` ([`calibrate_slack`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::galerkin::{solve, GalerkinState, SolverConfig, Tensors, Trajectory};

/// Absolute tolerance added to every inequality check.
pub const DEFAULT_TOLERANCE: f64 = 1e-8;

/// Largest allowed ratio of the perturbation norm to its decay envelope.
pub const DEFAULT_STABILITY_TOLERANCE: f64 = 0.05;

/// One evaluation of `lhs ≤ rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl CheckRecord {
    /// Signed violation `lhs − rhs`; positive means the inequality fails.
    pub fn violation(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// A monitored inequality over a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub records: Vec<CheckRecord>,
    /// `max_n (lhs − rhs)`, `−∞` for an empty record list.
    pub max_violation: f64,
    /// Allowed violation (absolute tolerance plus slack).
    pub tolerance: f64,
    /// Number of records with `lhs − rhs > tolerance`.
    pub violations: usize,
    pub passed: bool,
}

impl Inequality {
    fn new(name: &str, records: Vec<CheckRecord>, tolerance: f64) -> Self {
        let max_violation = records
            .iter()
            .map(CheckRecord::violation)
            .fold(f64::NEG_INFINITY, f64::max);
        let violations = records
            .iter()
            .filter(|r| !(r.violation() <= tolerance))
            .count();
        let finite = records
            .iter()
            .all(|r| r.lhs.is_finite() && r.rhs.is_finite());
        Inequality {
            name: name.to_string(),
            passed: violations == 0 && finite,
            records,
            max_violation,
            tolerance,
            violations,
        }
    }
}

/// Results of the energy monitors on one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub inequalities: Vec<Inequality>,
    /// Regime notes (e.g. measured `β` against `ν/4`).
    pub regime: Vec<String>,
}

impl EnergyReport {
    pub fn passed(&self) -> bool {
        self.inequalities.iter().all(|i| i.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Inequality> {
        self.inequalities.iter().find(|i| i.name == name)
    }
}

/// Data of the energy inequality
/// `d/dt|u_m|² + (ν/2)‖u_m‖² ≤ |f_ε|²/(ν C²)` with `C = 1/√λ₁`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyCheck {
    pub nu: f64,
    /// Smallest Stokes eigenvalue; `C(Ω) = 1/√λ₁`.
    pub lambda1: f64,
    /// `β(ε)` of the run's lift; the inequality is only claimed for
    /// `β ≤ ν/4`.
    pub beta: f64,
    pub tolerance: f64,
    /// Additive slack, usually `κ·dt` from [`calibrate_slack`].
    pub slack: f64,
}

/// Name of the energy inequality in reports.
pub const ENERGY_INEQUALITY: &str = "energy_inequality";
/// Same left side with the sharp Poincaré right side `C²|f_ε|²/ν`.
pub const ENERGY_INEQUALITY_SHARP: &str = "energy_inequality_sharp";

/// Per-step left sides `Δ|u_m|²/dt + (ν/2)‖u_m‖²` with midpoint averages, and
/// the midpoint `|Π f_ε|²`, at `t_{n+½}`.
fn energy_terms(traj: &Trajectory, nu: f64) -> Vec<(f64, f64, f64)> {
    traj.energy
        .windows(2)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            let dl2 = (w[1].l2_sq - w[0].l2_sq) / dt;
            let h1 = 0.5 * (w[0].h1_sq + w[1].h1_sq);
            let f = 0.5 * (w[0].f_proj_sq + w[1].f_proj_sq);
            (0.5 * (w[0].t + w[1].t), dl2 + 0.5 * nu * h1, f)
        })
        .collect()
}

/// Check the energy inequality at every step of `traj`.
///
/// The forcing enters through `|Π_m f_ε|² = Σ_j (f_ε, w_j)²`, the part of the
/// forcing the Galerkin system actually sees. Fails with
/// [`Error::RegimeViolation`] when `β > ν/4`, outside the regime where the
/// inequality holds.
pub fn check_energy_inequality(traj: &Trajectory, check: &EnergyCheck) -> Result<EnergyReport> {
    let EnergyCheck {
        nu,
        lambda1,
        beta,
        tolerance,
        slack,
    } = *check;
    if !(nu > 0.0 && lambda1 > 0.0) {
        return Err(Error::InvalidParameter(
            "energy check needs ν > 0 and λ₁ > 0".into(),
        ));
    }
    if beta > nu / 4.0 {
        return Err(Error::RegimeViolation(format!(
            "β = {beta:.3e} exceeds ν/4 = {:.3e}; the energy inequality is not claimed here",
            nu / 4.0
        )));
    }
    let terms = energy_terms(traj, nu);
    // C = 1/√λ₁: 1/(νC²) = λ₁/ν, and the sharp form C²/ν = 1/(νλ₁).
    let stated = terms
        .iter()
        .map(|&(t, lhs, f)| CheckRecord {
            t,
            lhs,
            rhs: lambda1 / nu * f,
        })
        .collect();
    let sharp = terms
        .iter()
        .map(|&(t, lhs, f)| CheckRecord {
            t,
            lhs,
            rhs: f / (nu * lambda1),
        })
        .collect();
    let tol = tolerance + slack;
    Ok(EnergyReport {
        inequalities: vec![
            Inequality::new(ENERGY_INEQUALITY, stated, tol),
            Inequality::new(ENERGY_INEQUALITY_SHARP, sharp, tol),
        ],
        regime: vec![format!(
            "beta = {beta:.6e}, nu/4 = {:.6e}: in regime",
            nu / 4.0
        )],
    })
}

/// `κ` such that the discrete energy left side at step `dt` differs from the
/// one at `dt/2` by at most `κ·dt/2` at the shared midpoints; `coarse` and
/// `fine` must be runs of the same problem with steps `dt` and `dt/2`.
///
/// For a first-order defect `e(dt) ≈ κ·dt`, `e(dt) − e(dt/2) ≈ κ·dt/2`, so
/// `κ = 2·max|lhs_dt − lhs_{dt/2}|/dt` bounds the defect of the coarse run.
pub fn calibrate_slack(coarse: &Trajectory, fine: &Trajectory, nu: f64) -> Result<f64> {
    let dt = coarse.dt;
    if coarse.energy.len() < 2 || fine.energy.len() != 2 * (coarse.energy.len() - 1) + 1 {
        return Err(Error::InvalidParameter(
            "slack calibration needs runs at dt and dt/2 over the same horizon".into(),
        ));
    }
    let c = energy_terms(coarse, nu);
    let f = energy_terms(fine, nu);
    let mut worst = 0.0f64;
    for (n, &(_, lhs, _)) in c.iter().enumerate() {
        // coarse step n spans fine steps 2n and 2n+1
        let fine_lhs = 0.5 * (f[2 * n].1 + f[2 * n + 1].1);
        worst = worst.max((lhs - fine_lhs).abs());
    }
    Ok(2.0 * worst / dt)
}

/// `max_n ‖u_m(t_n)‖ ≤ M`, report-only.
pub fn check_h1_bound(traj: &Trajectory, bound: f64) -> Inequality {
    let records = traj
        .energy
        .iter()
        .map(|e| CheckRecord {
            t: e.t,
            lhs: e.h1_sq.max(0.0).sqrt(),
            rhs: bound,
        })
        .collect();
    Inequality::new("h1_bound", records, 0.0)
}

/// Per-step defect of `Δ‖u_m‖² − 2(Δu_m, A u_m(t_n))`, which equals
/// `Σ λ_j (Δc_j)²` and so vanishes at order `dt²` per step.
pub fn identity_defects(traj: &Trajectory, lambda: &[f64]) -> Vec<f64> {
    traj.states
        .windows(2)
        .map(|w| {
            let dh1 = w[1].h1_sq(lambda) - w[0].h1_sq(lambda);
            let cross: f64 = w[0]
                .c
                .iter()
                .zip(&w[1].c)
                .zip(lambda)
                .map(|((a, b), l)| l * (b - a) * a)
                .sum();
            (dh1 - 2.0 * cross).abs()
        })
        .collect()
}

/// Width of the rounding band of `‖z‖`, in ulps of the state norm.
pub const ROUNDOFF_ULPS: f64 = 64.0;

/// Decay of the difference of two trajectories against `‖z(0)‖e^{−νt}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub times: Vec<f64>,
    /// `‖z(t_n)‖` in the V-norm.
    pub z_norm: Vec<f64>,
    /// `‖z(0)‖ e^{−νt_n}`.
    pub envelope: Vec<f64>,
    /// `max_n ‖z(t_n)‖/envelope_n`; 0 when `z ≡ 0`.
    pub max_ratio: f64,
    /// `‖z(t_{n+1})‖ ≤ ‖z(t_n)‖ + floor` for every `n`.
    pub monotone: bool,
    /// Smallest resolvable `‖z‖`: [`ROUNDOFF_ULPS`] ulps of the larger
    /// state norm. Once `z` has decayed into this band its increments are
    /// rounding noise and do not count against monotonicity.
    pub roundoff_floor: f64,
    /// `sup_t ‖u(t)‖` of the two runs.
    pub sup_h1: [f64; 2],
}

impl StabilityReport {
    pub fn ratios(&self) -> Vec<f64> {
        self.z_norm
            .iter()
            .zip(&self.envelope)
            .map(|(z, e)| if *z == 0.0 { 0.0 } else { z / e })
            .collect()
    }

    /// Ratio within `1 + tol` at every step and monotone decay.
    pub fn passed(&self, tol: f64) -> bool {
        self.max_ratio <= 1.0 + tol && self.monotone
    }
}

/// Solve from `v0` and `w0` with identical configuration and compare.
///
/// With `ball = Some(M)` both runs must stay in `{‖u‖ ≤ M}`; otherwise the
/// experiment is outside the regime where decay is claimed and
/// [`Error::RegimeViolation`] is returned.
pub fn stability_experiment(
    config: &SolverConfig,
    v0: &GalerkinState,
    w0: &GalerkinState,
    tensors: &Tensors,
    ball: Option<f64>,
) -> Result<StabilityReport> {
    let (a, b) = rayon::join(|| solve(config, v0, tensors), || solve(config, w0, tensors));
    let (a, b) = (a?, b?);
    let sup_h1 = [a.max_h1(), b.max_h1()];
    if let Some(m) = ball {
        if sup_h1[0] > m || sup_h1[1] > m {
            return Err(Error::RegimeViolation(format!(
                "trajectories leave the ball ‖u‖ ≤ {m:.3e} (sup norms {:.3e}, {:.3e})",
                sup_h1[0], sup_h1[1]
            )));
        }
    }
    let lambda = tensors.lambda();
    let mut times = Vec::with_capacity(a.len());
    let mut z_norm = Vec::with_capacity(a.len());
    for (x, y) in a.states.iter().zip(&b.states) {
        let z: f64 =
            x.c.iter()
                .zip(&y.c)
                .zip(lambda)
                .map(|((p, q), l)| l * (p - q) * (p - q))
                .sum();
        times.push(x.t);
        z_norm.push(z.max(0.0).sqrt());
    }
    let z0 = z_norm.first().copied().unwrap_or(0.0);
    let envelope: Vec<f64> = times.iter().map(|t| z0 * (-config.nu * t).exp()).collect();
    let roundoff_floor = ROUNDOFF_ULPS * f64::EPSILON * sup_h1[0].max(sup_h1[1]);
    let monotone = z_norm.windows(2).all(|w| w[1] <= w[0] + roundoff_floor);
    let mut report = StabilityReport {
        times,
        z_norm,
        envelope,
        max_ratio: 0.0,
        monotone,
        roundoff_floor,
        sup_h1,
    };
    report.max_ratio = report.ratios().into_iter().fold(0.0, f64::max);
    Ok(report)
}

/// Two independent runs from the same input agree bit for bit.
pub fn uniqueness_probe(
    config: &SolverConfig,
    u0: &GalerkinState,
    tensors: &Tensors,
) -> Result<bool> {
    let a = solve(config, u0, tensors)?;
    let b = solve(config, u0, tensors)?;
    Ok(bit_identical(&a, &b))
}

/// Exact equality of every stored number, including the sign of zero.
pub fn bit_identical(a: &Trajectory, b: &Trajectory) -> bool {
    let same = |x: f64, y: f64| x.to_bits() == y.to_bits();
    a.len() == b.len()
        && a.energy.len() == b.energy.len()
        && same(a.dt, b.dt)
        && same(a.nu, b.nu)
        && a.states.iter().zip(&b.states).all(|(s, r)| {
            same(s.t, r.t)
                && s.c.len() == r.c.len()
                && s.c.iter().zip(&r.c).all(|(x, y)| same(*x, *y))
        })
        && a.energy.iter().zip(&b.energy).all(|(e, f)| {
            [e.t, e.l2_sq, e.h1_sq, e.a_sq, e.f_sq, e.f_proj_sq]
                .iter()
                .zip([f.t, f.l2_sq, f.h1_sq, f.a_sq, f.f_sq, f.f_proj_sq])
                .all(|(x, y)| same(*x, y))
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::galerkin::{assemble_tensors, EnergyRecord};
    use crate::grid::{DomainKind, Grid};
    use crate::lift::{build_lift, BoundaryData, LiftData};
    use crate::stokes::{compute_eigenbasis, EigenOptions, StokesBasis};

    fn setup(n: usize, m: usize, amp: f64, nu: f64) -> (StokesBasis, LiftData, Tensors) {
        let g = Grid::square(n).unwrap();
        let basis = compute_eigenbasis(&g, m, &EigenOptions::default()).unwrap();
        let lift = build_lift(&BoundaryData::bottom_bump(amp), 0.05, &g).unwrap();
        let t = assemble_tensors(&basis, &lift, nu).unwrap();
        (basis, lift, t)
    }

    fn config(n: usize, m: usize, nu: f64, dt: f64) -> SolverConfig {
        SolverConfig {
            domain: DomainKind::Square,
            n,
            m,
            nu,
            t_final: 0.2,
            dt,
            ..SolverConfig::default()
        }
    }

    fn check(nu: f64, lambda1: f64, beta: f64) -> EnergyCheck {
        EnergyCheck {
            nu,
            lambda1,
            beta,
            tolerance: DEFAULT_TOLERANCE,
            slack: 0.0,
        }
    }

    #[test]
    fn zero_data_gives_zero_lhs_and_rhs() {
        let (_, lift, t) = setup(28, 6, 0.0, 1.0);
        let cfg = config(28, 6, 1.0, 1e-2);
        let traj = solve(&cfg, &GalerkinState::zeros(6), &t).unwrap();
        let rep = check_energy_inequality(&traj, &check(1.0, t.lambda()[0], lift.beta())).unwrap();
        assert!(rep.passed());
        for ineq in &rep.inequalities {
            assert_eq!(ineq.violations, 0);
            assert!(ineq.records.iter().all(|r| r.lhs == 0.0 && r.rhs == 0.0));
        }
    }

    #[test]
    fn hand_built_violation_is_detected() {
        let rec = |t: f64, l2: f64| EnergyRecord {
            t,
            l2_sq: l2,
            h1_sq: 0.0,
            a_sq: 0.0,
            f_sq: 0.0,
            f_proj_sq: 0.0,
        };
        let traj = Trajectory {
            dt: 0.1,
            nu: 1.0,
            states: vec![],
            energy: vec![rec(0.0, 1.0), rec(0.1, 0.9), rec(0.2, 1.0)],
        };
        let rep = check_energy_inequality(&traj, &check(1.0, 1.0, 0.0)).unwrap();
        let e = rep.get(ENERGY_INEQUALITY).unwrap();
        assert_eq!(e.violations, 1);
        assert!((e.max_violation - 1.0).abs() < 1e-12);
        assert!(!rep.passed());
    }

    #[test]
    fn large_beta_is_a_regime_violation() {
        let traj = Trajectory::default();
        let err = check_energy_inequality(&traj, &check(1.0, 1.0, 0.3)).unwrap_err();
        assert!(matches!(err, Error::RegimeViolation(_)));
    }

    #[test]
    fn bump_run_satisfies_energy_inequality() {
        let (_, lift, t) = setup(28, 8, 0.1, 1.0);
        let coarse = solve(&config(28, 8, 1.0, 1e-2), &GalerkinState::zeros(8), &t).unwrap();
        let fine = solve(&config(28, 8, 1.0, 5e-3), &GalerkinState::zeros(8), &t).unwrap();
        let kappa = calibrate_slack(&coarse, &fine, 1.0).unwrap();
        assert!(kappa.is_finite() && kappa >= 0.0);
        let mut c = check(1.0, t.lambda()[0], lift.beta());
        c.slack = kappa * coarse.dt;
        let rep = check_energy_inequality(&coarse, &c).unwrap();
        assert!(
            rep.passed(),
            "{:?}",
            rep.get(ENERGY_INEQUALITY).unwrap().max_violation
        );
    }

    #[test]
    fn slack_needs_matching_pair() {
        let (_, _, t) = setup(28, 4, 0.0, 1.0);
        let a = solve(&config(28, 4, 1.0, 1e-2), &GalerkinState::zeros(4), &t).unwrap();
        assert!(calibrate_slack(&a, &a, 1.0).is_err());
    }

    #[test]
    fn h1_bound_reports_exit() {
        let (_, _, t) = setup(28, 4, 0.0, 1.0);
        let mut u0 = GalerkinState::zeros(4);
        u0.c[0] = 1.0;
        let traj = solve(&config(28, 4, 1.0, 1e-2), &u0, &t).unwrap();
        let norm0 = t.lambda()[0].sqrt();
        assert!(check_h1_bound(&traj, 2.0 * norm0).passed);
        assert!(!check_h1_bound(&traj, 0.5 * norm0).passed);
        let zero = solve(&config(28, 4, 1.0, 1e-2), &GalerkinState::zeros(4), &t).unwrap();
        assert!(check_h1_bound(&zero, 1e-30).passed);
    }

    #[test]
    fn identity_defect_is_second_order() {
        let (_, _, t) = setup(28, 6, 0.5, 1.0);
        let mut u0 = GalerkinState::zeros(6);
        u0.c[1] = 0.1;
        let max = |dt: f64| {
            let traj = solve(&config(28, 6, 1.0, dt), &u0, &t).unwrap();
            identity_defects(&traj, t.lambda())
                .into_iter()
                .fold(0.0, f64::max)
        };
        let (a, b) = (max(1e-3), max(5e-4));
        let order = (a / b).log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn equal_data_has_zero_ratio() {
        let (_, _, t) = setup(28, 4, 0.1, 1.0);
        let cfg = config(28, 4, 1.0, 1e-2);
        let u0 = GalerkinState::zeros(4);
        let rep = stability_experiment(&cfg, &u0, &u0, &t, None).unwrap();
        assert_eq!(rep.max_ratio, 0.0);
        assert!(rep.monotone);
    }

    #[test]
    fn perturbation_decays_under_envelope() {
        let (_, _, t) = setup(28, 8, 0.1, 1.0);
        let cfg = config(28, 8, 1.0, 1e-2);
        let v0 = GalerkinState::zeros(8);
        let mut w0 = v0.clone();
        w0.c[2] = 1e-4;
        let rep = stability_experiment(&cfg, &v0, &w0, &t, Some(1.0)).unwrap();
        assert!(rep.passed(DEFAULT_STABILITY_TOLERANCE), "{}", rep.max_ratio);
        assert!(rep.max_ratio <= 1.0 + 1e-12);
        let err = stability_experiment(&cfg, &v0, &w0, &t, Some(1e-12)).unwrap_err();
        assert!(matches!(err, Error::RegimeViolation(_)));
    }

    #[test]
    fn runs_are_bit_identical() {
        let (_, _, t) = setup(28, 6, 0.2, 1.0);
        let mut u0 = GalerkinState::zeros(6);
        u0.c[0] = 0.3;
        assert!(uniqueness_probe(&config(28, 6, 1.0, 1e-2), &u0, &t).unwrap());
        let a = solve(&config(28, 6, 1.0, 1e-2), &u0, &t).unwrap();
        let mut b = a.clone();
        b.states[3].c[0] = f64::from_bits(b.states[3].c[0].to_bits() ^ 1);
        assert!(!bit_identical(&a, &b));
    }
}
