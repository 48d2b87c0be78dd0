//! Experiment dispatch and the run manifest.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use nsrepro_core::galerkin::{
    assemble_tensors, project_initial, reconstruct_state, recover_pressure, solve, GalerkinState,
    SolverConfig, Tensors, Trajectory,
};
use nsrepro_core::lift::{build_lift, compute_forcing, verify_smallness, BoundaryData, LiftData};
use nsrepro_core::ops::{divergence, inner_l2};
use nsrepro_core::reproductive::{
    find_reproductive, iteration_bound, measure_contraction, seeded_state, validate_budget,
    FixedPointReport, PicardOptions,
};
use nsrepro_core::snapshot::{cache_key, BasisCache, CacheStatus};
use nsrepro_core::stokes::{EigenOptions, StokesBasis};
use nsrepro_core::verification::{
    bit_identical, calibrate_slack, check_energy_inequality, check_h1_bound, identity_defects,
    stability_experiment, EnergyCheck, ENERGY_INEQUALITY, ENERGY_INEQUALITY_SHARP,
};
use nsrepro_core::{Error, Grid, VectorField};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Experiment, InitialKind, RunConfig};
use crate::output::Outputs;
use crate::CliError;

/// Environment variable naming the basis cache directory.
pub const CACHE_ENV: &str = "NSREPRO_CACHE_DIR";

/// Invocation options that are not part of the configuration.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Recompute the Stokes basis even if a valid cache file exists.
    pub force_rebuild_basis: bool,
    /// Cache directory; `<out>/basis-cache` when absent.
    pub cache_dir: Option<PathBuf>,
}

/// Record of a finished run, written as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub basis_cache_key: Option<String>,
    pub basis_cache_status: Option<CacheStatus>,
    /// Explicit step limit of the run's initial state.
    pub dt_stability_bound: Option<f64>,
    pub wall_clock_seconds: f64,
    pub summary: Value,
    pub passed: bool,
    pub exit_code: i32,
    pub error: Option<String>,
    /// Every file of the output directory except the manifest itself.
    pub outputs: Vec<String>,
}

/// What an experiment reports back to the dispatcher.
struct Outcome {
    summary: Value,
    passed: bool,
}

/// Shared state of one run.
struct Context<'a> {
    cfg: &'a RunConfig,
    opts: &'a RunOptions,
    out: Outputs,
    cache_key: Option<String>,
    cache_status: Option<CacheStatus>,
    dt_bound: Option<f64>,
    /// Extra summary entries recorded before an error.
    partial: serde_json::Map<String, Value>,
}

impl Context<'_> {
    fn grid(&self) -> Result<Arc<Grid>, CliError> {
        Ok(self.cfg.solver.grid()?)
    }

    fn basis(&mut self, grid: &Arc<Grid>) -> Result<StokesBasis, CliError> {
        let dir = self
            .opts
            .cache_dir
            .clone()
            .unwrap_or_else(|| self.cfg.out.join("basis-cache"));
        let cache = BasisCache::new(dir);
        let m = self.cfg.solver.m;
        self.cache_key = Some(cache_key(grid.kind(), grid.n(), m));
        let (basis, status) = cache.load_or_compute(
            grid,
            m,
            &EigenOptions::default(),
            self.opts.force_rebuild_basis,
        )?;
        log::info!(
            "basis {}: {status:?}",
            self.cache_key.as_deref().unwrap_or("")
        );
        self.cache_status = Some(status);
        Ok(basis)
    }

    fn lift(&self, grid: &Arc<Grid>, data: &BoundaryData) -> Result<LiftData, CliError> {
        if data.is_zero() && !data.is_time_dependent() {
            return Ok(LiftData::none(grid));
        }
        Ok(build_lift(data, self.cfg.solver.epsilon, grid)?)
    }

    /// Grid, basis, lift and tensors of the configured problem.
    fn system(&mut self) -> Result<(StokesBasis, LiftData, Tensors, BoundaryData), CliError> {
        let grid = self.grid()?;
        let data = self.cfg.boundary_data()?;
        let basis = self.basis(&grid)?;
        let lift = self.lift(&grid, &data)?;
        let tensors = assemble_tensors(&basis, &lift, self.cfg.solver.nu)?;
        Ok((basis, lift, tensors, data))
    }

    fn initial(
        &mut self,
        basis: &StokesBasis,
        lift: &LiftData,
        tensors: &Tensors,
    ) -> Result<GalerkinState, CliError> {
        let m = basis.len();
        let init = &self.cfg.initial;
        let state = match init.kind {
            InitialKind::Zero => GalerkinState::zeros(m),
            InitialKind::Mode => {
                let mut s = GalerkinState::zeros(m);
                s.c[init.index] = init.amplitude;
                s
            }
            InitialKind::Random => seeded_state(basis.eigenvalues(), init.amplitude, self.cfg.seed),
            InitialKind::TaylorGreen => {
                let a = init.amplitude;
                let v0 = VectorField::from_fn(basis.grid(), |x, y| {
                    (-a * x.cos() * y.sin(), a * x.sin() * y.cos())
                });
                let (s, err) = project_initial(&v0, lift, basis, self.cfg.solver.tol_compat)?;
                self.partial
                    .insert("initial_projection_error".into(), json!(err));
                s
            }
        };
        self.dt_bound = Some(tensors.stability_bound(&state.c));
        Ok(state)
    }

    /// Solve, writing the energy trace even when the run blows up.
    fn trajectory(
        &mut self,
        config: &SolverConfig,
        u0: &GalerkinState,
        tensors: &Tensors,
        csv: Option<&str>,
    ) -> Result<Trajectory, CliError> {
        match solve(config, u0, tensors) {
            Ok(t) => {
                if let Some(name) = csv {
                    write_energy(&mut self.out, name, &t)?;
                }
                Ok(t)
            }
            Err(Error::Blowup { step, partial }) => {
                if let Some(name) = csv {
                    write_energy(&mut self.out, name, &partial)?;
                }
                Err(Error::Blowup { step, partial }.into())
            }
            Err(e) => Err(e.into()),
        }
    }
}

fn write_energy(out: &mut Outputs, name: &str, traj: &Trajectory) -> Result<(), CliError> {
    let rows: Vec<_> = traj
        .energy
        .iter()
        .map(|e| (e.t, e.l2_sq, e.h1_sq, e.a_sq, e.f_sq, e.f_proj_sq))
        .collect();
    out.csv(
        name,
        &["t", "l2_sq", "h1_sq", "a_sq", "f_sq", "f_proj_sq"],
        &rows,
    )
}

fn eigs(ctx: &mut Context) -> Result<Outcome, CliError> {
    let grid = ctx.grid()?;
    let basis = ctx.basis(&grid)?;
    let residuals = basis.eigen_residuals()?;
    let rows: Vec<_> = basis
        .eigenvalues()
        .iter()
        .zip(&residuals)
        .enumerate()
        .map(|(j, (l, r))| (j, *l, *r))
        .collect();
    ctx.out
        .csv("eigenvalues.csv", &["j", "lambda", "residual"], &rows)?;
    let orth = basis.orthonormality_error();
    let max_res = residuals.iter().copied().fold(0.0, f64::max);
    Ok(Outcome {
        passed: orth <= 1e-10 && max_res <= 1e-8,
        summary: json!({
            "m": basis.len(),
            "lambda_1": basis.eigenvalues()[0],
            "lambda_m": basis.eigenvalues()[basis.len() - 1],
            "orthonormality_error": orth,
            "h1_orthogonality_error": basis.h1_orthogonality_error(),
            "max_eigen_residual": max_res,
        }),
    })
}

/// One row of the cutoff sweep.
#[derive(Debug, Clone, Copy, Serialize)]
struct LiftRow {
    epsilon: f64,
    delta: f64,
    beta: f64,
    smallness: f64,
    div_max: f64,
    forcing_norm: f64,
}

fn lift_sweep(ctx: &mut Context) -> Result<Outcome, CliError> {
    let grid = ctx.grid()?;
    if !grid.is_square() {
        return Err(CliError::Config(
            "solver.domain: the lift experiment needs the square".into(),
        ));
    }
    let data = ctx.cfg.boundary_data()?;
    let mut rows = Vec::new();
    for &eps in &ctx.cfg.lift.epsilons {
        let lift = build_lift(&data, eps, &grid)?;
        let forcing = compute_forcing(&lift, ctx.cfg.solver.nu)?;
        rows.push(LiftRow {
            epsilon: eps,
            delta: lift.delta(),
            beta: lift.beta(),
            smallness: verify_smallness(&lift, ctx.cfg.lift.samples, ctx.cfg.seed)?,
            div_max: divergence(lift.g_eps()).max_abs(),
            forcing_norm: forcing.l2_norm(0.0, ctx.cfg.solver.dt),
        });
    }
    ctx.out.csv(
        "lift_sweep.csv",
        &[
            "epsilon",
            "delta",
            "beta",
            "smallness",
            "div_max",
            "forcing_norm",
        ],
        &rows,
    )?;
    let lift = build_lift(&data, ctx.cfg.solver.epsilon, &grid)?;
    ctx.out.velocity("lift.snap", lift.g_eps(), 0.0)?;
    let div_ok = rows.iter().all(|r| r.div_max <= 1e-13);
    let (beta_ok, small_ok) = if data.is_zero() {
        (true, true)
    } else {
        let beta_dec = rows.windows(2).all(|w| w[1].beta < w[0].beta);
        let small_dec = rows.windows(2).all(|w| w[1].smallness <= w[0].smallness)
            && rows.first().map(|r| r.smallness) > rows.last().map(|r| r.smallness);
        (beta_dec, small_dec || rows.len() == 1)
    };
    Ok(Outcome {
        passed: div_ok && beta_ok && small_ok,
        summary: json!({
            "rows": rows.len(),
            "divergence_free": div_ok,
            "beta_strictly_decreasing": beta_ok,
            "smallness_decreasing": small_ok,
            "sweep": rows,
        }),
    })
}

fn run_solve(ctx: &mut Context) -> Result<Outcome, CliError> {
    let (basis, lift, tensors, _) = ctx.system()?;
    let u0 = ctx.initial(&basis, &lift, &tensors)?;
    let cfg = ctx.cfg.solver.clone();
    let traj = ctx.trajectory(&cfg, &u0, &tensors, Some("energy.csv"))?;
    let stride = ctx.cfg.output.snapshot_stride;
    if stride > 0 {
        for (n, s) in traj.states.iter().enumerate().step_by(stride) {
            let v = reconstruct_state(s, &basis, &lift);
            ctx.out
                .velocity(&format!("snapshots/velocity_{n:06}.snap"), &v, s.t)?;
        }
    }
    let last = traj.states.last().cloned().unwrap_or(u0);
    let v = reconstruct_state(&last, &basis, &lift);
    ctx.out.velocity("velocity_final.snap", &v, last.t)?;
    let mut summary = json!({
        "steps": traj.len().saturating_sub(1),
        "final_l2": inner_l2(&v, &v)?.max(0.0).sqrt(),
        "final_u_h1": last.h1_sq(basis.eigenvalues()).sqrt(),
        "max_u_h1": traj.max_h1(),
    });
    if traj.len() >= 2 {
        let p = recover_pressure(&traj.states[traj.len() - 2], &last, &basis, &lift, cfg.nu)?;
        ctx.out.scalar("pressure_final.snap", &p.p, last.t)?;
        summary["pressure_residual_before"] = json!(p.residual_before);
        summary["pressure_residual_after"] = json!(p.residual_after);
    }
    Ok(Outcome {
        summary,
        passed: true,
    })
}

fn verify(ctx: &mut Context) -> Result<Outcome, CliError> {
    let (basis, lift, tensors, _) = ctx.system()?;
    let u0 = ctx.initial(&basis, &lift, &tensors)?;
    let cfg = ctx.cfg.solver.clone();
    let traj = ctx.trajectory(&cfg, &u0, &tensors, Some("energy.csv"))?;
    let half = SolverConfig {
        dt: cfg.dt / 2.0,
        ..cfg.clone()
    };
    let fine = ctx.trajectory(&half, &u0, &tensors, None)?;
    let kappa = calibrate_slack(&traj, &fine, cfg.nu)?;
    let lambda1 = basis.eigenvalues()[0];
    let check = EnergyCheck {
        nu: cfg.nu,
        lambda1,
        beta: lift.beta(),
        tolerance: ctx.cfg.verify.tolerance,
        slack: kappa * cfg.dt,
    };
    let m_ball = ctx.cfg.calibration.m_ball;
    let h1 = check_h1_bound(&traj, m_ball);
    let deterministic = if ctx.cfg.verify.determinism {
        let again = solve(&cfg, &u0, &tensors)?;
        Some(bit_identical(&traj, &again))
    } else {
        None
    };
    let defects = identity_defects(&traj, basis.eigenvalues());
    let max_defect = defects.iter().copied().fold(0.0, f64::max);
    let mut summary = json!({
        "slack_kappa": kappa,
        "slack": kappa * cfg.dt,
        "lambda_1": lambda1,
        "beta": lift.beta(),
        "h1_bound": {"m_ball": m_ball, "max": traj.max_h1(), "passed": h1.passed},
        "deterministic": deterministic,
        "identity_max_defect": max_defect,
    });
    let energy = match check_energy_inequality(&traj, &check) {
        Ok(rep) => rep,
        Err(Error::RegimeViolation(why)) => {
            summary["regime"] = json!([why]);
            summary["energy_inequality"] = json!({"checked": false});
            ctx.out.json("report.json", &summary)?;
            return Ok(Outcome {
                summary,
                passed: false,
            });
        }
        Err(e) => return Err(e.into()),
    };
    let stated = energy.get(ENERGY_INEQUALITY).expect("reported");
    let sharp = energy.get(ENERGY_INEQUALITY_SHARP).expect("reported");
    let rows: Vec<_> = stated
        .records
        .iter()
        .zip(&sharp.records)
        .map(|(a, b)| (a.t, a.lhs, a.rhs, b.rhs, a.violation()))
        .collect();
    ctx.out.csv(
        "energy_check.csv",
        &["t", "lhs", "rhs", "rhs_sharp", "violation"],
        &rows,
    )?;
    let violations: Vec<Value> = energy
        .inequalities
        .iter()
        .flat_map(|i| {
            i.records
                .iter()
                .filter(|r| r.violation().is_nan() || r.violation() > i.tolerance)
                .map(|r| json!({"inequality": i.name, "t": r.t, "violation": r.violation()}))
                .collect::<Vec<_>>()
        })
        .chain(
            h1.records
                .iter()
                .filter(|r| r.violation() > 0.0)
                .map(|r| json!({"inequality": h1.name, "t": r.t, "violation": r.violation()})),
        )
        .collect();
    summary["inequalities"] = json!(energy
        .inequalities
        .iter()
        .map(|i| json!({
            "name": i.name,
            "max_violation": i.max_violation,
            "tolerance": i.tolerance,
            "violations": i.violations,
            "passed": i.passed,
        }))
        .collect::<Vec<_>>());
    summary["regime"] = json!(energy.regime);
    summary["violations"] = json!(violations);
    ctx.out.json("report.json", &summary)?;
    // the sharp form is reported, the stated form decides
    let passed = stated.passed && h1.passed && deterministic.unwrap_or(true);
    Ok(Outcome { summary, passed })
}

fn stability(ctx: &mut Context) -> Result<Outcome, CliError> {
    let (basis, lift, tensors, _) = ctx.system()?;
    let v0 = ctx.initial(&basis, &lift, &tensors)?;
    let dz = seeded_state(
        basis.eigenvalues(),
        ctx.cfg.stability.perturbation,
        ctx.cfg.seed.wrapping_add(1),
    );
    let w0 = GalerkinState {
        t: 0.0,
        c: v0.c.iter().zip(&dz.c).map(|(a, b)| a + b).collect(),
    };
    let rep = stability_experiment(
        &ctx.cfg.solver,
        &v0,
        &w0,
        &tensors,
        Some(ctx.cfg.calibration.m_ball),
    )?;
    let ratios = rep.ratios();
    let rows: Vec<_> = (0..rep.times.len())
        .map(|n| (rep.times[n], rep.z_norm[n], rep.envelope[n], ratios[n]))
        .collect();
    ctx.out.csv(
        "stability.csv",
        &["t", "z_norm", "envelope", "ratio"],
        &rows,
    )?;
    let tol = ctx.cfg.stability.tolerance;
    Ok(Outcome {
        passed: rep.passed(tol),
        summary: json!({
            "z0": rep.z_norm.first(),
            "z_final": rep.z_norm.last(),
            "max_ratio": rep.max_ratio,
            "tolerance": tol,
            "monotone": rep.monotone,
            "roundoff_floor": rep.roundoff_floor,
            "sup_h1": rep.sup_h1,
        }),
    })
}

fn write_residuals(
    out: &mut Outputs,
    report: Option<&FixedPointReport>,
    residuals: &[f64],
) -> Result<(), CliError> {
    let rows: Vec<(usize, f64, Option<f64>, Option<f64>)> = match report {
        Some(r) => r
            .iterates
            .iter()
            .map(|i| (i.k, i.residual, Some(i.residual_l2), i.ratio))
            .collect(),
        None => residuals
            .iter()
            .enumerate()
            .map(|(k, r)| (k, *r, None, (k > 0).then(|| r / residuals[k - 1])))
            .collect(),
    };
    out.csv(
        "residuals.csv",
        &["k", "residual", "residual_l2", "ratio"],
        &rows,
    )
}

fn reproductive(ctx: &mut Context) -> Result<Outcome, CliError> {
    let (basis, lift, tensors, data) = ctx.system()?;
    let cfg = ctx.cfg.solver.clone();
    let budget = validate_budget(
        &data,
        basis.grid(),
        &tensors,
        cfg.dt,
        &ctx.cfg.calibration.get(),
    )?;
    ctx.partial.insert("budget".into(), json!(budget));
    if !budget.passed() {
        return Err(Error::RegimeViolation(format!(
            "‖g‖ = {:.3e} (α = {:.3e}), |f_ε| = {:.3e} (K = {:.3e})",
            budget.g_norm, budget.alpha, budget.f_norm, budget.k_force
        ))
        .into());
    }
    let settings = ctx.cfg.reproductive.clone();
    let envelope = (-cfg.nu * cfg.t_final).exp();
    let contraction = if settings.pairs > 0 {
        let rep = measure_contraction(&cfg, &tensors, &budget, settings.pairs, ctx.cfg.seed)?;
        let rows: Vec<_> = rep
            .pairs
            .iter()
            .map(|p| (p.index, p.initial, p.mapped, p.ratio, p.left_ball))
            .collect();
        ctx.out.csv(
            "contraction.csv",
            &["pair", "initial", "mapped", "ratio", "left_ball"],
            &rows,
        )?;
        ctx.partial
            .insert("contraction_max_ratio".into(), json!(rep.max_ratio));
        Some(rep)
    } else {
        None
    };
    let u0 = ctx.initial(&basis, &lift, &tensors)?;
    let opts = PicardOptions {
        tol: cfg.tol_fixed_point,
        max_iter: settings.max_iter,
        ball: Some(budget.m_ball),
    };
    let report = match find_reproductive(&cfg, &tensors, &u0, &opts) {
        Ok(r) => r,
        Err(Error::NonConvergence {
            iterations,
            last,
            residuals,
        }) => {
            write_residuals(&mut ctx.out, None, &residuals)?;
            ctx.partial.insert("converged".into(), json!(false));
            ctx.partial.insert("residuals".into(), json!(residuals));
            return Err(Error::NonConvergence {
                iterations,
                last,
                residuals,
            }
            .into());
        }
        Err(e) => return Err(e.into()),
    };
    write_residuals(&mut ctx.out, Some(&report), &[])?;
    let v0 = report.velocity(&basis, &lift);
    ctx.out.velocity("reproductive_v0.snap", &v0, 0.0)?;
    // a fresh period from the datum must return to it
    let traj = solve(&cfg, &report.datum, &tensors)?;
    let end = traj
        .states
        .last()
        .cloned()
        .unwrap_or_else(|| report.datum.clone());
    let v_end = reconstruct_state(&end, &basis, &lift);
    let gap = v_end.sub(&v0);
    let period_defect = inner_l2(&gap, &gap)?.max(0.0).sqrt();
    let residuals = report.residuals();
    let bound = iteration_bound(residuals[0], opts.tol, cfg.nu, cfg.t_final);
    let tol_c = settings.contraction_tolerance;
    let ratio_ok = report.max_ratio() <= envelope * (1.0 + tol_c);
    let contraction_ok = contraction.as_ref().is_none_or(|c| c.passed(tol_c));
    let passed = report.converged && ratio_ok && contraction_ok && report.iterations() <= bound;
    Ok(Outcome {
        passed,
        summary: json!({
            "converged": report.converged,
            "iterations": report.iterations(),
            "iteration_bound": bound,
            "residuals": residuals,
            "max_residual_ratio": report.max_ratio(),
            "envelope": envelope,
            "contraction_max_ratio": contraction.as_ref().map(|c| c.max_ratio),
            "period_defect_l2": period_defect,
            "divergence_v0": divergence(&v0).max_abs(),
            "budget": budget,
        }),
    })
}

/// Run one experiment, write its outputs and manifest, and return the
/// manifest. Errors are recorded in the manifest rather than returned,
/// except failures to create the output directory.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunManifest, CliError> {
    let start = Instant::now();
    let experiment = cfg
        .experiment
        .ok_or_else(|| CliError::Config("no experiment selected".into()))?;
    let mut out = Outputs::create(&cfg.out)?;
    let resolved = toml::to_string(cfg).map_err(|e| CliError::Output(e.to_string()))?;
    out.bytes("config.toml", resolved.as_bytes())?;
    let mut ctx = Context {
        cfg,
        opts,
        out,
        cache_key: None,
        cache_status: None,
        dt_bound: None,
        partial: serde_json::Map::new(),
    };
    let result = match experiment {
        Experiment::Eigs => eigs(&mut ctx),
        Experiment::Lift => lift_sweep(&mut ctx),
        Experiment::Solve => run_solve(&mut ctx),
        Experiment::Verify => verify(&mut ctx),
        Experiment::Stability => stability(&mut ctx),
        Experiment::Reproductive => reproductive(&mut ctx),
    };
    let (summary, passed, exit_code, error) = match result {
        Ok(o) => {
            let code = if o.passed { 0 } else { 1 };
            (o.summary, o.passed, code, None)
        }
        Err(e) => {
            log::error!("{e}");
            (
                Value::Object(ctx.partial.clone()),
                false,
                e.exit_code(),
                Some(e.to_string()),
            )
        }
    };
    let manifest = RunManifest {
        experiment: experiment.as_str().into(),
        config_hash: cfg.hash(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        seed: cfg.seed,
        basis_cache_key: ctx.cache_key.clone(),
        basis_cache_status: ctx.cache_status,
        dt_stability_bound: ctx.dt_bound,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        summary,
        passed,
        exit_code,
        error,
        outputs: ctx.out.files(),
    };
    let mut bytes =
        serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Output(e.to_string()))?;
    bytes.push(b'\n');
    nsrepro_core::snapshot::write_atomic(&ctx.out.dir().join("manifest.json"), &bytes)?;
    Ok(manifest)
}
