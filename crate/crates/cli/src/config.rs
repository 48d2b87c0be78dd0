//! Run configuration: a TOML file whose sections mirror the experiments.
//!
//! Every key is optional; missing keys take the documented defaults, and
//! each default actually used is logged. Unknown keys are rejected.
//!
//! ```toml
//! seed = 7
//!
//! [solver]            # discretization and tolerances
//! domain = "square"   # or "torus"
//! n = 48
//! m = 32
//! nu = 1.0
//! t_final = 1.0
//! dt = 1e-3
//! epsilon = 0.05
//!
//! [boundary]          # tangential wall speed
//! kind = "bottom_bump"  # zero | bottom_bump | counter_walls | table
//! amplitude = 1.0
//! # file = "speeds.txt"  (table: "arclength speed" per line)
//! # time = { kind = "ramp", tau = 0.1 }
//!
//! [initial]           # initial homogenized state u₀ = v₀ − G_ε
//! kind = "zero"       # zero | mode | random | taylor_green
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nsrepro_core::fixtures;
use nsrepro_core::galerkin::SolverConfig;
use nsrepro_core::lift::{BoundaryData, TimeProfile};
use nsrepro_core::reproductive::Calibration;
use nsrepro_core::verification::{DEFAULT_STABILITY_TOLERANCE, DEFAULT_TOLERANCE};
use nsrepro_core::DomainKind;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// The experiment a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Eigs,
    Lift,
    Solve,
    Verify,
    Stability,
    Reproductive,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::Eigs => "eigs",
            Experiment::Lift => "lift",
            Experiment::Solve => "solve",
            Experiment::Verify => "verify",
            Experiment::Stability => "stability",
            Experiment::Reproductive => "reproductive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Zero,
    BottomBump,
    CounterWalls,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    /// Peak wall speed of the built-in profiles.
    pub amplitude: f64,
    /// Table file for `kind = "table"`, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub time: TimeProfile,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec {
            kind: BoundaryKind::BottomBump,
            amplitude: fixtures::BUMP_AMPLITUDE,
            file: None,
            time: TimeProfile::Steady,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    /// `u₀ = 0`, i.e. `v₀ = G_ε(·, 0)`.
    Zero,
    /// `u₀ = amplitude · w_index`.
    Mode,
    /// Seeded random state of V-norm `amplitude`.
    Random,
    /// `v₀ = amplitude · (−cos x sin y, sin x cos y)` (torus only).
    TaylorGreen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSpec {
    pub kind: InitialKind,
    pub amplitude: f64,
    /// Mode index for `kind = "mode"` (0-based).
    pub index: usize,
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec {
            kind: InitialKind::Zero,
            amplitude: 1.0,
            index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSpec {
    pub alpha: f64,
    pub k_force: f64,
    pub m_ball: f64,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        let c = fixtures::STANDARD_CALIBRATION;
        CalibrationSpec {
            alpha: c.alpha,
            k_force: c.k_force,
            m_ball: c.m_ball,
        }
    }
}

impl CalibrationSpec {
    pub fn get(&self) -> Calibration {
        Calibration {
            alpha: self.alpha,
            k_force: self.k_force,
            m_ball: self.m_ball,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySpec {
    /// Absolute tolerance of the energy inequality.
    pub tolerance: f64,
    /// Rerun the solve and demand bit-identical output.
    pub determinism: bool,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            tolerance: DEFAULT_TOLERANCE,
            determinism: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySpec {
    /// V-norm of the perturbation `w₀ − v₀`.
    pub perturbation: f64,
    /// Allowed excess of the ratio to the decay envelope.
    pub tolerance: f64,
}

impl Default for StabilitySpec {
    fn default() -> Self {
        StabilitySpec {
            perturbation: 1e-4,
            tolerance: DEFAULT_STABILITY_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReproductiveSpec {
    pub max_iter: usize,
    /// Random pairs of the contraction measurement (0 skips it).
    pub pairs: usize,
    /// Relative slack on the `e^{−νT}` envelope.
    pub contraction_tolerance: f64,
}

impl Default for ReproductiveSpec {
    fn default() -> Self {
        ReproductiveSpec {
            max_iter: 50,
            pairs: 5,
            contraction_tolerance: nsrepro_core::reproductive::DEFAULT_CONTRACTION_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LiftSpec {
    /// Cutoff parameters of the sweep, in the order they are reported.
    pub epsilons: Vec<f64>,
    /// Random fields per smallness estimate.
    pub samples: usize,
}

impl Default for LiftSpec {
    fn default() -> Self {
        LiftSpec {
            epsilons: fixtures::EPSILON_SWEEP.to_vec(),
            samples: 16,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Write a velocity snapshot every this many steps (0: final only).
    pub snapshot_stride: usize,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Set by the subcommand, not the file.
    #[serde(skip)]
    pub experiment: Option<Experiment>,
    /// Set on the command line, not in the file.
    #[serde(skip)]
    pub out: PathBuf,
    pub seed: u64,
    pub solver: SolverConfig,
    pub boundary: BoundarySpec,
    pub initial: InitialSpec,
    pub calibration: CalibrationSpec,
    pub verify: VerifySpec,
    pub stability: StabilitySpec,
    pub reproductive: ReproductiveSpec,
    pub lift: LiftSpec,
    pub output: OutputSpec,
    /// Directory the table file is resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: None,
            out: PathBuf::from("out"),
            seed: 0,
            solver: fixtures::standard_config(),
            boundary: BoundarySpec::default(),
            initial: InitialSpec::default(),
            calibration: CalibrationSpec::default(),
            verify: VerifySpec::default(),
            stability: StabilitySpec::default(),
            reproductive: ReproductiveSpec::default(),
            lift: LiftSpec::default(),
            output: OutputSpec::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

/// Tables that are single values (tagged enums) rather than sections.
const LEAF_TABLES: [&str; 1] = ["boundary.time"];

fn invalid(path: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {why}"))
}

fn positive(path: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(path, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    /// Parse a TOML document; defaults are filled in and logged.
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<(RunConfig, Vec<String>), CliError> {
        let raw: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        let defaults = cfg.defaults_used(&raw)?;
        for d in &defaults {
            log::info!("default {d}");
        }
        cfg.validate()?;
        Ok((cfg, defaults))
    }

    /// `section.key = value` for every resolved key absent from `raw`.
    fn defaults_used(&self, raw: &toml::Table) -> Result<Vec<String>, CliError> {
        let resolved = toml::Table::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        let mut out = Vec::new();
        fn walk(
            prefix: &str,
            resolved: &toml::Table,
            raw: Option<&toml::Table>,
            out: &mut Vec<String>,
        ) {
            let sorted: BTreeMap<_, _> = resolved.iter().collect();
            for (k, v) in sorted {
                let path = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                let given = raw.and_then(|r| r.get(k));
                match (v, given) {
                    (toml::Value::Table(sub), Some(toml::Value::Table(g)))
                        if !LEAF_TABLES.contains(&path.as_str()) =>
                    {
                        walk(&path, sub, Some(g), out)
                    }
                    (toml::Value::Table(sub), None) if !LEAF_TABLES.contains(&path.as_str()) => {
                        walk(&path, sub, None, out)
                    }
                    (_, None) => out.push(format!("{path} = {v}")),
                    _ => {}
                }
            }
        }
        walk("", &resolved, Some(raw), &mut out);
        Ok(out)
    }

    /// Read and validate a config file.
    pub fn from_file(path: &Path) -> Result<(RunConfig, Vec<String>), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        RunConfig::from_toml(&text, &base)
    }

    /// Field-level validation with `section.key` diagnostics.
    pub fn validate(&self) -> Result<(), CliError> {
        self.solver.validate().map_err(|e| {
            let msg = e.to_string();
            let msg = msg
                .strip_prefix("invalid parameter: ")
                .unwrap_or(&msg)
                .to_string();
            CliError::Config(format!("solver.{msg}"))
        })?;
        let torus = self.solver.domain == DomainKind::Torus;
        if torus && self.boundary.kind != BoundaryKind::Zero {
            return Err(invalid(
                "boundary.kind",
                "the torus has no walls; use \"zero\"",
            ));
        }
        if matches!(
            self.boundary.kind,
            BoundaryKind::BottomBump | BoundaryKind::CounterWalls
        ) && !self.boundary.amplitude.is_finite()
        {
            return Err(invalid("boundary.amplitude", "must be finite"));
        }
        if self.boundary.kind == BoundaryKind::Table && self.boundary.file.is_none() {
            return Err(invalid("boundary.file", "required for kind = \"table\""));
        }
        match self.initial.kind {
            InitialKind::TaylorGreen if !torus => {
                return Err(invalid(
                    "initial.kind",
                    "taylor_green needs domain = \"torus\"",
                ))
            }
            InitialKind::Mode if self.initial.index >= self.solver.m => {
                return Err(invalid(
                    "initial.index",
                    format!(
                        "mode {} does not exist with m = {}",
                        self.initial.index, self.solver.m
                    ),
                ))
            }
            _ => {}
        }
        if !self.initial.amplitude.is_finite() {
            return Err(invalid("initial.amplitude", "must be finite"));
        }
        positive("calibration.alpha", self.calibration.alpha)?;
        positive("calibration.k_force", self.calibration.k_force)?;
        positive("calibration.m_ball", self.calibration.m_ball)?;
        positive("verify.tolerance", self.verify.tolerance)?;
        positive("stability.perturbation", self.stability.perturbation)?;
        positive("stability.tolerance", self.stability.tolerance)?;
        positive(
            "reproductive.contraction_tolerance",
            self.reproductive.contraction_tolerance,
        )?;
        if self.reproductive.max_iter == 0 {
            return Err(invalid("reproductive.max_iter", "must be at least 1"));
        }
        if self.lift.epsilons.is_empty() {
            return Err(invalid("lift.epsilons", "need at least one value"));
        }
        for (k, &e) in self.lift.epsilons.iter().enumerate() {
            if !(e > 0.0 && e <= 1.0) {
                return Err(invalid(
                    &format!("lift.epsilons[{k}]"),
                    format!("must lie in (0, 1], got {e}"),
                ));
            }
        }
        if self.lift.samples == 0 {
            return Err(invalid("lift.samples", "must be at least 1"));
        }
        Ok(())
    }

    /// The boundary datum described by `[boundary]`.
    pub fn boundary_data(&self) -> Result<BoundaryData, CliError> {
        let data = match self.boundary.kind {
            BoundaryKind::Zero => BoundaryData::zero(),
            BoundaryKind::BottomBump => BoundaryData::bottom_bump(self.boundary.amplitude),
            BoundaryKind::CounterWalls => BoundaryData::counter_walls(self.boundary.amplitude),
            BoundaryKind::Table => {
                let file = self
                    .boundary
                    .file
                    .as_ref()
                    .ok_or_else(|| invalid("boundary.file", "missing"))?;
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    self.base_dir.join(file)
                };
                BoundaryData::table_from_file(&path).map_err(|e| invalid("boundary.file", e))?
            }
        };
        Ok(data.with_time(self.boundary.time))
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration
    /// followed by the resolved boundary datum (so a table file's contents
    /// count, not its path). Output directory and experiment are excluded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).unwrap_or_default());
        if let Ok(data) = self.boundary_data() {
            hasher.update(serde_json::to_vec(&data).unwrap_or_default());
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<(RunConfig, Vec<String>), CliError> {
        RunConfig::from_toml(text, Path::new("."))
    }

    #[test]
    fn empty_config_is_the_standard_fixture() {
        let (cfg, defaults) = parse("").unwrap();
        assert_eq!(cfg.solver, fixtures::standard_config());
        assert_eq!(cfg.boundary.kind, BoundaryKind::BottomBump);
        assert!(
            defaults.iter().any(|d| d == "solver.nu = 1.0"),
            "{defaults:?}"
        );
        assert!(
            defaults.iter().any(|d| d.starts_with("boundary.time = ")),
            "{defaults:?}"
        );
        assert!(defaults.iter().any(|d| d.starts_with("seed = ")));
    }

    #[test]
    fn given_keys_are_not_reported_as_defaults() {
        let (cfg, defaults) = parse("seed = 3\n[solver]\nnu = 0.5\n").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.solver.nu, 0.5);
        assert!(!defaults.iter().any(|d| d.starts_with("solver.nu")));
        assert!(!defaults.iter().any(|d| d.starts_with("seed")));
        assert!(defaults.iter().any(|d| d.starts_with("solver.dt")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse("[solver]\nviscosity = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("viscosity"), "{err}");
        assert!(parse("sede = 1\n").is_err());
        assert!(parse("[boundary]\namplitud = 1\n").is_err());
    }

    #[test]
    fn dt_must_divide_horizon() {
        let err = parse("[solver]\ndt = 0.3\nt_final = 1.0\n")
            .unwrap_err()
            .to_string();
        assert!(
            err.contains("solver.dt") && err.contains("t_final"),
            "{err}"
        );
        assert_eq!(parse("[solver]\ndt = 0.3\n").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn negative_viscosity_is_rejected() {
        let err = parse("[solver]\nnu = -1.0\n").unwrap_err().to_string();
        assert!(err.starts_with("solver.nu"), "{err}");
    }

    #[test]
    fn torus_requires_zero_boundary() {
        assert!(parse("[solver]\ndomain = \"torus\"\nn = 32\nm = 8\n").is_err());
        let ok = "[solver]\ndomain = \"torus\"\nn = 32\nm = 8\n[boundary]\nkind = \"zero\"\n[initial]\nkind = \"taylor_green\"\n";
        assert!(parse(ok).is_ok());
        assert!(parse("[initial]\nkind = \"taylor_green\"\n").is_err());
    }

    #[test]
    fn time_profile_and_table_parse() {
        let (cfg, _) = parse("[boundary]\ntime = { kind = \"ramp\", tau = 0.2 }\n").unwrap();
        assert_eq!(cfg.boundary.time, TimeProfile::Ramp { tau: 0.2 });
        let err = parse("[boundary]\nkind = \"table\"\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("boundary.file"));
    }

    #[test]
    fn hash_tracks_content_only() {
        let (a, _) = parse("seed = 1\n").unwrap();
        let (mut b, _) = parse("seed = 1\n").unwrap();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let (c, _) = parse("seed = 2\n").unwrap();
        assert_ne!(a.hash(), c.hash());
    }
}
