//! JSON run configuration: one document, one section per subcommand.
//!
//! Parse errors surface serde's line and column; semantic failures name the
//! offending section and field. The model assumptions are checked at load
//! time, and every command except `check` (which reports them as its first
//! table row) refuses to run when they fail.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use hylo_core::functionals::PhysicsConfig;
use hylo_core::grid::Grid;
use hylo_core::minimizer::MinimizerConfig;
use hylo_core::model::{AssumptionReport, LatticePotential, NonlinearityModel};

use crate::error::CliError;
use crate::output::Stamp;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsSection,
    pub grid: GridSection,
    #[serde(default)]
    pub minimizer: MinimizerSection,
    #[serde(default)]
    pub solve: Option<SolveSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub hylomorphy: Option<HylomorphySection>,
    #[serde(default)]
    pub evolution: Option<EvolutionSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub q: f64,
    pub model: ModelSection,
    #[serde(default)]
    pub potential: Option<PotentialSection>,
}

/// W(s) = E0 s^2 - mu s^p + nu s^m.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub e0: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(default)]
    pub nu: f64,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_m")]
    pub m: f64,
}

fn default_p() -> f64 {
    3.0
}

fn default_m() -> f64 {
    4.0
}

/// V(x) = v0 * mean of sin^2(pi x_i / period_i): nonnegative, lattice
/// periodic, peak value v0.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub v0: f64,
    pub periods: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GridSection {
    Radial { n: usize, r_max: f64 },
    Box { sizes: [usize; 3], lengths: [f64; 3] },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MinimizerSection {
    pub tau: f64,
    pub max_iterations: usize,
    pub tol_energy: f64,
    pub tol_residual: f64,
}

impl Default for MinimizerSection {
    fn default() -> Self {
        Self {
            tau: 0.2,
            max_iterations: 40_000,
            tol_energy: 1e-12,
            tol_residual: 1e-6,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSection {
    pub charge: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Penalization weights, strictly increasing.
    pub deltas: Vec<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct HylomorphySection {
    /// Also bisect the largest coupling the certificate still certifies.
    pub q_threshold: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    /// Charge of the reference soliton to compute and perturb.
    pub charge: f64,
    pub dt: f64,
    pub t_final: f64,
    /// Steps between trace samples.
    pub stride: usize,
    /// Relative perturbation amplitude; 0 evolves the unperturbed soliton.
    #[serde(default)]
    pub eta: f64,
    #[serde(default = "default_band")]
    pub band: usize,
    #[serde(default)]
    pub noise_seed: u64,
    /// Verdict allowance multiple; default 10.
    #[serde(default)]
    pub multiple: Option<f64>,
}

fn default_band() -> usize {
    2
}

/// Parsed configuration with its derived core objects and artifact stamp.
pub struct Loaded {
    pub run: RunConfig,
    pub physics: PhysicsConfig,
    pub grid: Arc<Grid>,
    pub assumptions: AssumptionReport,
    pub stamp: Stamp,
}

impl Loaded {
    pub fn require_assumptions(&self) -> Result<(), CliError> {
        if self.assumptions.all_passed() {
            Ok(())
        } else {
            Err(CliError::Config(format!(
                "model assumptions failed:\n{}",
                self.assumptions
            )))
        }
    }

    pub fn minimizer_config(&self) -> Result<MinimizerConfig, CliError> {
        let m = &self.run.minimizer;
        MinimizerConfig::new(
            &self.grid,
            m.tau,
            m.max_iterations,
            m.tol_energy,
            m.tol_residual,
        )
        .map_err(|e| CliError::Config(format!("minimizer: {e}")))
    }
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let run: RunConfig = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let stamp = Stamp::new(&bytes);

    let m = &run.physics.model;
    let model = NonlinearityModel::new(m.e0, m.mu, m.nu, m.p, m.m)
        .map_err(|e| CliError::Config(format!("physics.model: {e}")))?;
    let potential = match &run.physics.potential {
        None => LatticePotential::zero(),
        Some(p) => LatticePotential::sine_squared(p.v0, p.periods)
            .map_err(|e| CliError::Config(format!("physics.potential: {e}")))?,
    };
    let assumptions = model.check_assumptions(&potential);
    let physics = PhysicsConfig::new(run.physics.q, model, potential)
        .map_err(|e| CliError::Config(format!("physics: {e}")))?;

    let grid = match run.grid {
        GridSection::Radial { n, r_max } => Grid::radial(n, r_max),
        GridSection::Box { sizes, lengths } => Grid::box3(sizes, lengths),
    }
    .map_err(|e| CliError::Config(format!("grid: {e}")))?;

    Ok(Loaded {
        run,
        physics,
        grid,
        assumptions,
        stamp,
    })
}

/// Output directory: the --out flag wins over the configured one; it is
/// created eagerly so an unusable location fails before any computation.
pub fn resolve_out(cli_out: Option<&Path>, run: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cli_out
        .map(Path::to_path_buf)
        .or_else(|| run.output_dir.clone())
        .ok_or_else(|| {
            CliError::Config("no output directory: set output_dir in the config or pass --out".into())
        })?;
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::Config(format!("output directory {}: {e}", dir.display())))?;
    Ok(dir)
}
