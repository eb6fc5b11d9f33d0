//! Soliton families by normalized gradient flow.
//!
//! Two descent modes realize the variational problems. Fixed-charge descent
//! minimizes E over {C = c}: step down the gradient shifted by the
//! constraint multiplier, then rescale back onto the constraint sphere.
//! Penalized descent minimizes J_delta = Lambda + delta Phi without a
//! constraint; its minimizers carry the charge c_delta = C(u_delta) and
//! minimize E at that charge, which `sweep` cross-checks.
//!
//! Iterates are not folded to be nonnegative: the implicit resolvent has a
//! positive kernel and seeds are nonnegative, so the flow stays essentially
//! positive on its own, and folding would put derivative kinks wherever the
//! tail brushes zero, leaving a residual floor set by the kink size.
//!
//! Both modes use a semi-implicit step: the Laplacian part of the gradient
//! is treated backward in time ((I - tau lap)^-1 via a tridiagonal sweep
//! radially, a spectral divide on the box), so the usable step size is set
//! by the nonlinearity rather than by the grid spacing. Energy increase
//! beyond a rounding allowance rejects the step and halves tau; accepted
//! steps regrow it toward the configured value.

use crate::functionals::{
    assemble, charge, sample_potential, Assembled, CoercivityParams, FunctionalError,
    PhysicsConfig,
};
use crate::grid::{
    self, fft::Fft3, laplacian, norm_l2, radial_helmholtz_solve, translate_cells, Grid,
    GridError, RealField,
};
use crate::poisson::BoxPoissonSolver;
use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

/// Relative energy increase tolerated in an accepted step; anything larger
/// rejects the step and halves the step size.
pub const DESCENT_SLACK: f64 = 1e-12;

/// Required margin, relative to the larger value, for the sweep's strict
/// monotonicity chains: adjacent values closer than this do not certify
/// strictness.
pub const MONOTONICITY_SLACK: f64 = 1e-10;

/// Penalized descent reports a vanishing iterate when the charge falls below
/// this fraction of the seed charge; beyond the critical penalty weight the
/// infimum is only approached by states collapsing to zero.
const VANISHING_CHARGE_FACTOR: f64 = 1e-4;

/// Step halvings allowed within a single descent step before giving up.
const MAX_HALVINGS: u32 = 40;

/// Consecutive accepted-but-rising steps (each within `DESCENT_SLACK`)
/// before the flow is declared stuck.
const MAX_RISING_STEPS: u32 = 10;

/// Errors from soliton computation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MinimizerError {
    #[error("grid error: {0}")]
    Grid(#[from] GridError),
    #[error("functional error: {0}")]
    Functional(#[from] FunctionalError),
    #[error("model error: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error("field solve error: {0}")]
    Poisson(#[from] crate::poisson::PoissonError),
    #[error("step size must be positive and finite, got {0}")]
    BadStep(f64),
    #[error("iteration budget must be at least 1")]
    BadIterationBudget,
    #[error("tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    #[error("target charge must be positive and finite, got {0}")]
    BadCharge(f64),
    #[error("penalization weight must be positive and finite, got {0}")]
    BadDelta(f64),
    #[error("initial-guess width must be positive and finite, got {0}")]
    BadWidth(f64),
    #[error("initial guess has zero charge")]
    ZeroSeed,
    #[error("sweep values must be strictly increasing")]
    UnsortedSweep,
    #[error(
        "did not converge within {iterations} iterations \
         (objective change {objective_change:.3e}, residual {residual:.3e})"
    )]
    NotConverged {
        iterations: usize,
        objective_change: f64,
        residual: f64,
        record: Box<SolitonRecord>,
    },
    #[error("step size collapsed at iteration {iteration} (tau = {tau:.3e})")]
    StepSizeFailure { iteration: usize, tau: f64 },
    #[error(
        "iterate vanished at iteration {iteration} (penalty weight {delta}): \
         the hylomorphy condition likely fails here"
    )]
    VanishingIterate { delta: f64, iteration: usize },
}

/// A converged soliton: the profile, its potential, and the scalar
/// diagnostics of the stationary equation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolitonRecord {
    delta: Option<f64>,
    charge: f64,
    energy: f64,
    lambda: f64,
    omega: f64,
    residual: f64,
    iterations: usize,
    u: RealField,
    phi: RealField,
}

impl SolitonRecord {
    /// Penalization weight that produced this record, if any.
    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// Hylenic charge C of the profile.
    pub fn charge(&self) -> f64 {
        self.charge
    }

    /// Static energy E of the profile.
    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Hylenic ratio E/C.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Frequency of the stationary equation (the matter operator applied to
    /// u equals -omega u).
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Normalized L2 residual of the stationary equation.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Accepted descent steps taken.
    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Converged profile.
    pub fn u(&self) -> &RealField {
        &self.u
    }

    /// Electrostatic potential of the converged profile (zeros at q = 0).
    pub fn phi(&self) -> &RealField {
        &self.phi
    }

    /// Whether the record certifies the hylomorphy condition Lambda < E0.
    pub fn hylomorphic(&self, e0: f64) -> bool {
        self.lambda < e0
    }

    /// Phi = E + 2aC^s for the given coercivity parameters.
    pub fn phi_value(&self, cp: &CoercivityParams) -> f64 {
        self.energy + 2.0 * cp.a() * self.charge.powf(cp.s())
    }

    /// Positivity witness E + aC^s.
    pub fn witness(&self, cp: &CoercivityParams) -> f64 {
        self.energy + cp.a() * self.charge.powf(cp.s())
    }

    /// J_delta = Lambda + delta Phi, when this record came from penalized
    /// descent.
    pub fn penalized_value(&self, cp: &CoercivityParams) -> Option<f64> {
        self.delta.map(|d| self.lambda + d * self.phi_value(cp))
    }
}

/// Starting state for the flow.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialGuess {
    /// Centered Gaussian; in fixed-charge mode the width is fitted so a
    /// unit-amplitude profile carries the target charge, in penalized mode
    /// the width is 1.
    FittedGaussian,
    /// Centered Gaussian of the given width.
    GaussianWidth(f64),
    /// Explicit seed, e.g. a soliton of a nearby parameter.
    Seed(RealField),
}

/// Flow parameters: grid, step size, budget, and stopping tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizerConfig {
    grid: Arc<Grid>,
    tau: f64,
    max_iterations: usize,
    energy_tol: f64,
    residual_tol: f64,
    guess: InitialGuess,
}

impl MinimizerConfig {
    pub fn new(
        grid: &Arc<Grid>,
        tau: f64,
        max_iterations: usize,
        energy_tol: f64,
        residual_tol: f64,
    ) -> Result<Self, MinimizerError> {
        if !tau.is_finite() || tau <= 0.0 {
            return Err(MinimizerError::BadStep(tau));
        }
        if max_iterations == 0 {
            return Err(MinimizerError::BadIterationBudget);
        }
        for &tol in &[energy_tol, residual_tol] {
            if !tol.is_finite() || tol <= 0.0 {
                return Err(MinimizerError::BadTolerance(tol));
            }
        }
        Ok(Self {
            grid: grid.clone(),
            tau,
            max_iterations,
            energy_tol,
            residual_tol,
            guess: InitialGuess::FittedGaussian,
        })
    }

    pub fn with_guess(mut self, guess: InitialGuess) -> Self {
        self.guess = guess;
        self
    }

    pub fn with_seed(self, seed: RealField) -> Self {
        self.with_guess(InitialGuess::Seed(seed))
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    pub fn energy_tol(&self) -> f64 {
        self.energy_tol
    }

    pub fn residual_tol(&self) -> f64 {
        self.residual_tol
    }

    pub fn guess(&self) -> &InitialGuess {
        &self.guess
    }
}

#[derive(Debug, Clone, Copy)]
enum FlowMode<'a> {
    FixedCharge { c: f64 },
    Penalized { delta: f64, cp: &'a CoercivityParams },
}

/// Solves (I - c lap) x = rhs on either grid kind.
fn shifted_inverse(rhs: &RealField, c: f64) -> RealField {
    match rhs.grid().as_ref() {
        Grid::Radial(g) => {
            let x = radial_helmholtz_solve(g, c, rhs.values());
            RealField::from_raw(rhs.grid().clone(), x)
        }
        Grid::Box3(b) => {
            let mut buf: Vec<Complex64> = rhs
                .values()
                .iter()
                .map(|&v| Complex64::new(v, 0.0))
                .collect();
            let mut fft = Fft3::new(b.sizes());
            fft.forward(&mut buf);
            for (v, &k2) in buf.iter_mut().zip(&b.k_squared()) {
                *v /= 1.0 + c * k2;
            }
            fft.inverse(&mut buf);
            RealField::from_raw(rhs.grid().clone(), buf.iter().map(|v| v.re).collect())
        }
    }
}

struct Flow<'a> {
    cfg: &'a PhysicsConfig,
    mode: FlowMode<'a>,
    tau: f64,
    tau_cap: f64,
    u: RealField,
    asm: Assembled,
    charge: f64,
    objective: f64,
    solver: Option<BoxPoissonSolver>,
    seed_charge: f64,
    rising: u32,
    iterations: usize,
}

fn gaussian_seed(grid: &Arc<Grid>, width: f64) -> Result<RealField, MinimizerError> {
    if !width.is_finite() || width <= 0.0 {
        return Err(MinimizerError::BadWidth(width));
    }
    let field = match grid.as_ref() {
        Grid::Radial(_) => {
            RealField::from_radial_fn(grid, |r| (-r * r / (2.0 * width * width)).exp())?
        }
        Grid::Box3(b) => {
            let half = [
                b.lengths()[0] / 2.0,
                b.lengths()[1] / 2.0,
                b.lengths()[2] / 2.0,
            ];
            RealField::from_box_fn(grid, |x| {
                let r2 = (x[0] - half[0]).powi(2)
                    + (x[1] - half[1]).powi(2)
                    + (x[2] - half[2]).powi(2);
                (-r2 / (2.0 * width * width)).exp()
            })?
        }
    };
    Ok(field)
}

fn default_width(grid: &Grid, target_charge: Option<f64>) -> f64 {
    // Unit-amplitude Gaussian carries charge (pi w^2)^{3/2}; clamp so the
    // seed is resolved and decays inside the domain. The later charge
    // rescale absorbs any clamping.
    let raw = match target_charge {
        Some(c) => (c / PI.powf(1.5)).cbrt(),
        None => 1.0,
    };
    let (extent, spacing) = match grid {
        Grid::Radial(g) => (g.r_max(), g.dr()),
        Grid::Box3(b) => {
            let l = b.lengths();
            let h = b.spacing();
            (l[0].min(l[1]).min(l[2]), h[0].max(h[1]).max(h[2]))
        }
    };
    raw.clamp(3.0 * spacing, extent / 6.0)
}

impl<'a> Flow<'a> {
    fn new(
        cfg: &'a PhysicsConfig,
        mode: FlowMode<'a>,
        mcfg: &MinimizerConfig,
    ) -> Result<Self, MinimizerError> {
        let target = match mode {
            FlowMode::FixedCharge { c } => Some(c),
            FlowMode::Penalized { .. } => None,
        };
        let mut u = match &mcfg.guess {
            InitialGuess::FittedGaussian => {
                gaussian_seed(&mcfg.grid, default_width(mcfg.grid.as_ref(), target))?
            }
            InitialGuess::GaussianWidth(w) => gaussian_seed(&mcfg.grid, *w)?,
            InitialGuess::Seed(seed) => {
                if seed.grid() != &mcfg.grid {
                    return Err(MinimizerError::Grid(GridError::GridMismatch));
                }
                seed.clone()
            }
        };
        for v in u.values_mut() {
            *v = v.abs();
        }
        let c_seed = charge(&u);
        if c_seed <= 0.0 {
            return Err(MinimizerError::ZeroSeed);
        }
        if let FlowMode::FixedCharge { c } = mode {
            let scale = (c / c_seed).sqrt();
            for v in u.values_mut() {
                *v *= scale;
            }
        }
        let mut solver = match (mcfg.grid.as_ref(), cfg.q() > 0.0) {
            (Grid::Box3(_), true) => Some(BoxPoissonSolver::new(&mcfg.grid)?),
            _ => None,
        };
        let asm = assemble(&u, cfg, solver.as_mut())?;
        let c_now = charge(&u);
        let objective = objective_of(&mode, asm.breakdown.total(), c_now);
        Ok(Self {
            cfg,
            mode,
            tau: mcfg.tau,
            tau_cap: mcfg.tau,
            u,
            asm,
            charge: c_now,
            objective,
            solver,
            seed_charge: c_now,
            rising: 0,
            iterations: 0,
        })
    }

    fn energy(&self) -> f64 {
        self.asm.breakdown.total()
    }

    /// Frequency and normalized residual of the stationary equation at the
    /// current iterate, from the already-assembled gradient.
    fn omega_residual(&self) -> (f64, f64) {
        let grid = self.u.grid();
        let mut pairing = 0.0;
        for i in 0..self.u.values().len() {
            let din = 0.5 * (self.asm.local_gradient.values()[i] - self.asm.laplacian.values()[i]);
            pairing += din * self.u.values()[i] * grid.weight(i);
        }
        let omega = -pairing / self.charge;
        let mut res2 = 0.0;
        for i in 0..self.u.values().len() {
            let din = 0.5 * (self.asm.local_gradient.values()[i] - self.asm.laplacian.values()[i]);
            let r = din + omega * self.u.values()[i];
            res2 += r * r * grid.weight(i);
        }
        (omega, (res2 / self.charge).sqrt())
    }

    /// One accepted descent step, halving the step size on objective
    /// increase.
    fn step(&mut self) -> Result<(), MinimizerError> {
        let (kappa, beta) = match self.mode {
            // The multiplier 2 omega u makes the constrained stationary
            // state an exact fixed point of the update; without it the
            // fixed point carries an O(tau) bias and the residual stalls.
            FlowMode::FixedCharge { .. } => (1.0, self.omega_residual().0),
            FlowMode::Penalized { delta, cp } => {
                let c = self.charge;
                let kappa = 1.0 / c + delta;
                let beta = -self.energy() / (c * c)
                    + 2.0 * cp.a() * delta * cp.s() * c.powf(cp.s() - 1.0);
                (kappa, beta)
            }
        };
        let mut halvings = 0;
        loop {
            let mut rhs = Vec::with_capacity(self.u.values().len());
            for i in 0..self.u.values().len() {
                rhs.push(
                    self.u.values()[i]
                        - self.tau
                            * (kappa * self.asm.local_gradient.values()[i]
                                + 2.0 * beta * self.u.values()[i]),
                );
            }
            let rhs = RealField::from_raw(self.u.grid().clone(), rhs);
            let mut trial = shifted_inverse(&rhs, self.tau * kappa);
            let mut c_trial = charge(&trial);
            if let FlowMode::FixedCharge { c } = self.mode {
                if c_trial > 0.0 {
                    let scale = (c / c_trial).sqrt();
                    for v in trial.values_mut() {
                        *v *= scale;
                    }
                    c_trial = charge(&trial);
                }
            }
            if c_trial > 0.0 && c_trial.is_finite() {
                if let FlowMode::Penalized { delta, .. } = self.mode {
                    if c_trial < VANISHING_CHARGE_FACTOR * self.seed_charge {
                        return Err(MinimizerError::VanishingIterate {
                            delta,
                            iteration: self.iterations,
                        });
                    }
                }
                let asm_trial = assemble(&trial, self.cfg, self.solver.as_mut())?;
                let obj_trial = objective_of(&self.mode, asm_trial.breakdown.total(), c_trial);
                let limit = self.objective + DESCENT_SLACK * self.objective.abs().max(1.0);
                if obj_trial <= limit {
                    self.rising = if obj_trial > self.objective {
                        self.rising + 1
                    } else {
                        0
                    };
                    if self.rising >= MAX_RISING_STEPS {
                        return Err(MinimizerError::StepSizeFailure {
                            iteration: self.iterations,
                            tau: self.tau,
                        });
                    }
                    self.u = trial;
                    self.asm = asm_trial;
                    self.charge = c_trial;
                    self.objective = obj_trial;
                    self.tau = (self.tau * 1.1).min(self.tau_cap);
                    self.iterations += 1;
                    return Ok(());
                }
            }
            halvings += 1;
            if halvings > MAX_HALVINGS {
                return Err(MinimizerError::StepSizeFailure {
                    iteration: self.iterations,
                    tau: self.tau,
                });
            }
            self.tau /= 2.0;
        }
    }

    fn record(&self, delta: Option<f64>, omega: f64, residual: f64) -> SolitonRecord {
        SolitonRecord {
            delta,
            charge: self.charge,
            energy: self.energy(),
            lambda: self.energy() / self.charge,
            omega,
            residual,
            iterations: self.iterations,
            u: self.u.clone(),
            phi: self.asm.breakdown.phi.clone(),
        }
    }
}

fn objective_of(mode: &FlowMode, energy: f64, c: f64) -> f64 {
    match mode {
        FlowMode::FixedCharge { .. } => energy,
        FlowMode::Penalized { delta, cp } => {
            energy / c + delta * (energy + 2.0 * cp.a() * c.powf(cp.s()))
        }
    }
}

/// Whole-cell shift, snapped to the potential's lattice, that moves the
/// density centroid (circular mean per axis) to the box center. Zero for
/// radial grids and for densities with no usable centroid.
fn recenter_shift(u: &RealField, cfg: &PhysicsConfig) -> Result<[i64; 3], MinimizerError> {
    let b = match u.grid().as_ref() {
        Grid::Box3(b) => b,
        Grid::Radial(_) => return Ok([0, 0, 0]),
    };
    let lattice = cfg.potential().lattice_cells(b)?;
    let n = b.sizes();
    let lengths = b.lengths();
    let mut re = [0.0f64; 3];
    let mut im = [0.0f64; 3];
    let mut total = 0.0f64;
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let w = u.values()[b.index(i, j, k)].powi(2);
                total += w;
                let x = b.node(i, j, k);
                for axis in 0..3 {
                    let angle = 2.0 * PI * x[axis] / lengths[axis];
                    re[axis] += w * angle.cos();
                    im[axis] += w * angle.sin();
                }
            }
        }
    }
    let mut cells = [0i64; 3];
    for axis in 0..3 {
        let magnitude = (re[axis] * re[axis] + im[axis] * im[axis]).sqrt();
        if magnitude < 1e-12 * total {
            // No preferred center along this axis (near-uniform density).
            continue;
        }
        let centroid = im[axis].atan2(re[axis]) / (2.0 * PI) * lengths[axis];
        let mut offset = lengths[axis] / 2.0 - centroid;
        offset -= (offset / lengths[axis]).round() * lengths[axis];
        let desired = (offset / b.spacing()[axis]).round();
        let period = lattice[axis] as f64;
        cells[axis] = ((desired / period).round() * period) as i64;
    }
    Ok(cells)
}

fn run_flow(
    mut flow: Flow,
    delta: Option<f64>,
    cfg: &PhysicsConfig,
    mcfg: &MinimizerConfig,
) -> Result<SolitonRecord, MinimizerError> {
    let mut previous: Option<f64> = None;
    loop {
        let (omega, residual) = flow.omega_residual();
        if let Some(prev) = previous {
            let change = (flow.objective - prev).abs();
            if change <= mcfg.energy_tol * flow.objective.abs().max(f64::MIN_POSITIVE)
                && residual <= mcfg.residual_tol
            {
                return finalize(flow, delta, omega, residual, cfg);
            }
            if flow.iterations >= mcfg.max_iterations {
                return Err(MinimizerError::NotConverged {
                    iterations: flow.iterations,
                    objective_change: change,
                    residual,
                    record: Box::new(flow.record(delta, omega, residual)),
                });
            }
        } else if flow.iterations >= mcfg.max_iterations {
            return Err(MinimizerError::NotConverged {
                iterations: flow.iterations,
                objective_change: f64::INFINITY,
                residual,
                record: Box::new(flow.record(delta, omega, residual)),
            });
        }
        previous = Some(flow.objective);
        flow.step()?;
    }
}

fn finalize(
    mut flow: Flow,
    delta: Option<f64>,
    omega: f64,
    residual: f64,
    cfg: &PhysicsConfig,
) -> Result<SolitonRecord, MinimizerError> {
    let cells = recenter_shift(&flow.u, cfg)?;
    if cells != [0, 0, 0] {
        flow.u = translate_cells(&flow.u, cells)?;
        flow.asm = assemble(&flow.u, cfg, flow.solver.as_mut())?;
        flow.charge = charge(&flow.u);
        let (omega, residual) = flow.omega_residual();
        return Ok(flow.record(delta, omega, residual));
    }
    Ok(flow.record(delta, omega, residual))
}

/// Minimizes E over {C = c} by normalized gradient flow.
///
/// The model assumptions are the caller's responsibility: degenerate models
/// (for instance a pure quadratic internal energy) still descend correctly,
/// they just cannot produce a hylomorphic record, so a failing assumption
/// report only logs a warning here.
pub fn minimize_fixed_charge(
    c: f64,
    cfg: &PhysicsConfig,
    mcfg: &MinimizerConfig,
) -> Result<SolitonRecord, MinimizerError> {
    if !c.is_finite() || c <= 0.0 {
        return Err(MinimizerError::BadCharge(c));
    }
    let report = cfg.model().check_assumptions(cfg.potential());
    if !report.all_passed() {
        log::warn!("model assumptions not all satisfied:\n{report}");
    }
    let flow = Flow::new(cfg, FlowMode::FixedCharge { c }, mcfg)?;
    run_flow(flow, None, cfg, mcfg)
}

/// Minimizes J_delta = Lambda + delta Phi by unconstrained descent.
///
/// A converged record with `penalized_value` below the rest energy
/// certifies that delta lies below the critical weight; collapse of the
/// iterate to zero charge is reported as `VanishingIterate` instead.
pub fn minimize_j_delta(
    delta: f64,
    cp: &CoercivityParams,
    cfg: &PhysicsConfig,
    mcfg: &MinimizerConfig,
) -> Result<SolitonRecord, MinimizerError> {
    if !delta.is_finite() || delta <= 0.0 {
        return Err(MinimizerError::BadDelta(delta));
    }
    let flow = Flow::new(cfg, FlowMode::Penalized { delta, cp }, mcfg)?;
    run_flow(flow, Some(delta), cfg, mcfg)
}

/// The stationary-equation operator -1/2 lap u + V u + 1/2 W'(|u|) sgn(u)
/// + q phi u, with the potential supplied by the caller.
fn matter_operator(
    u: &RealField,
    phi: &RealField,
    cfg: &PhysicsConfig,
) -> Result<RealField, MinimizerError> {
    if phi.grid() != u.grid() {
        return Err(MinimizerError::Grid(GridError::GridMismatch));
    }
    let lap = laplacian(u);
    let v = sample_potential(u, cfg)?;
    let mut out = Vec::with_capacity(u.values().len());
    for i in 0..u.values().len() {
        let value = u.values()[i];
        let mut d = -0.5 * lap.values()[i];
        if let Some(v) = &v {
            d += v.values()[i] * value;
        }
        d += 0.5 * cfg.model().w_prime_pos(value.abs()) * value.signum();
        if cfg.q() > 0.0 {
            d += cfg.q() * phi.values()[i] * value;
        }
        out.push(d);
    }
    Ok(RealField::from_raw(u.grid().clone(), out))
}

/// Recovers the frequency of the stationary equation as the Rayleigh
/// quotient omega = -<(matter operator) u, u> / <u, u>.
pub fn recover_omega(
    u: &RealField,
    phi: &RealField,
    cfg: &PhysicsConfig,
) -> Result<f64, MinimizerError> {
    let c = charge(u);
    if c <= 0.0 {
        return Err(MinimizerError::Functional(FunctionalError::ChargeUndefined));
    }
    let din = matter_operator(u, phi, cfg)?;
    Ok(-grid::inner(&din, u).map_err(GridError::from)? / c)
}

/// Normalized L2 residual of the stationary equation at the given
/// frequency: ||(matter operator) u + omega u|| / ||u||. Zero fields are
/// vacuously stationary.
pub fn residual(
    u: &RealField,
    phi: &RealField,
    omega: f64,
    cfg: &PhysicsConfig,
) -> Result<f64, MinimizerError> {
    let unorm = norm_l2(u);
    if unorm == 0.0 {
        return Ok(0.0);
    }
    let din = matter_operator(u, phi, cfg)?;
    let mut res2 = 0.0;
    for i in 0..u.values().len() {
        let r = din.values()[i] + omega * u.values()[i];
        res2 += r * r * u.grid().weight(i);
    }
    Ok(res2.sqrt() / unorm)
}

/// One strict-monotonicity chain over a sweep's converged records.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainCheck {
    /// Every adjacent pair moves in the required direction by more than the
    /// slack.
    pub holds: bool,
    /// Smallest adjacent movement in the required direction (infinite when
    /// fewer than two records converged).
    pub min_margin: f64,
}

fn check_chain(values: &[f64], increasing: bool) -> ChainCheck {
    let mut holds = true;
    let mut min_margin = f64::INFINITY;
    for pair in values.windows(2) {
        let diff = if increasing {
            pair[1] - pair[0]
        } else {
            pair[0] - pair[1]
        };
        min_margin = min_margin.min(diff);
        if diff <= MONOTONICITY_SLACK * pair[0].abs().max(pair[1].abs()).max(1.0) {
            holds = false;
        }
    }
    ChainCheck { holds, min_margin }
}

/// Strict-monotonicity report over a penalized sweep, in sweep order, using
/// only the converged entries.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    /// Converged records the chains were evaluated over.
    pub converged: usize,
    /// J_delta(u_delta) strictly increasing in delta.
    pub j_increasing: ChainCheck,
    /// Phi(u_delta) strictly decreasing.
    pub phi_decreasing: ChainCheck,
    /// Lambda(u_delta) strictly increasing.
    pub lambda_increasing: ChainCheck,
    /// C(u_delta) strictly decreasing.
    pub charge_decreasing: ChainCheck,
    /// E + aC^s strictly decreasing.
    pub witness_decreasing: ChainCheck,
}

impl MonotonicityReport {
    /// Evaluates the chains over converged records, in the given order.
    pub fn evaluate(records: &[&SolitonRecord], params: &CoercivityParams) -> Self {
        let j: Vec<f64> = records
            .iter()
            .map(|r| r.penalized_value(params).expect("penalized record"))
            .collect();
        let phi: Vec<f64> = records.iter().map(|r| r.phi_value(params)).collect();
        let lambda: Vec<f64> = records.iter().map(|r| r.lambda()).collect();
        let c: Vec<f64> = records.iter().map(|r| r.charge()).collect();
        let witness: Vec<f64> = records.iter().map(|r| r.witness(params)).collect();
        MonotonicityReport {
            converged: records.len(),
            j_increasing: check_chain(&j, true),
            phi_decreasing: check_chain(&phi, false),
            lambda_increasing: check_chain(&lambda, true),
            charge_decreasing: check_chain(&c, false),
            witness_decreasing: check_chain(&witness, false),
        }
    }

    pub fn all_hold(&self) -> bool {
        self.j_increasing.holds
            && self.phi_decreasing.holds
            && self.lambda_increasing.holds
            && self.charge_decreasing.holds
            && self.witness_decreasing.holds
    }
}

/// One sweep entry: the swept parameter and the run outcome.
#[derive(Debug)]
pub struct SweepEntry {
    pub parameter: f64,
    pub outcome: Result<SolitonRecord, MinimizerError>,
}

/// Sweep result: per-entry outcomes plus, for penalized sweeps, the
/// monotonicity report.
#[derive(Debug)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub monotonicity: Option<MonotonicityReport>,
}

/// What a sweep iterates over.
#[derive(Debug, Clone, Copy)]
pub enum SweepPlan<'a> {
    /// Ascending penalization weights minimized via J_delta.
    Penalty {
        deltas: &'a [f64],
        params: &'a CoercivityParams,
    },
    /// Ascending charges minimized at fixed charge.
    Charge { charges: &'a [f64] },
}

/// Runs the family: consecutive entries are warm-started from the last
/// converged profile, failures are recorded per entry without aborting the
/// sweep.
pub fn sweep(
    plan: SweepPlan,
    cfg: &PhysicsConfig,
    mcfg: &MinimizerConfig,
) -> Result<SweepReport, MinimizerError> {
    let values = match plan {
        SweepPlan::Penalty { deltas, .. } => deltas,
        SweepPlan::Charge { charges } => charges,
    };
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(MinimizerError::UnsortedSweep);
    }
    let mut entries = Vec::with_capacity(values.len());
    let mut warm: Option<RealField> = None;
    for &value in values {
        let run_cfg = match &warm {
            Some(seed) => mcfg.clone().with_seed(seed.clone()),
            None => mcfg.clone(),
        };
        let outcome = match plan {
            SweepPlan::Penalty { params, .. } => minimize_j_delta(value, params, cfg, &run_cfg),
            SweepPlan::Charge { .. } => minimize_fixed_charge(value, cfg, &run_cfg),
        };
        if let Ok(record) = &outcome {
            warm = Some(record.u().clone());
        }
        entries.push(SweepEntry {
            parameter: value,
            outcome,
        });
    }
    let monotonicity = match plan {
        SweepPlan::Penalty { params, .. } => {
            let converged: Vec<&SolitonRecord> = entries
                .iter()
                .filter_map(|e| e.outcome.as_ref().ok())
                .collect();
            Some(MonotonicityReport::evaluate(&converged, params))
        }
        SweepPlan::Charge { .. } => None,
    };
    Ok(SweepReport {
        entries,
        monotonicity,
    })
}
