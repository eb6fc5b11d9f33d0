//! Certification of the binding inequality inf Lambda < E0.
//!
//! The certificate evaluates the hylenic ratio on an explicit family of
//! trapezoid profiles: a plateau of amplitude s0 out to radius R, a linear
//! ramp to zero over one unit, nothing beyond. As R grows the ratio tends
//! to E0 + N(s0)/s0^2, so any amplitude with N(s0)/s0^2 + V0 < 0 pushes the
//! ratio below the rest energy once R is large enough, as long as the
//! repulsive field term q^2 s0^2 R^2 has not caught up. All terms are
//! evaluated by direct quadrature on an internal radial grid; the lattice
//! potential enters only through its uniform bound V0, which keeps the
//! reported ratio a valid upper bound for the true one.

use crate::functionals::{
    charge, energy_electrostatic, FunctionalError, PhysicsConfig,
};
use crate::grid::{Grid, GridError, RealField};
use crate::model::{LatticePotential, NonlinearityModel};
use std::fmt;
use std::sync::Arc;

/// Relative margin below E0 required to call the inequality certified;
/// keeps the verdict away from float-equality territory.
pub const CERTIFICATE_MARGIN: f64 = 1e-6;

/// Exponent of the auxiliary seminorm tabulated by the small-amplitude
/// probe; any value strictly between 2 and 6 works, 4 is the midpoint.
pub const SEMINORM_EXPONENT: f64 = 4.0;

/// Plateau radii swept by the certificate.
const RADIUS_SWEEP: [f64; 8] = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0];

/// Target spacing of the internal quadrature grid.
const QUADRATURE_SPACING: f64 = 0.02;

/// Errors from certificate evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HylomorphyError {
    #[error("grid error: {0}")]
    Grid(#[from] GridError),
    #[error("functional error: {0}")]
    Functional(#[from] FunctionalError),
    #[error("plateau amplitude must be positive and finite, got {0}")]
    BadAmplitude(f64),
    #[error("plateau radius must be positive and finite, got {0}")]
    BadRadius(f64),
    #[error("grid extends to {r_max} but the profile needs {required}")]
    DomainTooSmall { r_max: f64, required: f64 },
    #[error("not certified even at zero coupling; no threshold to bracket")]
    NotCertifiedAtZeroCoupling,
    #[error("still certified at coupling {probed}; threshold bracket not found")]
    ThresholdUnbounded { probed: f64 },
}

/// Piecewise-linear radial test profile: `s0` inside `plateau_radius`, a
/// unit-width linear ramp to zero, zero beyond.
pub fn trapezoid_profile(
    s0: f64,
    plateau_radius: f64,
    grid: &Arc<Grid>,
) -> Result<RealField, HylomorphyError> {
    if !s0.is_finite() || s0 <= 0.0 {
        return Err(HylomorphyError::BadAmplitude(s0));
    }
    if !plateau_radius.is_finite() || plateau_radius <= 0.0 {
        return Err(HylomorphyError::BadRadius(plateau_radius));
    }
    let g = grid.expect_radial()?;
    let required = plateau_radius + 1.0;
    if g.r_max() < required {
        return Err(HylomorphyError::DomainTooSmall {
            r_max: g.r_max(),
            required,
        });
    }
    let field = RealField::from_radial_fn(grid, |r| {
        if r < plateau_radius {
            s0
        } else if r < required {
            s0 * (required - r)
        } else {
            0.0
        }
    })?;
    Ok(field)
}

/// One certificate row: the hylenic ratio of a trapezoid profile and its
/// per-unit-charge pieces, so that
/// `lambda = E0 + kinetic + v_term + n_term + field_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaTerms {
    /// Plateau radius R of the profile.
    pub plateau_radius: f64,
    /// Upper bound for the hylenic ratio of the profile (exact when the
    /// lattice potential is zero).
    pub lambda: f64,
    /// Gradient energy per unit charge.
    pub kinetic: f64,
    /// Uniform bound V0 standing in for the lattice term.
    pub v_term: f64,
    /// Internal-energy remainder N per unit charge.
    pub n_term: f64,
    /// Electrostatic field energy per unit charge.
    pub field_term: f64,
    /// Hylenic charge of the profile.
    pub charge: f64,
}

/// Evaluates the hylenic ratio of the trapezoid profile by quadrature on an
/// internal radial grid sized to the profile.
///
/// The lattice potential is not sampled (the profile is radial, the lattice
/// is not); its pointwise bound V0 is charged in full, so the returned
/// `lambda` is an upper bound that is exact for zero potential.
pub fn lambda_of_test(
    s0: f64,
    plateau_radius: f64,
    cfg: &PhysicsConfig,
) -> Result<LambdaTerms, HylomorphyError> {
    if !plateau_radius.is_finite() || plateau_radius <= 0.0 {
        return Err(HylomorphyError::BadRadius(plateau_radius));
    }
    let r_max = plateau_radius + 2.0;
    let n = ((r_max / QUADRATURE_SPACING).ceil() as usize).max(64);
    let grid = Grid::radial(n, r_max)?;
    let u = trapezoid_profile(s0, plateau_radius, &grid)?;
    let radial_cfg = PhysicsConfig::new(
        cfg.q(),
        cfg.model().clone(),
        LatticePotential::zero(),
    )?;
    let breakdown = energy_electrostatic(&u, &radial_cfg)?;
    let c = charge(&u);
    let v_term = cfg.potential().v0();
    let kinetic = breakdown.kinetic / c;
    let n_term = breakdown.nonlinear / c;
    let field_term = breakdown.field / c;
    let lambda = breakdown.quadratic / c + kinetic + v_term + n_term + field_term;
    Ok(LambdaTerms {
        plateau_radius,
        lambda,
        kinetic,
        v_term,
        n_term,
        field_term,
        charge: c,
    })
}

/// Least-squares slope of ln(field_term) against ln(plateau_radius) over
/// the rows with a positive field term; None with fewer than two such rows.
pub fn field_term_slope(rows: &[LambdaTerms]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.field_term > 0.0)
        .map(|r| (r.plateau_radius.ln(), r.field_term.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mean_x = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var = 0.0;
    for (x, y) in &pts {
        cov += (x - mean_x) * (y - mean_y);
        var += (x - mean_x) * (x - mean_x);
    }
    (var > 0.0).then(|| cov / var)
}

/// Certificate result: the amplitude witness, the swept rows, and the
/// verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct HylomorphyReport {
    s0: Option<f64>,
    e0: f64,
    rows: Vec<LambdaTerms>,
    certified: bool,
}

impl HylomorphyReport {
    /// Amplitude witness used for the sweep; None when no amplitude beats
    /// the lattice bound (assumption W-ii fails).
    pub fn s0(&self) -> Option<f64> {
        self.s0
    }

    /// Rest energy the ratios are compared against.
    pub fn e0(&self) -> f64 {
        self.e0
    }

    /// Swept rows in ascending plateau radius.
    pub fn rows(&self) -> &[LambdaTerms] {
        &self.rows
    }

    /// Row with the smallest ratio.
    pub fn best_row(&self) -> Option<&LambdaTerms> {
        self.rows
            .iter()
            .min_by(|a, b| a.lambda.total_cmp(&b.lambda))
    }

    /// Whether some row certifies the inequality with margin.
    pub fn certified(&self) -> bool {
        self.certified
    }
}

impl fmt::Display for HylomorphyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.s0, self.best_row()) {
            (None, _) => write!(
                f,
                "not certified: no amplitude witness (assumption W-ii fails)"
            ),
            (Some(s0), Some(best)) if self.certified => write!(
                f,
                "certified: Lambda = {:.6} < E0 = {:.6} at s0 = {s0:.6}, R = {}",
                best.lambda, self.e0, best.plateau_radius
            ),
            (Some(s0), Some(best)) => write!(
                f,
                "not certified: best Lambda = {:.6} >= E0 = {:.6} at s0 = {s0:.6}, R = {}",
                best.lambda, self.e0, best.plateau_radius
            ),
            (Some(_), None) => write!(f, "not certified: no rows evaluated"),
        }
    }
}

/// Runs the certificate: picks the amplitude witness, sweeps the plateau
/// radii, and compares the best ratio against E0 with margin.
pub fn check_hylomorphy(cfg: &PhysicsConfig) -> Result<HylomorphyReport, HylomorphyError> {
    let e0 = cfg.model().e0();
    let s0 = cfg.model().find_s0(cfg.potential().v0());
    let mut rows = Vec::new();
    if let Some(s0) = s0 {
        for &r in &RADIUS_SWEEP {
            rows.push(lambda_of_test(s0, r, cfg)?);
        }
    }
    let certified = s0.is_some()
        && rows
            .iter()
            .any(|row| row.lambda < e0 - CERTIFICATE_MARGIN * e0);
    Ok(HylomorphyReport {
        s0,
        e0,
        rows,
        certified,
    })
}

/// Bracket for the largest coupling this test family still certifies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QThresholdBracket {
    certified_q: f64,
    uncertified_q: f64,
}

impl QThresholdBracket {
    /// Largest probed coupling that still certified.
    pub fn certified_q(&self) -> f64 {
        self.certified_q
    }

    /// Smallest probed coupling that failed to certify.
    pub fn uncertified_q(&self) -> f64 {
        self.uncertified_q
    }

    /// Midpoint estimate of the threshold.
    pub fn value(&self) -> f64 {
        0.5 * (self.certified_q + self.uncertified_q)
    }

    /// Bracket width relative to its upper end.
    pub fn relative_width(&self) -> f64 {
        (self.uncertified_q - self.certified_q) / self.uncertified_q
    }
}

/// Bisects the coupling for the certificate predicate, down to 1% relative
/// bracket width. The field term grows monotonically in the coupling, so
/// the predicate flips exactly once along the ray.
pub fn q_threshold(
    model: &NonlinearityModel,
    potential: &LatticePotential,
) -> Result<QThresholdBracket, HylomorphyError> {
    let certified_at = |q: f64| -> Result<bool, HylomorphyError> {
        let cfg = PhysicsConfig::new(q, model.clone(), potential.clone())?;
        Ok(check_hylomorphy(&cfg)?.certified())
    };
    if !certified_at(0.0)? {
        return Err(HylomorphyError::NotCertifiedAtZeroCoupling);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while certified_at(hi)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(HylomorphyError::ThresholdUnbounded { probed: hi });
        }
    }
    while hi - lo > 0.01 * hi {
        let mid = 0.5 * (lo + hi);
        if certified_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(QThresholdBracket {
        certified_q: lo,
        uncertified_q: hi,
    })
}

/// One row of the small-amplitude table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallAmplitudeRow {
    /// Scaling applied to the reference state.
    pub epsilon: f64,
    /// Hylenic ratio of the scaled state.
    pub lambda: f64,
    /// Scale-invariant quadratic part E0 + (kinetic + lattice)/charge.
    pub quadratic: f64,
    /// lambda - quadratic; vanishes as epsilon -> 0 at the nonlinearity's
    /// rate.
    pub remainder: f64,
    /// Auxiliary seminorm of the scaled state (exponent
    /// `SEMINORM_EXPONENT`).
    pub seminorm: f64,
}

/// Tabulates the hylenic ratio along the small-amplitude ray eps * u,
/// demonstrating that the ratio approaches its quadratic part from the
/// nonlinear side while the auxiliary seminorm shrinks linearly.
pub fn small_amplitude_probe(
    u: &RealField,
    epsilons: &[f64],
    cfg: &PhysicsConfig,
) -> Result<Vec<SmallAmplitudeRow>, HylomorphyError> {
    if charge(u) <= 0.0 {
        return Err(HylomorphyError::Functional(FunctionalError::ChargeUndefined));
    }
    for &eps in epsilons {
        if !eps.is_finite() || eps <= 0.0 {
            return Err(HylomorphyError::BadAmplitude(eps));
        }
    }
    let mut rows = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut scaled = u.clone();
        for v in scaled.values_mut() {
            *v *= eps;
        }
        let breakdown = energy_electrostatic(&scaled, cfg)?;
        let c = charge(&scaled);
        let lambda = breakdown.total() / c;
        let quadratic = (breakdown.quadratic + breakdown.kinetic + breakdown.potential_v) / c;
        let mut fourth = 0.0;
        for i in 0..scaled.values().len() {
            fourth += scaled.values()[i].abs().powf(SEMINORM_EXPONENT) * scaled.grid().weight(i);
        }
        rows.push(SmallAmplitudeRow {
            epsilon: eps,
            lambda,
            quadratic,
            remainder: lambda - quadratic,
            seminorm: fourth.powf(1.0 / SEMINORM_EXPONENT),
        });
    }
    Ok(rows)
}
