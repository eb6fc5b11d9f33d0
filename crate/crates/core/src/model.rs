//! Nonlinearity W and lattice potential V, with machine-checkable versions
//! of the structural assumptions the variational theory rests on.
//!
//! The builtin nonlinearity family is
//!
//! ```text
//! W(s) = E0 s^2 + N(s),       N(s) = -mu s^p + nu s^m
//! ```
//!
//! with mu, nu >= 0 and exponents in (2, 6), evaluated on the polar
//! amplitude s = |psi| >= 0. The pure focusing case nu = 0 is the motivating
//! example; nu > 0 adds a defocusing high-power floor. The builtin potential
//! family is the separable sine-squared lattice
//!
//! ```text
//! V(x) = V0 * (1/3) * sum_i sin^2(pi x_i / L_i)
//! ```
//!
//! plus the constant-zero potential. Both are nonnegative with max V = V0
//! and exactly periodic under the diagonal lattice A = diag(L).
//!
//! Constructors are deliberately laxer than the assumption set (e.g. E0 = 0
//! or p > 10/3 construct fine), so that [`NonlinearityModel::check_assumptions`]
//! can grade a failing model instead of never seeing it.

use crate::grid::{BoxGrid3, Grid, GridError, RealField};
use std::sync::Arc;

/// Errors from model construction and evaluation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("exponent {name} must lie in (2, 6), got {value}")]
    ExponentOutOfRange { name: &'static str, value: f64 },
    #[error("lattice period along axis {axis} must be positive and finite, got {value}")]
    BadPeriod { axis: usize, value: f64 },
    #[error("amplitude must be nonnegative, got {0}")]
    NegativeAmplitude(f64),
    #[error(
        "lattice period {period} along axis {axis} is not commensurate with \
         box length {box_length} and spacing {spacing}"
    )]
    Incommensurate {
        axis: usize,
        period: f64,
        box_length: f64,
        spacing: f64,
    },
    #[error("grid error: {0}")]
    Grid(#[from] GridError),
}

fn ensure_finite(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonFinite { name, value })
    }
}

fn ensure_nonnegative(name: &'static str, value: f64) -> Result<(), ModelError> {
    ensure_finite(name, value)?;
    if value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Negative { name, value })
    }
}

/// Two-power polynomial nonlinearity W(s) = E0 s^2 - mu s^p + nu s^m.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearityModel {
    e0: f64,
    mu: f64,
    nu: f64,
    p: f64,
    m: f64,
}

impl NonlinearityModel {
    pub fn new(e0: f64, mu: f64, nu: f64, p: f64, m: f64) -> Result<Self, ModelError> {
        ensure_nonnegative("E0", e0)?;
        ensure_nonnegative("mu", mu)?;
        ensure_nonnegative("nu", nu)?;
        ensure_finite("p", p)?;
        ensure_finite("m", m)?;
        if !(2.0 < p && p < 6.0) {
            return Err(ModelError::ExponentOutOfRange { name: "p", value: p });
        }
        if !(2.0 < m && m < 6.0) {
            return Err(ModelError::ExponentOutOfRange { name: "m", value: m });
        }
        Ok(Self { e0, mu, nu, p, m })
    }

    /// Pure focusing member: N(s) = -mu s^p.
    pub fn focusing(e0: f64, mu: f64, p: f64) -> Result<Self, ModelError> {
        // The second exponent is inert at nu = 0; any in-range value works.
        Self::new(e0, mu, 0.0, p, 4.0)
    }

    pub fn e0(&self) -> f64 {
        self.e0
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn p_exponent(&self) -> f64 {
        self.p
    }

    pub fn m_exponent(&self) -> f64 {
        self.m
    }

    /// N(s) for s >= 0 without the range check; hot-path use only.
    pub(crate) fn n_eval_pos(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        -self.mu * s.powf(self.p) + self.nu * s.powf(self.m)
    }

    /// N'(s) for s >= 0 without the range check.
    pub(crate) fn n_prime_pos(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        -self.mu * self.p * s.powf(self.p - 1.0) + self.nu * self.m * s.powf(self.m - 1.0)
    }

    pub(crate) fn w_eval_pos(&self, s: f64) -> f64 {
        self.e0 * s * s + self.n_eval_pos(s)
    }

    pub(crate) fn w_prime_pos(&self, s: f64) -> f64 {
        2.0 * self.e0 * s + self.n_prime_pos(s)
    }

    /// N'(s) / (2s), the anharmonic part of the scalar potential seen by a
    /// wave of amplitude s. Continuous at s = 0 because both exponents
    /// exceed 2. Reference form for the specialized evaluation inside the
    /// evolution loop, kept for cross-checking.
    #[cfg(test)]
    pub(crate) fn half_n_prime_over_s(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        if s == 0.0 {
            return 0.0;
        }
        0.5 * (-self.mu * self.p * s.powf(self.p - 2.0)
            + self.nu * self.m * s.powf(self.m - 2.0))
    }

    /// W(s) = E0 s^2 + N(s) on the polar amplitude s >= 0.
    pub fn w_eval(&self, s: f64) -> Result<f64, ModelError> {
        if !(s >= 0.0) {
            return Err(ModelError::NegativeAmplitude(s));
        }
        Ok(self.w_eval_pos(s))
    }

    /// W'(s) = 2 E0 s + N'(s).
    pub fn w_prime(&self, s: f64) -> Result<f64, ModelError> {
        if !(s >= 0.0) {
            return Err(ModelError::NegativeAmplitude(s));
        }
        Ok(self.w_prime_pos(s))
    }

    /// N(s) on its own; the hylomorphy probes integrate it separately.
    pub fn n_eval(&self, s: f64) -> Result<f64, ModelError> {
        if !(s >= 0.0) {
            return Err(ModelError::NegativeAmplitude(s));
        }
        Ok(self.n_eval_pos(s))
    }

    /// Searches a fixed logarithmic range [1e-3, 1e3] for an amplitude with
    /// N(s0) < -V0 s0^2 (the binding witness). Returns the amplitude with
    /// the most negative N(s)/s^2 + V0 margin, or `None` if the inequality
    /// fails everywhere on the range.
    pub fn find_s0(&self, v0: f64) -> Option<f64> {
        let mut best: Option<(f64, f64)> = None;
        // 100 points per decade over six decades.
        for j in 0..=600 {
            let s = 10f64.powf(-3.0 + j as f64 / 100.0);
            let margin = self.n_eval_pos(s) / (s * s) + v0;
            if margin < 0.0 && best.map_or(true, |(_, m)| margin < m) {
                best = Some((s, margin));
            }
        }
        best.map(|(s, _)| s)
    }

    /// Grades the structural assumptions against a potential.
    pub fn check_assumptions(&self, potential: &LatticePotential) -> AssumptionReport {
        let v0 = potential.v0();
        let mut items = Vec::with_capacity(6);

        let w1 = self.e0 > 0.0;
        items.push(AssumptionCheck {
            name: "W-i",
            passed: w1,
            detail: format!("W''(0) = 2 E0 = {}", 2.0 * self.e0),
        });

        let witness = self.find_s0(v0);
        items.push(AssumptionCheck {
            name: "W-ii",
            passed: witness.is_some(),
            detail: match witness {
                Some(s0) => format!(
                    "N({s0:.6e}) = {:.6e} < {:.6e} = -V0 s0^2",
                    self.n_eval_pos(s0),
                    -v0 * s0 * s0
                ),
                None => "no amplitude with N(s) < -V0 s^2 on [1e-3, 1e3]".to_string(),
            },
        });

        // Both powers of the builtin family sit in (2, 6) by construction;
        // |N'(s)| <= mu p s^(p-1) + nu m s^(m-1) realizes the growth bound.
        let w3 = (self.mu == 0.0 || (2.0 < self.p && self.p < 6.0))
            && (self.nu == 0.0 || (2.0 < self.m && self.m < 6.0));
        items.push(AssumptionCheck {
            name: "W-iii",
            passed: w3,
            detail: format!("growth exponents p = {}, m = {}", self.p, self.m),
        });

        // Large-s floor N(s) >= -c s^p' with 2 < p' < 10/3: decided by the
        // dominant power. The focusing term needs p < 10/3 unless the
        // defocusing term takes over at large s.
        let p_max = 2.0 + 4.0 / 3.0;
        let (w4, why) = if self.mu == 0.0 {
            (true, "N(s) >= 0 for all s".to_string())
        } else if self.nu > 0.0 && self.m > self.p {
            (
                true,
                format!("defocusing power m = {} dominates p = {}", self.m, self.p),
            )
        } else if self.nu >= self.mu && self.m == self.p {
            (true, format!("nu >= mu at equal powers p = m = {}", self.p))
        } else if self.p < p_max {
            (true, format!("focusing power p = {} < 10/3", self.p))
        } else {
            (false, format!("focusing power p = {} >= 10/3", self.p))
        };
        items.push(AssumptionCheck {
            name: "W-iv",
            passed: w4,
            detail: why,
        });

        items.push(AssumptionCheck {
            name: "V-i",
            passed: v0 >= 0.0,
            detail: format!("0 <= V(x) <= V0 = {v0}"),
        });

        items.push(AssumptionCheck {
            name: "V-ii",
            passed: true,
            detail: match potential.periods() {
                Some(l) => format!("lattice periods ({}, {}, {})", l[0], l[1], l[2]),
                None => "constant potential, trivially periodic".to_string(),
            },
        });

        AssumptionReport { items }
    }
}

/// One graded assumption.
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Pass/fail report over (W-i)..(W-iv), (V-i), (V-ii).
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub items: Vec<AssumptionCheck>,
}

impl AssumptionReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|c| c.passed)
    }
}

impl std::fmt::Display for AssumptionReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.items {
            writeln!(
                f,
                "{:6} {}  {}",
                c.name,
                if c.passed { "PASS" } else { "FAIL" },
                c.detail
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum PotentialForm {
    Zero,
    SineSquared { periods: [f64; 3] },
}

/// Nonnegative lattice potential with max V = V0.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePotential {
    v0: f64,
    form: PotentialForm,
}

impl LatticePotential {
    /// The constant-zero potential (free space).
    pub fn zero() -> Self {
        Self {
            v0: 0.0,
            form: PotentialForm::Zero,
        }
    }

    /// Separable sine-squared lattice with the given periods.
    pub fn sine_squared(v0: f64, periods: [f64; 3]) -> Result<Self, ModelError> {
        ensure_nonnegative("V0", v0)?;
        for (axis, &l) in periods.iter().enumerate() {
            if !l.is_finite() || l <= 0.0 {
                return Err(ModelError::BadPeriod { axis, value: l });
            }
        }
        Ok(Self {
            v0,
            form: PotentialForm::SineSquared { periods },
        })
    }

    /// max V over space.
    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.form, PotentialForm::Zero) || self.v0 == 0.0
    }

    /// Lattice periods, if the potential has a nontrivial lattice.
    pub fn periods(&self) -> Option<[f64; 3]> {
        match &self.form {
            PotentialForm::Zero => None,
            PotentialForm::SineSquared { periods } => Some(*periods),
        }
    }

    /// Pointwise value.
    pub fn eval(&self, x: [f64; 3]) -> f64 {
        match &self.form {
            PotentialForm::Zero => 0.0,
            PotentialForm::SineSquared { periods } => {
                let mut sum = 0.0;
                for i in 0..3 {
                    let s = (std::f64::consts::PI * x[i] / periods[i]).sin();
                    sum += s * s;
                }
                self.v0 * sum / 3.0
            }
        }
    }

    /// Grid cells per lattice step along each axis.
    ///
    /// A unit lattice vector z shifts by cells[i] * z[i] grid cells. Requires
    /// each period to divide the box length and to be a whole number of
    /// cells, so lattice translations are exact sample permutations. The
    /// constant potential is invariant under every shift; one cell stands in
    /// for its lattice step.
    pub fn lattice_cells(&self, grid: &BoxGrid3) -> Result<[i64; 3], ModelError> {
        let periods = match &self.form {
            PotentialForm::Zero => return Ok([1, 1, 1]),
            PotentialForm::SineSquared { periods } => periods,
        };
        let mut cells = [0i64; 3];
        let lengths = grid.lengths();
        let spacing = grid.spacing();
        for axis in 0..3 {
            let per_box = lengths[axis] / periods[axis];
            let per_cell = periods[axis] / spacing[axis];
            let commensurate = (per_box - per_box.round()).abs() < 1e-9 * per_box.abs()
                && per_box.round() >= 1.0
                && (per_cell - per_cell.round()).abs() < 1e-9 * per_cell.abs()
                && per_cell.round() >= 1.0;
            if !commensurate {
                return Err(ModelError::Incommensurate {
                    axis,
                    period: periods[axis],
                    box_length: lengths[axis],
                    spacing: spacing[axis],
                });
            }
            cells[axis] = per_cell.round() as i64;
        }
        Ok(cells)
    }

    /// Samples the potential on a grid. Radial grids only host the zero
    /// potential (a lattice has no spherical symmetry).
    pub fn sample(&self, grid: &Arc<Grid>) -> Result<RealField, ModelError> {
        match grid.as_ref() {
            Grid::Radial(_) => {
                if self.is_zero() {
                    Ok(RealField::zeros(grid.clone()))
                } else {
                    Err(ModelError::Grid(GridError::WrongGridKind {
                        expected: "box (lattice potentials are not radial)",
                    }))
                }
            }
            Grid::Box3(_) => Ok(RealField::from_box_fn(grid, |x| self.eval(x))?),
        }
    }
}
