//! Grids, sampled fields, quadrature, and Laplacians.
//!
//! Two discretizations are supported:
//!
//! - [`RadialGrid`]: spherically symmetric profiles sampled at cell centers
//!   r_i = (i + 1/2) dr on [0, r_max]. Quadrature carries the 4 pi r^2 dr
//!   measure. The Laplacian is the conservative flux stencil u'' + (2/r) u';
//!   the inner flux vanishes at r = 0 (regularity) and the profile is held
//!   at zero on the outer face (decaying fields).
//! - [`BoxGrid3`]: periodic box with power-of-two axis sizes, nodes at
//!   x = i h per axis. The Laplacian is spectral, so plane waves supported
//!   by the grid are differentiated exactly.
//!
//! Quadrature and inner products always reduce in a fixed serial order, so
//! results are reproducible bit-for-bit regardless of how callers thread
//! around them. `integrate` on a radial grid is a composite midpoint rule;
//! for smooth profiles that decay below rounding at r_max it converges
//! superalgebraically because the even extension has no boundary terms.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

pub mod fft;
pub mod io;

use fft::Fft3;

/// Errors from grid construction and field operations.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GridError {
    #[error("radial grid needs at least 16 cells, got {actual}")]
    TooFewCells { actual: usize },
    #[error("box axis {axis} has {size} cells; sizes must be powers of two, at least 16")]
    BadAxisSize { axis: usize, size: usize },
    #[error("grid extent must be positive and finite, got {value}")]
    BadExtent { value: f64 },
    #[error("field length {actual} does not match grid cell count {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },
    #[error("operation requires a {expected} grid")]
    WrongGridKind { expected: &'static str },
}

/// Cell-centered radial grid on [0, r_max].
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    n: usize,
    r_max: f64,
    dr: f64,
}

impl RadialGrid {
    pub fn new(n: usize, r_max: f64) -> Result<Self, GridError> {
        if n < 16 {
            return Err(GridError::TooFewCells { actual: n });
        }
        if !r_max.is_finite() || r_max <= 0.0 {
            return Err(GridError::BadExtent { value: r_max });
        }
        Ok(Self {
            n,
            r_max,
            dr: r_max / n as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    /// Node radius r_i = (i + 1/2) dr.
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dr
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.node(i))
    }

    /// Quadrature weight 4 pi r_i^2 dr of cell i.
    pub fn weight(&self, i: usize) -> f64 {
        let r = self.node(i);
        4.0 * PI * r * r * self.dr
    }
}

/// Periodic box with power-of-two axis sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxGrid3 {
    n: [usize; 3],
    lengths: [f64; 3],
    h: [f64; 3],
}

impl BoxGrid3 {
    pub fn new(n: [usize; 3], lengths: [f64; 3]) -> Result<Self, GridError> {
        for axis in 0..3 {
            if n[axis] < 16 || !n[axis].is_power_of_two() {
                return Err(GridError::BadAxisSize {
                    axis,
                    size: n[axis],
                });
            }
            if !lengths[axis].is_finite() || lengths[axis] <= 0.0 {
                return Err(GridError::BadExtent {
                    value: lengths[axis],
                });
            }
        }
        let h = [
            lengths[0] / n[0] as f64,
            lengths[1] / n[1] as f64,
            lengths[2] / n[2] as f64,
        ];
        Ok(Self { n, lengths, h })
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1] * self.n[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn sizes(&self) -> [usize; 3] {
        self.n
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.h
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[0] * self.h[1] * self.h[2]
    }

    pub fn volume(&self) -> f64 {
        self.lengths[0] * self.lengths[1] * self.lengths[2]
    }

    /// Row-major flat index of cell (i, j, k).
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n[1] + j) * self.n[2] + k
    }

    /// Node position of cell (i, j, k).
    pub fn node(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        [
            i as f64 * self.h[0],
            j as f64 * self.h[1],
            k as f64 * self.h[2],
        ]
    }

    /// Signed wavenumbers 2 pi m / L along one axis, in FFT output order.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        let step = 2.0 * PI / self.lengths[axis];
        (0..n)
            .map(|m| {
                let signed = if m <= n / 2 {
                    m as isize
                } else {
                    m as isize - n as isize
                };
                signed as f64 * step
            })
            .collect()
    }

    /// |k|^2 for every cell, row-major, in FFT output order.
    pub fn k_squared(&self) -> Vec<f64> {
        let kx = self.wavenumbers(0);
        let ky = self.wavenumbers(1);
        let kz = self.wavenumbers(2);
        let mut out = Vec::with_capacity(self.len());
        for &a in &kx {
            for &b in &ky {
                for &c in &kz {
                    out.push(a * a + b * b + c * c);
                }
            }
        }
        out
    }
}

/// A grid handle shared by the fields that live on it.
#[derive(Debug, Clone, PartialEq)]
pub enum Grid {
    Radial(RadialGrid),
    Box3(BoxGrid3),
}

impl Grid {
    pub fn radial(n: usize, r_max: f64) -> Result<Arc<Grid>, GridError> {
        Ok(Arc::new(Grid::Radial(RadialGrid::new(n, r_max)?)))
    }

    pub fn box3(n: [usize; 3], lengths: [f64; 3]) -> Result<Arc<Grid>, GridError> {
        Ok(Arc::new(Grid::Box3(BoxGrid3::new(n, lengths)?)))
    }

    pub fn len(&self) -> usize {
        match self {
            Grid::Radial(g) => g.len(),
            Grid::Box3(g) => g.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_radial(&self) -> Option<&RadialGrid> {
        match self {
            Grid::Radial(g) => Some(g),
            Grid::Box3(_) => None,
        }
    }

    pub fn as_box(&self) -> Option<&BoxGrid3> {
        match self {
            Grid::Box3(g) => Some(g),
            Grid::Radial(_) => None,
        }
    }

    pub fn expect_radial(&self) -> Result<&RadialGrid, GridError> {
        self.as_radial()
            .ok_or(GridError::WrongGridKind { expected: "radial" })
    }

    pub fn expect_box(&self) -> Result<&BoxGrid3, GridError> {
        self.as_box()
            .ok_or(GridError::WrongGridKind { expected: "box" })
    }

    /// Quadrature weight of flat cell index `idx`.
    pub fn weight(&self, idx: usize) -> f64 {
        match self {
            Grid::Radial(g) => g.weight(idx),
            Grid::Box3(g) => g.cell_volume(),
        }
    }
}

fn check_finite(values: &[f64]) -> Result<(), GridError> {
    for (index, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(GridError::NonFinite { index });
        }
    }
    Ok(())
}

fn check_finite_complex(values: &[Complex64]) -> Result<(), GridError> {
    for (index, v) in values.iter().enumerate() {
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(GridError::NonFinite { index });
        }
    }
    Ok(())
}

/// Real scalar field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl RealField {
    /// Wraps sample values, rejecting length mismatches and non-finite entries.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    /// Samples f(r) at the radial nodes.
    pub fn from_radial_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let radial = grid.expect_radial()?;
        let values: Vec<f64> = radial.nodes().map(f).collect();
        Self::new(grid.clone(), values)
    }

    /// Samples f(x) at the box nodes.
    pub fn from_box_fn(grid: &Arc<Grid>, f: impl Fn([f64; 3]) -> f64) -> Result<Self, GridError> {
        let b = grid.expect_box()?;
        let [nx, ny, nz] = b.sizes();
        let mut values = Vec::with_capacity(b.len());
        for i in 0..nx {
            for j in 0..ny {
                for k in 0..nz {
                    values.push(f(b.node(i, j, k)));
                }
            }
        }
        Self::new(grid.clone(), values)
    }

    /// Internal constructor for hot paths that already guarantee the invariants.
    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        check_finite(&self.values)
    }
}

/// Complex scalar field sampled on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        check_finite_complex(&values)?;
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Promotes a real field to a complex one with zero imaginary part.
    pub fn from_real(f: &RealField) -> Self {
        Self {
            grid: f.grid.clone(),
            values: f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub(crate) fn from_raw(grid: Arc<Grid>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn check_finite(&self) -> Result<(), GridError> {
        check_finite_complex(&self.values)
    }
}

/// General field configuration (u, Theta, E, H) on a box grid.
///
/// The scalar u is the matter amplitude; theta, efield and hfield hold the
/// Cartesian components of the phase current and of the electric and
/// magnetic fields. Vector components only have a meaning on the 3D box, so
/// radial grids are rejected. Whether efield is compatible with the charge
/// q u^2 (the Gauss constraint) depends on the coupling, so it is checked
/// where the energy is evaluated, not at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    u: RealField,
    theta: [RealField; 3],
    efield: [RealField; 3],
    hfield: [RealField; 3],
}

impl FullState {
    pub fn new(
        u: RealField,
        theta: [RealField; 3],
        efield: [RealField; 3],
        hfield: [RealField; 3],
    ) -> Result<Self, GridError> {
        u.grid.expect_box()?;
        for f in theta.iter().chain(efield.iter()).chain(hfield.iter()) {
            if f.grid != u.grid {
                return Err(GridError::GridMismatch);
            }
        }
        Ok(Self {
            u,
            theta,
            efield,
            hfield,
        })
    }

    /// State with zero phase current and zero fields.
    pub fn matter_only(u: RealField) -> Result<Self, GridError> {
        u.grid.expect_box()?;
        let zero = || {
            [
                RealField::zeros(u.grid.clone()),
                RealField::zeros(u.grid.clone()),
                RealField::zeros(u.grid.clone()),
            ]
        };
        let (theta, efield, hfield) = (zero(), zero(), zero());
        Ok(Self {
            u,
            theta,
            efield,
            hfield,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.u.grid
    }

    pub fn u(&self) -> &RealField {
        &self.u
    }

    pub fn theta(&self) -> &[RealField; 3] {
        &self.theta
    }

    pub fn efield(&self) -> &[RealField; 3] {
        &self.efield
    }

    pub fn hfield(&self) -> &[RealField; 3] {
        &self.hfield
    }
}

/// Integral of f over its domain (4 pi r^2 dr radially, h^3 on the box).
pub fn integrate(f: &RealField) -> f64 {
    match f.grid.as_ref() {
        Grid::Radial(g) => {
            let mut sum = 0.0;
            for (i, v) in f.values.iter().enumerate() {
                sum += v * g.weight(i);
            }
            sum
        }
        Grid::Box3(g) => {
            let mut sum = 0.0;
            for v in &f.values {
                sum += v;
            }
            sum * g.cell_volume()
        }
    }
}

/// Weighted inner product of two real fields on the same grid.
pub fn inner(f: &RealField, g: &RealField) -> Result<f64, GridError> {
    if f.grid != g.grid {
        return Err(GridError::GridMismatch);
    }
    Ok(match f.grid.as_ref() {
        Grid::Radial(r) => {
            let mut sum = 0.0;
            for i in 0..r.len() {
                sum += f.values[i] * g.values[i] * r.weight(i);
            }
            sum
        }
        Grid::Box3(b) => {
            let mut sum = 0.0;
            for i in 0..b.len() {
                sum += f.values[i] * g.values[i];
            }
            sum * b.cell_volume()
        }
    })
}

/// L2 norm sqrt(integral of f^2).
pub fn norm_l2(f: &RealField) -> f64 {
    inner(f, f).expect("same grid").max(0.0).sqrt()
}

/// Radial flux-form Laplacian applied to raw samples.
///
/// lap_i = (F_{i+1/2} - F_{i-1/2}) / (r_i^2 dr) with face flux
/// F = r_face^2 du/dr; the flux through r = 0 vanishes and the outer face
/// uses the mirror ghost -u_{n-1}, which pins u to zero at r_max. The
/// operator is self-adjoint in the 4 pi r^2 dr inner product, and its
/// Dirichlet form is nonnegative, so -lap is positive semidefinite.
///
/// Dividing the flux difference by the midpoint weight r_i^2 dr instead of
/// the exact shell volume keeps the operator adjoint to the quadrature, at
/// the price of a known bounded lumping at the axis: the first cell carries
/// a 4/3 scale on the continuum Laplacian (the two volumes differ by that
/// factor there, and by 1 + O(dr^2/r^2) elsewhere). The cell's quadrature
/// weight is O(dr^3), so energies, gradients, and residuals are unaffected;
/// only pointwise reads of the first cell see it.
pub(crate) fn radial_laplacian_into(g: &RadialGrid, u: &[f64], out: &mut [f64]) {
    let n = g.len();
    let dr = g.dr();
    let inv_dr = 1.0 / dr;
    for i in 0..n {
        let r_lo = i as f64 * dr;
        let r_hi = (i as f64 + 1.0) * dr;
        let flux_lo = if i == 0 {
            0.0
        } else {
            r_lo * r_lo * (u[i] - u[i - 1]) * inv_dr
        };
        let flux_hi = if i + 1 < n {
            r_hi * r_hi * (u[i + 1] - u[i]) * inv_dr
        } else {
            r_hi * r_hi * (-2.0 * u[i]) * inv_dr
        };
        let r = g.node(i);
        out[i] = (flux_hi - flux_lo) / (r * r * dr);
    }
}

/// Solves (I - c lap) x = rhs on the radial grid by the Thomas algorithm,
/// c > 0. The tridiagonal rows mirror `radial_laplacian_into` exactly, so
/// applying that stencil to the solution reproduces the right-hand side;
/// the matrix is strictly diagonally dominant, keeping the sweep stable.
pub(crate) fn radial_helmholtz_solve(g: &RadialGrid, c: f64, rhs: &[f64]) -> Vec<f64> {
    let n = g.len();
    let dr = g.dr();
    let row = |i: usize| -> (f64, f64, f64) {
        let r_lo = i as f64 * dr;
        let r_hi = (i as f64 + 1.0) * dr;
        let r = g.node(i);
        let s = 1.0 / (r * r * dr * dr);
        let lower = if i == 0 { 0.0 } else { r_lo * r_lo * s };
        let upper = if i + 1 < n { r_hi * r_hi * s } else { 0.0 };
        let outer = if i + 1 < n { 1.0 } else { 2.0 };
        let diag = -(r_lo * r_lo + outer * r_hi * r_hi) * s;
        (lower, diag, upper)
    };
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut x = rhs.to_vec();
    let (_, d0, u0) = row(0);
    diag[0] = 1.0 - c * d0;
    upper[0] = -c * u0;
    for i in 1..n {
        let (li, di, ui) = row(i);
        let m = -c * li / diag[i - 1];
        diag[i] = (1.0 - c * di) - m * upper[i - 1];
        upper[i] = -c * ui;
        x[i] -= m * x[i - 1];
    }
    x[n - 1] /= diag[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = (x[i] - upper[i] * x[i + 1]) / diag[i];
    }
    x
}

/// Laplacian of a real field: flux stencil radially, spectral on the box.
pub fn laplacian(f: &RealField) -> RealField {
    match f.grid.as_ref() {
        Grid::Radial(g) => {
            let mut out = vec![0.0; g.len()];
            radial_laplacian_into(g, &f.values, &mut out);
            RealField::from_raw(f.grid.clone(), out)
        }
        Grid::Box3(g) => {
            let mut buf: Vec<Complex64> =
                f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let mut fft = Fft3::new(g.sizes());
            fft.forward(&mut buf);
            let k2 = g.k_squared();
            for (v, &k) in buf.iter_mut().zip(&k2) {
                *v *= -k;
            }
            fft.inverse(&mut buf);
            let out: Vec<f64> = buf.iter().map(|v| v.re).collect();
            RealField::from_raw(f.grid.clone(), out)
        }
    }
}

/// Laplacian of a complex field.
pub fn laplacian_complex(f: &ComplexField) -> ComplexField {
    match f.grid.as_ref() {
        Grid::Radial(g) => {
            let n = g.len();
            let re: Vec<f64> = f.values.iter().map(|v| v.re).collect();
            let im: Vec<f64> = f.values.iter().map(|v| v.im).collect();
            let mut lre = vec![0.0; n];
            let mut lim = vec![0.0; n];
            radial_laplacian_into(g, &re, &mut lre);
            radial_laplacian_into(g, &im, &mut lim);
            let out: Vec<Complex64> = lre
                .iter()
                .zip(&lim)
                .map(|(&a, &b)| Complex64::new(a, b))
                .collect();
            ComplexField::from_raw(f.grid.clone(), out)
        }
        Grid::Box3(g) => {
            let mut buf = f.values.clone();
            let mut fft = Fft3::new(g.sizes());
            fft.forward(&mut buf);
            let k2 = g.k_squared();
            for (v, &k) in buf.iter_mut().zip(&k2) {
                *v *= -k;
            }
            fft.inverse(&mut buf);
            ComplexField::from_raw(f.grid.clone(), buf)
        }
    }
}

/// Spectral divergence of a 3-vector field on the box.
///
/// Each component is differentiated by the Fourier multiplier i k_j. The
/// unmatched Nyquist mode of an even-sized axis carries no usable sign, so
/// its odd-derivative multiplier is zero, the standard choice that keeps the
/// result real.
pub fn divergence(components: &[RealField; 3]) -> Result<RealField, GridError> {
    let grid = components[0].grid.clone();
    let b = grid.expect_box()?;
    if components[1].grid != grid || components[2].grid != grid {
        return Err(GridError::GridMismatch);
    }
    let sizes = b.sizes();
    let mut fft = Fft3::new(sizes);
    let wavenumbers: [Vec<f64>; 3] = [b.wavenumbers(0), b.wavenumbers(1), b.wavenumbers(2)];
    let mut acc = vec![Complex64::new(0.0, 0.0); b.len()];
    for axis in 0..3 {
        let mut buf: Vec<Complex64> = components[axis]
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft.forward(&mut buf);
        let nyquist = sizes[axis] / 2;
        let mut flat = 0usize;
        for i in 0..sizes[0] {
            for j in 0..sizes[1] {
                for k in 0..sizes[2] {
                    let mode = [i, j, k][axis];
                    let kv = if mode == nyquist {
                        0.0
                    } else {
                        wavenumbers[axis][mode]
                    };
                    acc[flat] += buf[flat] * Complex64::new(0.0, kv);
                    flat += 1;
                }
            }
        }
    }
    fft.inverse(&mut acc);
    Ok(RealField::from_raw(
        grid,
        acc.iter().map(|v| v.re).collect(),
    ))
}

fn shifted_index(n: [usize; 3], cells: [i64; 3], i: usize, j: usize, k: usize) -> (usize, usize, usize) {
    let wrap = |idx: usize, shift: i64, len: usize| -> usize {
        let len_i = len as i64;
        let mut s = (idx as i64 - shift) % len_i;
        if s < 0 {
            s += len_i;
        }
        s as usize
    };
    (
        wrap(i, cells[0], n[0]),
        wrap(j, cells[1], n[1]),
        wrap(k, cells[2], n[2]),
    )
}

/// Circular shift of a box field by whole cells: out(x) = f(x - cells * h).
///
/// The shift is an exact sample permutation: the multiset of samples is
/// preserved bit-for-bit, and serial quadrature over the shifted field
/// agrees with the original to summation-order rounding.
pub fn translate_cells(f: &RealField, cells: [i64; 3]) -> Result<RealField, GridError> {
    let g = f.grid.expect_box()?;
    let n = g.sizes();
    let mut out = vec![0.0; f.values.len()];
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let (si, sj, sk) = shifted_index(n, cells, i, j, k);
                out[g.index(i, j, k)] = f.values[g.index(si, sj, sk)];
            }
        }
    }
    Ok(RealField::from_raw(f.grid.clone(), out))
}

/// Cubic Lagrange evaluation of a radial profile at an arbitrary radius:
/// even reflection across the axis (smooth radial functions have only even
/// r-derivatives at the origin), zero beyond the outer edge.
///
/// Fourth-order accurate between nodes; in particular the discrete Laplacian
/// of a resampled smooth profile stays second-order consistent, which linear
/// interpolation would not give (its kinks dominate second differences).
pub fn sample_radial_profile(f: &RealField, r: f64) -> Result<f64, GridError> {
    let g = f.grid.expect_radial()?;
    let n = g.len() as i64;
    let x = r.abs() / g.dr() - 0.5;
    let base = x.floor();
    let t = x - base;
    let sample = |j: i64| -> f64 {
        let j = if j < 0 { -1 - j } else { j };
        if j < n {
            f.values[j as usize]
        } else {
            0.0
        }
    };
    let i0 = base as i64;
    let (u0, u1, u2, u3) = (sample(i0 - 1), sample(i0), sample(i0 + 1), sample(i0 + 2));
    Ok(u0 * (-t * (t - 1.0) * (t - 2.0) / 6.0)
        + u1 * ((t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0)
        + u2 * (-(t + 1.0) * t * (t - 2.0) / 2.0)
        + u3 * ((t + 1.0) * t * (t - 1.0) / 6.0))
}

/// Resamples a radial profile onto another radial grid.
pub fn resample_radial(f: &RealField, target: &Arc<Grid>) -> Result<RealField, GridError> {
    let g = target.expect_radial()?;
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.len() {
        out.push(sample_radial_profile(f, g.node(i))?);
    }
    Ok(RealField::from_raw(target.clone(), out))
}

/// Places a radial profile onto a box grid around the given center, using
/// plain (unwrapped) distance; the profile must have decayed within the box.
pub fn radial_to_box(
    f: &RealField,
    target: &Arc<Grid>,
    center: [f64; 3],
) -> Result<RealField, GridError> {
    let b = target.expect_box()?;
    let n = b.sizes();
    let mut out = Vec::with_capacity(b.len());
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let x = b.node(i, j, k);
                let r = ((x[0] - center[0]).powi(2)
                    + (x[1] - center[1]).powi(2)
                    + (x[2] - center[2]).powi(2))
                .sqrt();
                out.push(sample_radial_profile(f, r)?);
            }
        }
    }
    Ok(RealField::from_raw(target.clone(), out))
}

/// Circular shift of a complex box field by whole cells.
pub fn translate_cells_complex(f: &ComplexField, cells: [i64; 3]) -> Result<ComplexField, GridError> {
    let g = f.grid.expect_box()?;
    let n = g.sizes();
    let mut out = vec![Complex64::new(0.0, 0.0); f.values.len()];
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let (si, sj, sk) = shifted_index(n, cells, i, j, k);
                out[g.index(i, j, k)] = f.values[g.index(si, sj, sk)];
            }
        }
    }
    Ok(ComplexField::from_raw(f.grid.clone(), out))
}
