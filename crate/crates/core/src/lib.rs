//! Solver library for hylomorphic solitons of the nonlinear
//! Schrodinger-Poisson system.
//!
//! A matter field coupled to its own electrostatic potential is relaxed to a
//! constrained energy minimum at fixed charge, the binding (hylomorphy)
//! condition and the monotonicity structure of the penalized functionals are
//! checked numerically, and orbital stability is probed by direct time
//! evolution of the minimizer.

pub mod dynamics;
pub mod functionals;
pub mod grid;
pub mod hylomorphy;
pub mod minimizer;
pub mod model;
pub mod poisson;
