//! Moment measures of convex functions.
//!
//! The moment measure of a convex `ψ` with `0 < ∫e^{-ψ} < ∞` is the push-forward of
//! `e^{-ψ(x)} dx` under `∇ψ`. This crate computes such measures for polyhedral and analytic
//! potentials, and solves the inverse problem: given a finite discrete measure with barycenter
//! at the origin whose support spans the space, find the polyhedral potential
//! `ψ_v(x) = max_i (y_i·x − v_i)` whose moment measure it is. The inverse problem is the
//! maximization of the concave functional `I(v) = log ∫e^{-ψ_v} − Σ w_i v_i`.
//!
//! Module map:
//!
//! - [`potential`]: polyhedral potentials, evaluation, conjugation, gauge transforms
//! - [`measures`]: discrete target measures, validation and constructors
//! - [`cells`]: exact planar cell decompositions
//! - [`quadrature`]: exact (1D/2D) and Monte Carlo integration of `e^{-ψ}` over cells
//! - [`forward`]: forward moment measures of polyhedral and analytic potentials
//! - [`solver`]: the variational inverse solver
//! - [`diagnostics`]: numerical checks of the inequalities that govern the problem
//! - [`cli`]: the `moment-solver` command implementations

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cells;
pub mod cli;
pub mod diagnostics;
mod error;
mod expdd;
pub mod forward;
pub mod geometry;
pub mod io;
pub mod measures;
pub mod potential;
pub mod quadrature;
pub mod solver;

pub use error::{Error, Result};
pub use measures::{DiscreteMeasure, ValidationReport};
pub use potential::{GaugeTransform, PolyhedralPotential};
