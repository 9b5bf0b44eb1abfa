//! Numerical laboratory for the wave equation with localized superlinear
//! damping on exterior domains.
//!
//! The crate discretizes `u_tt - Δu + a(x)|u_t|^{r-1}u_t = 0` outside an
//! obstacle, tracks the energy, weighted energies and auxiliary functionals
//! along the run, and fits decay exponents against the rates predicted for
//! logarithmic, polynomial and compact-support weights.

// `!(x > 0.0)` rejects NaN along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod weights;

pub mod decay;
pub mod functionals;
pub mod grid;
pub mod scenario;
pub mod solver;
