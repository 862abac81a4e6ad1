//! Discontinuous Galerkin (SIPG) solver for a coupled protein/perfusion model:
//! a quasi-static three-compartment porous-medium system for arterial,
//! capillary and venous blood pressure, feedback-coupled to a heterodimer
//! reaction-diffusion system for healthy and misfolded protein concentrations,
//! advanced in time with a loosely-coupled implicit Euler scheme.
//!
//! Module map:
//! - [`mesh`]: 2D conforming triangular meshes with face connectivity and
//!   boundary tags, plus geometric subdomain indicators.
//! - [`space`]: broken polynomial spaces, quadrature, L² projection, field
//!   evaluation.
//! - [`assembly`]: SIPG stiffness operators, (weighted) mass matrices and
//!   load vectors over a [`sparse::SparseMatrix`].
//! - [`model`]: physical parameters, coupling laws, equilibria, dimensionless
//!   groups.
//! - [`linsolve`]: block composition of the pressure system and sparse direct
//!   / CG solvers.
//! - [`stepper`]: healthy baseline solve and the loosely-coupled time loop.
//! - [`config`] / [`output`]: run configuration parsing, VTK and CSV writers.
//! - [`verify`]: manufactured-solution convergence studies and RK4 reference
//!   integrators used as independent oracles.

pub mod assembly;
pub mod config;
pub mod error;
pub mod linsolve;
pub mod mesh;
pub mod model;
pub mod output;
pub mod quadrature;
pub mod space;
pub mod sparse;
pub mod stepper;
pub mod verify;

mod basis;

pub use error::{Error, Result};

/// A point or vector in the plane.
pub type Point2 = [f64; 2];
