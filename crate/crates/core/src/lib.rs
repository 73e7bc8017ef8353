//! Reconstruction of the initial displacement and velocity of a 2D elastic
//! medium from boundary Cauchy data.
//!
//! The pipeline has two halves:
//!
//! * a forward half that synthesizes data: an explicit finite-difference
//!   simulation of the elastic wave equation on a large truncated domain,
//!   restricted to boundary traces (displacement and normal derivative) of an
//!   interior observation rectangle, optionally perturbed by multiplicative
//!   noise ([`forward`]);
//! * an inverse half that converts the traces into modal data against a
//!   Legendre polynomial–exponential time basis ([`basis`]), assembles one
//!   sparse regularized least-squares system coupling all time modes
//!   ([`reduction`]), solves it iteratively ([`solver`]), and reads the
//!   initial fields off the modal solution at t = 0 ([`recon`]).
//!
//! [`pipeline`] binds both halves into config-driven experiment runs with
//! file outputs; the `elastirec` binary is a thin CLI over it.

pub mod basis;
pub mod config;
pub mod elasticity;
pub mod forward;
pub mod io;
pub mod pipeline;
pub mod presets;
pub mod recon;
pub mod reduction;
pub mod solver;


pub use basis::{CouplingMatrix, QuadratureRule, TimeBasis};
pub use elasticity::{ElasticityField, SpatialGrid, VectorField};
