//! Run configuration: one serializable struct drives both halves of the
//! pipeline. Defaults reproduce the benchmark setup: final time 1, basis
//! order 30, regularization 1e-6, 10% noise, simulation domain `(-3, 3)^2`
//! with 121 nodes per axis and 6400 time steps, observation rectangle
//! `(-1, 1)^2`.

use crate::solver::{Method, Preconditioner, SolveOptions};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown test preset '{0}' (expected test1, test2 or test3)")]
    UnknownPreset(String),
    #[error("{field}: {message}")]
    Invalid {
        field: &'static str,
        message: String,
    },
}

fn default_t_final() -> f64 {
    1.0
}
fn default_order() -> usize {
    30
}
fn default_eta() -> f64 {
    1e-6
}
fn default_delta() -> f64 {
    0.1
}
fn default_seed() -> u64 {
    7
}
fn default_domain_half_width() -> f64 {
    3.0
}
fn default_grid_nodes() -> usize {
    121
}
fn default_omega_half_width() -> f64 {
    1.0
}
fn default_steps() -> usize {
    6400
}
fn default_boundary_fraction() -> f64 {
    1.0
}
fn default_pad() -> f64 {
    1.0
}
fn default_test() -> String {
    "test1".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Relative normal-equations residual target.
    pub tolerance: f64,
    /// Iteration cap; `null` means ten times the unknown count.
    pub max_iterations: Option<usize>,
    /// "lsqr" or "cgnr".
    pub method: String,
    /// "none", "jacobi" (column scaling) or "mode-block" (exact block
    /// Jacobi of the normal equations over mode fibers).
    pub preconditioner: String,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-8,
            max_iterations: None,
            method: "lsqr".to_string(),
            preconditioner: "mode-block".to_string(),
        }
    }
}

impl SolverConfig {
    pub fn to_options(&self) -> Result<SolveOptions, ConfigError> {
        let method = match self.method.as_str() {
            "lsqr" => Method::Lsqr,
            "cgnr" => Method::Cgnr,
            other => {
                return Err(ConfigError::Invalid {
                    field: "solver.method",
                    message: format!("unknown method '{other}'"),
                })
            }
        };
        let preconditioner = match self.preconditioner.as_str() {
            "none" => Preconditioner::None,
            "jacobi" => Preconditioner::Jacobi,
            "mode-block" => Preconditioner::ModeBlockJacobi,
            other => {
                return Err(ConfigError::Invalid {
                    field: "solver.preconditioner",
                    message: format!("unknown preconditioner '{other}'"),
                })
            }
        };
        Ok(SolveOptions {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            method,
            preconditioner,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Benchmark preset: "test1", "test2" or "test3".
    pub test: String,
    /// Final observation time `T`.
    pub t_final: f64,
    /// Basis truncation order `N`.
    pub order: usize,
    /// Regularization weight.
    pub eta: f64,
    /// Multiplicative noise level.
    pub delta: f64,
    /// Noise seed.
    pub seed: u64,
    /// Simulation domain half width (before padding).
    pub domain_half_width: f64,
    /// Nodes per axis of the simulation grid (before padding).
    pub grid_nodes: usize,
    /// Observation rectangle half width.
    pub omega_half_width: f64,
    /// Number of leapfrog steps over `[0, T]`.
    pub steps: usize,
    /// Fraction of the observation boundary carrying data (one contiguous
    /// arc in perimeter order).
    pub boundary_fraction: f64,
    /// Domain padding factor: scales the simulation domain while keeping
    /// the grid spacing.
    pub pad: f64,
    /// Times at which to dump full-field snapshots.
    pub snapshot_times: Vec<f64>,
    /// Force sequential execution (the pipeline is sequential and
    /// deterministic either way; the flag is recorded in manifests).
    pub deterministic: bool,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            test: default_test(),
            t_final: default_t_final(),
            order: default_order(),
            eta: default_eta(),
            delta: default_delta(),
            seed: default_seed(),
            domain_half_width: default_domain_half_width(),
            grid_nodes: default_grid_nodes(),
            omega_half_width: default_omega_half_width(),
            steps: default_steps(),
            boundary_fraction: default_boundary_fraction(),
            pad: default_pad(),
            snapshot_times: Vec::new(),
            deterministic: false,
            solver: SolverConfig::default(),
        }
    }
}

impl RunConfig {
    /// The fast profile for smoke runs: a 61-node simulation grid (21 x 21
    /// observation nodes at the same proportions), order 10, 1600 steps.
    pub fn fast_profile(mut self) -> Self {
        self.grid_nodes = 61;
        self.order = 10;
        self.steps = 1600;
        self
    }

    /// Effective simulation extent and node count after padding: the domain
    /// grows by the padding factor, the spacing stays fixed.
    pub fn padded_domain(&self) -> (f64, usize) {
        let half = self.domain_half_width * self.pad;
        let cells = (self.grid_nodes - 1) as f64 * self.pad;
        (half, cells.round() as usize + 1)
    }

    /// Grid spacing of the simulation grid.
    pub fn spacing(&self) -> f64 {
        2.0 * self.domain_half_width / (self.grid_nodes - 1) as f64
    }

    pub fn time_step(&self) -> f64 {
        self.t_final / self.steps as f64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        crate::presets::TestCase::from_label(&self.test)
            .ok_or_else(|| ConfigError::UnknownPreset(self.test.clone()))?;
        let check = |ok: bool, field: &'static str, message: String| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::Invalid { field, message })
            }
        };
        check(
            self.t_final > 0.0,
            "t_final",
            format!("must be positive, got {}", self.t_final),
        )?;
        check(
            self.eta > 0.0,
            "eta",
            format!("must be positive, got {}", self.eta),
        )?;
        check(
            self.delta >= 0.0,
            "delta",
            format!("must be nonnegative, got {}", self.delta),
        )?;
        check(
            self.grid_nodes >= 11,
            "grid_nodes",
            format!("needs at least 11 nodes per axis, got {}", self.grid_nodes),
        )?;
        check(
            self.steps >= 2,
            "steps",
            format!("needs at least 2 steps, got {}", self.steps),
        )?;
        check(
            self.omega_half_width > 0.0 && self.omega_half_width < self.domain_half_width,
            "omega_half_width",
            format!(
                "observation rectangle must sit strictly inside the domain: {} vs {}",
                self.omega_half_width, self.domain_half_width
            ),
        )?;
        check(
            self.boundary_fraction > 0.0 && self.boundary_fraction <= 1.0,
            "boundary_fraction",
            format!("must lie in (0, 1], got {}", self.boundary_fraction),
        )?;
        check(
            self.pad >= 1.0,
            "pad",
            format!("padding factor must be at least 1, got {}", self.pad),
        )?;
        check(
            self.solver.tolerance > 0.0 && self.solver.tolerance < 1.0,
            "solver.tolerance",
            format!("must lie in (0, 1), got {}", self.solver.tolerance),
        )?;
        self.solver.to_options()?;
        Ok(())
    }
}
