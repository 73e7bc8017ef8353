//! Config-driven orchestration of the two pipeline halves, independent of
//! any file format: synthesize traces from a benchmark preset, invert traces
//! back to initial fields, compare against the preset truth.

use crate::basis::{coupling_matrix, TimeBasis};
use crate::config::{ConfigError, RunConfig};
use crate::elasticity::{SpatialGrid, VectorField};
use crate::forward::{
    check_stability, extract_traces, simulate, add_noise, BoundaryTraces, SimOptions,
    StabilityReport, TraceWindow,
};
use crate::presets::TestCase;
use crate::recon::{metrics, reconstruct_initial, ComponentMetrics};
use crate::reduction::{
    assemble, modal_boundary_data, spacetime_residual, BoundaryMask, ModalSolution,
};
use crate::solver::solve;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Forward(#[from] crate::forward::ForwardError),
    #[error(transparent)]
    Elasticity(#[from] crate::elasticity::ElasticityError),
    #[error(transparent)]
    Reduction(#[from] crate::reduction::ReductionError),
    #[error(transparent)]
    Solve(#[from] crate::solver::SolveError),
    #[error(transparent)]
    Basis(#[from] crate::basis::BasisError),
    #[error("traces disagree with the configuration: {0}")]
    TraceMismatch(String),
}

/// Everything the forward half produces.
pub struct ForwardProducts {
    pub traces: BoundaryTraces,
    pub stability: StabilityReport,
    /// Full-field snapshots at the requested times, as `(time, field)`.
    pub snapshots: Vec<(f64, VectorField)>,
    /// The simulation grid (after padding).
    pub grid: SpatialGrid,
}

/// Synthesizes boundary traces for the configured preset: stability check,
/// leapfrog run, trace extraction, noise.
pub fn run_forward(cfg: &RunConfig) -> Result<ForwardProducts, PipelineError> {
    cfg.validate()?;
    let case = TestCase::from_label(&cfg.test).expect("validated above");
    let field = case.medium()?;
    let (half, nodes) = cfg.padded_domain();
    let grid = SpatialGrid::square(-half, half, nodes)?;
    let stability = check_stability(&field, &grid, cfg.time_step());
    let window = TraceWindow::new(
        &grid,
        -cfg.omega_half_width,
        -cfg.omega_half_width,
        cfg.omega_half_width,
        cfg.omega_half_width,
    )?;
    let init = case.initial_data(&grid);
    let snapshot_steps: Vec<usize> = cfg
        .snapshot_times
        .iter()
        .map(|&t| ((t / cfg.t_final) * cfg.steps as f64).round() as usize)
        .filter(|&s| s <= cfg.steps)
        .collect();
    let opts = SimOptions {
        track_energy: false,
        snapshots: snapshot_steps,
    };
    let history = simulate(&field, &init, &grid, cfg.time_step(), cfg.steps, window, &opts)?;
    let clean = extract_traces(&history);
    let traces = add_noise(&clean, cfg.delta, cfg.seed);
    let snapshots = history
        .snapshots
        .iter()
        .map(|(step, field)| (*step as f64 * cfg.time_step(), field.clone()))
        .collect();
    Ok(ForwardProducts {
        traces,
        stability,
        snapshots,
        grid,
    })
}

/// Everything the inverse half produces.
pub struct InversionProducts {
    pub solution: ModalSolution,
    pub displacement: VectorField,
    pub velocity: VectorField,
    /// Metrics per component `p1, p2, q1, q2` against the preset truth.
    pub metrics: [ComponentMetrics; 4],
    /// Truth fields restricted to the observation grid.
    pub truth_displacement: VectorField,
    pub truth_velocity: VectorField,
    /// The modal least-squares objective at the solution.
    pub modal_objective: f64,
    /// The same functional in space-time integral form.
    pub spacetime_objective: f64,
    pub omega: SpatialGrid,
}

/// Inverts traces: modal reduction, assembly, least-squares solve, endpoint
/// reconstruction, metrics against the configured preset truth.
pub fn run_inversion(
    cfg: &RunConfig,
    traces: &BoundaryTraces,
) -> Result<InversionProducts, PipelineError> {
    cfg.validate()?;
    let case = TestCase::from_label(&cfg.test).expect("validated above");
    if (traces.t_final - cfg.t_final).abs() > 1e-12 * cfg.t_final {
        return Err(PipelineError::TraceMismatch(format!(
            "traces span T = {}, config says {}",
            traces.t_final, cfg.t_final
        )));
    }
    let field = case.medium()?;
    let omega = traces.omega.clone();
    let trap_basis = TimeBasis::on_time_grid(cfg.t_final, cfg.order, traces.n_steps)?;
    let mask = BoundaryMask::contiguous_arc(traces.nodes.len(), cfg.boundary_fraction);
    let data = modal_boundary_data(traces, &trap_basis, mask)?;
    let gauss_basis = TimeBasis::gauss(cfg.t_final, cfg.order)?;
    let coupling = coupling_matrix(&gauss_basis);
    let system = assemble(&field, &omega, &coupling, &data, cfg.eta)?;
    let solution = solve(&system, &cfg.solver.to_options()?)?;
    let (displacement, velocity) = reconstruct_initial(&solution, &gauss_basis)?;
    let truth_displacement = VectorField::from_fn(&omega, case.displacement_fn());
    let truth_velocity = VectorField::from_fn(&omega, case.velocity_fn());
    let m = [
        metrics(&displacement.component(0), &truth_displacement.component(0)),
        metrics(&displacement.component(1), &truth_displacement.component(1)),
        metrics(&velocity.component(0), &truth_velocity.component(0)),
        metrics(&velocity.component(1), &truth_velocity.component(1)),
    ];
    let modal_objective = system.residual_norm(&solution.coeffs).powi(2);
    let spacetime_objective =
        spacetime_residual(&solution, &gauss_basis, &field, &omega, &data, cfg.eta)?;
    Ok(InversionProducts {
        solution,
        displacement,
        velocity,
        metrics: m,
        truth_displacement,
        truth_velocity,
        modal_objective,
        spacetime_objective,
        omega,
    })
}

/// Forward plus inversion in one call.
pub fn run_end_to_end(
    cfg: &RunConfig,
) -> Result<(ForwardProducts, InversionProducts), PipelineError> {
    let fwd = run_forward(cfg)?;
    let inv = run_inversion(cfg, &fwd.traces)?;
    Ok((fwd, inv))
}
