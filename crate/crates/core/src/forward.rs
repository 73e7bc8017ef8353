//! Explicit leapfrog solver for the elastic wave initial-value problem and
//! extraction of boundary Cauchy traces.
//!
//! The wave problem on the plane is truncated to a large rectangle `G` with
//! homogeneous Dirichlet walls; initial data supported well inside the
//! observation rectangle keeps reflections from reaching it within the
//! simulated time span. The scheme is the standard second-order leapfrog
//! `u^{k+1} = 2 u^k - u^{k-1} + dt^2 div(C : grad u^k)` with a Taylor start
//! `u^1 = u^0 + dt q + dt^2/2 div(C : grad u^0)`.
//!
//! Traces on the observation rectangle are the displacement itself and the
//! outward normal derivative, the latter by the second-order one-sided
//! stencil `(3 u_0 - 4 u_{-1} + u_{-2}) / 2h` over nodes inside the
//! rectangle. Using interior nodes keeps the trace operator identical to the
//! normal-derivative rows assembled by the inverse solver, so synthetic data
//! is exactly consistent with the discrete model it feeds.

use crate::elasticity::{
    BoundaryNode, DivStress, ElasticityField, ElasticityError, SpatialGrid, VectorField,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ForwardError {
    #[error("CFL violation: c_max dt / h = {courant:.4} exceeds 1/sqrt(2)")]
    Unstable { courant: f64 },
    #[error("field blew up at step {step}: max |u| = {max_abs:.3e}")]
    Diverged { step: usize, max_abs: f64 },
    #[error("observation rectangle is not aligned with the grid")]
    WindowNotAligned,
    #[error("observation rectangle must leave a 2-node margin inside the simulation domain")]
    WindowTooLarge,
    #[error("initial data reaches within {margin} nodes of the outer boundary")]
    SupportTouchesBoundary { margin: usize },
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
}

/// Initial displacement and velocity on the simulation grid.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub displacement: VectorField,
    pub velocity: VectorField,
    pub label: String,
}

impl InitialData {
    pub fn new(displacement: VectorField, velocity: VectorField, label: &str) -> Self {
        InitialData {
            displacement,
            velocity,
            label: label.to_string(),
        }
    }

    /// Distance in nodes from the support of the data to the grid edge.
    /// Values below `1e-13` of the field maximum count as zero, so smooth
    /// tails that underflow the grid do not trip the margin check.
    pub fn margin_to_boundary(&self, grid: &SpatialGrid) -> usize {
        let floor = 1e-13
            * self
                .displacement
                .max_abs()
                .max(self.velocity.max_abs())
                .max(1e-300);
        let mut margin = grid.nx.max(grid.ny);
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let v = self.displacement.get(ix, iy);
                let w = self.velocity.get(ix, iy);
                if v[0].abs() > floor
                    || v[1].abs() > floor
                    || w[0].abs() > floor
                    || w[1].abs() > floor
                {
                    let d = ix.min(iy).min(grid.nx - 1 - ix).min(grid.ny - 1 - iy);
                    margin = margin.min(d);
                }
            }
        }
        margin
    }
}

/// Maximum wave speed and Courant number of an explicit step.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    /// Largest wave speed: sqrt of the largest Christoffel eigenvalue over
    /// sampled nodes and propagation directions.
    pub c_max: f64,
    pub courant: f64,
    pub accepted: bool,
    /// Node position and direction angle realizing `c_max`.
    pub worst: (f64, f64, f64),
}

/// Checks the CFL bound `c_max dt / h <= 1/sqrt(2)` by scanning the
/// Christoffel matrix `Gamma_ik(n) = sum_jl C_ijkl n_j n_l` over grid nodes
/// and a fan of unit directions.
pub fn check_stability(field: &ElasticityField, grid: &SpatialGrid, dt: f64) -> StabilityReport {
    assert!(dt > 0.0, "time step must be positive");
    let n_angles = 64;
    let mut c2_max = 0.0f64;
    let mut worst = (0.0, 0.0, 0.0);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.node(ix, iy);
            let c = field.stiffness_at(x, y);
            for a in 0..n_angles {
                let th = std::f64::consts::PI * a as f64 / n_angles as f64;
                let n = [th.cos(), th.sin()];
                let mut g = [[0.0f64; 2]; 2];
                for i in 0..2 {
                    for k in 0..2 {
                        let mut acc = 0.0;
                        for j in 0..2 {
                            for l in 0..2 {
                                acc += c[i][j][k][l] * n[j] * n[l];
                            }
                        }
                        g[i][k] = acc;
                    }
                }
                // largest eigenvalue of the symmetric 2x2 Christoffel matrix
                let tr = g[0][0] + g[1][1];
                let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
                let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
                let lam = tr / 2.0 + disc;
                if lam > c2_max {
                    c2_max = lam;
                    worst = (x, y, th);
                }
            }
        }
    }
    let c_max = c2_max.sqrt();
    let courant = c_max * dt / grid.h;
    StabilityReport {
        c_max,
        courant,
        accepted: courant <= std::f64::consts::FRAC_1_SQRT_2,
        worst,
    }
}

/// What the simulation records besides the trace window.
#[derive(Debug, Clone, Default)]
pub struct SimOptions {
    /// Record the discrete energy at every step.
    pub track_energy: bool,
    /// Steps at which to keep a full-grid snapshot.
    pub snapshots: Vec<usize>,
}

const RING_DEPTH: usize = 3;

/// The trace window: the observation rectangle and the per-step retained
/// node set (its three outermost node rings, all the inward normal stencil
/// needs). Full-grid history is only kept at requested snapshot steps.
#[derive(Debug, Clone)]
pub struct TraceWindow {
    /// Grid indices of the lower-left and upper-right window corners in `G`.
    pub ix0: usize,
    pub iy0: usize,
    pub ix1: usize,
    pub iy1: usize,
    /// Retained nodes as `G`-grid indices, in a fixed enumeration order.
    nodes: Vec<(u32, u32)>,
    /// Dense lookup from `G`-node index to position in `nodes`.
    lookup: Vec<u32>,
}

impl TraceWindow {
    /// Builds the window for observation rectangle `[x0, x1] x [y0, y1]`,
    /// which must be grid-aligned and keep a 2-node margin inside `G`.
    pub fn new(
        grid: &SpatialGrid,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
    ) -> Result<Self, ForwardError> {
        let snap = |v: f64, origin: f64| -> Result<usize, ForwardError> {
            let r = (v - origin) / grid.h;
            let i = r.round();
            if (r - i).abs() > 1e-9 || i < 0.0 {
                return Err(ForwardError::WindowNotAligned);
            }
            Ok(i as usize)
        };
        let ix0 = snap(x0, grid.x0)?;
        let iy0 = snap(y0, grid.y0)?;
        let ix1 = snap(x1, grid.x0)?;
        let iy1 = snap(y1, grid.y0)?;
        if ix0 < 2 || iy0 < 2 || ix1 + 2 >= grid.nx || iy1 + 2 >= grid.ny || ix1 <= ix0 || iy1 <= iy0
        {
            return Err(ForwardError::WindowTooLarge);
        }
        if ix1 - ix0 < 2 * RING_DEPTH || iy1 - iy0 < 2 * RING_DEPTH {
            return Err(ForwardError::WindowTooLarge);
        }
        let mut nodes = Vec::new();
        let mut lookup = vec![u32::MAX; grid.n_nodes()];
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                let ring = (ix - ix0).min(ix1 - ix).min(iy - iy0).min(iy1 - iy);
                if ring < RING_DEPTH {
                    lookup[iy * grid.nx + ix] = nodes.len() as u32;
                    nodes.push((ix as u32, iy as u32));
                }
            }
        }
        Ok(TraceWindow {
            ix0,
            iy0,
            ix1,
            iy1,
            nodes,
            lookup,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    fn slot(&self, grid: &SpatialGrid, ix: usize, iy: usize) -> usize {
        let s = self.lookup[iy * grid.nx + ix];
        debug_assert!(s != u32::MAX, "node ({ix}, {iy}) not retained by the window");
        s as usize
    }

    /// Number of grid cells per side of the observation rectangle.
    pub fn side_cells(&self) -> (usize, usize) {
        (self.ix1 - self.ix0, self.iy1 - self.iy0)
    }
}

/// Streamed simulation history: per-step window values, optional full
/// snapshots, optional energy series. Read-only after the run.
#[derive(Debug, Clone)]
pub struct History {
    pub grid: SpatialGrid,
    pub window: TraceWindow,
    pub dt: f64,
    pub steps: usize,
    /// `frames[k][slot]` = field at retained node `slot`, time `k dt`.
    frames: Vec<Vec<[f64; 2]>>,
    pub snapshots: Vec<(usize, VectorField)>,
    /// Discrete energy at half steps when tracked.
    pub energy: Vec<f64>,
}

impl History {
    pub fn value(&self, step: usize, ix: usize, iy: usize) -> [f64; 2] {
        self.frames[step][self.window.slot(&self.grid, ix, iy)]
    }

    /// History of an analytic field, bypassing the wave solver. Used to
    /// exercise trace extraction on fields with known derivatives.
    pub fn from_field_fn(
        grid: &SpatialGrid,
        window: TraceWindow,
        dt: f64,
        steps: usize,
        f: impl Fn(f64, f64, f64) -> [f64; 2],
    ) -> Self {
        let mut frames = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = k as f64 * dt;
            let frame = window
                .nodes
                .iter()
                .map(|&(ix, iy)| {
                    let (x, y) = grid.node(ix as usize, iy as usize);
                    f(x, y, t)
                })
                .collect();
            frames.push(frame);
        }
        History {
            grid: grid.clone(),
            window,
            dt,
            steps,
            frames,
            snapshots: Vec::new(),
            energy: Vec::new(),
        }
    }
}

/// Runs the leapfrog scheme for `steps` steps of size `dt`, recording the
/// trace window every step.
///
/// Rejects time steps that violate the CFL bound and initial data supported
/// closer than 3 nodes to the outer boundary.
pub fn simulate(
    field: &ElasticityField,
    init: &InitialData,
    grid: &SpatialGrid,
    dt: f64,
    steps: usize,
    window: TraceWindow,
    opts: &SimOptions,
) -> Result<History, ForwardError> {
    let report = check_stability(field, grid, dt);
    if !report.accepted {
        return Err(ForwardError::Unstable {
            courant: report.courant,
        });
    }
    if init.margin_to_boundary(grid) < 3 {
        return Err(ForwardError::SupportTouchesBoundary { margin: 3 });
    }
    let op = DivStress::new(field, grid)?;
    let initial_max = init
        .displacement
        .max_abs()
        .max(init.velocity.max_abs())
        .max(1e-30);

    let mut prev = init.displacement.clone();
    let mut scratch = VectorField::zeros(grid);
    op.apply(&prev, &mut scratch);
    let mut curr = prev.clone();
    for i in 0..grid.n_nodes() {
        for c in 0..2 {
            curr.data[i][c] += dt * init.velocity.data[i][c] + 0.5 * dt * dt * scratch.data[i][c];
        }
    }

    let mut history = History {
        grid: grid.clone(),
        window,
        dt,
        steps,
        frames: Vec::with_capacity(steps + 1),
        snapshots: Vec::new(),
        energy: Vec::new(),
    };
    fn record(h: &mut History, u: &VectorField) {
        let frame = h
            .window
            .nodes
            .iter()
            .map(|&(ix, iy)| u.get(ix as usize, iy as usize))
            .collect();
        h.frames.push(frame);
    }
    record(&mut history, &prev);
    if opts.snapshots.contains(&0) {
        history.snapshots.push((0, prev.clone()));
    }
    record(&mut history, &curr);
    if opts.snapshots.contains(&1) {
        history.snapshots.push((1, curr.clone()));
    }
    if opts.track_energy {
        history
            .energy
            .push(discrete_energy_with(&op, grid, &prev, &curr, dt));
    }

    for step in 2..=steps {
        op.apply(&curr, &mut scratch);
        // boundary rows of scratch stay zero, so the Dirichlet walls persist
        for i in 0..grid.n_nodes() {
            for c in 0..2 {
                let next = 2.0 * curr.data[i][c] - prev.data[i][c] + dt * dt * scratch.data[i][c];
                prev.data[i][c] = next;
            }
        }
        std::mem::swap(&mut prev, &mut curr);
        let max_abs = curr.max_abs();
        if !max_abs.is_finite() || max_abs > 1e6 * initial_max {
            return Err(ForwardError::Diverged { step, max_abs });
        }
        record(&mut history, &curr);
        if opts.track_energy {
            history
                .energy
                .push(discrete_energy_with(&op, grid, &prev, &curr, dt));
        }
        if opts.snapshots.contains(&step) {
            history.snapshots.push((step, curr.clone()));
        }
    }
    Ok(history)
}

/// Discrete energy at the half step between `u0` and `u1`: kinetic term from
/// the difference quotient plus the strain term `-<L u0, u1>` built from the
/// discrete operator itself. This is the quadratic form the leapfrog scheme
/// conserves exactly under Dirichlet walls, so any drift beyond roundoff
/// signals a defect.
pub fn discrete_energy(
    field: &ElasticityField,
    grid: &SpatialGrid,
    u0: &VectorField,
    u1: &VectorField,
    dt: f64,
) -> f64 {
    let op = DivStress::new(field, grid).expect("grid validated by the caller");
    discrete_energy_with(&op, grid, u0, u1, dt)
}

/// Same as [`discrete_energy`] with a prebuilt operator, for use inside the
/// stepping loop.
pub fn discrete_energy_with(
    op: &DivStress,
    grid: &SpatialGrid,
    u0: &VectorField,
    u1: &VectorField,
    dt: f64,
) -> f64 {
    let mut kinetic = 0.0;
    for i in 0..grid.n_nodes() {
        for c in 0..2 {
            let v = (u1.data[i][c] - u0.data[i][c]) / dt;
            kinetic += v * v;
        }
    }
    let mut lu = VectorField::zeros(grid);
    op.apply(u0, &mut lu);
    let mut strain = 0.0;
    for i in 0..grid.n_nodes() {
        for c in 0..2 {
            strain -= lu.data[i][c] * u1.data[i][c];
        }
    }
    0.5 * grid.h * grid.h * (kinetic + strain)
}

/// Time-sampled Dirichlet and Neumann traces on the observation rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTraces {
    pub t_final: f64,
    pub n_steps: usize,
    /// Observation grid (origin, spacing and node counts of the rectangle).
    pub omega: SpatialGrid,
    /// Perimeter-ordered boundary nodes of the rectangle.
    pub nodes: Vec<BoundaryNode>,
    /// `f[node][step]` = displacement sample.
    pub f: Vec<Vec<[f64; 2]>>,
    /// `g[node][side][step]` = normal-derivative sample, one series per
    /// outward side (corners carry two).
    pub g: Vec<Vec<Vec<[f64; 2]>>>,
    pub noise_level: f64,
    pub seed: Option<u64>,
}

impl BoundaryTraces {
    pub fn n_samples(&self) -> usize {
        self.n_steps + 1
    }

    pub fn n_side_rows(&self) -> usize {
        self.nodes.iter().map(|n| n.sides.len()).sum()
    }
}

/// Reads Cauchy traces off a simulation history.
///
/// The Neumann trace uses the inward one-sided stencil
/// `(3 u(x) - 4 u(x - h nu) + u(x - 2 h nu)) / 2h`: the trace is computed
/// from the solution restricted to the observation rectangle, and the
/// inverse assembler discretizes its normal-derivative rows with the same
/// stencil.
pub fn extract_traces(history: &History) -> BoundaryTraces {
    let grid = &history.grid;
    let w = &history.window;
    let omega = SpatialGrid {
        x0: grid.x0 + w.ix0 as f64 * grid.h,
        y0: grid.y0 + w.iy0 as f64 * grid.h,
        h: grid.h,
        nx: w.ix1 - w.ix0 + 1,
        ny: w.iy1 - w.iy0 + 1,
    };
    let nodes = omega.boundary_nodes();
    let n_samples = history.steps + 1;
    let mut f = vec![vec![[0.0; 2]; n_samples]; nodes.len()];
    let mut g: Vec<Vec<Vec<[f64; 2]>>> = nodes
        .iter()
        .map(|n| vec![vec![[0.0; 2]; n_samples]; n.sides.len()])
        .collect();
    let inv2h = 1.0 / (2.0 * grid.h);
    for step in 0..n_samples {
        for (ni, node) in nodes.iter().enumerate() {
            let gx = node.ix + w.ix0;
            let gy = node.iy + w.iy0;
            f[ni][step] = history.value(step, gx, gy);
            for (si, side) in node.sides.iter().enumerate() {
                let (dx, dy) = side.outward();
                let p0 = history.value(step, gx, gy);
                let p1 = history.value(
                    step,
                    (gx as isize - dx) as usize,
                    (gy as isize - dy) as usize,
                );
                let p2 = history.value(
                    step,
                    (gx as isize - 2 * dx) as usize,
                    (gy as isize - 2 * dy) as usize,
                );
                for c in 0..2 {
                    g[ni][si][step][c] = (3.0 * p0[c] - 4.0 * p1[c] + p2[c]) * inv2h;
                }
            }
        }
    }
    BoundaryTraces {
        t_final: history.dt * history.steps as f64,
        n_steps: history.steps,
        omega,
        nodes,
        f,
        g,
        noise_level: 0.0,
        seed: None,
    }
}

/// Multiplicative uniform noise: every sample of every component is scaled
/// by `1 + delta r` with `r` drawn independently from `[-1, 1]`.
///
/// The draw order is fixed (nodes in perimeter order; per node the `f`
/// series, then each side's `g` series, component-minor), so a given seed
/// reproduces the same noisy traces on any platform.
pub fn add_noise(traces: &BoundaryTraces, delta: f64, seed: u64) -> BoundaryTraces {
    assert!(delta >= 0.0, "noise level must be nonnegative");
    let mut out = traces.clone();
    out.noise_level = delta;
    out.seed = Some(seed);
    if delta == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ni in 0..out.nodes.len() {
        for s in out.f[ni].iter_mut() {
            for c in 0..2 {
                s[c] *= 1.0 + delta * rng.gen_range(-1.0..=1.0);
            }
        }
        for side in out.g[ni].iter_mut() {
            for s in side.iter_mut() {
                for c in 0..2 {
                    s[c] *= 1.0 + delta * rng.gen_range(-1.0..=1.0);
                }
            }
        }
    }
    out
}
