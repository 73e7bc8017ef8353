//! Conversion of boundary traces into modal data and assembly of the
//! regularized least-squares system.
//!
//! Each trace series is reduced to its Fourier modes against the time basis
//! (composite trapezoid over the measurement grid, weight `e^{-2t} Psi_m`).
//! The unknowns are the modal fields `w_0 .. w_N` on the observation grid,
//! boundary nodes included; one sparse least-squares system couples them:
//!
//! * PDE rows, weight `h`: `div(C : grad w_m) - sum_{n >= m} s_mn w_n` at
//!   every interior node (the coupling matrix vanishes below the diagonal);
//! * Dirichlet rows, weight `sqrt(h)`: `w_m - f_m` at masked boundary nodes;
//! * Neumann rows, weight `sqrt(h)`: `d_nu w_m - g_m` with the same inward
//!   one-sided stencil the trace extractor uses;
//! * regularization rows, weight `sqrt(eta)`: a discrete `H^2` norm per
//!   modal field (values, forward first differences, second differences
//!   with one-sided fallback at the boundary), each row carrying the
//!   area factor `h`.
//!
//! The row weights make `|A vec(W) - b|^2` a quadrature of the continuum
//! functional, so the modal sum and its space-time integral form agree to
//! rounding; [`spacetime_residual`] evaluates the integral form directly as
//! a cross-check.

use crate::basis::{BasisError, CouplingMatrix, QuadKind, TimeBasis};
use crate::elasticity::{
    BoundaryNode, DivStress, ElasticityField, ElasticityError, SpatialGrid, VectorField,
};
use crate::forward::BoundaryTraces;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("trace grid and basis quadrature disagree: {0}")]
    BasisMismatch(String),
    #[error("boundary mask selects no nodes")]
    EmptyMask,
    #[error("mask has {got} entries for {expected} boundary nodes")]
    MaskSizeMismatch { got: usize, expected: usize },
    #[error("regularization weight must be positive, got {0}")]
    NonPositiveRegularization(f64),
    #[error("modal data covers {got} modes, expected {expected}")]
    ModeCountMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Elasticity(#[from] ElasticityError),
}

/// Subset of the observation boundary carrying data rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMask {
    pub keep: Vec<bool>,
}

impl BoundaryMask {
    pub fn full(n_nodes: usize) -> Self {
        BoundaryMask {
            keep: vec![true; n_nodes],
        }
    }

    /// Keeps one contiguous arc (in perimeter order, starting at the
    /// lower-left corner) covering `fraction` of the boundary nodes.
    pub fn contiguous_arc(n_nodes: usize, fraction: f64) -> Self {
        let kept = ((n_nodes as f64 * fraction).ceil() as usize).clamp(0, n_nodes);
        BoundaryMask {
            keep: (0..n_nodes).map(|i| i < kept).collect(),
        }
    }

    pub fn n_kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }
}

/// Modal Dirichlet and Neumann data on the observation boundary.
#[derive(Debug, Clone)]
pub struct ModalBoundaryData {
    pub omega: SpatialGrid,
    pub nodes: Vec<BoundaryNode>,
    /// `f[m][node]` = modal Dirichlet datum.
    pub f: Vec<Vec<[f64; 2]>>,
    /// `g[m][node][side]` = modal Neumann datum.
    pub g: Vec<Vec<Vec<[f64; 2]>>>,
    pub mask: BoundaryMask,
}

impl ModalBoundaryData {
    pub fn n_modes(&self) -> usize {
        self.f.len()
    }
}

/// Reduces traces to modal boundary data with the trapezoid rule on the
/// measurement grid. The basis must be tabulated on exactly that grid.
/// Masked-out nodes keep their data; they are skipped at assembly time.
pub fn modal_boundary_data(
    traces: &BoundaryTraces,
    basis: &TimeBasis,
    mask: BoundaryMask,
) -> Result<ModalBoundaryData, ReductionError> {
    if basis.quad().kind != QuadKind::TrapezoidGrid {
        return Err(ReductionError::BasisMismatch(
            "basis must be tabulated on the trace time grid (trapezoid rule)".into(),
        ));
    }
    if basis.quad().len() != traces.n_samples() {
        return Err(ReductionError::BasisMismatch(format!(
            "basis has {} nodes, traces have {} samples",
            basis.quad().len(),
            traces.n_samples()
        )));
    }
    if (basis.t_final() - traces.t_final).abs() > 1e-12 * traces.t_final {
        return Err(ReductionError::BasisMismatch(format!(
            "basis spans T = {}, traces span T = {}",
            basis.t_final(),
            traces.t_final
        )));
    }
    if mask.keep.len() != traces.nodes.len() {
        return Err(ReductionError::MaskSizeMismatch {
            got: mask.keep.len(),
            expected: traces.nodes.len(),
        });
    }
    if mask.n_kept() == 0 {
        return Err(ReductionError::EmptyMask);
    }
    let n_modes = basis.n_modes();
    let quad = basis.quad();
    // weight row per mode: w_k e^{-2 t_k} Psi_m(t_k)
    let wrows: Vec<Vec<f64>> = (0..n_modes)
        .map(|m| {
            quad.nodes
                .iter()
                .zip(&quad.weights)
                .zip(basis.psi(m))
                .map(|((&t, &w), &psi)| w * (-2.0 * t).exp() * psi)
                .collect()
        })
        .collect();
    let reduce = |series: &[[f64; 2]], wrow: &[f64]| -> [f64; 2] {
        let mut acc = [0.0; 2];
        for (s, &w) in series.iter().zip(wrow) {
            acc[0] += w * s[0];
            acc[1] += w * s[1];
        }
        acc
    };
    let mut f = vec![vec![[0.0; 2]; traces.nodes.len()]; n_modes];
    let mut g: Vec<Vec<Vec<[f64; 2]>>> = (0..n_modes)
        .map(|_| {
            traces
                .nodes
                .iter()
                .map(|n| vec![[0.0; 2]; n.sides.len()])
                .collect()
        })
        .collect();
    for (m, wrow) in wrows.iter().enumerate() {
        for ni in 0..traces.nodes.len() {
            f[m][ni] = reduce(&traces.f[ni], wrow);
            for si in 0..traces.nodes[ni].sides.len() {
                g[m][ni][si] = reduce(&traces.g[ni][si], wrow);
            }
        }
    }
    Ok(ModalBoundaryData {
        omega: traces.omega.clone(),
        nodes: traces.nodes.clone(),
        f,
        g,
        mask,
    })
}

/// Classification of system rows, recorded per row for diagnostics and the
/// exported matrix dump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowTag {
    Pde,
    Dirichlet,
    Neumann,
    Reg0,
    Reg1,
    Reg2,
}

impl RowTag {
    pub fn label(self) -> &'static str {
        match self {
            RowTag::Pde => "pde",
            RowTag::Dirichlet => "dirichlet",
            RowTag::Neumann => "neumann",
            RowTag::Reg0 => "reg-0",
            RowTag::Reg1 => "reg-1",
            RowTag::Reg2 => "reg-2",
        }
    }
}

/// Index layout of the unknown vector: mode-major, then node (row-major over
/// the full observation grid, boundary included), components last.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UnknownLayout {
    pub n_modes: usize,
    pub nx: usize,
    pub ny: usize,
}

impl UnknownLayout {
    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_modes * self.n_nodes() * 2
    }

    pub fn index(&self, mode: usize, ix: usize, iy: usize, comp: usize) -> usize {
        ((mode * self.n_nodes()) + iy * self.nx + ix) * 2 + comp
    }
}

/// The assembled sparse least-squares problem in compressed row and column
/// form (both kept: row form drives `A x`, column form `A^T y`, each with
/// per-output-element loops). Immutable once built.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub layout: UnknownLayout,
    pub rhs: Vec<f64>,
    pub row_tags: Vec<RowTag>,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values_csc: Vec<f64>,
}

impl SparseSystem {
    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn n_cols(&self) -> usize {
        self.layout.n_unknowns()
    }

    pub fn n_entries(&self) -> usize {
        self.values.len()
    }

    /// `out = A x`.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols());
        assert_eq!(out.len(), self.n_rows());
        for r in 0..self.n_rows() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k] as usize];
            }
            out[r] = acc;
        }
    }

    /// `out = A^T y`.
    pub fn apply_transpose(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.n_rows());
        assert_eq!(out.len(), self.n_cols());
        for c in 0..self.n_cols() {
            let mut acc = 0.0;
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values_csc[k] * y[self.row_idx[k] as usize];
            }
            out[c] = acc;
        }
    }

    /// Euclidean norm of every column, the diagonal of the normal equations.
    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.n_cols())
            .map(|c| {
                self.values_csc[self.col_ptr[c]..self.col_ptr[c + 1]]
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Exact block diagonal of the normal equations over mode fibers: for
    /// each (node, component), the dense block `B[m][n] = sum_r A[r, col_m]
    /// A[r, col_n]` where `col_m` indexes mode `m` of that fiber. The mode
    /// coupling concentrates on these fibers, so inverting them makes an
    /// effective preconditioner.
    ///
    /// Returned row-major per fiber, fiber index `node * 2 + comp`.
    pub fn mode_fiber_blocks(&self) -> Vec<Vec<f64>> {
        let n_modes = self.layout.n_modes;
        let fiber_len = self.layout.n_nodes() * 2;
        let mut blocks = vec![vec![0.0; n_modes * n_modes]; fiber_len];
        let mut modes: Vec<(usize, f64)> = Vec::with_capacity(n_modes);
        for r in 0..self.n_rows() {
            let entries = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
            let values = &self.values[self.row_ptr[r]..self.row_ptr[r + 1]];
            // group the row's entries by fiber; entries are sorted by
            // column, which interleaves fibers, so sort a scratch list of
            // (fiber, mode, value)
            let mut items: Vec<(usize, usize, f64)> = entries
                .iter()
                .zip(values)
                .map(|(&c, &v)| {
                    let c = c as usize;
                    (c % fiber_len, c / fiber_len, v)
                })
                .collect();
            items.sort_unstable_by_key(|&(f, m, _)| (f, m));
            let mut i = 0;
            while i < items.len() {
                let fiber = items[i].0;
                modes.clear();
                while i < items.len() && items[i].0 == fiber {
                    modes.push((items[i].1, items[i].2));
                    i += 1;
                }
                let block = &mut blocks[fiber];
                for &(m, vm) in &modes {
                    for &(n, vn) in &modes {
                        block[m * n_modes + n] += vm * vn;
                    }
                }
            }
        }
        blocks
    }

    /// All entries as `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows()).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k] as usize, self.values[k]))
        })
    }

    /// Residual norm `|A x - b|`.
    pub fn residual_norm(&self, x: &[f64]) -> f64 {
        let mut r = vec![0.0; self.n_rows()];
        self.apply(x, &mut r);
        r.iter()
            .zip(&self.rhs)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    fn from_rows(layout: UnknownLayout, builder: RowBuilder) -> Self {
        let RowBuilder {
            row_ptr,
            col_idx,
            values,
            rhs,
            row_tags,
        } = builder;
        let n_cols = layout.n_unknowns();
        // CSC by counting sort over columns
        let mut col_counts = vec![0usize; n_cols + 1];
        for &c in &col_idx {
            col_counts[c as usize + 1] += 1;
        }
        for c in 0..n_cols {
            col_counts[c + 1] += col_counts[c];
        }
        let col_ptr = col_counts.clone();
        let mut cursor = col_counts;
        let mut row_idx = vec![0u32; values.len()];
        let mut values_csc = vec![0.0; values.len()];
        for r in 0..rhs.len() {
            for k in row_ptr[r]..row_ptr[r + 1] {
                let c = col_idx[k] as usize;
                let slot = cursor[c];
                cursor[c] += 1;
                row_idx[slot] = r as u32;
                values_csc[slot] = values[k];
            }
        }
        SparseSystem {
            layout,
            rhs,
            row_tags,
            row_ptr,
            col_idx,
            values,
            col_ptr,
            row_idx,
            values_csc,
        }
    }
}

pub(crate) struct RowBuilder {
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    values: Vec<f64>,
    rhs: Vec<f64>,
    row_tags: Vec<RowTag>,
}

impl RowBuilder {
    pub(crate) fn new() -> Self {
        RowBuilder {
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
            rhs: Vec::new(),
            row_tags: Vec::new(),
        }
    }

    pub(crate) fn push_row(
        &mut self,
        tag: RowTag,
        rhs: f64,
        entries: impl IntoIterator<Item = (usize, f64)>,
    ) {
        for (c, v) in entries {
            if v != 0.0 {
                self.col_idx.push(c as u32);
                self.values.push(v);
            }
        }
        self.row_ptr.push(self.col_idx.len());
        self.rhs.push(rhs);
        self.row_tags.push(tag);
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    //! Direct SparseSystem construction from raw rows, for solver tests that
    //! need matrices outside the assembly path.
    pub(crate) use super::RowBuilder as Builder;
    use super::*;

    pub(crate) fn finish(layout: UnknownLayout, builder: RowBuilder) -> SparseSystem {
        SparseSystem::from_rows(layout, builder)
    }
}

/// Assembles the least-squares system for regularization weight `eta > 0`.
pub fn assemble(
    field: &ElasticityField,
    grid: &SpatialGrid,
    coupling: &CouplingMatrix,
    data: &ModalBoundaryData,
    eta: f64,
) -> Result<SparseSystem, ReductionError> {
    if !(eta > 0.0) {
        return Err(ReductionError::NonPositiveRegularization(eta));
    }
    assemble_raw(field, grid, coupling, data, eta)
}

/// Assembly without the positivity guard on `eta`; with `eta = 0` no
/// regularization rows are emitted. Test-only escape hatch for comparing
/// against exact solutions of the square discrete system.
pub(crate) fn assemble_raw(
    field: &ElasticityField,
    grid: &SpatialGrid,
    coupling: &CouplingMatrix,
    data: &ModalBoundaryData,
    eta: f64,
) -> Result<SparseSystem, ReductionError> {
    if data.mask.keep.len() != data.nodes.len() {
        return Err(ReductionError::MaskSizeMismatch {
            got: data.mask.keep.len(),
            expected: data.nodes.len(),
        });
    }
    if data.mask.n_kept() == 0 {
        return Err(ReductionError::EmptyMask);
    }
    let n_modes = coupling.n_modes();
    if data.n_modes() < n_modes {
        return Err(ReductionError::ModeCountMismatch {
            got: data.n_modes(),
            expected: n_modes,
        });
    }
    let layout = UnknownLayout {
        n_modes,
        nx: grid.nx,
        ny: grid.ny,
    };
    let op = DivStress::new(field, grid)?;
    let h = grid.h;
    let sqrt_h = h.sqrt();
    let sqrt_eta = eta.sqrt();
    let mut b = RowBuilder::new();

    // PDE rows
    let mut entries: Vec<(usize, f64)> = Vec::with_capacity(24 + n_modes);
    for m in 0..n_modes {
        for iy in 1..grid.ny - 1 {
            for ix in 1..grid.nx - 1 {
                let node = grid.index(ix, iy);
                for comp in 0..2 {
                    entries.clear();
                    for &(j, k, v) in op.row(node, comp) {
                        let jn = j as usize;
                        let (jx, jy) = (jn % grid.nx, jn / grid.nx);
                        entries.push((layout.index(m, jx, jy, k as usize), h * v));
                    }
                    // coupling is the identity at and below the diagonal
                    for n in m..n_modes {
                        entries.push((layout.index(n, ix, iy, comp), -h * coupling.get(m, n)));
                    }
                    b.push_row(RowTag::Pde, 0.0, entries.iter().copied());
                }
            }
        }
    }
    // Dirichlet and Neumann rows at masked boundary nodes
    let inv2h = 1.0 / (2.0 * h);
    for m in 0..n_modes {
        for (ni, node) in data.nodes.iter().enumerate() {
            if !data.mask.keep[ni] {
                continue;
            }
            for comp in 0..2 {
                b.push_row(
                    RowTag::Dirichlet,
                    sqrt_h * data.f[m][ni][comp],
                    [(layout.index(m, node.ix, node.iy, comp), sqrt_h)],
                );
            }
            for (si, side) in node.sides.iter().enumerate() {
                let (dx, dy) = side.outward();
                let at = |steps: isize| {
                    (
                        (node.ix as isize - steps * dx) as usize,
                        (node.iy as isize - steps * dy) as usize,
                    )
                };
                let (x1, y1) = at(1);
                let (x2, y2) = at(2);
                for comp in 0..2 {
                    b.push_row(
                        RowTag::Neumann,
                        sqrt_h * data.g[m][ni][si][comp],
                        [
                            (layout.index(m, node.ix, node.iy, comp), sqrt_h * 3.0 * inv2h),
                            (layout.index(m, x1, y1, comp), -sqrt_h * 4.0 * inv2h),
                            (layout.index(m, x2, y2, comp), sqrt_h * inv2h),
                        ],
                    );
                }
            }
        }
    }
    // regularization rows: discrete H^2 per modal field
    if eta > 0.0 {
        let w0 = sqrt_eta * h;
        let w1 = sqrt_eta; // h * (1/h)
        let w2 = sqrt_eta / h; // h * (1/h^2)
        for m in 0..n_modes {
            for iy in 0..grid.ny {
                for ix in 0..grid.nx {
                    for comp in 0..2 {
                        b.push_row(
                            RowTag::Reg0,
                            0.0,
                            [(layout.index(m, ix, iy, comp), w0)],
                        );
                    }
                }
            }
            for iy in 0..grid.ny {
                for ix in 0..grid.nx - 1 {
                    for comp in 0..2 {
                        b.push_row(
                            RowTag::Reg1,
                            0.0,
                            [
                                (layout.index(m, ix + 1, iy, comp), w1),
                                (layout.index(m, ix, iy, comp), -w1),
                            ],
                        );
                    }
                }
            }
            for iy in 0..grid.ny - 1 {
                for ix in 0..grid.nx {
                    for comp in 0..2 {
                        b.push_row(
                            RowTag::Reg1,
                            0.0,
                            [
                                (layout.index(m, ix, iy + 1, comp), w1),
                                (layout.index(m, ix, iy, comp), -w1),
                            ],
                        );
                    }
                }
            }
            for iy in 0..grid.ny {
                for ix in 0..grid.nx {
                    // centered second difference with the stencil shifted
                    // inward at the two boundary columns/rows
                    let cx = ix.clamp(1, grid.nx - 2);
                    let cy = iy.clamp(1, grid.ny - 2);
                    for comp in 0..2 {
                        b.push_row(
                            RowTag::Reg2,
                            0.0,
                            [
                                (layout.index(m, cx + 1, iy, comp), w2),
                                (layout.index(m, cx, iy, comp), -2.0 * w2),
                                (layout.index(m, cx - 1, iy, comp), w2),
                            ],
                        );
                        b.push_row(
                            RowTag::Reg2,
                            0.0,
                            [
                                (layout.index(m, ix, cy + 1, comp), w2),
                                (layout.index(m, ix, cy, comp), -2.0 * w2),
                                (layout.index(m, ix, cy - 1, comp), w2),
                            ],
                        );
                    }
                }
            }
        }
    }
    Ok(SparseSystem::from_rows(layout, b))
}

/// The modal solution vector with solver statistics.
#[derive(Debug, Clone)]
pub struct ModalSolution {
    pub layout: UnknownLayout,
    /// Flat coefficient vector in [`UnknownLayout`] order.
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    pub relative_normal_residual: f64,
    pub converged: bool,
}

impl ModalSolution {
    pub fn from_coeffs(layout: UnknownLayout, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), layout.n_unknowns());
        ModalSolution {
            layout,
            coeffs,
            iterations: 0,
            relative_normal_residual: 0.0,
            converged: true,
        }
    }

    /// One modal field as a grid vector field.
    pub fn mode_field(&self, mode: usize) -> VectorField {
        let n = self.layout.n_nodes();
        let mut data = vec![[0.0; 2]; n];
        for (node, value) in data.iter_mut().enumerate() {
            let base = (mode * n + node) * 2;
            value[0] = self.coeffs[base];
            value[1] = self.coeffs[base + 1];
        }
        VectorField {
            nx: self.layout.nx,
            ny: self.layout.ny,
            data,
        }
    }
}

/// Evaluates the space-time integral form of the functional on the
/// expansion of `U`: PDE residual, masked boundary misfits against the
/// projected data, and the regularization term, integrated over time with
/// the Gauss rule of `basis`. Agrees with `|A vec(U) - b|^2` to rounding.
pub fn spacetime_residual(
    solution: &ModalSolution,
    basis: &TimeBasis,
    field: &ElasticityField,
    grid: &SpatialGrid,
    data: &ModalBoundaryData,
    eta: f64,
) -> Result<f64, ReductionError> {
    let n_modes = solution.layout.n_modes;
    if basis.n_modes() < n_modes || data.n_modes() < n_modes {
        return Err(ReductionError::ModeCountMismatch {
            got: basis.n_modes().min(data.n_modes()),
            expected: n_modes,
        });
    }
    let op = DivStress::new(field, grid)?;
    let modes: Vec<VectorField> = (0..n_modes).map(|m| solution.mode_field(m)).collect();
    let h = grid.h;
    let inv2h = 1.0 / (2.0 * h);
    let quad = basis.quad();
    let mut total = 0.0;
    let mut w = VectorField::zeros(grid);
    let mut wtt = VectorField::zeros(grid);
    let mut lw = VectorField::zeros(grid);
    for (j, (&t, &wq)) in quad.nodes.iter().zip(&quad.weights).enumerate() {
        let time_weight = wq * (-2.0 * t).exp();
        for node in 0..grid.n_nodes() {
            let mut acc = [0.0; 2];
            let mut acc_tt = [0.0; 2];
            for m in 0..n_modes {
                let psi = basis.psi(m)[j];
                let ddpsi = basis.ddpsi(m)[j];
                for c in 0..2 {
                    acc[c] += modes[m].data[node][c] * psi;
                    acc_tt[c] += modes[m].data[node][c] * ddpsi;
                }
            }
            w.data[node] = acc;
            wtt.data[node] = acc_tt;
        }
        op.apply(&w, &mut lw);
        let mut pde = 0.0;
        for iy in 1..grid.ny - 1 {
            for ix in 1..grid.nx - 1 {
                let node = grid.index(ix, iy);
                for c in 0..2 {
                    let r = lw.data[node][c] - wtt.data[node][c];
                    pde += r * r;
                }
            }
        }
        let mut dirichlet = 0.0;
        let mut neumann = 0.0;
        for (ni, node) in data.nodes.iter().enumerate() {
            if !data.mask.keep[ni] {
                continue;
            }
            for c in 0..2 {
                let mut pf = 0.0;
                for m in 0..n_modes {
                    pf += data.f[m][ni][c] * basis.psi(m)[j];
                }
                let r = w.get(node.ix, node.iy)[c] - pf;
                dirichlet += r * r;
            }
            for (si, side) in node.sides.iter().enumerate() {
                let (dx, dy) = side.outward();
                let at = |steps: isize| {
                    w.get(
                        (node.ix as isize - steps * dx) as usize,
                        (node.iy as isize - steps * dy) as usize,
                    )
                };
                let (p0, p1, p2) = (at(0), at(1), at(2));
                for c in 0..2 {
                    let dn = (3.0 * p0[c] - 4.0 * p1[c] + p2[c]) * inv2h;
                    let mut pg = 0.0;
                    for m in 0..n_modes {
                        pg += data.g[m][ni][si][c] * basis.psi(m)[j];
                    }
                    let r = dn - pg;
                    neumann += r * r;
                }
            }
        }
        let mut reg = 0.0;
        if eta > 0.0 {
            for node in 0..grid.n_nodes() {
                for c in 0..2 {
                    let v = w.data[node][c];
                    reg += h * h * v * v;
                }
            }
            for iy in 0..grid.ny {
                for ix in 0..grid.nx - 1 {
                    for c in 0..2 {
                        let d = w.get(ix + 1, iy)[c] - w.get(ix, iy)[c];
                        reg += d * d;
                    }
                }
            }
            for iy in 0..grid.ny - 1 {
                for ix in 0..grid.nx {
                    for c in 0..2 {
                        let d = w.get(ix, iy + 1)[c] - w.get(ix, iy)[c];
                        reg += d * d;
                    }
                }
            }
            for iy in 0..grid.ny {
                for ix in 0..grid.nx {
                    let cx = ix.clamp(1, grid.nx - 2);
                    let cy = iy.clamp(1, grid.ny - 2);
                    for c in 0..2 {
                        let dxx = w.get(cx + 1, iy)[c] - 2.0 * w.get(cx, iy)[c] + w.get(cx - 1, iy)[c];
                        let dyy = w.get(ix, cy + 1)[c] - 2.0 * w.get(ix, cy)[c] + w.get(ix, cy - 1)[c];
                        reg += (dxx * dxx + dyy * dyy) / (h * h);
                    }
                }
            }
        }
        total += time_weight * (h * h * pde + h * (dirichlet + neumann) + eta * reg);
    }
    Ok(total)
}
