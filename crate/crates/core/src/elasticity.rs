//! The elasticity tensor field and its discrete spatial operators.
//!
//! A 2D elasticity tensor `C_{ijkl}` must satisfy the minor and major
//! symmetries and a uniform coercivity bound: the quadratic form
//! `xi : C : xi` over symmetric matrices stays above a positive constant.
//! Both are checked numerically by sampling grid nodes; coercivity reduces
//! to the smallest eigenvalue of the 3x3 matrix representing the form on
//! the symmetric-matrix coordinates `(xi_11, xi_22, sqrt(2) xi_12)`.
//!
//! The module also owns the shared spatial kernel `div(C : grad u)`:
//! a second-order flux-form finite-difference stencil with half-node
//! coefficient averaging, used both by the explicit wave stepper and by the
//! least-squares assembler, which needs the stencil entries row by row.

use nalgebra::Matrix3;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ElasticityError {
    #[error("tensor violates coercivity: min eigenvalue {min_eig:.3e} at node ({x}, {y})")]
    NotCoercive { min_eig: f64, x: f64, y: f64 },
    #[error("flat matrix violates symmetry at entry ({i}, {j}): {a} != {b}")]
    AsymmetricFlat { i: usize, j: usize, a: f64, b: f64 },
    #[error("flat matrix violates the minor symmetry: rows/columns 2 and 3 must coincide")]
    MinorSymmetryViolated,
    #[error("isotropic parameters rejected: mu = {mu}, lambda + 2 mu = {lp2m}")]
    BadLameParameters { mu: f64, lp2m: f64 },
    #[error("grid must have at least 3 nodes per axis, got {nx} x {ny}")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("field has {got} nodes, grid has {expected}")]
    FieldSizeMismatch { got: usize, expected: usize },
}

/// The 16 components of a rank-4 tensor at one point, `c[i][j][k][l]`.
pub type Stiffness = [[[[f64; 2]; 2]; 2]; 2];

type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Elasticity tensor field on the plane. Immutable and shareable.
#[derive(Clone)]
pub enum ElasticityField {
    /// `C_{ijkl} = lambda d_ij d_kl + mu (d_ik d_jl + d_il d_kj)`, constant.
    Isotropic { lambda: f64, mu: f64 },
    /// Same formula with spatially varying Lame parameters.
    IsotropicVarying { lambda: ScalarFn, mu: ScalarFn },
    /// Constant tensor given by its flattened 4x4 matrix under the index
    /// pairing 11 -> 1, 12 -> 2, 21 -> 3, 22 -> 4.
    AnisotropicFlat { m: [[f64; 4]; 4] },
}

impl std::fmt::Debug for ElasticityField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Isotropic { lambda, mu } => write!(f, "Isotropic(lambda={lambda}, mu={mu})"),
            Self::IsotropicVarying { .. } => write!(f, "IsotropicVarying(..)"),
            Self::AnisotropicFlat { m } => write!(f, "AnisotropicFlat({m:?})"),
        }
    }
}

fn isotropic_stiffness(lambda: f64, mu: f64) -> Stiffness {
    let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let mut c = [[[[0.0; 2]; 2]; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    c[i][j][k][l] =
                        lambda * d(i, j) * d(k, l) + mu * (d(i, k) * d(j, l) + d(i, l) * d(k, j));
                }
            }
        }
    }
    c
}

/// Constant isotropic tensor from Lame parameters.
pub fn make_isotropic(lambda: f64, mu: f64) -> Result<ElasticityField, ElasticityError> {
    if !(mu > 0.0) || !(lambda + 2.0 * mu > 0.0) {
        return Err(ElasticityError::BadLameParameters {
            mu,
            lp2m: lambda + 2.0 * mu,
        });
    }
    Ok(ElasticityField::Isotropic { lambda, mu })
}

/// Isotropic tensor with spatially varying Lame parameters. Coercivity is
/// only checked when the field is validated against a grid.
pub fn make_isotropic_varying(
    lambda: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    mu: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> ElasticityField {
    ElasticityField::IsotropicVarying {
        lambda: Arc::new(lambda),
        mu: Arc::new(mu),
    }
}

/// Constant anisotropic tensor from its flattened 4x4 matrix.
///
/// Requires symmetry of the matrix (major symmetry of the tensor) and equal
/// second and third rows/columns (minor symmetries).
pub fn make_anisotropic_flat(m: [[f64; 4]; 4]) -> Result<ElasticityField, ElasticityError> {
    for i in 0..4 {
        for j in (i + 1)..4 {
            if (m[i][j] - m[j][i]).abs() > 1e-12 * (1.0 + m[i][j].abs()) {
                return Err(ElasticityError::AsymmetricFlat {
                    i,
                    j,
                    a: m[i][j],
                    b: m[j][i],
                });
            }
        }
    }
    for k in 0..4 {
        if (m[1][k] - m[2][k]).abs() > 1e-12 * (1.0 + m[1][k].abs())
            || (m[k][1] - m[k][2]).abs() > 1e-12 * (1.0 + m[k][1].abs())
        {
            return Err(ElasticityError::MinorSymmetryViolated);
        }
    }
    Ok(ElasticityField::AnisotropicFlat { m })
}

impl ElasticityField {
    /// All 16 components at a point.
    pub fn stiffness_at(&self, x: f64, y: f64) -> Stiffness {
        match self {
            Self::Isotropic { lambda, mu } => isotropic_stiffness(*lambda, *mu),
            Self::IsotropicVarying { lambda, mu } => isotropic_stiffness(lambda(x, y), mu(x, y)),
            Self::AnisotropicFlat { m } => {
                let flat = |i: usize, j: usize| 2 * i + j;
                let mut c = [[[[0.0; 2]; 2]; 2]; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            for l in 0..2 {
                                c[i][j][k][l] = m[flat(i, j)][flat(k, l)];
                            }
                        }
                    }
                }
                c
            }
        }
    }

    /// Smallest eigenvalue of the symmetric 3x3 form matrix at a point: the
    /// local coercivity constant.
    pub fn coercivity_at(&self, x: f64, y: f64) -> f64 {
        let c = self.stiffness_at(x, y);
        let r2 = std::f64::consts::SQRT_2;
        let v = Matrix3::new(
            c[0][0][0][0],
            c[0][0][1][1],
            r2 * c[0][0][0][1],
            c[1][1][0][0],
            c[1][1][1][1],
            r2 * c[1][1][0][1],
            r2 * c[0][1][0][0],
            r2 * c[0][1][1][1],
            2.0 * c[0][1][0][1],
        );
        v.symmetric_eigenvalues().min()
    }

    /// Validates symmetry and coercivity by sampling every node of a grid.
    /// Returns the minimum coercivity constant found.
    pub fn validate(&self, grid: &SpatialGrid) -> Result<f64, ElasticityError> {
        let mut coercivity = f64::INFINITY;
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let (x, y) = grid.node(ix, iy);
                let c = self.stiffness_at(x, y);
                for i in 0..2 {
                    for j in 0..2 {
                        for k in 0..2 {
                            for l in 0..2 {
                                let v = c[i][j][k][l];
                                debug_assert!(
                                    (v - c[j][i][k][l]).abs() <= 1e-12 * (1.0 + v.abs())
                                        && (v - c[i][j][l][k]).abs() <= 1e-12 * (1.0 + v.abs())
                                        && (v - c[k][l][i][j]).abs() <= 1e-12 * (1.0 + v.abs()),
                                    "tensor symmetry violated at ({x}, {y})"
                                );
                            }
                        }
                    }
                }
                let eig = self.coercivity_at(x, y);
                if eig <= 0.0 {
                    return Err(ElasticityError::NotCoercive {
                        min_eig: eig,
                        x,
                        y,
                    });
                }
                coercivity = coercivity.min(eig);
            }
        }
        Ok(coercivity)
    }
}

/// Uniform rectangular grid. Node `(ix, iy)` sits at
/// `(x0 + ix h, y0 + iy h)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialGrid {
    pub x0: f64,
    pub y0: f64,
    pub h: f64,
    pub nx: usize,
    pub ny: usize,
}

/// Outward side of a rectangle; corner nodes carry two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    /// Outward unit normal as a grid step `(dx, dy)`.
    pub fn outward(self) -> (isize, isize) {
        match self {
            Side::Left => (-1, 0),
            Side::Right => (1, 0),
            Side::Bottom => (0, -1),
            Side::Top => (0, 1),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Side::Left => "-x",
            Side::Right => "+x",
            Side::Bottom => "-y",
            Side::Top => "+y",
        }
    }

    pub fn from_label(s: &str) -> Option<Side> {
        match s {
            "-x" => Some(Side::Left),
            "+x" => Some(Side::Right),
            "-y" => Some(Side::Bottom),
            "+y" => Some(Side::Top),
            _ => None,
        }
    }
}

/// One boundary node with its outward sides (two at corners).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryNode {
    pub ix: usize,
    pub iy: usize,
    pub sides: Vec<Side>,
}

impl SpatialGrid {
    pub fn new(x0: f64, y0: f64, h: f64, nx: usize, ny: usize) -> Result<Self, ElasticityError> {
        if nx < 3 || ny < 3 {
            return Err(ElasticityError::GridTooSmall { nx, ny });
        }
        assert!(h > 0.0, "grid spacing must be positive");
        Ok(SpatialGrid { x0, y0, h, nx, ny })
    }

    /// Grid covering `[x0, x1] x [y0, y1]` with `n` nodes per axis.
    pub fn square(x0: f64, x1: f64, n: usize) -> Result<Self, ElasticityError> {
        let h = (x1 - x0) / (n - 1) as f64;
        Self::new(x0, x0, h, n, n)
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn node(&self, ix: usize, iy: usize) -> (f64, f64) {
        (self.x0 + ix as f64 * self.h, self.y0 + iy as f64 * self.h)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn is_interior(&self, ix: usize, iy: usize) -> bool {
        ix > 0 && ix + 1 < self.nx && iy > 0 && iy + 1 < self.ny
    }

    /// Boundary nodes in counterclockwise perimeter order starting at the
    /// lower-left corner: bottom row left to right, right column upward, top
    /// row right to left, left column downward. The order is the contract
    /// for trace files and contiguous boundary-mask arcs.
    pub fn boundary_nodes(&self) -> Vec<BoundaryNode> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = Vec::with_capacity(2 * (nx + ny) - 4);
        let sides_of = |ix: usize, iy: usize| {
            let mut s = Vec::with_capacity(2);
            if ix == 0 {
                s.push(Side::Left);
            }
            if ix == nx - 1 {
                s.push(Side::Right);
            }
            if iy == 0 {
                s.push(Side::Bottom);
            }
            if iy == ny - 1 {
                s.push(Side::Top);
            }
            s
        };
        let mut push = |ix: usize, iy: usize, out: &mut Vec<BoundaryNode>| {
            out.push(BoundaryNode {
                ix,
                iy,
                sides: sides_of(ix, iy),
            })
        };
        for ix in 0..nx {
            push(ix, 0, &mut out);
        }
        for iy in 1..ny {
            push(nx - 1, iy, &mut out);
        }
        for ix in (0..nx - 1).rev() {
            push(ix, ny - 1, &mut out);
        }
        for iy in (1..ny - 1).rev() {
            push(0, iy, &mut out);
        }
        out
    }
}

/// A two-component field sampled on a grid, row-major over nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn zeros(grid: &SpatialGrid) -> Self {
        VectorField {
            nx: grid.nx,
            ny: grid.ny,
            data: vec![[0.0; 2]; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: &SpatialGrid, f: impl Fn(f64, f64) -> [f64; 2]) -> Self {
        let mut out = Self::zeros(grid);
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let (x, y) = grid.node(ix, iy);
                out.data[grid.index(ix, iy)] = f(x, y);
            }
        }
        out
    }

    pub fn get(&self, ix: usize, iy: usize) -> [f64; 2] {
        self.data[iy * self.nx + ix]
    }

    pub fn get_mut(&mut self, ix: usize, iy: usize) -> &mut [f64; 2] {
        &mut self.data[iy * self.nx + ix]
    }

    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .flatten()
            .fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// One scalar component as a row-major grid of values.
    pub fn component(&self, comp: usize) -> Vec<f64> {
        self.data.iter().map(|v| v[comp]).collect()
    }
}

/// Precomputed flux-form stencil for `div(C : grad u)` on the interior nodes
/// of one grid. Entries are stored per (interior node, output component) so
/// that the same coefficients serve both operator application (forward
/// stepping) and row assembly (least squares).
///
/// Discretization: for the divergence direction `j` equal to the gradient
/// direction `l`, conservative differencing with the coefficient averaged to
/// half-nodes; for the mixed terms, composition of centered first
/// differences. Exact for quadratic fields under constant coefficients.
#[derive(Debug, Clone)]
pub struct DivStress {
    nx: usize,
    ny: usize,
    /// Per (node, component): list of (node index, component, coefficient).
    /// Interior nodes only; boundary rows are empty.
    stencil: Vec<Vec<(u32, u8, f64)>>,
}

impl DivStress {
    pub fn new(field: &ElasticityField, grid: &SpatialGrid) -> Result<Self, ElasticityError> {
        if grid.nx < 3 || grid.ny < 3 {
            return Err(ElasticityError::GridTooSmall {
                nx: grid.nx,
                ny: grid.ny,
            });
        }
        let h = grid.h;
        let inv_h2 = 1.0 / (h * h);
        let n = grid.n_nodes();
        let mut stencil = vec![Vec::new(); 2 * n];
        // sample C once per node
        let mut c_nodes = Vec::with_capacity(n);
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                let (x, y) = grid.node(ix, iy);
                c_nodes.push(field.stiffness_at(x, y));
            }
        }
        let at = |ix: usize, iy: usize| -> &Stiffness { &c_nodes[iy * grid.nx + ix] };
        for iy in 1..grid.ny - 1 {
            for ix in 1..grid.nx - 1 {
                let node = grid.index(ix, iy);
                let c0 = at(ix, iy);
                for i in 0..2 {
                    let mut entries: Vec<(u32, u8, f64)> = Vec::with_capacity(18);
                    let mut add = |jx: usize, jy: usize, k: usize, v: f64| {
                        if v != 0.0 {
                            entries.push(((jy * grid.nx + jx) as u32, k as u8, v));
                        }
                    };
                    for k in 0..2 {
                        // d_x(C_{i1k1} d_x u_k), half-node averaged coefficient
                        let ce = 0.5 * (c0[i][0][k][0] + at(ix + 1, iy)[i][0][k][0]);
                        let cw = 0.5 * (c0[i][0][k][0] + at(ix - 1, iy)[i][0][k][0]);
                        add(ix + 1, iy, k, ce * inv_h2);
                        add(ix - 1, iy, k, cw * inv_h2);
                        add(ix, iy, k, -(ce + cw) * inv_h2);
                        // d_y(C_{i2k2} d_y u_k)
                        let cn = 0.5 * (c0[i][1][k][1] + at(ix, iy + 1)[i][1][k][1]);
                        let cs = 0.5 * (c0[i][1][k][1] + at(ix, iy - 1)[i][1][k][1]);
                        add(ix, iy + 1, k, cn * inv_h2);
                        add(ix, iy - 1, k, cs * inv_h2);
                        add(ix, iy, k, -(cn + cs) * inv_h2);
                        // d_x(C_{i1k2} d_y u_k): centered outer on centered inner
                        let q = 0.25 * inv_h2;
                        let ce = at(ix + 1, iy)[i][0][k][1];
                        let cw = at(ix - 1, iy)[i][0][k][1];
                        add(ix + 1, iy + 1, k, q * ce);
                        add(ix + 1, iy - 1, k, -q * ce);
                        add(ix - 1, iy + 1, k, -q * cw);
                        add(ix - 1, iy - 1, k, q * cw);
                        // d_y(C_{i2k1} d_x u_k)
                        let cn = at(ix, iy + 1)[i][1][k][0];
                        let cs = at(ix, iy - 1)[i][1][k][0];
                        add(ix + 1, iy + 1, k, q * cn);
                        add(ix - 1, iy + 1, k, -q * cn);
                        add(ix + 1, iy - 1, k, -q * cs);
                        add(ix - 1, iy - 1, k, q * cs);
                    }
                    // merge duplicate (node, comp) pairs so assembly rows stay minimal
                    entries.sort_by_key(|&(j, k, _)| (j, k));
                    let mut merged: Vec<(u32, u8, f64)> = Vec::with_capacity(entries.len());
                    for (j, k, v) in entries {
                        if let Some(last) = merged.last_mut() {
                            if last.0 == j && last.1 == k {
                                last.2 += v;
                                continue;
                            }
                        }
                        merged.push((j, k, v));
                    }
                    stencil[2 * node + i] = merged;
                }
            }
        }
        Ok(DivStress {
            nx: grid.nx,
            ny: grid.ny,
            stencil,
        })
    }

    /// Applies the operator; boundary rows of `out` are left at zero.
    pub fn apply(&self, u: &VectorField, out: &mut VectorField) {
        assert_eq!(u.nx, self.nx);
        assert_eq!(u.ny, self.ny);
        for node in 0..self.nx * self.ny {
            let mut val = [0.0; 2];
            for i in 0..2 {
                let mut acc = 0.0;
                for &(j, k, c) in &self.stencil[2 * node + i] {
                    acc += c * u.data[j as usize][k as usize];
                }
                val[i] = acc;
            }
            out.data[node] = val;
        }
    }

    /// Stencil row for one (interior node, component) pair.
    pub fn row(&self, node: usize, comp: usize) -> &[(u32, u8, f64)] {
        &self.stencil[2 * node + comp]
    }
}

/// Convenience wrapper: builds the stencil and applies it once.
pub fn div_stress(
    field: &ElasticityField,
    u: &VectorField,
    grid: &SpatialGrid,
) -> Result<VectorField, ElasticityError> {
    if u.data.len() != grid.n_nodes() {
        return Err(ElasticityError::FieldSizeMismatch {
            got: u.data.len(),
            expected: grid.n_nodes(),
        });
    }
    let op = DivStress::new(field, grid)?;
    let mut out = VectorField::zeros(grid);
    op.apply(u, &mut out);
    Ok(out)
}
