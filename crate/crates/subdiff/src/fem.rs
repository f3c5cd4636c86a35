//! Conforming P1 finite elements on uniform meshes of the unit interval and
//! the unit square, with homogeneous Dirichlet boundary conditions.
//!
//! Both geometries share one interface: a [`FemSpace`] owns the interior
//! node coordinates and the assembled mass and stiffness matrices, and a
//! [`GridFunction`] is a coefficient vector tied to its space. The square is
//! meshed by splitting each cell of an `m x m` grid into two triangles along
//! the lower-left to upper-right diagonal, which makes the stiffness matrix
//! the classical 5-point difference stencil.
//!
//! Loads and L2 projections integrate with fixed-order quadrature: two-point
//! Gauss per interval in 1d, and the three-point interior rule (barycentric
//! points (1/6, 1/6), (2/3, 1/6), (1/6, 2/3)) per triangle in 2d. Both are
//! exact for quadratics against the P1 basis, and the interior rule never
//! samples on element edges, which matters for data with jumps along mesh
//! lines.

use std::sync::Arc;

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use nalgebra_sparse::factorization::CscCholesky;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("mesh parameter m must be at least 2, got {0}")]
    MeshTooCoarse(usize),
    #[error("square mesh parameter must be even, got {0}")]
    OddSquareMesh(usize),
    #[error("coefficient vector has length {got}, space has {expected} interior nodes")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("Cholesky factorization failed; matrix not positive definite")]
    FactorizationFailed,
}

/// Geometry tag of a space. In 1d, node coordinates carry `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    UnitInterval,
    UnitSquare,
}

/// A P1 space on a uniform mesh: interior nodes, assembled matrices, and a
/// cached Cholesky factorization of the mass matrix for projections.
///
/// Only interior degrees of freedom are stored; boundary values are
/// identically zero and eliminated from every matrix.
pub struct FemSpace {
    pub domain: Domain,
    /// Cells per side: `m` subintervals in 1d, an `m x m` cell grid in 2d.
    pub m: usize,
    /// Mesh width `1 / m`.
    pub h: f64,
    /// Interior node coordinates as `[x, y]`; `y = 0` on the interval.
    pub nodes: Vec<[f64; 2]>,
    pub mass: CscMatrix<f64>,
    pub stiffness: CscMatrix<f64>,
    mass_chol: CscCholesky<f64>,
}

impl std::fmt::Debug for FemSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FemSpace")
            .field("domain", &self.domain)
            .field("m", &self.m)
            .field("h", &self.h)
            .field("dim", &self.nodes.len())
            .finish()
    }
}

impl FemSpace {
    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    /// Solves `M x = rhs` through the cached factorization.
    pub fn mass_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let sol = self.mass_chol.solve(rhs);
        DVector::from_column_slice(sol.column(0).as_slice())
    }
}

/// Two-point Gauss rule on [0, 1], exact through cubics.
const GAUSS2: [(f64, f64); 2] = [
    (0.211324865405187118, 0.5),
    (0.788675134594812882, 0.5),
];

/// Three-point interior rule on the reference triangle, exact through
/// quadratics; weights sum to 1 and multiply the triangle area.
const TRI3: [(f64, f64, f64); 3] = [
    (1.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0),
    (2.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0),
    (1.0 / 6.0, 2.0 / 3.0, 1.0 / 3.0),
];

fn finish_space(
    domain: Domain,
    m: usize,
    nodes: Vec<[f64; 2]>,
    mass: CooMatrix<f64>,
    stiffness: CooMatrix<f64>,
) -> Result<Arc<FemSpace>, FemError> {
    let mass = CscMatrix::from(&mass);
    let stiffness = CscMatrix::from(&stiffness);
    let mass_chol = CscCholesky::factor(&mass).map_err(|_| FemError::FactorizationFailed)?;
    Ok(Arc::new(FemSpace {
        domain,
        m,
        h: 1.0 / m as f64,
        nodes,
        mass,
        stiffness,
        mass_chol,
    }))
}

/// Builds the P1 space on the unit interval split into `m` subintervals.
/// Interior nodes are `x_i = i h`, `i = 1..m-1`, giving dimension `m - 1`.
pub fn build_interval_space(m: usize) -> Result<Arc<FemSpace>, FemError> {
    if m < 2 {
        return Err(FemError::MeshTooCoarse(m));
    }
    let h = 1.0 / m as f64;
    let dim = m - 1;
    let nodes: Vec<[f64; 2]> = (1..m).map(|i| [i as f64 * h, 0.0]).collect();
    let mut mass = CooMatrix::new(dim, dim);
    let mut stiffness = CooMatrix::new(dim, dim);
    for i in 0..dim {
        mass.push(i, i, 4.0 * h / 6.0);
        stiffness.push(i, i, 2.0 / h);
        if i + 1 < dim {
            mass.push(i, i + 1, h / 6.0);
            mass.push(i + 1, i, h / 6.0);
            stiffness.push(i, i + 1, -1.0 / h);
            stiffness.push(i + 1, i, -1.0 / h);
        }
    }
    finish_space(Domain::UnitInterval, m, nodes, mass, stiffness)
}

/// Builds the P1 space on the unit square meshed by an `m x m` cell grid with
/// each cell split along its lower-left to upper-right diagonal. Interior
/// nodes are `(i h, j h)`, `i, j = 1..m-1`, row-major in `i` then `j`,
/// giving dimension `(m - 1)^2`.
///
/// `m` must be even so that mesh lines land on `x = 1/2`; study data with a
/// jump there is then resolved instead of straddled.
pub fn build_square_space(m: usize) -> Result<Arc<FemSpace>, FemError> {
    if m < 2 {
        return Err(FemError::MeshTooCoarse(m));
    }
    if m % 2 != 0 {
        return Err(FemError::OddSquareMesh(m));
    }
    let h = 1.0 / m as f64;
    let side = m - 1;
    let dim = side * side;
    let mut nodes = Vec::with_capacity(dim);
    for j in 1..m {
        for i in 1..m {
            nodes.push([i as f64 * h, j as f64 * h]);
        }
    }
    let idx = |i: usize, j: usize| -> Option<usize> {
        if i >= 1 && i <= side && j >= 1 && j <= side {
            Some((j - 1) * side + (i - 1))
        } else {
            None
        }
    };
    let mut mass = CooMatrix::new(dim, dim);
    let mut stiffness = CooMatrix::new(dim, dim);
    // Assembled stencils for this triangulation: stiffness is the 5-point
    // stencil (4 on the diagonal, -1 to the four axis neighbors, 0 to the
    // diagonal neighbors); the mass row couples the node to its four axis
    // neighbors and the two neighbors along the split direction (+1,+1) and
    // (-1,-1), each with weight h^2/12, and carries h^2/2 on the diagonal.
    for j in 1..=side {
        for i in 1..=side {
            let row = idx(i, j).unwrap();
            stiffness.push(row, row, 4.0);
            mass.push(row, row, h * h / 2.0);
            let neighbors: [(i64, i64, f64, f64); 6] = [
                (1, 0, -1.0, h * h / 12.0),
                (-1, 0, -1.0, h * h / 12.0),
                (0, 1, -1.0, h * h / 12.0),
                (0, -1, -1.0, h * h / 12.0),
                (1, 1, 0.0, h * h / 12.0),
                (-1, -1, 0.0, h * h / 12.0),
            ];
            for (di, dj, a_val, m_val) in neighbors {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                if ni < 1 || nj < 1 {
                    continue;
                }
                if let Some(col) = idx(ni as usize, nj as usize) {
                    if a_val != 0.0 {
                        stiffness.push(row, col, a_val);
                    }
                    mass.push(row, col, m_val);
                }
            }
        }
    }
    finish_space(Domain::UnitSquare, m, nodes, mass, stiffness)
}

/// A finite element function: coefficients in the nodal basis of `space`.
#[derive(Debug, Clone)]
pub struct GridFunction {
    pub space: Arc<FemSpace>,
    pub coeffs: DVector<f64>,
}

impl GridFunction {
    pub fn new(space: &Arc<FemSpace>, coeffs: DVector<f64>) -> Result<Self, FemError> {
        if coeffs.len() != space.dim() {
            return Err(FemError::DimensionMismatch {
                got: coeffs.len(),
                expected: space.dim(),
            });
        }
        Ok(GridFunction {
            space: Arc::clone(space),
            coeffs,
        })
    }

    pub fn zero(space: &Arc<FemSpace>) -> Self {
        GridFunction {
            space: Arc::clone(space),
            coeffs: DVector::zeros(space.dim()),
        }
    }

    /// Discrete L2 norm `sqrt(c' M c)`.
    pub fn l2_norm(&self) -> f64 {
        let mc = &self.space.mass * &self.coeffs;
        self.coeffs.dot(&mc).max(0.0).sqrt()
    }
}

/// Load vector `(f, phi_i)` for all interior basis functions, via the
/// fixed-order quadrature of the space's geometry. `f` takes `[x, y]` with
/// `y = 0` on the interval.
pub fn load_vector(space: &FemSpace, f: &dyn Fn([f64; 2]) -> f64) -> DVector<f64> {
    let h = space.h;
    let m = space.m;
    let mut out = DVector::zeros(space.dim());
    match space.domain {
        Domain::UnitInterval => {
            // Element k spans [k h, (k+1) h]; its left node has interior
            // index k-1 and its right node index k (when they exist).
            for k in 0..m {
                let x0 = k as f64 * h;
                for (q, w) in GAUSS2 {
                    let x = x0 + q * h;
                    let val = f([x, 0.0]) * w * h;
                    if k >= 1 {
                        out[k - 1] += val * (1.0 - q);
                    }
                    if k + 1 < m {
                        out[k] += val * q;
                    }
                }
            }
        }
        Domain::UnitSquare => {
            let side = m - 1;
            let idx = |i: i64, j: i64| -> Option<usize> {
                if i >= 1 && i <= side as i64 && j >= 1 && j <= side as i64 {
                    Some(((j - 1) as usize) * side + (i - 1) as usize)
                } else {
                    None
                }
            };
            let area = 0.5 * h * h;
            for cj in 0..m as i64 {
                for ci in 0..m as i64 {
                    let (x0, y0) = (ci as f64 * h, cj as f64 * h);
                    // Lower triangle: vertices (ci,cj), (ci+1,cj), (ci+1,cj+1);
                    // upper: (ci,cj), (ci+1,cj+1), (ci,cj+1).
                    let tris = [
                        [(ci, cj), (ci + 1, cj), (ci + 1, cj + 1)],
                        [(ci, cj), (ci + 1, cj + 1), (ci, cj + 1)],
                    ];
                    for tri in tris {
                        let vx: Vec<(f64, f64)> = tri
                            .iter()
                            .map(|&(i, j)| (i as f64 * h, j as f64 * h))
                            .collect();
                        let _ = (x0, y0);
                        for (l1, l2, w) in TRI3 {
                            let l0 = 1.0 - l1 - l2;
                            let bary = [l0, l1, l2];
                            let x = bary[0] * vx[0].0 + bary[1] * vx[1].0 + bary[2] * vx[2].0;
                            let y = bary[0] * vx[0].1 + bary[1] * vx[1].1 + bary[2] * vx[2].1;
                            let val = f([x, y]) * w * area;
                            for (v, &(vi, vj)) in tri.iter().enumerate() {
                                if let Some(row) = idx(vi, vj) {
                                    out[row] += val * bary[v];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// L2 projection of `f` onto the space: solves `M c = (f, phi_i)`.
pub fn l2_project(space: &Arc<FemSpace>, f: &dyn Fn([f64; 2]) -> f64) -> GridFunction {
    let rhs = load_vector(space, f);
    GridFunction {
        space: Arc::clone(space),
        coeffs: space.mass_solve(&rhs),
    }
}

/// Ritz projection of `f`: solves `A c = (grad f, grad phi_i)` rewritten
/// through integration by parts as `A c = (-Laplace f, phi_i)`, so the caller
/// supplies `neg_laplacian = -Laplace f`. Boundary terms vanish because the
/// space is homogeneous Dirichlet.
pub fn ritz_project(
    space: &Arc<FemSpace>,
    neg_laplacian: &dyn Fn([f64; 2]) -> f64,
) -> Result<GridFunction, FemError> {
    let rhs = load_vector(space, neg_laplacian);
    let chol =
        CscCholesky::factor(&space.stiffness).map_err(|_| FemError::FactorizationFailed)?;
    let sol = chol.solve(&rhs);
    Ok(GridFunction {
        space: Arc::clone(space),
        coeffs: DVector::from_column_slice(sol.column(0).as_slice()),
    })
}

/// Interpolates `f` at the interior nodes. Useful for smooth comparison
/// functions where the nodal values are the natural discrete stand-in.
pub fn nodal_interpolant(space: &Arc<FemSpace>, f: &dyn Fn([f64; 2]) -> f64) -> GridFunction {
    let coeffs = DVector::from_iterator(space.dim(), space.nodes.iter().map(|&p| f(p)));
    GridFunction {
        space: Arc::clone(space),
        coeffs,
    }
}
