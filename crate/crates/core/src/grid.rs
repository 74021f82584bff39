//! Uniform periodic grid and the central-difference operators on it.
//!
//! Nodes are numbered x-block by x-block: node `(i, j)` (x index `i`, y index
//! `j`, both zero based) sits at position `i * ny + j` of every field vector.
//! The right-most and top-most nodes of the closed domain are identified with
//! the left-most and bottom-most ones and are not stored.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid {
    /// Periodic grid on `[a, b) x [c, d)` with `nx * ny` nodes.
    pub fn new(a: f64, b: f64, c: f64, d: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "central differences need at least 3 nodes per axis, got {nx}x{ny}"
            )));
        }
        if !(b - a > 0.0) || !(d - c > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain extents must be positive, got [{a}, {b}] x [{c}, {d}]"
            )));
        }
        Ok(Grid {
            a,
            b,
            c,
            d,
            nx,
            ny,
            dx: (b - a) / nx as f64,
            dy: (d - c) / ny as f64,
        })
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// Inverse of [`Grid::index`].
    #[inline]
    pub fn node(&self, k: usize) -> (usize, usize) {
        (k / self.ny, k % self.ny)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.a + i as f64 * self.dx
    }

    pub fn y(&self, j: usize) -> f64 {
        self.c + j as f64 * self.dy
    }

    /// Area weight `dx * dy` of one node.
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Evaluates `f(x, y)` at every node in storage order.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for i in 0..self.nx {
            let x = self.x(i);
            for j in 0..self.ny {
                out.push(f(x, self.y(j)));
            }
        }
        out
    }

    /// The four periodic stencil neighbours of node `k`:
    /// `[(i+1, j), (i-1, j), (i, j+1), (i, j-1)]`.
    pub fn neighbours(&self, k: usize) -> [usize; 4] {
        let (i, j) = self.node(k);
        let ip = (i + 1) % self.nx;
        let im = (i + self.nx - 1) % self.nx;
        let jp = (j + 1) % self.ny;
        let jm = (j + self.ny - 1) % self.ny;
        [
            self.index(ip, j),
            self.index(im, j),
            self.index(i, jp),
            self.index(i, jm),
        ]
    }
}

/// Periodic central-difference pattern of size `s`: `+1` on the first
/// superdiagonal, `-1` on the first subdiagonal, and the wrap-around entries
/// `[0, s-1] = -1`, `[s-1, 0] = +1`, which keep the matrix skew-symmetric.
pub fn periodic_difference_pattern(s: usize) -> CsrMatrix {
    let mut t = Vec::with_capacity(2 * s);
    for r in 0..s {
        t.push((r, (r + 1) % s, 1.0));
        t.push((r, (r + s - 1) % s, -1.0));
    }
    CsrMatrix::from_triplets(s, s, &t)
}

/// Sparse first-derivative operators `Dx = (1/2dx) D_nx ⊗ I_ny` and
/// `Dy = (1/2dy) I_nx ⊗ D_ny`.
///
/// The explicit matrices are kept for the offline projections; the hot paths
/// use the equivalent matrix-free stencils [`DiffOperators::apply_dx`] and
/// [`DiffOperators::apply_dy`].
#[derive(Debug, Clone)]
pub struct DiffOperators {
    nx: usize,
    ny: usize,
    half_inv_dx: f64,
    half_inv_dy: f64,
    dx: CsrMatrix,
    dy: CsrMatrix,
}

impl DiffOperators {
    pub fn new(grid: &Grid) -> Self {
        let half_inv_dx = 0.5 / grid.dx;
        let half_inv_dy = 0.5 / grid.dy;
        let dx = periodic_difference_pattern(grid.nx)
            .kron(&CsrMatrix::identity(grid.ny))
            .scaled(half_inv_dx);
        let dy = CsrMatrix::identity(grid.nx)
            .kron(&periodic_difference_pattern(grid.ny))
            .scaled(half_inv_dy);
        DiffOperators {
            nx: grid.nx,
            ny: grid.ny,
            half_inv_dx,
            half_inv_dy,
            dx,
            dy,
        }
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx_matrix(&self) -> &CsrMatrix {
        &self.dx
    }

    pub fn dy_matrix(&self) -> &CsrMatrix {
        &self.dy
    }

    /// `out = Dx w`.
    pub fn apply_dx(&self, w: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        debug_assert_eq!(w.len(), nx * ny);
        debug_assert_eq!(out.len(), nx * ny);
        for i in 0..nx {
            let ip = (i + 1) % nx;
            let im = (i + nx - 1) % nx;
            let plus = &w[ip * ny..(ip + 1) * ny];
            let minus = &w[im * ny..(im + 1) * ny];
            for ((o, p), m) in out[i * ny..(i + 1) * ny].iter_mut().zip(plus).zip(minus) {
                *o = (p - m) * self.half_inv_dx;
            }
        }
    }

    /// `out = Dy w`.
    pub fn apply_dy(&self, w: &[f64], out: &mut [f64]) {
        let (nx, ny) = (self.nx, self.ny);
        debug_assert_eq!(w.len(), nx * ny);
        debug_assert_eq!(out.len(), nx * ny);
        let c = self.half_inv_dy;
        for i in 0..nx {
            let col = &w[i * ny..(i + 1) * ny];
            let o = &mut out[i * ny..(i + 1) * ny];
            o[0] = (col[1] - col[ny - 1]) * c;
            for j in 1..ny - 1 {
                o[j] = (col[j + 1] - col[j - 1]) * c;
            }
            o[ny - 1] = (col[0] - col[ny - 2]) * c;
        }
    }

    pub fn dx(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        self.apply_dx(w, &mut out);
        out
    }

    pub fn dy(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        self.apply_dy(w, &mut out);
        out
    }
}
