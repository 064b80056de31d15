//! Uniform Cartesian staggered grid with cell-centered scalars and
//! face-centered vectors.
//!
//! Cells are indexed `(i, j, k)` with `k` fixed to zero in 2D. A face field
//! stores one flat array per axis; the array for axis `a` has `n + 1` entries
//! along `a` and `n` along the other axes.

use crate::error::VpError;

/// Uniform Cartesian grid over a cube `[lower, upper]^dim` with `n` cells per
/// axis. Spacing is identical on every axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartesianGrid {
    pub dim: usize,
    pub n: usize,
    pub lower: [f64; 3],
    pub upper: [f64; 3],
    pub h: f64,
}

impl CartesianGrid {
    /// Builds a grid. The domain must have equal extent on every axis so that
    /// the spacing is uniform.
    pub fn build(lower: [f64; 3], upper: [f64; 3], n: usize, dim: usize) -> Result<Self, VpError> {
        if !(dim == 2 || dim == 3) {
            return Err(VpError::Config(format!("dim must be 2 or 3, got {dim}")));
        }
        if n < 2 {
            return Err(VpError::Config(format!("n must be at least 2, got {n}")));
        }
        let ext0 = upper[0] - lower[0];
        for a in 0..dim {
            let ext = upper[a] - lower[a];
            if ext <= 0.0 {
                return Err(VpError::Config("upper must exceed lower on every axis".into()));
            }
            if (ext - ext0).abs() > 1e-12 * ext0.abs() {
                return Err(VpError::Config(
                    "per-axis extents differ; uniform spacing requires a cubic domain".into(),
                ));
            }
        }
        Ok(Self { dim, n, lower, upper, h: ext0 / n as f64 })
    }

    /// Total number of cells, `n^dim`.
    pub fn num_cells(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Cells along the third axis: `n` in 3D, 1 in 2D.
    #[inline]
    pub fn nk(&self) -> usize {
        if self.dim == 3 { self.n } else { 1 }
    }

    /// Flat index of cell `(i, j, k)`.
    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.nk() + k
    }

    /// Physical coordinates of the center of cell `(i, j, k)`.
    #[inline]
    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let z = if self.dim == 3 { self.lower[2] + (k as f64 + 0.5) * self.h } else { 0.0 };
        [
            self.lower[0] + (i as f64 + 0.5) * self.h,
            self.lower[1] + (j as f64 + 0.5) * self.h,
            z,
        ]
    }

    /// Cell index (per axis) containing physical point `x`, by nearest-center
    /// rounding. A point exactly on a face ties toward the lower index.
    /// Returns `None` when the point falls outside the grid.
    pub fn cell_containing(&self, x: [f64; 3]) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for a in 0..self.dim {
            let v = (x[a] - self.lower[a]) / self.h - 0.5;
            let s = (v - 0.5).ceil();
            if s < 0.0 || s as usize >= self.n {
                return None;
            }
            c[a] = s as usize;
        }
        Some(c)
    }

    /// Extents of the face array for `axis`: `n + 1` along `axis`, `n` along
    /// the others (1 along the third axis in 2D).
    #[inline]
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = [self.n, self.n, self.nk()];
        d[axis] += 1;
        d
    }

    /// Flat index into the face array of `axis`.
    #[inline]
    pub fn face_index(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let d = self.face_dims(axis);
        (i * d[1] + j) * d[2] + k
    }

    /// Physical coordinates of a face center on `axis`.
    #[inline]
    pub fn face_center(&self, axis: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut x = [
            self.lower[0] + (i as f64 + 0.5) * self.h,
            self.lower[1] + (j as f64 + 0.5) * self.h,
            if self.dim == 3 { self.lower[2] + (k as f64 + 0.5) * self.h } else { 0.0 },
        ];
        let idx = [i, j, k];
        x[axis] = self.lower[axis] + idx[axis] as f64 * self.h;
        x
    }
}

/// Scalar field with one value per cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    pub grid: CartesianGrid,
    pub values: Vec<f64>,
}

impl CellField {
    pub fn zeros(grid: &CartesianGrid) -> Self {
        Self { grid: *grid, values: vec![0.0; grid.num_cells()] }
    }

    /// Samples a closure of position at every cell center.
    pub fn sample(grid: &CartesianGrid, f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut v = Vec::with_capacity(grid.num_cells());
        for i in 0..grid.n {
            for j in 0..grid.n {
                for k in 0..grid.nk() {
                    v.push(f(grid.cell_center(i, j, k)));
                }
            }
        }
        Self { grid: *grid, values: v }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.cell_index(i, j, k)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        let idx = self.grid.cell_index(i, j, k);
        &mut self.values[idx]
    }
}

/// Vector field stored at face centers, one flat array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    pub grid: CartesianGrid,
    pub comps: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(grid: &CartesianGrid) -> Self {
        let comps = (0..grid.dim)
            .map(|a| {
                let d = grid.face_dims(a);
                vec![0.0; d[0] * d[1] * d[2]]
            })
            .collect();
        Self { grid: *grid, comps }
    }

    /// Samples a vector closure of position at every face center.
    pub fn sample(grid: &CartesianGrid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for a in 0..grid.dim {
            let d = grid.face_dims(a);
            for i in 0..d[0] {
                for j in 0..d[1] {
                    for k in 0..d[2] {
                        let idx = grid.face_index(a, i, j, k);
                        out.comps[a][idx] = f(grid.face_center(a, i, j, k))[a];
                    }
                }
            }
        }
        out
    }

    #[inline]
    pub fn at(&self, axis: usize, i: usize, j: usize, k: usize) -> f64 {
        self.comps[axis][self.grid.face_index(axis, i, j, k)]
    }

    #[inline]
    pub fn at_mut(&mut self, axis: usize, i: usize, j: usize, k: usize) -> &mut f64 {
        let idx = self.grid.face_index(axis, i, j, k);
        &mut self.comps[axis][idx]
    }
}

/// Second-order interpolation from cell centers to faces: interior faces take
/// the arithmetic mean of the two adjacent cells, boundary faces copy the
/// single adjacent cell value.
pub fn cell_to_face(field: &CellField) -> FaceField {
    let g = field.grid;
    let mut out = FaceField::zeros(&g);
    for a in 0..g.dim {
        let d = g.face_dims(a);
        for i in 0..d[0] {
            for j in 0..d[1] {
                for k in 0..d[2] {
                    let f = [i, j, k];
                    let mut lo = f;
                    let mut hi = f;
                    let v = if f[a] == 0 {
                        field.at(hi[0], hi[1], hi[2])
                    } else if f[a] == g.n {
                        lo[a] -= 1;
                        field.at(lo[0], lo[1], lo[2])
                    } else {
                        lo[a] -= 1;
                        hi = f;
                        0.5 * (field.at(lo[0], lo[1], lo[2]) + field.at(hi[0], hi[1], hi[2]))
                    };
                    *out.at_mut(a, i, j, k) = v;
                }
            }
        }
    }
    out
}

/// Discrete divergence of a face field: per cell, sum over axes of
/// `(F_hi - F_lo) / h`.
pub fn face_divergence(f: &FaceField) -> CellField {
    let g = f.grid;
    let mut out = CellField::zeros(&g);
    for i in 0..g.n {
        for j in 0..g.n {
            for k in 0..g.nk() {
                let mut div = 0.0;
                for a in 0..g.dim {
                    let mut hi = [i, j, k];
                    hi[a] += 1;
                    div += (f.at(a, hi[0], hi[1], hi[2]) - f.at(a, i, j, k)) / g.h;
                }
                *out.at_mut(i, j, k) = div;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const TAU: f64 = 2.0 * PI;

    fn grid2(n: usize) -> CartesianGrid {
        CartesianGrid::build([0.0; 3], [TAU; 3], n, 2).unwrap()
    }

    #[test]
    fn build_basic() {
        let g = grid2(2);
        assert!((g.h - PI).abs() < 1e-15);
        assert_eq!(g.num_cells(), 4);

        let g = grid2(256);
        assert!((g.h - 2.45e-2).abs() < 5e-4);

        let g3 = CartesianGrid::build([0.0; 3], [TAU; 3], 64, 3).unwrap();
        assert!((g3.h - 9.82e-2).abs() < 5e-4);
        assert_eq!(g3.num_cells(), 64 * 64 * 64);
    }

    #[test]
    fn build_rejects_bad_domains() {
        assert!(CartesianGrid::build([0.0; 3], [1.0, 2.0, 1.0], 8, 2).is_err());
        assert!(CartesianGrid::build([0.0; 3], [-1.0, -1.0, -1.0], 8, 2).is_err());
        assert!(CartesianGrid::build([0.0; 3], [1.0; 3], 1, 2).is_err());
        assert!(CartesianGrid::build([0.0; 3], [1.0; 3], 8, 4).is_err());
    }

    #[test]
    fn cell_to_face_constant() {
        let g = grid2(8);
        let c = CellField::sample(&g, |_| 3.25);
        let f = cell_to_face(&c);
        for a in 0..2 {
            for v in &f.comps[a] {
                assert_eq!(*v, 3.25);
            }
        }
    }

    #[test]
    fn cell_to_face_midpoint() {
        // 1D-style check along x: cells 0 and 2 meet at an interior face of 1.
        let g = grid2(2);
        let mut c = CellField::zeros(&g);
        *c.at_mut(0, 0, 0) = 0.0;
        *c.at_mut(1, 0, 0) = 2.0;
        let f = cell_to_face(&c);
        assert_eq!(f.at(0, 1, 0, 0), 1.0);
        // Boundary faces copy the adjacent cell.
        assert_eq!(f.at(0, 0, 0, 0), 0.0);
        assert_eq!(f.at(0, 2, 0, 0), 2.0);
    }

    #[test]
    fn cell_to_face_quadratic_deviation() {
        // f(x) = x^2 sampled on a line of cells with h = 0.1: the interior
        // face average deviates from the exact midpoint value by h^2/4.
        let g = CartesianGrid::build([0.0; 3], [1.0; 3], 10, 2).unwrap();
        let c = CellField::sample(&g, |x| x[0] * x[0]);
        let f = cell_to_face(&c);
        let mut max_dev: f64 = 0.0;
        for i in 1..g.n {
            let xf = g.face_center(0, i, 0, 0)[0];
            max_dev = max_dev.max((f.at(0, i, 0, 0) - xf * xf).abs());
        }
        assert!(max_dev <= g.h * g.h / 4.0 + 1e-15, "max_dev = {max_dev}");
    }

    #[test]
    fn linear_fields_are_exact_on_interior_faces() {
        let g = grid2(16);
        let c = CellField::sample(&g, |x| 2.0 * x[0] - 0.7 * x[1] + 0.3);
        let f = cell_to_face(&c);
        for a in 0..2 {
            let d = g.face_dims(a);
            for i in 0..d[0] {
                for j in 0..d[1] {
                    let fc = [i, j];
                    if fc[a] == 0 || fc[a] == g.n {
                        continue;
                    }
                    let x = g.face_center(a, i, j, 0);
                    let exact = 2.0 * x[0] - 0.7 * x[1] + 0.3;
                    assert!((f.at(a, i, j, 0) - exact).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn divergence_of_linear_field() {
        let g = grid2(8);
        let f = FaceField::sample(&g, |x| [x[0], -2.0 * x[1], 0.0]);
        let div = face_divergence(&f);
        for v in &div.values {
            assert!((v - (-1.0)).abs() < 1e-12);
        }
    }
}
