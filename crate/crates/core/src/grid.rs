//! Box-shaped MAC grid and the field containers living on it.
//!
//! Scalars sit at cell centers `(i + 1/2) h`, the velocity component along
//! axis `a` sits on the faces normal to `a` at `i h`. Every array is stored
//! with the x index varying fastest, i.e. row-major over `[z][y][x]`, which is
//! also the VTK point-data order.

use crate::error::{Error, Result};

/// Rectangular 2D or 3D mesh. Unused trailing axes have one cell of unit length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    cells: [usize; 3],
    lengths: [f64; 3],
    spacing: [f64; 3],
}

impl Grid {
    pub fn new(dim: usize, cells: &[usize], lengths: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Grid(format!("dimension must be 2 or 3 (got {dim})")));
        }
        if cells.len() != dim || lengths.len() != dim {
            return Err(Error::Grid(format!(
                "expected {dim} cell counts and lengths (got {} and {})",
                cells.len(),
                lengths.len()
            )));
        }
        let mut c = [1usize; 3];
        let mut l = [1.0f64; 3];
        let mut h = [1.0f64; 3];
        for a in 0..dim {
            if cells[a] < 2 {
                return Err(Error::Grid(format!("axis {a}: need at least 2 cells (got {})", cells[a])));
            }
            if !(lengths[a] > 0.0) || !lengths[a].is_finite() {
                return Err(Error::Grid(format!("axis {a}: length must be positive (got {})", lengths[a])));
            }
            c[a] = cells[a];
            l[a] = lengths[a];
            h[a] = lengths[a] / cells[a] as f64;
        }
        Ok(Self { dim, cells: c, lengths: l, spacing: h })
    }

    /// Uniform square/cube helper used throughout the tests and studies.
    pub fn cube(dim: usize, n: usize, length: f64) -> Result<Self> {
        Self::new(dim, &vec![n; dim], &vec![length; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> [usize; 3] {
        self.cells
    }

    pub fn lengths(&self) -> [f64; 3] {
        self.lengths
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn domain_volume(&self) -> f64 {
        self.lengths[..self.dim].iter().product()
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.cells[0] * (j + self.cells[1] * k)
    }

    /// Offset between neighbouring cells along `axis`.
    #[inline]
    pub fn cell_stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.cells[0],
            _ => self.cells[0] * self.cells[1],
        }
    }

    /// Array shape of the faces normal to `axis`.
    #[inline]
    pub fn face_dims(&self, axis: usize) -> [usize; 3] {
        let mut d = self.cells;
        d[axis] += 1;
        d
    }

    pub fn num_faces(&self, axis: usize) -> usize {
        self.face_dims(axis).iter().product()
    }

    #[inline]
    pub fn face_index(&self, axis: usize, i: usize, j: usize, k: usize) -> usize {
        let d = self.face_dims(axis);
        i + d[0] * (j + d[1] * k)
    }

    /// Offset between neighbouring faces normal to `axis`, stepping along `along`.
    #[inline]
    pub fn face_stride(&self, axis: usize, along: usize) -> usize {
        let d = self.face_dims(axis);
        match along {
            0 => 1,
            1 => d[0],
            _ => d[0] * d[1],
        }
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let h = self.spacing;
        let mut x = [(i as f64 + 0.5) * h[0], (j as f64 + 0.5) * h[1], (k as f64 + 0.5) * h[2]];
        if self.dim == 2 {
            x[2] = 0.0;
        }
        x
    }

    pub fn face_center(&self, axis: usize, i: usize, j: usize, k: usize) -> [f64; 3] {
        let mut x = self.cell_center(i, j, k);
        x[axis] -= 0.5 * self.spacing[axis];
        x
    }

    /// Calls `f(index, [i, j, k])` for each cell in storage order.
    #[inline]
    pub fn for_each_cell(&self, mut f: impl FnMut(usize, [usize; 3])) {
        let [nx, ny, nz] = self.cells;
        let mut idx = 0;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    f(idx, [i, j, k]);
                    idx += 1;
                }
            }
        }
    }

    /// Calls `f(index, [i, j, k])` for each face normal to `axis` in storage order.
    #[inline]
    pub fn for_each_face(&self, axis: usize, mut f: impl FnMut(usize, [usize; 3])) {
        let [nx, ny, nz] = self.face_dims(axis);
        let mut idx = 0;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    f(idx, [i, j, k]);
                    idx += 1;
                }
            }
        }
    }

    /// True if the face at `pos` (normal to `axis`) lies on the domain boundary.
    #[inline]
    pub fn is_boundary_face(&self, axis: usize, pos: [usize; 3]) -> bool {
        pos[axis] == 0 || pos[axis] == self.cells[axis]
    }
}

/// Cell-centered scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, value: f64) -> Self {
        Self { grid: *grid, values: vec![value; grid.num_cells()] }
    }

    pub fn from_values(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::Grid(format!(
                "scalar field needs {} values (got {})",
                grid.num_cells(),
                values.len()
            )));
        }
        Ok(Self { grid: *grid, values })
    }

    /// Samples `f` at cell centers.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut([f64; 3]) -> f64) -> Self {
        let mut values = vec![0.0; grid.num_cells()];
        grid.for_each_cell(|idx, [i, j, k]| values[idx] = f(grid.cell_center(i, j, k)));
        Self { grid: *grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ f` as a volume-weighted sum.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// `‖f‖²_{L²}`.
    pub fn l2_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    /// Volume-weighted inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_volume()
    }
}

/// Face-normal vector components on the MAC faces, one array per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceVectorField {
    grid: Grid,
    comps: Vec<Vec<f64>>,
}

impl FaceVectorField {
    pub fn zeros(grid: &Grid) -> Self {
        let comps = (0..grid.dim()).map(|a| vec![0.0; grid.num_faces(a)]).collect();
        Self { grid: *grid, comps }
    }

    pub fn from_components(grid: &Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() {
            return Err(Error::Grid(format!("expected {} components (got {})", grid.dim(), comps.len())));
        }
        for (a, c) in comps.iter().enumerate() {
            if c.len() != grid.num_faces(a) {
                return Err(Error::Grid(format!(
                    "component {a} needs {} values (got {})",
                    grid.num_faces(a),
                    c.len()
                )));
            }
        }
        Ok(Self { grid: *grid, comps })
    }

    /// Samples `f(axis, x)` at face centers, where `f` returns the `axis` component.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(usize, [f64; 3]) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        for a in 0..grid.dim() {
            let comp = &mut out.comps[a];
            grid.for_each_face(a, |idx, [i, j, k]| comp[idx] = f(a, grid.face_center(a, i, j, k)));
        }
        out
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.comps[axis]
    }

    pub fn component_mut(&mut self, axis: usize) -> &mut [f64] {
        &mut self.comps[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn set_boundary_zero(&mut self) {
        let grid = self.grid;
        for a in 0..grid.dim() {
            let comp = &mut self.comps[a];
            grid.for_each_face(a, |idx, pos| {
                if grid.is_boundary_face(a, pos) {
                    comp[idx] = 0.0;
                }
            });
        }
    }

    pub fn boundary_is_zero(&self) -> bool {
        let grid = self.grid;
        let mut ok = true;
        for a in 0..grid.dim() {
            let comp = &self.comps[a];
            grid.for_each_face(a, |idx, pos| {
                if grid.is_boundary_face(a, pos) && comp[idx] != 0.0 {
                    ok = false;
                }
            });
        }
        ok
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖u‖²_{L²}` with each face carrying one cell volume.
    pub fn l2_sq(&self) -> f64 {
        self.comps.iter().flatten().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn dot(&self, other: &FaceVectorField) -> f64 {
        self.comps
            .iter()
            .flatten()
            .zip(other.comps.iter().flatten())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_volume()
    }

    /// Concatenation of all components, axis by axis.
    pub fn flatten(&self) -> Vec<f64> {
        self.comps.iter().flatten().copied().collect()
    }

    pub fn from_flat(grid: &Grid, flat: &[f64]) -> Result<Self> {
        let mut comps = Vec::with_capacity(grid.dim());
        let mut offset = 0;
        for a in 0..grid.dim() {
            let len = grid.num_faces(a);
            let end = offset + len;
            if end > flat.len() {
                return Err(Error::Grid(format!("flat velocity too short ({} values)", flat.len())));
            }
            comps.push(flat[offset..end].to_vec());
            offset = end;
        }
        if offset != flat.len() {
            return Err(Error::Grid(format!("flat velocity too long ({} values, expected {offset})", flat.len())));
        }
        Ok(Self { grid: *grid, comps })
    }

    pub fn total_len(&self) -> usize {
        self.comps.iter().map(Vec::len).sum()
    }
}

/// `c = z² - α²` cellwise.
pub fn derive_c(z: &ScalarField, alpha: f64) -> ScalarField {
    z.map(|v| (v - alpha) * (v + alpha))
}

/// Inverse of [`derive_c`]: `z = sqrt(c + α²)`.
pub fn z_from_c(c: &ScalarField, alpha: f64) -> ScalarField {
    c.map(|v| (v + alpha * alpha).sqrt())
}

/// Two-point averages onto faces; boundary faces take the adjacent cell value.
pub fn interp_center_to_face(f: &ScalarField) -> FaceVectorField {
    let grid = *f.grid();
    let vals = f.values();
    let mut out = FaceVectorField::zeros(&grid);
    for a in 0..grid.dim() {
        let n = grid.cells()[a];
        let stride = grid.cell_stride(a);
        let comp = out.component_mut(a);
        grid.for_each_face(a, |idx, [i, j, k]| {
            let mut pos = [i, j, k];
            let p = pos[a];
            comp[idx] = if p == 0 {
                vals[grid.cell_index(pos[0], pos[1], pos[2])]
            } else if p == n {
                pos[a] = n - 1;
                vals[grid.cell_index(pos[0], pos[1], pos[2])]
            } else {
                let hi = grid.cell_index(pos[0], pos[1], pos[2]);
                0.5 * (vals[hi - stride] + vals[hi])
            };
        });
    }
    out
}

/// Per-axis average of the two faces bounding each cell.
pub fn interp_face_to_center(v: &FaceVectorField) -> Vec<ScalarField> {
    let grid = *v.grid();
    (0..grid.dim())
        .map(|a| {
            let comp = v.component(a);
            let fs = grid.face_stride(a, a);
            let mut out = ScalarField::zeros(&grid);
            let vals = out.values_mut();
            grid.for_each_cell(|idx, [i, j, k]| {
                let lo = grid.face_index(a, i, j, k);
                vals[idx] = 0.5 * (comp[lo] + comp[lo + fs]);
            });
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn make_grid_examples() {
        let g = Grid::new(2, &[4, 4], &[1.0, 1.0]).unwrap();
        assert_eq!(&g.spacing()[..2], &[0.25, 0.25]);
        let g3 = Grid::new(3, &[8, 8, 8], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(g3.spacing(), [0.25, 0.25, 0.25]);
        assert_eq!(g3.num_cells(), 512);
        assert!(Grid::new(2, &[0, 4], &[1.0, 1.0]).is_err());
        assert!(Grid::new(2, &[4, 4], &[1.0, -1.0]).is_err());
        assert!(Grid::new(4, &[4, 4, 4, 4], &[1.0; 4]).is_err());
        assert!(Grid::new(2, &[4, 4, 4], &[1.0; 3]).is_err());
    }

    #[test]
    fn centers_and_faces() {
        let g = Grid::new(2, &[4, 2], &[1.0, 1.0]).unwrap();
        assert_eq!(g.cell_center(0, 0, 0), [0.125, 0.25, 0.0]);
        assert_eq!(g.face_center(0, 0, 0, 0), [0.0, 0.25, 0.0]);
        assert_eq!(g.face_center(1, 1, 2, 0), [0.375, 1.0, 0.0]);
        assert_eq!(g.num_faces(0), 5 * 2);
        assert_eq!(g.num_faces(1), 4 * 3);
    }

    #[test]
    fn derive_c_examples() {
        let g = Grid::cube(2, 2, 1.0).unwrap();
        let alpha = 0.1;
        let c = derive_c(&ScalarField::constant(&g, alpha), alpha);
        assert!(c.values().iter().all(|&v| v == 0.0));
        let z = ScalarField::constant(&g, (1.0f64 + alpha * alpha).sqrt());
        assert!(derive_c(&z, alpha).values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let z = ScalarField::from_values(&g, vec![0.1, 0.5, 0.1, 0.5]).unwrap();
        let c = derive_c(&z, alpha);
        assert_eq!(c.values()[0], 0.0);
        assert!((c.values()[1] - 0.24).abs() < 1e-16);
    }

    #[test]
    fn c_z_round_trip() {
        let g = Grid::cube(2, 8, 1.0).unwrap();
        let alpha = 0.05;
        let z = ScalarField::from_fn(&g, |x| alpha + 3.0 * x[0] * x[0] + x[1]);
        let back = z_from_c(&derive_c(&z, alpha), alpha);
        for (a, b) in z.values().iter().zip(back.values()) {
            assert!(((a - b) / a).abs() <= 1e-15);
        }
    }

    #[test]
    fn interpolation_examples() {
        let g = Grid::cube(2, 6, 1.0).unwrap();
        let faces = interp_center_to_face(&ScalarField::constant(&g, 3.0));
        assert!(faces.components().iter().flatten().all(|&v| v == 3.0));
        let back = interp_face_to_center(&faces);
        assert!(back.iter().all(|f| f.values().iter().all(|&v| v == 3.0)));

        let lin = ScalarField::from_fn(&g, |x| 2.0 * x[0] + 1.0);
        let faces = interp_center_to_face(&lin);
        g.for_each_face(0, |idx, pos| {
            if !g.is_boundary_face(0, pos) {
                let x = g.face_center(0, pos[0], pos[1], pos[2]);
                assert!((faces.component(0)[idx] - (2.0 * x[0] + 1.0)).abs() < 1e-14);
            }
        });

        let mut checker = ScalarField::zeros(&g);
        let vals = checker.values_mut();
        g.for_each_cell(|idx, [i, j, _]| vals[idx] = if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        let faces = interp_center_to_face(&checker);
        for a in 0..2 {
            g.for_each_face(a, |idx, pos| {
                if !g.is_boundary_face(a, pos) {
                    assert_eq!(faces.component(a)[idx], 0.0);
                }
            });
        }
    }

    #[test]
    fn constructors_are_sized_and_finite() {
        for n in 2..6 {
            for dim in [2, 3] {
                let g = Grid::cube(dim, n, 1.0).unwrap();
                let s = ScalarField::zeros(&g);
                assert_eq!(s.values().len(), n.pow(dim as u32));
                assert!(s.is_finite());
                let u = FaceVectorField::zeros(&g);
                assert_eq!(u.total_len(), dim * (n + 1) * n.pow(dim as u32 - 1));
                assert!(u.is_finite() && u.boundary_is_zero());
                let flat = u.flatten();
                assert_eq!(FaceVectorField::from_flat(&g, &flat).unwrap(), u);
            }
        }
        let g = Grid::cube(2, 4, 1.0).unwrap();
        assert!(ScalarField::from_values(&g, vec![0.0; 3]).is_err());
    }
}
