//! Dense operators on rectangular sub-meshes (coarse blocks and neighborhoods).

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fine_solver::assembly::{element_mass, element_stiffness, TriangleGeometry};
use crate::grids::{FineGrid, Neighborhood};

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMesh {
    /// Global node indices in row-major order inside the rectangle.
    pub nodes: Vec<usize>,
    /// Global triangle indices.
    pub triangles: Vec<usize>,
    /// Triangle vertices in local numbering.
    pub local_triangles: Vec<[usize; 3]>,
    /// Nodes on the rectangle boundary.
    pub boundary: Vec<bool>,
}

impl LocalMesh {
    /// Sub-mesh on the inclusive fine-node ranges `x_range × y_range`.
    pub fn from_rect(fine: &FineGrid, x_range: (usize, usize), y_range: (usize, usize)) -> Self {
        let (x0, x1) = x_range;
        let (y0, y1) = y_range;
        let w = x1 - x0 + 1;
        let mut nodes = Vec::new();
        let mut boundary = Vec::new();
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                nodes.push(fine.node_index(ix, iy));
                boundary.push(ix == x0 || ix == x1 || iy == y0 || iy == y1);
            }
        }
        let local = |g: usize| {
            let (ix, iy) = fine.node_ij(g);
            (iy - y0) * w + (ix - x0)
        };
        let mut triangles = Vec::new();
        let mut local_triangles = Vec::new();
        for cy in y0..y1 {
            for cx in x0..x1 {
                for t in fine.cell_triangles(cx, cy) {
                    triangles.push(t);
                    local_triangles.push(fine.triangles[t].map(local));
                }
            }
        }
        Self {
            nodes,
            triangles,
            local_triangles,
            boundary,
        }
    }

    pub fn from_neighborhood(fine: &FineGrid, nb: &Neighborhood) -> Self {
        Self::from_rect(fine, nb.x_range, nb.y_range)
    }

    pub fn n_local(&self) -> usize {
        self.nodes.len()
    }

    pub fn interior(&self) -> Vec<usize> {
        (0..self.n_local()).filter(|&l| !self.boundary[l]).collect()
    }

    pub fn boundary_indices(&self) -> Vec<usize> {
        (0..self.n_local()).filter(|&l| self.boundary[l]).collect()
    }

    pub fn restrict(&self, global: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&g| global[g]).collect()
    }

    /// Stiffness with coefficient `coef[t]` on global triangle `t`.
    pub fn stiffness(&self, geometry: &[TriangleGeometry], coef: &[f64]) -> DMatrix<f64> {
        let n = self.n_local();
        let mut a = DMatrix::zeros(n, n);
        for (&t, tri) in self.triangles.iter().zip(&self.local_triangles) {
            let k = element_stiffness(&geometry[t], coef[t]);
            for (r, &i) in tri.iter().enumerate() {
                for (c, &j) in tri.iter().enumerate() {
                    a[(i, j)] += k[r][c];
                }
            }
        }
        a
    }

    /// Mass matrix, optionally weighted by a per-triangle factor.
    pub fn mass(&self, geometry: &[TriangleGeometry], weight: Option<&[f64]>) -> DMatrix<f64> {
        let n = self.n_local();
        let mut m = DMatrix::zeros(n, n);
        for (&t, tri) in self.triangles.iter().zip(&self.local_triangles) {
            let w = weight.map_or(1.0, |w| w[t]);
            let e = element_mass(geometry[t].area * w);
            for (r, &i) in tri.iter().enumerate() {
                for (c, &j) in tri.iter().enumerate() {
                    m[(i, j)] += e[r][c];
                }
            }
        }
        m
    }
}

pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

/// Extends boundary data (one column per case) into the interior by solving
/// `A_II u_I = −A_IB u_B`. Returns all local values, one column per case.
pub fn harmonic_extension(
    a: &DMatrix<f64>,
    boundary: &[bool],
    boundary_values: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let interior: Vec<usize> = (0..n).filter(|&l| !boundary[l]).collect();
    let bnd: Vec<usize> = (0..n).filter(|&l| boundary[l]).collect();
    if boundary_values.nrows() != bnd.len() {
        return Err(Error::Dimension {
            expected: bnd.len(),
            actual: boundary_values.nrows(),
        });
    }
    let cases = boundary_values.ncols();
    let mut out = DMatrix::zeros(n, cases);
    for (r, &l) in bnd.iter().enumerate() {
        out.row_mut(l).copy_from(&boundary_values.row(r));
    }
    if interior.is_empty() {
        return Ok(out);
    }
    let a_ii = submatrix(a, &interior, &interior);
    let a_ib = submatrix(a, &interior, &bnd);
    let chol = a_ii.cholesky().ok_or_else(|| {
        Error::Numerical(format!("local Cholesky failed ({} interior nodes)", interior.len()))
    })?;
    let rhs = -(a_ib * boundary_values);
    let u_i = chol.solve(&rhs);
    for (r, &l) in interior.iter().enumerate() {
        out.row_mut(l).copy_from(&u_i.row(r));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fine_solver::assembly::triangle_geometry;
    use crate::grids::{build_grids, neighborhood};

    #[test]
    fn neighborhood_mesh_matches_neighborhood() {
        let (fine, coarse) = build_grids(8, 2).unwrap();
        for j in 0..coarse.n_vertices() {
            let nb = neighborhood(&coarse, &fine, j).unwrap();
            let mesh = LocalMesh::from_neighborhood(&fine, &nb);
            assert_eq!(mesh.nodes, nb.fine_node_indices);
            assert_eq!(mesh.boundary, nb.local_boundary_flags);
            assert_eq!(mesh.triangles, nb.triangles);
        }
    }

    #[test]
    fn extension_of_linear_data_is_linear() {
        let (fine, _) = build_grids(6, 2).unwrap();
        let geometry: Vec<_> = (0..fine.triangles.len()).map(|t| triangle_geometry(&fine, t)).collect();
        let mesh = LocalMesh::from_rect(&fine, (0, 6), (0, 6));
        let a = mesh.stiffness(&geometry, &vec![1.0; fine.triangles.len()]);
        let linear = |g: usize| {
            let [x, y] = fine.nodes[g];
            1.0 + 2.0 * x - 3.0 * y
        };
        let bnd: Vec<f64> = mesh.boundary_indices().iter().map(|&l| linear(mesh.nodes[l])).collect();
        let u = harmonic_extension(&a, &mesh.boundary, &DMatrix::from_column_slice(bnd.len(), 1, &bnd))
            .unwrap();
        for l in 0..mesh.n_local() {
            assert!((u[(l, 0)] - linear(mesh.nodes[l])).abs() < 1e-12);
        }
    }
}
