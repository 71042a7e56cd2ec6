//! P1 finite element assembly on the fine triangulation.

use crate::error::{Error, Result};
use crate::fine_solver::sparse::CsrMatrix;
use crate::grids::FineGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleGeometry {
    pub area: f64,
    /// Gradients of the three barycentric hat functions.
    pub grads: [[f64; 2]; 3],
}

pub fn triangle_geometry(fine: &FineGrid, t: usize) -> TriangleGeometry {
    let [a, b, c] = fine.triangles[t].map(|i| fine.nodes[i]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let p = [a, b, c];
    let mut grads = [[0.0; 2]; 3];
    for i in 0..3 {
        let q = p[(i + 1) % 3];
        let r = p[(i + 2) % 3];
        grads[i] = [(q[1] - r[1]) / det, (r[0] - q[0]) / det];
    }
    TriangleGeometry {
        area: 0.5 * det,
        grads,
    }
}

pub fn element_stiffness(g: &TriangleGeometry, coef: f64) -> [[f64; 3]; 3] {
    let mut k = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let d = g.grads[a][0] * g.grads[b][0] + g.grads[a][1] * g.grads[b][1];
            k[a][b] = coef * g.area * d;
        }
    }
    k
}

/// Consistent P1 element mass matrix, `|T|/12 · [[2,1,1],[1,2,1],[1,1,2]]`.
pub fn element_mass(area: f64) -> [[f64; 3]; 3] {
    let mut m = [[area / 12.0; 3]; 3];
    for (a, row) in m.iter_mut().enumerate() {
        row[a] = area / 6.0;
    }
    m
}

/// Per-triangle arithmetic mean of a nodal field.
pub fn triangle_means(fine: &FineGrid, nodal: &[f64]) -> Vec<f64> {
    fine.triangles
        .iter()
        .map(|t| (nodal[t[0]] + nodal[t[1]] + nodal[t[2]]) / 3.0)
        .collect()
}

pub(crate) fn check_conductivity(cond: &[f64], n: usize) -> Result<()> {
    if cond.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: cond.len(),
        });
    }
    if let Some(i) = cond.iter().position(|&c| !(c > 0.0 && c.is_finite())) {
        return Err(Error::Input(format!(
            "conductivity must be positive and finite, node {i} has {}",
            cond[i]
        )));
    }
    Ok(())
}

/// Assembler with a precomputed sparsity pattern and element geometry, so the
/// Picard loop only refills values.
#[derive(Debug, Clone)]
pub struct P1Assembler {
    n: usize,
    pattern: CsrMatrix,
    slots: Vec<[usize; 9]>,
    geometry: Vec<TriangleGeometry>,
    triangles: Vec<[usize; 3]>,
}

impl P1Assembler {
    pub fn new(fine: &FineGrid) -> Self {
        let n = fine.n_nodes();
        let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
        for t in &fine.triangles {
            for &a in t {
                neighbors[a].extend_from_slice(t);
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        for row in &mut neighbors {
            row.sort_unstable();
            row.dedup();
            col_indices.extend_from_slice(row);
            row_offsets.push(col_indices.len());
        }
        let values = vec![0.0; col_indices.len()];
        let slot_of = |r: usize, c: usize| -> usize {
            let start = row_offsets[r];
            start
                + col_indices[start..row_offsets[r + 1]]
                    .binary_search(&c)
                    .expect("pattern contains every element coupling")
        };
        let slots = fine
            .triangles
            .iter()
            .map(|t| {
                let mut s = [0; 9];
                for a in 0..3 {
                    for b in 0..3 {
                        s[3 * a + b] = slot_of(t[a], t[b]);
                    }
                }
                s
            })
            .collect();
        let geometry = (0..fine.triangles.len())
            .map(|t| triangle_geometry(fine, t))
            .collect();
        let pattern = CsrMatrix::from_parts(n, row_offsets, col_indices, values);
        Self {
            n,
            pattern,
            slots,
            geometry,
            triangles: fine.triangles.clone(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn geometry(&self) -> &[TriangleGeometry] {
        &self.geometry
    }

    /// Stiffness matrix with a piecewise-constant coefficient per triangle.
    pub fn stiffness_from_triangle_coefficients(&self, coefs: &[f64]) -> CsrMatrix {
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for (t, g) in self.geometry.iter().enumerate() {
            let k = element_stiffness(g, coefs[t]);
            for a in 0..3 {
                for b in 0..3 {
                    vals[self.slots[t][3 * a + b]] += k[a][b];
                }
            }
        }
        m
    }

    /// `A_ij = Σ_T ϰ̄_T ∇φ_i·∇φ_j |T|`, with `ϰ̄_T` the mean of the vertex values.
    pub fn stiffness(&self, cond: &[f64]) -> Result<CsrMatrix> {
        check_conductivity(cond, self.n)?;
        let coefs: Vec<f64> = self
            .triangles
            .iter()
            .map(|t| (cond[t[0]] + cond[t[1]] + cond[t[2]]) / 3.0)
            .collect();
        Ok(self.stiffness_from_triangle_coefficients(&coefs))
    }

    pub fn mass(&self) -> CsrMatrix {
        let mut m = self.pattern.clone();
        let vals = m.values_mut();
        for (t, g) in self.geometry.iter().enumerate() {
            let e = element_mass(g.area);
            for a in 0..3 {
                for b in 0..3 {
                    vals[self.slots[t][3 * a + b]] += e[a][b];
                }
            }
        }
        m
    }

    /// Consistent load `b = M f` for a nodal source.
    pub fn load(&self, f: &[f64]) -> Vec<f64> {
        let mut b = vec![0.0; self.n];
        for (t, g) in self.geometry.iter().enumerate() {
            let e = element_mass(g.area);
            let tri = self.triangles[t];
            for a in 0..3 {
                b[tri[a]] += (0..3).map(|c| e[a][c] * f[tri[c]]).sum::<f64>();
            }
        }
        b
    }
}

pub fn assemble_stiffness(fine: &FineGrid, cond: &[f64]) -> Result<CsrMatrix> {
    P1Assembler::new(fine).stiffness(cond)
}

pub fn assemble_mass(fine: &FineGrid) -> CsrMatrix {
    P1Assembler::new(fine).mass()
}

pub fn assemble_load(fine: &FineGrid, f: &[f64]) -> Result<Vec<f64>> {
    if f.len() != fine.n_nodes() {
        return Err(Error::Dimension {
            expected: fine.n_nodes(),
            actual: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("source values must be finite".into()));
    }
    Ok(P1Assembler::new(fine).load(f))
}
