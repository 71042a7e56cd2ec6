//! Nested structured grids on the unit square.
//!
//! The fine grid splits each of its `n × n` square cells into two triangles
//! along the lower-left to upper-right diagonal. The coarse grid is a uniform
//! square partition whose block edges coincide with fine grid lines. Nodes are
//! numbered row-major (by `y`, then `x`) on both levels.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FineGrid {
    pub n_cells_per_side: usize,
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_node_flags: Vec<bool>,
    /// Triangle diameter, `√2 / n`.
    pub h: f64,
}

impl FineGrid {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes_per_side(&self) -> usize {
        self.n_cells_per_side + 1
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nodes_per_side() + ix
    }

    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        let s = self.nodes_per_side();
        (node % s, node / s)
    }

    /// Indices of the two triangles inside cell `(cx, cy)`.
    pub fn cell_triangles(&self, cx: usize, cy: usize) -> [usize; 2] {
        let t = 2 * (cy * self.n_cells_per_side + cx);
        [t, t + 1]
    }

    /// Nodal interpolant of a function of position.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&[x, y]| f(x, y)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseGrid {
    pub n_blocks_per_side: usize,
    /// Block edge length.
    pub h_coarse: f64,
    pub vertices: Vec<[f64; 2]>,
    /// Corner vertex indices, counter-clockwise from the lower-left corner.
    pub blocks: Vec<[usize; 4]>,
    pub fine_cells_per_block_side: usize,
}

impl CoarseGrid {
    /// `N_v`, the number of coarse vertices including boundary ones.
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// `N_p`, the number of coarse blocks.
    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn vertex_ij(&self, j: usize) -> (usize, usize) {
        let s = self.n_blocks_per_side + 1;
        (j % s, j / s)
    }

    pub fn block_index(&self, bx: usize, by: usize) -> usize {
        by * self.n_blocks_per_side + bx
    }
}

/// Builds the fine triangulation and the coarse block grid it refines.
pub fn build_grids(fine_n: usize, coarse_n: usize) -> Result<(FineGrid, CoarseGrid)> {
    if fine_n == 0 || coarse_n == 0 {
        return Err(Error::Config(format!(
            "grid sizes must be positive (fine {fine_n}, coarse {coarse_n})"
        )));
    }
    if fine_n % coarse_n != 0 {
        return Err(Error::Config(format!(
            "coarse size {coarse_n} does not divide fine size {fine_n}"
        )));
    }
    let k = fine_n / coarse_n;
    if k < 2 {
        return Err(Error::Config(format!(
            "fine size {fine_n} must be at least twice the coarse size {coarse_n} \
             (got {k} fine cell(s) per block side)"
        )));
    }

    let s = fine_n + 1;
    let hf = 1.0 / fine_n as f64;
    let mut nodes = Vec::with_capacity(s * s);
    let mut boundary = Vec::with_capacity(s * s);
    for iy in 0..s {
        for ix in 0..s {
            nodes.push([ix as f64 * hf, iy as f64 * hf]);
            boundary.push(ix == 0 || iy == 0 || ix == fine_n || iy == fine_n);
        }
    }
    let mut triangles = Vec::with_capacity(2 * fine_n * fine_n);
    for cy in 0..fine_n {
        for cx in 0..fine_n {
            let a = cy * s + cx;
            let b = a + 1;
            let c = a + s + 1;
            let d = a + s;
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    let fine = FineGrid {
        n_cells_per_side: fine_n,
        nodes,
        triangles,
        boundary_node_flags: boundary,
        h: std::f64::consts::SQRT_2 / fine_n as f64,
    };

    let sc = coarse_n + 1;
    let hc = 1.0 / coarse_n as f64;
    let mut vertices = Vec::with_capacity(sc * sc);
    for vy in 0..sc {
        for vx in 0..sc {
            vertices.push([vx as f64 * hc, vy as f64 * hc]);
        }
    }
    let mut blocks = Vec::with_capacity(coarse_n * coarse_n);
    for by in 0..coarse_n {
        for bx in 0..coarse_n {
            let a = by * sc + bx;
            blocks.push([a, a + 1, a + sc + 1, a + sc]);
        }
    }
    let coarse = CoarseGrid {
        n_blocks_per_side: coarse_n,
        h_coarse: hc,
        vertices,
        blocks,
        fine_cells_per_block_side: k,
    };
    Ok((fine, coarse))
}

/// Coarse neighborhood `ω_j`: the union of coarse blocks sharing vertex `x_j`.
///
/// `ω_j` is always an axis-aligned rectangle of fine nodes, so the local
/// numbering is the row-major order inside that rectangle, which coincides
/// with sorted global order.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub vertex: usize,
    pub block_indices: Vec<usize>,
    /// Sorted global indices of the fine nodes in the closure of `ω_j`.
    pub fine_node_indices: Vec<usize>,
    /// Global indices of the fine nodes on `∂ω_j`.
    pub patch_boundary_node_indices: Vec<usize>,
    /// Local (position in `fine_node_indices`) flag for nodes on `∂ω_j`.
    pub local_boundary_flags: Vec<bool>,
    /// Fine triangles covering `ω_j`.
    pub triangles: Vec<usize>,
    /// Inclusive fine-node index ranges of the rectangle.
    pub x_range: (usize, usize),
    pub y_range: (usize, usize),
    /// Fine node index of the center vertex `x_j`.
    pub center: (usize, usize),
    /// Fine cells per coarse block side.
    pub k: usize,
}

impl Neighborhood {
    pub fn n_local(&self) -> usize {
        self.fine_node_indices.len()
    }

    fn width(&self) -> usize {
        self.x_range.1 - self.x_range.0 + 1
    }

    /// Local index of a global fine node, if it lies in the closure of `ω_j`.
    pub fn local_index(&self, fine: &FineGrid, global: usize) -> Option<usize> {
        let (ix, iy) = fine.node_ij(global);
        if ix < self.x_range.0 || ix > self.x_range.1 || iy < self.y_range.0 || iy > self.y_range.1
        {
            return None;
        }
        Some((iy - self.y_range.0) * self.width() + (ix - self.x_range.0))
    }

    /// Local indices of the nodes strictly inside `ω_j`.
    pub fn interior_local(&self) -> Vec<usize> {
        (0..self.n_local())
            .filter(|&l| !self.local_boundary_flags[l])
            .collect()
    }

    /// Side length (in nodes) of the canonical patch, `2k + 1`.
    pub fn patch_side(&self) -> usize {
        2 * self.k + 1
    }

    /// Canonical patch size `m = (2k + 1)²`.
    pub fn patch_size(&self) -> usize {
        self.patch_side() * self.patch_side()
    }

    /// Position of local node `l` inside the canonical patch.
    pub fn patch_position(&self, l: usize) -> usize {
        let w = self.width();
        let ix = self.x_range.0 + l % w;
        let iy = self.y_range.0 + l / w;
        let px = ix + self.k - self.center.0;
        let py = iy + self.k - self.center.1;
        py * self.patch_side() + px
    }

    /// Gathers a global nodal vector onto `ω_j` (local order).
    pub fn restrict(&self, global: &[f64]) -> Vec<f64> {
        self.fine_node_indices.iter().map(|&g| global[g]).collect()
    }
}

/// Builds the neighborhood of coarse vertex `j`.
pub fn neighborhood(coarse: &CoarseGrid, fine: &FineGrid, j: usize) -> Result<Neighborhood> {
    let nv = coarse.n_vertices();
    if j >= nv {
        return Err(Error::Index { index: j, len: nv });
    }
    let n = coarse.n_blocks_per_side;
    let k = coarse.fine_cells_per_block_side;
    let (vx, vy) = coarse.vertex_ij(j);

    let bxs: Vec<usize> = [vx.wrapping_sub(1), vx].into_iter().filter(|&b| b < n).collect();
    let bys: Vec<usize> = [vy.wrapping_sub(1), vy].into_iter().filter(|&b| b < n).collect();
    let mut block_indices = Vec::with_capacity(4);
    for &by in &bys {
        for &bx in &bxs {
            block_indices.push(coarse.block_index(bx, by));
        }
    }

    let x0 = bxs[0] * k;
    let x1 = (bxs[bxs.len() - 1] + 1) * k;
    let y0 = bys[0] * k;
    let y1 = (bys[bys.len() - 1] + 1) * k;

    let mut fine_node_indices = Vec::new();
    let mut local_boundary_flags = Vec::new();
    let mut patch_boundary_node_indices = Vec::new();
    for iy in y0..=y1 {
        for ix in x0..=x1 {
            let g = fine.node_index(ix, iy);
            let on_boundary = ix == x0 || ix == x1 || iy == y0 || iy == y1;
            fine_node_indices.push(g);
            local_boundary_flags.push(on_boundary);
            if on_boundary {
                patch_boundary_node_indices.push(g);
            }
        }
    }
    let mut triangles = Vec::with_capacity(2 * (x1 - x0) * (y1 - y0));
    for cy in y0..y1 {
        for cx in x0..x1 {
            triangles.extend(fine.cell_triangles(cx, cy));
        }
    }

    Ok(Neighborhood {
        vertex: j,
        block_indices,
        fine_node_indices,
        patch_boundary_node_indices,
        local_boundary_flags,
        triangles,
        x_range: (x0, x1),
        y_range: (y0, y1),
        center: (vx * k, vy * k),
        k,
    })
}

/// All neighborhoods in vertex order.
pub fn all_neighborhoods(coarse: &CoarseGrid, fine: &FineGrid) -> Vec<Neighborhood> {
    (0..coarse.n_vertices())
        .map(|j| neighborhood(coarse, fine, j).expect("vertex index in range"))
        .collect()
}

/// Places local values of `ω_j` into the fixed-size patch centered at `x_j`.
/// Slots that fall outside the domain are zero.
pub fn canonical_patch_embedding(nb: &Neighborhood, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != nb.n_local() {
        return Err(Error::Dimension {
            expected: nb.n_local(),
            actual: values.len(),
        });
    }
    let mut patch = vec![0.0; nb.patch_size()];
    for (l, &v) in values.iter().enumerate() {
        patch[nb.patch_position(l)] = v;
    }
    Ok(patch)
}

/// Inverse of [`canonical_patch_embedding`]: reads the local values back out.
pub fn extract_from_patch(nb: &Neighborhood, patch: &[f64]) -> Result<Vec<f64>> {
    if patch.len() != nb.patch_size() {
        return Err(Error::Dimension {
            expected: nb.patch_size(),
            actual: patch.len(),
        });
    }
    Ok((0..nb.n_local())
        .map(|l| patch[nb.patch_position(l)])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_area(fine: &FineGrid, t: &[usize; 3]) -> f64 {
        let [a, b, c] = t.map(|i| fine.nodes[i]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    #[test]
    fn small_grid_counts() {
        let (fine, coarse) = build_grids(4, 2).unwrap();
        assert_eq!(fine.n_nodes(), 25);
        assert_eq!(fine.triangles.len(), 32);
        assert_eq!(coarse.n_vertices(), 9);
        assert_eq!(coarse.n_blocks(), 4);
        assert!((fine.h - 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn paper_scale_counts() {
        let (fine, coarse) = build_grids(128, 8).unwrap();
        assert_eq!(coarse.n_vertices(), 81);
        assert_eq!(fine.triangles.len(), 32768);
        let center = neighborhood(&coarse, &fine, 4 * 9 + 4).unwrap();
        assert_eq!(center.n_local(), 1089);
        assert_eq!(center.patch_size(), 1089);
    }

    #[test]
    fn rejects_bad_sizes() {
        let err = build_grids(4, 4).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let msg = build_grids(10, 4).unwrap_err().to_string();
        assert!(msg.contains("10") && msg.contains('4'), "{msg}");
        assert!(build_grids(0, 2).is_err());
    }

    #[test]
    fn triangles_positive_and_boundary_flags() {
        let (fine, _) = build_grids(8, 2).unwrap();
        for t in &fine.triangles {
            assert!(signed_area(&fine, t) > 0.0);
        }
        for (i, p) in fine.nodes.iter().enumerate() {
            assert!(p[0] >= 0.0 && p[0] <= 1.0 && p[1] >= 0.0 && p[1] <= 1.0);
            let on = p[0] == 0.0 || p[1] == 0.0 || p[0] == 1.0 || p[1] == 1.0;
            assert_eq!(on, fine.boundary_node_flags[i]);
        }
    }

    #[test]
    fn coarse_block_edges_on_fine_lines() {
        let (fine, coarse) = build_grids(12, 3).unwrap();
        let k = coarse.fine_cells_per_block_side;
        for (j, v) in coarse.vertices.iter().enumerate() {
            let (vx, vy) = coarse.vertex_ij(j);
            let node = fine.nodes[fine.node_index(vx * k, vy * k)];
            assert!((node[0] - v[0]).abs() < 1e-14 && (node[1] - v[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn neighborhood_sizes() {
        let (fine, coarse) = build_grids(4, 2).unwrap();
        let c = neighborhood(&coarse, &fine, 4).unwrap();
        assert_eq!(c.block_indices.len(), 4);
        assert_eq!(c.n_local(), 25);
        assert_eq!(c.patch_boundary_node_indices.len(), 16);
        let corner = neighborhood(&coarse, &fine, 0).unwrap();
        assert_eq!(corner.block_indices.len(), 1);
        assert_eq!(corner.n_local(), 9);
        let edge = neighborhood(&coarse, &fine, 1).unwrap();
        assert_eq!(edge.block_indices.len(), 2);
        assert!(matches!(
            neighborhood(&coarse, &fine, 9),
            Err(Error::Index { index: 9, len: 9 })
        ));
    }

    #[test]
    fn each_block_in_four_neighborhoods() {
        let (fine, coarse) = build_grids(16, 4).unwrap();
        let mut count = vec![0; coarse.n_blocks()];
        for nb in all_neighborhoods(&coarse, &fine) {
            for b in nb.block_indices {
                count[b] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 4));
    }

    #[test]
    fn deterministic_builds() {
        let a = build_grids(16, 4).unwrap();
        let b = build_grids(16, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            all_neighborhoods(&a.1, &a.0),
            all_neighborhoods(&b.1, &b.0)
        );
    }

    #[test]
    fn patch_embedding() {
        let (fine, coarse) = build_grids(4, 2).unwrap();
        let center = neighborhood(&coarse, &fine, 4).unwrap();
        let vals: Vec<f64> = (0..25).map(|i| i as f64 + 1.0).collect();
        let patch = canonical_patch_embedding(&center, &vals).unwrap();
        assert_eq!(patch, vals);

        let corner = neighborhood(&coarse, &fine, 0).unwrap();
        let vals: Vec<f64> = (0..9).map(|i| i as f64 + 1.0).collect();
        let patch = canonical_patch_embedding(&corner, &vals).unwrap();
        assert_eq!(patch.len(), 25);
        assert_eq!(patch.iter().filter(|&&v| v == 0.0).count(), 16);
        // the corner patch sits in the upper-right quadrant
        assert_eq!(patch[2 * 5 + 2], 1.0);
        assert_eq!(patch[4 * 5 + 4], 9.0);
        assert_eq!(extract_from_patch(&corner, &patch).unwrap(), vals);

        assert!(matches!(
            canonical_patch_embedding(&corner, &[1.0; 4]),
            Err(Error::Dimension { expected: 9, actual: 4 })
        ));
    }
}
