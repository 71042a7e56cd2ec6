//! Offline GMsFEM: partition of unity, snapshot spaces, local spectral
//! problems, the downscaling operator and the coarse Picard solver.

pub mod coarse;
pub mod local;

use nalgebra::{DMatrix, SymmetricEigen};

pub use coarse::{coarse_solve, BasisColumn, CoarseSolution, ColumnKind, DownscalingOperator, RankMode};
pub use local::LocalMesh;

use crate::error::{Error, Result};
use crate::fine_solver::assembly::{triangle_means, TriangleGeometry};
use crate::fine_solver::{annotate, picard_loop, CsrMatrix, FineSolver, InitialGuessMode, PicardConfig, PicardResult};
use crate::grids::{all_neighborhoods, build_grids, CoarseGrid, FineGrid, Neighborhood};
use crate::par::map_range;
use crate::random_fields::conductivity;
use local::harmonic_extension;

/// Partition of unity `χ_j`, one global nodal vector per coarse vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity {
    pub functions: Vec<Vec<f64>>,
}

impl PartitionOfUnity {
    pub fn n_vertices(&self) -> usize {
        self.functions.len()
    }
}

/// Bilinear hat of the corner at `corner` on a block of side `h`.
fn bilinear_hat(x: [f64; 2], corner: [f64; 2], h: f64) -> f64 {
    let fx = (1.0 - (x[0] - corner[0]).abs() / h).max(0.0);
    let fy = (1.0 - (x[1] - corner[1]).abs() / h).max(0.0);
    fx * fy
}

/// Per block, the discrete Laplace extension of the bilinear hat boundary data.
pub fn partition_of_unity(fine: &FineGrid, coarse: &CoarseGrid) -> Result<PartitionOfUnity> {
    let n = fine.n_nodes();
    let k = coarse.fine_cells_per_block_side;
    let geometry: Vec<TriangleGeometry> = (0..fine.triangles.len())
        .map(|t| crate::fine_solver::assembly::triangle_geometry(fine, t))
        .collect();
    let ones = vec![1.0; fine.triangles.len()];
    let mut functions = vec![vec![0.0; n]; coarse.n_vertices()];
    for by in 0..coarse.n_blocks_per_side {
        for bx in 0..coarse.n_blocks_per_side {
            let b = coarse.block_index(bx, by);
            let mesh = LocalMesh::from_rect(fine, (bx * k, (bx + 1) * k), (by * k, (by + 1) * k));
            let a = mesh.stiffness(&geometry, &ones);
            let bnd = mesh.boundary_indices();
            let corners = coarse.blocks[b];
            let data = DMatrix::from_fn(bnd.len(), 4, |r, c| {
                bilinear_hat(fine.nodes[mesh.nodes[bnd[r]]], coarse.vertices[corners[c]], coarse.h_coarse)
            });
            let ext = harmonic_extension(&a, &mesh.boundary, &data).map_err(|e| {
                annotate(e, &format!("partition of unity, block {b} (vertices {corners:?})"))
            })?;
            for (c, &j) in corners.iter().enumerate() {
                for (l, &g) in mesh.nodes.iter().enumerate() {
                    functions[j][g] = ext[(l, c)];
                }
            }
        }
    }
    Ok(PartitionOfUnity { functions })
}

/// Everything about the discretization that does not depend on the
/// permeability: grids, neighborhoods, fine operators and the partition of unity.
#[derive(Debug, Clone)]
pub struct MsContext {
    pub fine: FineGrid,
    pub coarse: CoarseGrid,
    pub neighborhoods: Vec<Neighborhood>,
    pub local_meshes: Vec<LocalMesh>,
    pub solver: FineSolver,
    pub pou: PartitionOfUnity,
    /// `Σ_l |∇χ_l|²` per fine triangle.
    pub pou_gradient_weight: Vec<f64>,
    /// Stiffness with unit coefficient, for `H¹` seminorms.
    pub unit_stiffness: CsrMatrix,
}

impl MsContext {
    pub fn new(fine_n: usize, coarse_n: usize) -> Result<Self> {
        let (fine, coarse) = build_grids(fine_n, coarse_n)?;
        Self::from_grids(fine, coarse)
    }

    pub fn from_grids(fine: FineGrid, coarse: CoarseGrid) -> Result<Self> {
        let neighborhoods = all_neighborhoods(&coarse, &fine);
        let local_meshes = neighborhoods
            .iter()
            .map(|nb| LocalMesh::from_neighborhood(&fine, nb))
            .collect();
        let solver = FineSolver::new(&fine);
        let pou = partition_of_unity(&fine, &coarse)?;
        let geometry = solver.assembler().geometry();
        let mut pou_gradient_weight = vec![0.0; fine.triangles.len()];
        for (j, nb) in neighborhoods.iter().enumerate() {
            let chi = &pou.functions[j];
            for &t in &nb.triangles {
                let tri = fine.triangles[t];
                let g = &geometry[t];
                let mut grad = [0.0; 2];
                for a in 0..3 {
                    grad[0] += chi[tri[a]] * g.grads[a][0];
                    grad[1] += chi[tri[a]] * g.grads[a][1];
                }
                pou_gradient_weight[t] += grad[0] * grad[0] + grad[1] * grad[1];
            }
        }
        let unit_stiffness = solver
            .assembler()
            .stiffness_from_triangle_coefficients(&vec![1.0; fine.triangles.len()]);
        Ok(Self {
            fine,
            coarse,
            neighborhoods,
            local_meshes,
            solver,
            pou,
            pou_gradient_weight,
            unit_stiffness,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.coarse.n_vertices()
    }

    pub fn n_nodes(&self) -> usize {
        self.fine.n_nodes()
    }

    pub fn geometry(&self) -> &[TriangleGeometry] {
        self.solver.assembler().geometry()
    }

    /// `χ_j` restricted to `ω_j`.
    pub fn local_pou(&self, j: usize) -> Vec<f64> {
        self.local_meshes[j].restrict(&self.pou.functions[j])
    }

    fn check_vertex(&self, j: usize) -> Result<()> {
        if j >= self.n_vertices() {
            return Err(Error::Index {
                index: j,
                len: self.n_vertices(),
            });
        }
        Ok(())
    }
}

/// Snapshots of `ω_j`: `ϰ`-harmonic extensions of Kronecker deltas on `∂ω_j`,
/// stored as columns over the local nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSpace {
    pub vertex: usize,
    pub snapshots: DMatrix<f64>,
    /// Local `ϰ`-stiffness on `ω_j`, reused by the spectral problem.
    pub stiffness: DMatrix<f64>,
}

impl SnapshotSpace {
    pub fn count(&self) -> usize {
        self.snapshots.ncols()
    }
}

fn snapshot_space_tri(ctx: &MsContext, j: usize, cond_tri: &[f64]) -> Result<SnapshotSpace> {
    let mesh = &ctx.local_meshes[j];
    let a = mesh.stiffness(ctx.geometry(), cond_tri);
    let nb = mesh.boundary_indices().len();
    let snapshots = harmonic_extension(&a, &mesh.boundary, &DMatrix::identity(nb, nb))
        .map_err(|e| annotate(e, &format!("snapshot space of vertex {j}")))?;
    Ok(SnapshotSpace {
        vertex: j,
        snapshots,
        stiffness: a,
    })
}

pub fn snapshot_space(ctx: &MsContext, j: usize, cond: &[f64]) -> Result<SnapshotSpace> {
    ctx.check_vertex(j)?;
    crate::fine_solver::assembly::check_conductivity(cond, ctx.n_nodes())?;
    snapshot_space_tri(ctx, j, &triangle_means(&ctx.fine, cond))
}

/// The `Nb` smallest eigenpairs of the snapshot-projected spectral problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPairs {
    pub vertex: usize,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Snapshot coefficients, one column per eigenpair.
    pub coefficients: DMatrix<f64>,
    /// `ψ_k` on the local nodes of `ω_j`, one column per eigenpair.
    pub eigenvectors: DMatrix<f64>,
    /// Projected `A^j`.
    pub a_snap: DMatrix<f64>,
    /// Projected `S^j`.
    pub s_snap: DMatrix<f64>,
    pub warning: Option<String>,
}

/// Relative ridge added to a projected `S^j` whose Cholesky factorization fails.
pub const S_RIDGE: f64 = 1e-12;

/// Solves `A c = λ S c` for SPD `S` by Cholesky reduction; all pairs, ascending,
/// ties broken by index. Returns the pairs and whether a ridge was needed.
pub fn generalized_eigen(a: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>, bool)> {
    let n = s.nrows();
    let (l, ridged) = match s.clone().cholesky() {
        Some(c) => (c.l(), false),
        None => {
            let ridge = S_RIDGE * s.trace() / n as f64;
            let shifted = s + DMatrix::identity(n, n) * ridge;
            let c = shifted.cholesky().ok_or_else(|| {
                Error::Numerical(format!("spectral mass matrix not positive definite ({n}x{n}) even after ridge"))
            })?;
            (c.l(), true)
        }
    };
    let linv_a = l
        .solve_lower_triangular(a)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical(format!("symmetric eigensolver did not converge ({n}x{n})")))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&p, &q| eig.eigenvalues[p].total_cmp(&eig.eigenvalues[q]).then(p.cmp(&q)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let vectors = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::Numerical("singular Cholesky factor".into()))?;
    Ok((values, vectors, ridged))
}

fn spectral_basis_tri(
    ctx: &MsContext,
    snap: &SnapshotSpace,
    cond_tri: &[f64],
    nb_count: usize,
) -> Result<SpectralPairs> {
    let j = snap.vertex;
    if nb_count == 0 || nb_count > snap.count() {
        return Err(Error::Config(format!(
            "Nb = {nb_count} must lie in 1..={} for vertex {j}",
            snap.count()
        )));
    }
    let mesh = &ctx.local_meshes[j];
    let weight: Vec<f64> = cond_tri
        .iter()
        .zip(&ctx.pou_gradient_weight)
        .map(|(c, w)| c * w)
        .collect();
    let s = mesh.mass(ctx.geometry(), Some(&weight));
    let phi = &snap.snapshots;
    let a_snap = phi.transpose() * &snap.stiffness * phi;
    let s_snap = phi.transpose() * s * phi;
    let a_snap = (&a_snap + a_snap.transpose()) * 0.5;
    let s_snap = (&s_snap + s_snap.transpose()) * 0.5;
    let (values, vectors, ridged) =
        generalized_eigen(&a_snap, &s_snap).map_err(|e| annotate(e, &format!("spectral problem of vertex {j}")))?;
    let warning = ridged.then(|| {
        let msg = format!("vertex {j}: projected S^j not positive definite, ridge {S_RIDGE:e}·trace/dim added");
        log::warn!("{msg}");
        msg
    });
    let coefficients = vectors.columns(0, nb_count).into_owned();
    let eigenvectors = phi * &coefficients;
    Ok(SpectralPairs {
        vertex: j,
        eigenvalues: values[..nb_count].to_vec(),
        coefficients,
        eigenvectors,
        a_snap,
        s_snap,
        warning,
    })
}

pub fn spectral_basis(ctx: &MsContext, snap: &SnapshotSpace, cond: &[f64], nb_count: usize) -> Result<SpectralPairs> {
    crate::fine_solver::assembly::check_conductivity(cond, ctx.n_nodes())?;
    spectral_basis_tri(ctx, snap, &triangle_means(&ctx.fine, cond), nb_count)
}

/// Offline space `V_off`: spectral pairs per vertex and the operator `R`
/// with columns `χ_j ψ_k^j` in `(j, k)` order.
#[derive(Debug, Clone)]
pub struct OfflineSpace {
    pub nb_count: usize,
    pub pairs: Vec<SpectralPairs>,
    pub operator: DownscalingOperator,
}

impl OfflineSpace {
    pub fn warnings(&self) -> Vec<String> {
        self.pairs.iter().filter_map(|p| p.warning.clone()).collect()
    }
}

/// Multiplies a local vector by `χ_j` and zeroes it on `∂Ω`.
pub fn multiply_by_pou(ctx: &MsContext, j: usize, local: &[f64]) -> BasisColumn {
    let mesh = &ctx.local_meshes[j];
    let chi = &ctx.pou.functions[j];
    let values = mesh
        .nodes
        .iter()
        .zip(local)
        .map(|(&g, &v)| if ctx.fine.boundary_node_flags[g] { 0.0 } else { chi[g] * v })
        .collect();
    let nb = &ctx.neighborhoods[j];
    BasisColumn {
        vertex: j,
        index: 0,
        kind: ColumnKind::Offline,
        nodes: mesh.nodes.clone(),
        values,
        x_range: nb.x_range,
        y_range: nb.y_range,
    }
}

pub fn offline_space(ctx: &MsContext, pairs: Vec<SpectralPairs>) -> Result<OfflineSpace> {
    if pairs.len() != ctx.n_vertices() {
        return Err(Error::Dimension {
            expected: ctx.n_vertices(),
            actual: pairs.len(),
        });
    }
    let nb_count = pairs.first().map_or(0, |p| p.eigenvalues.len());
    let mut columns = Vec::with_capacity(pairs.len() * nb_count);
    for p in &pairs {
        if p.eigenvalues.len() != nb_count {
            return Err(Error::Input(format!(
                "vertex {} has {} eigenpairs, expected {nb_count}",
                p.vertex,
                p.eigenvalues.len()
            )));
        }
        for k in 0..nb_count {
            let psi: Vec<f64> = p.eigenvectors.column(k).iter().copied().collect();
            let mut col = multiply_by_pou(ctx, p.vertex, &psi);
            col.index = k;
            columns.push(col);
        }
    }
    Ok(OfflineSpace {
        nb_count,
        pairs,
        operator: DownscalingOperator::new(ctx.n_nodes(), columns),
    })
}

/// Builds `V_off` from the conductivity at the linearization state `p_lin`.
pub fn build_offline_space(ctx: &MsContext, kappa: &[f64], p_lin: &[f64], nb_count: usize) -> Result<OfflineSpace> {
    let cond = conductivity(kappa, p_lin)?;
    crate::fine_solver::assembly::check_conductivity(&cond, ctx.n_nodes())?;
    let cond_tri = triangle_means(&ctx.fine, &cond);
    let pairs = map_range(ctx.n_vertices(), |j| {
        let snap = snapshot_space_tri(ctx, j, &cond_tri)?;
        spectral_basis_tri(ctx, &snap, &cond_tri, nb_count)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    offline_space(ctx, pairs)
}

/// A Picard solve in a multiscale space: fine-grid iterates and the final
/// coarse coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct MsStep {
    pub picard: PicardResult,
    pub coarse: Vec<f64>,
}

impl MsStep {
    pub fn pressure(&self) -> &[f64] {
        &self.picard.pressure
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MsTrace {
    pub steps: Vec<MsStep>,
}

impl MsTrace {
    pub fn trajectory(&self) -> Vec<&[f64]> {
        self.steps.iter().map(|s| s.pressure()).collect()
    }
}

/// Picard iteration for one time step (or the steady problem) in `span(R)`.
pub fn ms_picard_step(
    ctx: &MsContext,
    r: &DownscalingOperator,
    kappa: &[f64],
    load: &[f64],
    p_prev_time: &[f64],
    cfg: &PicardConfig,
    mode: RankMode,
) -> Result<MsStep> {
    cfg.validate()?;
    let inv_tau = cfg.inv_tau();
    let guess = match cfg.initial_guess_mode {
        InitialGuessMode::Zero => vec![0.0; ctx.n_nodes()],
        InitialGuessMode::PreviousStep => p_prev_time.to_vec(),
    };
    let mut coarse = vec![0.0; r.n_coarse()];
    let picard = picard_loop(guess, cfg.delta0, cfg.max_iters, |p| {
        let a = ctx.solver.system_matrix(kappa, p, 0.0)?;
        let sol = coarse_solve(r, &a, load, ctx.solver.mass(), p_prev_time, inv_tau, mode)?;
        coarse = sol.coarse;
        Ok(sol.fine)
    })?;
    Ok(MsStep { picard, coarse })
}

/// Offline Picard solve in the fixed space `V_off`. `source(t)` gives the
/// nodal source; in steady mode it is evaluated once at `t = 0`.
pub fn offline_picard_solve<F>(
    ctx: &MsContext,
    offline: &OfflineSpace,
    kappa: &[f64],
    source: F,
    cfg: &PicardConfig,
) -> Result<MsTrace>
where
    F: Fn(f64) -> Vec<f64>,
{
    let r = &offline.operator;
    let n = ctx.n_nodes();
    let loads = |t: f64| ctx.solver.assembler().load(&source(t));
    if cfg.is_steady() {
        let step = ms_picard_step(ctx, r, kappa, &loads(0.0), &vec![0.0; n], cfg, RankMode::Strict)?;
        return Ok(MsTrace { steps: vec![step] });
    }
    let mut prev = vec![0.0; n];
    let mut steps = Vec::with_capacity(cfg.n_steps);
    for s in 0..cfg.n_steps {
        let t = (s + 1) as f64 * cfg.tau;
        let step = ms_picard_step(ctx, r, kappa, &loads(t), &prev, cfg, RankMode::Strict)
            .map_err(|e| annotate(e, &format!("time step {}", s + 1)))?;
        prev = step.picard.pressure.clone();
        steps.push(step);
    }
    Ok(MsTrace { steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> MsContext {
        MsContext::new(8, 2).unwrap()
    }

    #[test]
    fn pou_sums_to_one_and_matches_bilinear_hat() {
        let ctx = ctx();
        for g in 0..ctx.n_nodes() {
            let s: f64 = ctx.pou.functions.iter().map(|f| f[g]).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for (j, f) in ctx.pou.functions.iter().enumerate() {
            for g in 0..ctx.n_nodes() {
                let hat = bilinear_hat(ctx.fine.nodes[g], ctx.coarse.vertices[j], ctx.coarse.h_coarse);
                assert!((f[g] - hat).abs() < 1e-12, "vertex {j} node {g}");
            }
        }
    }

    #[test]
    fn snapshots_reproduce_constants() {
        let ctx = ctx();
        let kappa: Vec<f64> = (0..ctx.n_nodes()).map(|i| 10.0 + (i * 13 % 17) as f64).collect();
        let snap = snapshot_space(&ctx, 4, &kappa).unwrap();
        assert_eq!(snap.count(), 32);
        for l in 0..snap.snapshots.nrows() {
            let s: f64 = snap.snapshots.row(l).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spectral_pairs_are_ascending_and_s_orthonormal() {
        let ctx = ctx();
        let kappa: Vec<f64> = (0..ctx.n_nodes()).map(|i| 10.0 + (i * 29 % 31) as f64).collect();
        let snap = snapshot_space(&ctx, 4, &kappa).unwrap();
        let pairs = spectral_basis(&ctx, &snap, &kappa, 5).unwrap();
        assert!(pairs.eigenvalues[0].abs() <= 1e-10);
        assert!(pairs.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let c = &pairs.coefficients;
        let gram = c.transpose() * &pairs.s_snap * c;
        assert!((gram - DMatrix::identity(5, 5)).amax() < 1e-8);
        assert!(spectral_basis(&ctx, &snap, &kappa, 33).is_err());
    }

    #[test]
    fn offline_columns_count_and_support() {
        let ctx = ctx();
        let kappa = vec![3.0; ctx.n_nodes()];
        let off = build_offline_space(&ctx, &kappa, &vec![0.0; ctx.n_nodes()], 2).unwrap();
        assert_eq!(off.operator.n_coarse(), 9 * 2);
        for c in off.operator.columns() {
            let dense = c.to_dense(ctx.n_nodes());
            for g in 0..ctx.n_nodes() {
                if ctx.fine.boundary_node_flags[g] || !ctx.neighborhoods[c.vertex].fine_node_indices.contains(&g) {
                    assert_eq!(dense[g], 0.0);
                }
            }
        }
    }

    #[test]
    fn offline_zero_source_gives_zero() {
        let ctx = ctx();
        let n = ctx.n_nodes();
        let kappa = vec![5.0; n];
        let off = build_offline_space(&ctx, &kappa, &vec![0.0; n], 3).unwrap();
        let trace = offline_picard_solve(&ctx, &off, &kappa, |_| vec![0.0; n], &PicardConfig::steady()).unwrap();
        assert!(trace.steps[0].pressure().iter().all(|&v| v == 0.0));
        let cfg = PicardConfig::time_dependent(25e-7, 4);
        let trace = offline_picard_solve(&ctx, &off, &kappa, |_| vec![0.0; n], &cfg).unwrap();
        assert_eq!(trace.steps.len(), 4);
        assert!(trace.trajectory().iter().all(|p| p.iter().all(|&v| v == 0.0)));
    }
}
