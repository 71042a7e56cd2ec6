//! Residual-driven online basis functions and the enriched coarse solve.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fine_solver::annotate;
use crate::fine_solver::assembly::{check_conductivity, triangle_means};
use crate::msfem_offline::coarse::RankedCholesky;
use crate::msfem_offline::local::submatrix;
use crate::msfem_offline::{
    coarse_solve, multiply_by_pou, BasisColumn, CoarseSolution, ColumnKind, DownscalingOperator, MsContext,
    OfflineSpace, RankMode,
};
use crate::par::map_range;
use crate::random_fields::conductivity;

/// Relative Gram pivot below which an online column is reported as
/// numerically inside the span of the preceding columns.
pub const GRAM_DEFECT_WARN: f64 = 1e-10;

/// Global residual `M p_prev/τ + b − (M p_new/τ + A p_new)` over all fine nodes.
pub fn global_residual(
    ctx: &MsContext,
    cond: &[f64],
    p_prev_time: &[f64],
    p_new: &[f64],
    load: &[f64],
    inv_tau: f64,
) -> Result<Vec<f64>> {
    let a = ctx.solver.assembler().stiffness(cond)?;
    let ap = a.mul_vec(p_new);
    let mut r: Vec<f64> = load.iter().zip(&ap).map(|(b, a)| b - a).collect();
    if inv_tau != 0.0 {
        let diff: Vec<f64> = p_prev_time.iter().zip(p_new).map(|(a, b)| a - b).collect();
        let md = ctx.solver.mass().mul_vec(&diff);
        for (ri, m) in r.iter_mut().zip(md) {
            *ri += inv_tau * m;
        }
    }
    Ok(r)
}

/// `R^j` evaluated against the interior test functions of `ω_j`, in the
/// order of the local interior nodes.
pub fn local_residual(
    ctx: &MsContext,
    j: usize,
    cond: &[f64],
    p_prev_time: &[f64],
    p_new: &[f64],
    load: &[f64],
    inv_tau: f64,
) -> Result<Vec<f64>> {
    if j >= ctx.n_vertices() {
        return Err(Error::Index {
            index: j,
            len: ctx.n_vertices(),
        });
    }
    let r = global_residual(ctx, cond, p_prev_time, p_new, load, inv_tau)?;
    Ok(restrict_interior(ctx, j, &r))
}

fn restrict_interior(ctx: &MsContext, j: usize, global: &[f64]) -> Vec<f64> {
    let mesh = &ctx.local_meshes[j];
    mesh.interior().iter().map(|&l| global[mesh.nodes[l]]).collect()
}

/// Local operator `d^j = M/τ + A(ϰ)` on the interior nodes of `ω_j`.
pub fn local_operator(ctx: &MsContext, j: usize, cond_tri: &[f64], inv_tau: f64) -> DMatrix<f64> {
    let mesh = &ctx.local_meshes[j];
    let mut d = mesh.stiffness(ctx.geometry(), cond_tri);
    if inv_tau != 0.0 {
        d += mesh.mass(ctx.geometry(), None) * inv_tau;
    }
    let interior = mesh.interior();
    submatrix(&d, &interior, &interior)
}

/// Solves `d^j(η, v) = R^j(v)`; returns `η` on all local nodes (zero on
/// `∂ω_j`) and `r_j = √(d^j(η, η))`.
fn online_eta_tri(
    ctx: &MsContext,
    j: usize,
    cond_tri: &[f64],
    inv_tau: f64,
    residual: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let mesh = &ctx.local_meshes[j];
    let interior = mesh.interior();
    if residual.len() != interior.len() {
        return Err(Error::Dimension {
            expected: interior.len(),
            actual: residual.len(),
        });
    }
    let mut eta = vec![0.0; mesh.n_local()];
    if residual.iter().all(|&v| v == 0.0) {
        return Ok((eta, 0.0));
    }
    let d = local_operator(ctx, j, cond_tri, inv_tau);
    let chol = d
        .cholesky()
        .ok_or_else(|| Error::Numerical(format!("online local Cholesky failed at vertex {j}")))?;
    let x = chol.solve(&DVector::from_column_slice(residual));
    let energy: f64 = x.iter().zip(residual).map(|(a, b)| a * b).sum();
    for (&l, &v) in interior.iter().zip(x.iter()) {
        eta[l] = v;
    }
    Ok((eta, energy.max(0.0).sqrt()))
}

pub fn online_eta(ctx: &MsContext, j: usize, cond: &[f64], inv_tau: f64, residual: &[f64]) -> Result<(Vec<f64>, f64)> {
    check_conductivity(cond, ctx.n_nodes())?;
    online_eta_tri(ctx, j, &triangle_means(&ctx.fine, cond), inv_tau, residual)
}

/// `‖η‖_{V_j} = √(d^j(η, η))` for a local vector `η`.
pub fn local_energy_norm(ctx: &MsContext, j: usize, cond: &[f64], inv_tau: f64, eta: &[f64]) -> f64 {
    let cond_tri = triangle_means(&ctx.fine, cond);
    let d = local_operator(ctx, j, &cond_tri, inv_tau);
    let interior = ctx.local_meshes[j].interior();
    let x = DVector::from_iterator(interior.len(), interior.iter().map(|&l| eta[l]));
    (x.transpose() * d * &x)[(0, 0)].max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinearizationTag {
    pub time_step: usize,
    pub picard_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineBasis {
    pub vertex: usize,
    /// `η_j` on the local nodes of `ω_j`.
    pub eta: Vec<f64>,
    /// `Φ_j = χ_j η_j` (zero on `∂Ω`).
    pub phi: BasisColumn,
    pub residual_norm: f64,
    pub tag: LinearizationTag,
}

/// One online basis per vertex from the residual of `p_new` under the
/// linearization `ϰ(κ, p_lin)`.
#[allow(clippy::too_many_arguments)]
pub fn compute_online_bases(
    ctx: &MsContext,
    kappa: &[f64],
    p_lin: &[f64],
    p_new: &[f64],
    p_prev_time: &[f64],
    load: &[f64],
    inv_tau: f64,
    tag: LinearizationTag,
) -> Result<Vec<OnlineBasis>> {
    let cond = conductivity(kappa, p_lin)?;
    check_conductivity(&cond, ctx.n_nodes())?;
    let cond_tri = triangle_means(&ctx.fine, &cond);
    let r = global_residual(ctx, &cond, p_prev_time, p_new, load, inv_tau)?;
    map_range(ctx.n_vertices(), |j| {
        let res = restrict_interior(ctx, j, &r);
        let (eta, rj) = online_eta_tri(ctx, j, &cond_tri, inv_tau, &res)
            .map_err(|e| annotate(e, &format!("online basis of vertex {j}")))?;
        Ok(OnlineBasis {
            vertex: j,
            phi: online_column(ctx, j, &eta, ColumnKind::Online),
            eta,
            residual_norm: rj,
            tag,
        })
    })
    .into_iter()
    .collect()
}

/// `χ_j ⊙ η` as a basis column of the given kind.
pub fn online_column(ctx: &MsContext, j: usize, eta: &[f64], kind: ColumnKind) -> BasisColumn {
    let mut col = multiply_by_pou(ctx, j, eta);
    col.kind = kind;
    col
}

/// `V_ms`: offline columns followed by one online column per vertex.
#[derive(Debug, Clone)]
pub struct EnrichedSpace {
    pub operator: DownscalingOperator,
    pub n_offline: usize,
    pub warnings: Vec<String>,
}

impl EnrichedSpace {
    pub fn online_columns(&self) -> &[BasisColumn] {
        &self.operator.columns()[self.n_offline..]
    }
}

/// Appends the columns `Φ_j` after the offline ones. Columns numerically in
/// the span of earlier ones are kept and reported with their Gram defect.
pub fn enrich_with_columns(offline: &OfflineSpace, online: Vec<BasisColumn>) -> Result<EnrichedSpace> {
    let n_offline = offline.operator.n_coarse();
    let operator = offline.operator.extended(online);
    let gram = operator.gram();
    let chol = RankedCholesky::factor(&gram, RankMode::DropDependent, &operator.labels())?;
    let mut warnings = Vec::new();
    for i in n_offline..operator.n_coarse() {
        let defect = chol.relative_pivots[i];
        if defect < GRAM_DEFECT_WARN {
            let msg = format!(
                "{} is numerically in the span of earlier columns (Gram defect {defect:e})",
                operator.columns()[i].label()
            );
            log::debug!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(EnrichedSpace {
        operator,
        n_offline,
        warnings,
    })
}

pub fn enrich(offline: &OfflineSpace, online: &[OnlineBasis]) -> Result<EnrichedSpace> {
    enrich_with_columns(offline, online.iter().map(|b| b.phi.clone()).collect())
}

/// The extra Picard iteration in `V_ms` with the linearization frozen at `p_lin`.
pub fn online_picard_step(
    ctx: &MsContext,
    space: &EnrichedSpace,
    kappa: &[f64],
    load: &[f64],
    p_prev_time: &[f64],
    p_lin: &[f64],
    inv_tau: f64,
) -> Result<CoarseSolution> {
    let a = ctx.solver.system_matrix(kappa, p_lin, 0.0)?;
    coarse_solve(
        &space.operator,
        &a,
        load,
        ctx.solver.mass(),
        p_prev_time,
        inv_tau,
        RankMode::DropDependent,
    )
}

/// Time steps (1-based) at which online bases are recomputed.
pub fn schedule_enrichment(n_steps: usize, explicit: Option<&[usize]>) -> Result<Vec<usize>> {
    if n_steps == 0 {
        return Err(Error::Config("enrichment schedule needs at least one time step".into()));
    }
    match explicit {
        Some(list) => {
            if let Some(&bad) = list.iter().find(|&&s| s == 0 || s > n_steps) {
                return Err(Error::Config(format!(
                    "enrichment step {bad} outside [1, {n_steps}]"
                )));
            }
            let mut out = list.to_vec();
            out.sort_unstable();
            out.dedup();
            Ok(out)
        }
        None => Ok([1, 5, 10, 15, 20].into_iter().filter(|&s| s <= n_steps).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msfem_offline::build_offline_space;

    #[test]
    fn schedules() {
        assert_eq!(schedule_enrichment(20, None).unwrap(), vec![1, 5, 10, 15, 20]);
        assert_eq!(schedule_enrichment(3, None).unwrap(), vec![1]);
        assert_eq!(schedule_enrichment(20, Some(&[2, 4])).unwrap(), vec![2, 4]);
        assert!(schedule_enrichment(20, Some(&[0])).is_err());
        assert!(schedule_enrichment(20, Some(&[21])).is_err());
    }

    #[test]
    fn zero_residual_gives_zero_eta() {
        let ctx = MsContext::new(8, 2).unwrap();
        let n = ctx.n_nodes();
        let zero = vec![0.0; n];
        let res = local_residual(&ctx, 4, &vec![2.0; n], &zero, &zero, &zero, 1.0).unwrap();
        assert!(res.iter().all(|&v| v == 0.0));
        let (eta, r) = online_eta(&ctx, 4, &vec![2.0; n], 1.0, &res).unwrap();
        assert_eq!(r, 0.0);
        assert!(eta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn eta_is_linear_and_norm_consistent() {
        let ctx = MsContext::new(8, 2).unwrap();
        let n = ctx.n_nodes();
        let cond: Vec<f64> = (0..n).map(|i| 1.0 + (i % 4) as f64).collect();
        let m = ctx.local_meshes[4].interior().len();
        let res: Vec<f64> = (0..m).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        let (eta, r) = online_eta(&ctx, 4, &cond, 400.0, &res).unwrap();
        let res2: Vec<f64> = res.iter().map(|v| 2.0 * v).collect();
        let (eta2, r2) = online_eta(&ctx, 4, &cond, 400.0, &res2).unwrap();
        assert!((r2 - 2.0 * r).abs() < 1e-12 * r2);
        for (a, b) in eta.iter().zip(&eta2) {
            assert!((2.0 * a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        let recomputed = local_energy_norm(&ctx, 4, &cond, 400.0, &eta);
        assert!((recomputed - r).abs() < 1e-10 * (1.0 + r));
        for (l, &b) in ctx.local_meshes[4].boundary.iter().enumerate() {
            if b {
                assert_eq!(eta[l], 0.0);
            }
        }
    }

    #[test]
    fn zero_online_columns_reproduce_offline_solution() {
        let ctx = MsContext::new(8, 2).unwrap();
        let n = ctx.n_nodes();
        let kappa: Vec<f64> = (0..n).map(|i| 10.0 + (i % 9) as f64).collect();
        let zero = vec![0.0; n];
        let off = build_offline_space(&ctx, &kappa, &zero, 2).unwrap();
        let load = ctx.solver.assembler().load(&vec![1.0; n]);
        let a = ctx.solver.system_matrix(&kappa, &zero, 0.0).unwrap();
        let base = coarse_solve(&off.operator, &a, &load, ctx.solver.mass(), &zero, 0.0, RankMode::Strict).unwrap();
        let online: Vec<BasisColumn> =
            (0..ctx.n_vertices()).map(|j| online_column(&ctx, j, &vec![0.0; ctx.local_meshes[j].n_local()], ColumnKind::Online)).collect();
        let space = enrich_with_columns(&off, online).unwrap();
        assert_eq!(space.operator.n_coarse(), 9 * 3);
        assert_eq!(space.warnings.len(), 9);
        let sol = online_picard_step(&ctx, &space, &kappa, &load, &zero, &zero, 0.0).unwrap();
        for (a, b) in sol.fine.iter().zip(&base.fine) {
            assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()));
        }
    }
}
