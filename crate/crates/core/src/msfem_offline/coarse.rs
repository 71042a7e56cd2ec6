//! Downscaling operator and Galerkin coarse solves.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fine_solver::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Offline,
    Online,
    Predicted,
}

/// One multiscale basis function, stored on the rectangle of its neighborhood.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisColumn {
    pub vertex: usize,
    /// Eigen index for offline columns, 0 for online ones.
    pub index: usize,
    pub kind: ColumnKind,
    pub nodes: Vec<usize>,
    pub values: Vec<f64>,
    /// Inclusive fine-node index box holding `nodes`.
    pub x_range: (usize, usize),
    pub y_range: (usize, usize),
}

impl BasisColumn {
    pub fn label(&self) -> String {
        match self.kind {
            ColumnKind::Offline => format!("vertex {}, offline k={}", self.vertex, self.index + 1),
            ColumnKind::Online => format!("vertex {}, online", self.vertex),
            ColumnKind::Predicted => format!("vertex {}, predicted online", self.vertex),
        }
    }

    pub fn to_dense(&self, n_fine: usize) -> Vec<f64> {
        let mut v = vec![0.0; n_fine];
        for (&g, &x) in self.nodes.iter().zip(&self.values) {
            v[g] = x;
        }
        v
    }

    fn near(&self, other: &BasisColumn) -> bool {
        let gap = |a: (usize, usize), b: (usize, usize)| a.0 > b.1 + 1 || b.0 > a.1 + 1;
        !(gap(self.x_range, other.x_range) || gap(self.y_range, other.y_range))
    }
}

/// `R`: maps coarse coefficients to fine nodal values, one column per basis function.
#[derive(Debug, Clone, PartialEq)]
pub struct DownscalingOperator {
    n_fine: usize,
    columns: Vec<BasisColumn>,
}

impl DownscalingOperator {
    pub fn new(n_fine: usize, columns: Vec<BasisColumn>) -> Self {
        Self { n_fine, columns }
    }

    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[BasisColumn] {
        &self.columns
    }

    /// A copy with `extra` appended after the existing columns.
    pub fn extended(&self, extra: Vec<BasisColumn>) -> Self {
        let mut columns = self.columns.clone();
        columns.extend(extra);
        Self::new(self.n_fine, columns)
    }

    /// Keeps only columns of the given kind.
    pub fn filtered(&self, kind: ColumnKind) -> Self {
        Self::new(
            self.n_fine,
            self.columns.iter().filter(|c| c.kind == kind).cloned().collect(),
        )
    }

    pub fn labels(&self) -> Vec<String> {
        self.columns.iter().map(BasisColumn::label).collect()
    }

    /// `R p_c`.
    pub fn apply(&self, coarse: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_fine];
        for (c, &a) in self.columns.iter().zip(coarse) {
            if a != 0.0 {
                for (&g, &v) in c.nodes.iter().zip(&c.values) {
                    out[g] += a * v;
                }
            }
        }
        out
    }

    /// `Rᵀ v`.
    pub fn transpose_apply(&self, v: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.nodes.iter().zip(&c.values).map(|(&g, &x)| x * v[g]).sum())
            .collect()
    }

    /// `Rᵀ A R`.
    pub fn galerkin(&self, a: &CsrMatrix) -> DMatrix<f64> {
        let nc = self.n_coarse();
        let mut out = DMatrix::zeros(nc, nc);
        let mut dense = vec![0.0; self.n_fine];
        let mut ar = vec![0.0; self.n_fine];
        for (i, ci) in self.columns.iter().enumerate() {
            for (&g, &v) in ci.nodes.iter().zip(&ci.values) {
                dense[g] = v;
            }
            a.mul_vec_into(&dense, &mut ar);
            for &g in &ci.nodes {
                dense[g] = 0.0;
            }
            for (j, cj) in self.columns.iter().enumerate().skip(i) {
                if !ci.near(cj) {
                    continue;
                }
                let v: f64 = cj.nodes.iter().zip(&cj.values).map(|(&g, &x)| x * ar[g]).sum();
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }

    /// Euclidean Gram matrix `RᵀR`.
    pub fn gram(&self) -> DMatrix<f64> {
        let nc = self.n_coarse();
        let mut g = DMatrix::zeros(nc, nc);
        let mut dense = vec![0.0; self.n_fine];
        for (i, ci) in self.columns.iter().enumerate() {
            for (&n, &v) in ci.nodes.iter().zip(&ci.values) {
                dense[n] = v;
            }
            for (j, cj) in self.columns.iter().enumerate().skip(i) {
                if !ci.near(cj) {
                    continue;
                }
                let v: f64 = cj.nodes.iter().zip(&cj.values).map(|(&n, &x)| x * dense[n]).sum();
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
            for &n in &ci.nodes {
                dense[n] = 0.0;
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// A dependent column is an error naming it.
    Strict,
    /// Dependent columns get coefficient zero.
    DropDependent,
}

/// Relative pivot threshold for declaring a column dependent.
pub const PIVOT_TOL: f64 = 1e-12;

/// Cholesky factor that tracks which columns were dependent on earlier ones.
#[derive(Debug, Clone)]
pub struct RankedCholesky {
    l: DMatrix<f64>,
    dropped: Vec<bool>,
    /// Squared pivot relative to the diagonal entry, per column.
    pub relative_pivots: Vec<f64>,
}

impl RankedCholesky {
    pub fn factor(a: &DMatrix<f64>, mode: RankMode, labels: &[String]) -> Result<Self> {
        let n = a.nrows();
        let max_diag = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
        let tol = PIVOT_TOL * max_diag;
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut dropped = vec![false; n];
        let mut relative_pivots = vec![0.0; n];
        for j in 0..n {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            relative_pivots[j] = if a[(j, j)] > 0.0 { d / a[(j, j)] } else { 0.0 };
            if !(d > tol) || !d.is_finite() {
                match mode {
                    RankMode::Strict => {
                        return Err(Error::RankDeficient {
                            column: j,
                            label: labels.get(j).cloned().unwrap_or_default(),
                        })
                    }
                    RankMode::DropDependent => {
                        dropped[j] = true;
                        continue;
                    }
                }
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Ok(Self {
            l,
            dropped,
            relative_pivots,
        })
    }

    pub fn dropped(&self) -> Vec<usize> {
        (0..self.dropped.len()).filter(|&i| self.dropped[i]).collect()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut y = vec![0.0; n];
        for i in 0..n {
            if self.dropped[i] {
                continue;
            }
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            if self.dropped[i] {
                continue;
            }
            let mut s = y[i];
            for k in i + 1..n {
                s -= self.l[(k, i)] * x[k];
            }
            x[i] = s / self.l[(i, i)];
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSolution {
    pub coarse: Vec<f64>,
    pub fine: Vec<f64>,
    /// Columns treated as dependent (only in [`RankMode::DropDependent`]).
    pub dropped: Vec<usize>,
}

/// Galerkin solve of `(M/τ + A) p = M p_prev/τ + b` in `span(R)`. The columns
/// of `R` vanish on `∂Ω`, so no boundary treatment is needed. `inv_tau = 0`
/// gives the steady system.
pub fn coarse_solve(
    r: &DownscalingOperator,
    a: &CsrMatrix,
    b: &[f64],
    mass: &CsrMatrix,
    p_prev_time: &[f64],
    inv_tau: f64,
    mode: RankMode,
) -> Result<CoarseSolution> {
    let (system, mut rhs) = if inv_tau == 0.0 {
        (a.clone(), b.to_vec())
    } else {
        let mp = mass.mul_vec(p_prev_time);
        (
            a.add_scaled(inv_tau, mass)?,
            b.iter().zip(mp).map(|(b, m)| b + inv_tau * m).collect(),
        )
    };
    let a_c = r.galerkin(&system);
    rhs = r.transpose_apply(&rhs);
    let chol = RankedCholesky::factor(&a_c, mode, &r.labels())?;
    let coarse = chol.solve(&rhs);
    let fine = r.apply(&coarse);
    Ok(CoarseSolution {
        coarse,
        fine,
        dropped: chol.dropped(),
    })
}
