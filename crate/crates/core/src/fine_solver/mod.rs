//! Fine-scale reference solver: P1 assembly, Picard linearization and
//! backward-Euler time stepping.

pub mod assembly;
pub mod sparse;

use serde::{Deserialize, Serialize};

pub use assembly::{assemble_load, assemble_mass, assemble_stiffness, P1Assembler};
pub use sparse::{solve_spd, CsrMatrix, SolverChoice};

use crate::error::{Error, Result};
use crate::grids::FineGrid;
use crate::random_fields::conductivity;
use sparse::norm2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuessMode {
    #[default]
    Zero,
    PreviousStep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardConfig {
    pub delta0: f64,
    pub max_iters: usize,
    pub tau: f64,
    /// Number of time steps; 0 selects the steady problem.
    pub n_steps: usize,
    pub initial_guess_mode: InitialGuessMode,
    pub solver: SolverChoice,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            delta0: 1e-6,
            max_iters: 10,
            tau: 25e-7,
            n_steps: 0,
            initial_guess_mode: InitialGuessMode::Zero,
            solver: SolverChoice::Auto,
        }
    }
}

impl PicardConfig {
    pub fn steady() -> Self {
        Self::default()
    }

    pub fn time_dependent(tau: f64, n_steps: usize) -> Self {
        Self {
            tau,
            n_steps,
            ..Self::default()
        }
    }

    pub fn is_steady(&self) -> bool {
        self.n_steps == 0
    }

    /// `1/τ`, or zero in steady mode.
    pub fn inv_tau(&self) -> f64 {
        if self.is_steady() {
            0.0
        } else {
            1.0 / self.tau
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta0 > 0.0) {
            return Err(Error::Config(format!("delta0 must be positive, got {}", self.delta0)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !self.is_steady() && !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopDecision {
    pub stop: bool,
    pub rel_change: f64,
    /// `‖p_old‖ = 0`, so the ratio is undefined.
    pub degenerate: bool,
}

/// `‖p_new − p_old‖₂ / ‖p_old‖₂ ≤ δ₀`. A zero `p_old` only stops when `p_new`
/// is zero as well.
pub fn stopping_criterion(p_new: &[f64], p_old: &[f64], delta0: f64) -> StopDecision {
    let diff = p_new
        .iter()
        .zip(p_old)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let old = norm2(p_old);
    if old == 0.0 {
        let stop = norm2(p_new) == 0.0;
        return StopDecision {
            stop,
            rel_change: if stop { 0.0 } else { f64::INFINITY },
            degenerate: true,
        };
    }
    let rel_change = diff / old;
    StopDecision {
        stop: rel_change <= delta0,
        rel_change,
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    pub pressure: Vec<f64>,
    pub iterations: usize,
    pub rel_change: f64,
    pub converged: bool,
    /// Initial guess followed by every Picard iterate.
    pub iterates: Vec<Vec<f64>>,
}

impl PicardResult {
    /// The iterate before the accepted one, used as linearization state by
    /// the online enrichment.
    pub fn previous_iterate(&self) -> &[f64] {
        &self.iterates[self.iterates.len() - 2]
    }
}

pub(crate) fn annotate(err: Error, context: &str) -> Error {
    match err {
        Error::Numerical(msg) => Error::Numerical(format!("{context}: {msg}")),
        other => other,
    }
}

/// Runs `step` from `guess` until the stopping criterion holds or
/// `max_iters` is reached.
pub(crate) fn picard_loop<F>(
    guess: Vec<f64>,
    delta0: f64,
    max_iters: usize,
    mut step: F,
) -> Result<PicardResult>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut iterates = vec![guess];
    let mut rel_change = f64::INFINITY;
    for it in 1..=max_iters {
        let current = iterates.last().unwrap();
        let next = step(current).map_err(|e| annotate(e, &format!("Picard iteration {it}")))?;
        let decision = stopping_criterion(&next, current, delta0);
        rel_change = decision.rel_change;
        iterates.push(next);
        if decision.stop {
            return Ok(PicardResult {
                pressure: iterates.last().unwrap().clone(),
                iterations: it,
                rel_change,
                converged: true,
                iterates,
            });
        }
    }
    log::warn!("Picard stopped at max_iters={max_iters} with relative change {rel_change:e}");
    Ok(PicardResult {
        pressure: iterates.last().unwrap().clone(),
        iterations: max_iters,
        rel_change,
        converged: false,
        iterates,
    })
}

/// Fine-grid operators that do not depend on the pressure.
#[derive(Debug, Clone)]
pub struct FineSolver {
    assembler: P1Assembler,
    mass: CsrMatrix,
    boundary: Vec<bool>,
}

impl FineSolver {
    pub fn new(fine: &FineGrid) -> Self {
        let assembler = P1Assembler::new(fine);
        let mass = assembler.mass();
        Self {
            assembler,
            mass,
            boundary: fine.boundary_node_flags.clone(),
        }
    }

    pub fn assembler(&self) -> &P1Assembler {
        &self.assembler
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn boundary(&self) -> &[bool] {
        &self.boundary
    }

    pub fn n_nodes(&self) -> usize {
        self.boundary.len()
    }

    /// `M/τ + A(ϰ(κ, p_lin))` without boundary treatment (`A` alone when steady).
    pub fn system_matrix(&self, kappa: &[f64], p_lin: &[f64], inv_tau: f64) -> Result<CsrMatrix> {
        let cond = conductivity(kappa, p_lin)?;
        let a = self.assembler.stiffness(&cond)?;
        if inv_tau == 0.0 {
            Ok(a)
        } else {
            a.add_scaled(inv_tau, &self.mass)
        }
    }

    /// `M p_prev/τ + b` (just `b` when steady).
    pub fn system_rhs(&self, load: &[f64], p_prev_time: &[f64], inv_tau: f64) -> Vec<f64> {
        let mut rhs = load.to_vec();
        if inv_tau != 0.0 {
            let mp = self.mass.mul_vec(p_prev_time);
            for (r, m) in rhs.iter_mut().zip(mp) {
                *r += inv_tau * m;
            }
        }
        rhs
    }

    /// One linearized solve with homogeneous Dirichlet data.
    pub fn linear_step(
        &self,
        kappa: &[f64],
        p_lin: &[f64],
        rhs: &[f64],
        inv_tau: f64,
        solver: SolverChoice,
    ) -> Result<Vec<f64>> {
        let mut a = self.system_matrix(kappa, p_lin, inv_tau)?;
        let mut b = rhs.to_vec();
        a.apply_dirichlet(&self.boundary, &mut b);
        solve_spd(&a, &b, solver)
    }

    /// Picard iteration for one time step, or for the steady problem when
    /// `cfg.n_steps == 0`. `load` is the assembled `M f`.
    pub fn picard_solve(
        &self,
        kappa: &[f64],
        load: &[f64],
        p_prev_time: &[f64],
        cfg: &PicardConfig,
    ) -> Result<PicardResult> {
        cfg.validate()?;
        let n = self.n_nodes();
        for v in [kappa, load, p_prev_time] {
            if v.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    actual: v.len(),
                });
            }
        }
        let inv_tau = cfg.inv_tau();
        let rhs = self.system_rhs(load, p_prev_time, inv_tau);
        let guess = match cfg.initial_guess_mode {
            InitialGuessMode::Zero => vec![0.0; n],
            InitialGuessMode::PreviousStep => p_prev_time.to_vec(),
        };
        picard_loop(guess, cfg.delta0, cfg.max_iters, |p| {
            self.linear_step(kappa, p, &rhs, inv_tau, cfg.solver)
        })
    }

    /// Backward Euler from `p₀ = 0`; `source(t)` gives nodal `f` at `t = (s+1)τ`.
    pub fn time_march<F>(&self, kappa: &[f64], source: F, cfg: &PicardConfig) -> Result<SolveTrace>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        cfg.validate()?;
        if cfg.is_steady() {
            return Err(Error::Config("time_march needs n_steps >= 1".into()));
        }
        let mut prev = vec![0.0; self.n_nodes()];
        let mut steps = Vec::with_capacity(cfg.n_steps);
        for s in 0..cfg.n_steps {
            let t = (s + 1) as f64 * cfg.tau;
            let load = self.assembler.load(&source(t));
            let result = self
                .picard_solve(kappa, &load, &prev, cfg)
                .map_err(|e| annotate(e, &format!("time step {}", s + 1)))?;
            prev = result.pressure.clone();
            steps.push(StepRecord::from(result));
        }
        Ok(SolveTrace { steps })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub pressure: Vec<f64>,
    pub iterations: usize,
    pub rel_change: f64,
    pub converged: bool,
}

impl From<PicardResult> for StepRecord {
    fn from(r: PicardResult) -> Self {
        Self {
            pressure: r.pressure,
            iterations: r.iterations,
            rel_change: r.rel_change,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveTrace {
    pub steps: Vec<StepRecord>,
}

impl SolveTrace {
    pub fn trajectory(&self) -> Vec<&[f64]> {
        self.steps.iter().map(|s| s.pressure.as_slice()).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.steps.iter().all(|s| s.converged)
    }
}

/// Steady or single-step Picard solve with nodal source `f`.
pub fn picard_solve(
    fine: &FineGrid,
    kappa: &[f64],
    f: &[f64],
    p_prev_time: &[f64],
    cfg: &PicardConfig,
) -> Result<PicardResult> {
    let solver = FineSolver::new(fine);
    let load = assemble_load(fine, f)?;
    solver.picard_solve(kappa, &load, p_prev_time, cfg)
}

pub fn time_march<F>(fine: &FineGrid, kappa: &[f64], source: F, cfg: &PicardConfig) -> Result<SolveTrace>
where
    F: Fn(f64) -> Vec<f64>,
{
    FineSolver::new(fine).time_march(kappa, source, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::build_grids;

    #[test]
    fn stopping_examples() {
        assert!(stopping_criterion(&[1.0, 1e-7], &[1.0, 0.0], 1e-6).stop);
        assert!(!stopping_criterion(&[1.0, 1e-5], &[1.0, 0.0], 1e-6).stop);
        assert!(stopping_criterion(&[0.3, -2.0], &[0.3, -2.0], 1e-300).stop);
        let d = stopping_criterion(&[0.0, 1.0], &[0.0, 0.0], 1e-6);
        assert!(d.degenerate && !d.stop);
        let d = stopping_criterion(&[0.0, 0.0], &[0.0, 0.0], 1e-6);
        assert!(d.degenerate && d.stop);
    }

    #[test]
    fn zero_source_is_fixed_point() {
        let (fine, _) = build_grids(8, 2).unwrap();
        let n = fine.n_nodes();
        let r = picard_solve(&fine, &vec![5.0; n], &vec![0.0; n], &vec![0.0; n], &PicardConfig::steady())
            .unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert!(r.pressure.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn steady_solution_nonnegative_and_converged() {
        let (fine, _) = build_grids(16, 4).unwrap();
        let n = fine.n_nodes();
        let kappa: Vec<f64> = (0..n).map(|i| 10.0 + (i * 37 % 101) as f64).collect();
        let r = picard_solve(&fine, &kappa, &vec![1.0; n], &vec![0.0; n], &PicardConfig::steady()).unwrap();
        assert!(r.converged);
        assert!(r.rel_change <= 1e-6);
        assert!(r.pressure.iter().all(|&v| v >= -1e-10));
        assert!(fine
            .boundary_node_flags
            .iter()
            .zip(&r.pressure)
            .all(|(&b, &p)| !b || p == 0.0));
    }

    #[test]
    fn pcg_and_dense_agree() {
        let (fine, _) = build_grids(12, 3).unwrap();
        let n = fine.n_nodes();
        let kappa: Vec<f64> = (0..n).map(|i| 1.0 + (i % 5) as f64).collect();
        let f = vec![1.0; n];
        let mut cfg = PicardConfig::steady();
        cfg.solver = SolverChoice::Dense;
        let d = picard_solve(&fine, &kappa, &f, &vec![0.0; n], &cfg).unwrap();
        cfg.solver = SolverChoice::Pcg;
        let p = picard_solve(&fine, &kappa, &f, &vec![0.0; n], &cfg).unwrap();
        assert_eq!(d.iterations, p.iterations);
        for (a, b) in d.pressure.iter().zip(&p.pressure) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn time_march_lengths_and_zero_source() {
        let (fine, _) = build_grids(8, 2).unwrap();
        let n = fine.n_nodes();
        let cfg = PicardConfig::time_dependent(25e-7, 20);
        let trace = time_march(&fine, &vec![10.0; n], |_| vec![0.0; n], &cfg).unwrap();
        assert_eq!(trace.steps.len(), 20);
        assert!(trace.trajectory().iter().all(|p| p.iter().all(|&v| v == 0.0)));
        assert!(time_march(&fine, &vec![10.0; n], |_| vec![0.0; n], &PicardConfig::steady()).is_err());
    }

    #[test]
    fn large_tau_approaches_steady() {
        let (fine, _) = build_grids(8, 2).unwrap();
        let n = fine.n_nodes();
        let kappa = vec![1.0; n];
        let f = vec![1.0; n];
        let steady = picard_solve(&fine, &kappa, &f, &vec![0.0; n], &PicardConfig::steady()).unwrap();
        let mut last = f64::INFINITY;
        for tau in [1.0, 10.0, 100.0] {
            let cfg = PicardConfig::time_dependent(tau, 1);
            let trace = time_march(&fine, &kappa, |_| f.clone(), &cfg).unwrap();
            let d: f64 = trace.steps[0]
                .pressure
                .iter()
                .zip(&steady.pressure)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(d < last, "tau={tau}: {d} !< {last}");
            last = d;
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = PicardConfig::steady();
        cfg.delta0 = 0.0;
        assert!(cfg.validate().is_err());
        let cfg = PicardConfig::time_dependent(0.0, 3);
        assert!(cfg.validate().is_err());
        let json = r#"{"delta0": 1e-6, "bogus": 1}"#;
        assert!(serde_json::from_str::<PicardConfig>(json).is_err());
    }
}
