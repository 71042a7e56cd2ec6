//! Browser demo: sample a permeability field, compare the fine, offline and
//! online steady solutions, and look at individual basis functions.
//!
//! [`Session`] holds the logic and is usable natively; [`Demo`] is its
//! JavaScript face.

use richards_ms::fine_solver::PicardConfig;
use richards_ms::harness::{Experiment, OfflineRun, RunConfig};
use richards_ms::metrics::rel_l2_h1_solution;
use richards_ms::msfem_offline::BasisColumn;
use wasm_bindgen::prelude::*;

/// Relative errors against the fine solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSummary {
    pub offline_l2: f64,
    pub online_l2: f64,
    pub offline_h1: f64,
    pub online_h1: f64,
    pub fine_iterations: usize,
    pub offline_iterations: usize,
}

struct Solved {
    nb: usize,
    run: OfflineRun,
    online: Vec<BasisColumn>,
    fine: Vec<f64>,
    offline: Vec<f64>,
    enriched: Vec<f64>,
}

pub struct Session {
    exp: Experiment,
    kappa: Vec<f64>,
    solved: Option<Solved>,
}

impl Session {
    pub fn new(fine_n: usize, coarse_n: usize) -> Result<Self, String> {
        let cfg = RunConfig {
            fine_n,
            coarse_n,
            nb: vec![1],
            ..RunConfig::default()
        };
        let exp = Experiment::new(cfg).map_err(|e| e.to_string())?;
        let kappa = exp.field(0).map_err(|e| e.to_string())?.values;
        Ok(Self {
            exp,
            kappa,
            solved: None,
        })
    }

    pub fn nodes_per_side(&self) -> usize {
        self.exp.ctx.fine.nodes_per_side()
    }

    pub fn n_vertices(&self) -> usize {
        self.exp.n_vertices()
    }

    pub fn kle_terms(&self) -> usize {
        self.exp.kle.n_terms()
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// Draws a new field; previous solutions are discarded.
    pub fn sample(&mut self, seed: u64) -> Result<&[f64], String> {
        self.kappa = self.exp.field(seed as usize).map_err(|e| e.to_string())?.values;
        self.solved = None;
        Ok(&self.kappa)
    }

    /// Steady solve with `f = 1`: fine Picard, offline Picard with `nb`
    /// bases per vertex, and the online step.
    pub fn solve(&mut self, nb: usize) -> Result<SolveSummary, String> {
        let exp = &self.exp;
        let s = |e: richards_ms::Error| e.to_string();
        let cfg = PicardConfig::steady();
        let solver = &exp.ctx.solver;
        let load = solver.assembler().load(&exp.source(true));
        let fine = solver
            .picard_solve(&self.kappa, &load, &vec![0.0; load.len()], &cfg)
            .map_err(s)?;
        let run = exp.offline_run(&self.kappa, nb, &cfg).map_err(s)?;
        let online: Vec<BasisColumn> = exp
            .online_bases(&run, &self.kappa, 1)
            .map_err(s)?
            .into_iter()
            .map(|b| b.phi)
            .collect();
        let enriched = exp
            .enriched_trajectory(&run, &self.kappa, &[(1, online.clone())])
            .map_err(s)?
            .remove(0);
        let offline = run.trace.steps[0].pressure().to_vec();
        let (mass, stiff) = (solver.mass(), &exp.ctx.unit_stiffness);
        let (offline_l2, offline_h1) = rel_l2_h1_solution(&offline, &fine.pressure, mass, stiff);
        let (online_l2, online_h1) = rel_l2_h1_solution(&enriched, &fine.pressure, mass, stiff);
        let summary = SolveSummary {
            offline_l2: offline_l2.value,
            online_l2: online_l2.value,
            offline_h1: offline_h1.value,
            online_h1: online_h1.value,
            fine_iterations: fine.iterations,
            offline_iterations: run.trace.steps[0].picard.iterations,
        };
        self.solved = Some(Solved {
            nb,
            offline,
            run,
            online,
            fine: fine.pressure,
            enriched,
        });
        Ok(summary)
    }

    fn solved(&self) -> Result<&Solved, String> {
        self.solved.as_ref().ok_or_else(|| "call solve first".to_string())
    }

    /// `which`: 0 fine, 1 offline, 2 online.
    pub fn solution(&self, which: u8) -> Result<&[f64], String> {
        let s = self.solved()?;
        match which {
            0 => Ok(&s.fine),
            1 => Ok(&s.offline),
            2 => Ok(&s.enriched),
            w => Err(format!("unknown solution {w}")),
        }
    }

    /// Offline basis `index < nb` of `vertex`, or its online basis when
    /// `index == nb`, as nodal values on the whole grid.
    pub fn basis(&self, vertex: usize, index: usize) -> Result<Vec<f64>, String> {
        let s = self.solved()?;
        if vertex >= self.n_vertices() || index > s.nb {
            return Err(format!("no basis ({vertex}, {index}) with Nb = {}", s.nb));
        }
        let n = self.exp.ctx.n_nodes();
        let col = if index == s.nb {
            &s.online[vertex]
        } else {
            &s.run.space.operator.columns()[vertex * s.nb + index]
        };
        Ok(col.to_dense(n))
    }
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(fine_n: usize, coarse_n: usize) -> Result<Demo, JsError> {
        Ok(Demo {
            inner: Session::new(fine_n, coarse_n).map_err(|e| JsError::new(&e))?,
        })
    }

    #[wasm_bindgen(js_name = nodesPerSide)]
    pub fn nodes_per_side(&self) -> usize {
        self.inner.nodes_per_side()
    }

    #[wasm_bindgen(js_name = nVertices)]
    pub fn n_vertices(&self) -> usize {
        self.inner.n_vertices()
    }

    #[wasm_bindgen(js_name = kleTerms)]
    pub fn kle_terms(&self) -> usize {
        self.inner.kle_terms()
    }

    /// Samples a permeability field and returns its nodal values.
    pub fn sample(&mut self, seed: u32) -> Result<Vec<f64>, JsError> {
        Ok(self.inner.sample(seed as u64).map_err(|e| JsError::new(&e))?.to_vec())
    }

    /// Runs the steady solves; returns `[offline L2, online L2, offline H1,
    /// online H1, fine iterations, offline iterations]`.
    pub fn solve(&mut self, nb: usize) -> Result<Vec<f64>, JsError> {
        let s = self.inner.solve(nb).map_err(|e| JsError::new(&e))?;
        Ok(vec![
            s.offline_l2,
            s.online_l2,
            s.offline_h1,
            s.online_h1,
            s.fine_iterations as f64,
            s.offline_iterations as f64,
        ])
    }

    pub fn solution(&self, which: u8) -> Result<Vec<f64>, JsError> {
        Ok(self.inner.solution(which).map_err(|e| JsError::new(&e))?.to_vec())
    }

    pub fn basis(&self, vertex: usize, index: usize) -> Result<Vec<f64>, JsError> {
        self.inner.basis(vertex, index).map_err(|e| JsError::new(&e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_solve_and_inspect() {
        let mut s = Session::new(16, 4).unwrap();
        assert_eq!(s.nodes_per_side(), 17);
        let k = s.sample(3).unwrap().to_vec();
        assert_eq!(k.len(), 289);
        assert!(k.iter().all(|v| (10.0 - 1e-9..=2000.0 + 1e-9).contains(v)));
        assert!(s.basis(0, 0).is_err());
        let sum = s.solve(3).unwrap();
        assert!(sum.online_l2 <= sum.offline_l2);
        assert!(sum.fine_iterations <= 10 && sum.offline_iterations <= 10);
        assert_eq!(s.solution(0).unwrap().len(), 289);
        let b = s.basis(12, 0).unwrap();
        let online = s.basis(12, 3).unwrap();
        assert!(b.iter().any(|&v| v != 0.0) && online.iter().any(|&v| v != 0.0));
        assert!(s.basis(12, 4).is_err() && s.basis(25, 0).is_err());
        s.sample(4).unwrap();
        assert!(s.solution(1).is_err());
    }
}
