//! Experiment pipelines: dataset generation, network training, and the
//! steady and time-dependent comparisons of direct against predicted online
//! bases.

mod config;
mod dataset;
pub mod report;

use std::collections::HashSet;
use std::f64::consts::PI;
use std::time::Instant;

pub use config::{RunConfig, SourceKind};
pub use dataset::{DatasetFile, DatasetHeader, DatasetMode, DatasetRecord};

use crate::error::{Error, Result};
use crate::fine_solver::{annotate, PicardConfig};
use crate::grids::canonical_patch_embedding;
use crate::metrics::{aggregate, bochner_errors, rel_l2_h1_solution, ErrorReport, RelError};
use crate::msfem_offline::{build_offline_space, offline_picard_solve, BasisColumn, MsContext, MsTrace, OfflineSpace};
use crate::msfem_online::{
    compute_online_bases, enrich_with_columns, online_picard_step, schedule_enrichment, LinearizationTag,
    OnlineBasis,
};
use crate::random_fields::{build_kle, hash_seed, sample_field, KleBasis, PermeabilityField};
use crate::surrogate::{predict_many, predicted_column, rmse_values, train, MlpModel, NormalizationBounds, TrainOutcome};

const SAMPLE_TAG: u64 = 0x5341_4d50;
const NETWORK_TAG: u64 = 0x4e45_5457;

/// Failed samples beyond this fraction abort dataset generation.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;

/// Sets the worker count for sample-level parallelism. Without the
/// `parallel` feature only `n = 1` is accepted.
pub fn configure_threads(n: usize) -> Result<()> {
    crate::par::configure_threads(n)
}

/// A trained network with its normalization bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub model: MlpModel,
    pub bounds: NormalizationBounds,
}

impl From<TrainOutcome> for Network {
    fn from(o: TrainOutcome) -> Self {
        Self {
            model: o.model,
            bounds: o.bounds,
        }
    }
}

/// Offline Picard solve of one sample in `V_off`.
#[derive(Debug, Clone)]
pub struct OfflineRun {
    pub space: OfflineSpace,
    pub trace: MsTrace,
    pub load: Vec<f64>,
    pub inv_tau: f64,
    initial: Vec<f64>,
}

impl OfflineRun {
    pub fn n_steps(&self) -> usize {
        self.trace.steps.len()
    }

    /// State before the 1-based `step`.
    pub fn previous_state(&self, step: usize) -> &[f64] {
        if step <= 1 {
            &self.initial
        } else {
            self.trace.steps[step - 2].pressure()
        }
    }

    fn check_step(&self, step: usize) -> Result<()> {
        if step == 0 || step > self.n_steps() {
            return Err(Error::Index {
                index: step,
                len: self.n_steps() + 1,
            });
        }
        Ok(())
    }
}

/// Grids, multiscale context and KLE basis shared by all samples of a run.
pub struct Experiment {
    pub cfg: RunConfig,
    pub ctx: MsContext,
    pub kle: KleBasis,
}

impl Experiment {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let ctx = MsContext::new(cfg.fine_n, cfg.coarse_n)?;
        let kle = build_kle(&ctx.fine, &cfg.covariance, cfg.energy_fraction)?;
        log::info!(
            "grids {}x{} / {}x{}, KLE keeps {} terms",
            cfg.fine_n,
            cfg.fine_n,
            cfg.coarse_n,
            cfg.coarse_n,
            kle.n_terms()
        );
        Ok(Self { cfg, ctx, kle })
    }

    pub fn n_vertices(&self) -> usize {
        self.ctx.n_vertices()
    }

    pub fn patch_size(&self) -> usize {
        self.ctx.neighborhoods[0].patch_size()
    }

    /// Seed of sample `index`; indices below `n_train` are training samples.
    pub fn sample_seed(&self, index: usize) -> u64 {
        hash_seed(self.cfg.seed, &[SAMPLE_TAG, index as u64])
    }

    pub fn field(&self, index: usize) -> Result<PermeabilityField> {
        sample_field(&self.kle, self.sample_seed(index), self.cfg.kappa_range())
    }

    pub fn test_indices(&self) -> std::ops::Range<usize> {
        self.cfg.n_train..self.cfg.n_samples()
    }

    pub fn steady_picard(&self) -> PicardConfig {
        PicardConfig {
            n_steps: 0,
            ..self.cfg.picard.clone()
        }
    }

    pub fn time_picard(&self) -> Result<PicardConfig> {
        if self.cfg.picard.n_steps == 0 {
            return Err(Error::Config("time-dependent run needs picard.n_steps >= 1".into()));
        }
        Ok(self.cfg.picard.clone())
    }

    pub fn schedule(&self) -> Result<Vec<usize>> {
        schedule_enrichment(self.time_picard()?.n_steps, self.cfg.schedule.as_deref())
    }

    /// Nodal source values of the steady or time-dependent experiment.
    pub fn source(&self, steady: bool) -> Vec<f64> {
        match (self.cfg.source, steady) {
            (SourceKind::Zero, _) => vec![0.0; self.ctx.n_nodes()],
            (SourceKind::Paper, true) => vec![1.0; self.ctx.n_nodes()],
            (SourceKind::Paper, false) => self.ctx.fine.interpolate(|x, y| (PI * x).sin() * (PI * y).cos()),
        }
    }

    /// Builds `V_off` from `κ` and runs the offline Picard solve.
    pub fn offline_run(&self, kappa: &[f64], nb: usize, picard: &PicardConfig) -> Result<OfflineRun> {
        let n = self.ctx.n_nodes();
        let space = build_offline_space(&self.ctx, kappa, &vec![0.0; n], nb)?;
        let source = self.source(picard.is_steady());
        let trace = offline_picard_solve(&self.ctx, &space, kappa, |_| source.clone(), picard)?;
        Ok(OfflineRun {
            space,
            trace,
            load: self.ctx.solver.assembler().load(&source),
            inv_tau: picard.inv_tau(),
            initial: vec![0.0; n],
        })
    }

    /// Direct online bases at the 1-based `step` of an offline run.
    pub fn online_bases(&self, run: &OfflineRun, kappa: &[f64], step: usize) -> Result<Vec<OnlineBasis>> {
        run.check_step(step)?;
        let st = &run.trace.steps[step - 1];
        compute_online_bases(
            &self.ctx,
            kappa,
            st.picard.previous_iterate(),
            st.pressure(),
            run.previous_state(step),
            &run.load,
            run.inv_tau,
            LinearizationTag {
                time_step: step,
                picard_index: st.picard.iterations,
            },
        )
    }

    /// The extra Picard step in `V_off` plus online columns, at every step of
    /// the run. `events` lists `(step, columns)`; each event's columns replace
    /// the previous ones and stay in use until the next event.
    pub fn enriched_trajectory(
        &self,
        run: &OfflineRun,
        kappa: &[f64],
        events: &[(usize, Vec<BasisColumn>)],
    ) -> Result<Vec<Vec<f64>>> {
        let mut space = enrich_with_columns(&run.space, Vec::new())?;
        let mut out = Vec::with_capacity(run.n_steps());
        for s in 1..=run.n_steps() {
            if let Some((_, cols)) = events.iter().find(|(e, _)| *e == s) {
                space = enrich_with_columns(&run.space, cols.clone())?;
            }
            let st = &run.trace.steps[s - 1];
            let sol = online_picard_step(
                &self.ctx,
                &space,
                kappa,
                &run.load,
                run.previous_state(s),
                st.picard.previous_iterate(),
                run.inv_tau,
            )
            .map_err(|e| annotate(e, &format!("online step {s}")))?;
            out.push(sol.fine);
        }
        Ok(out)
    }

    /// `κ` restricted to every neighborhood, in canonical patch coordinates.
    pub fn kappa_patches(&self, kappa: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.ctx
            .neighborhoods
            .iter()
            .map(|nb| canonical_patch_embedding(nb, &nb.restrict(kappa)))
            .collect()
    }

    pub fn basis_patch(&self, col: &BasisColumn) -> Result<Vec<f64>> {
        canonical_patch_embedding(&self.ctx.neighborhoods[col.vertex], &col.values)
    }

    pub fn predicted_columns(&self, net: &Network, kappa_patches: &[Vec<f64>]) -> Result<Vec<BasisColumn>> {
        predict_many(&net.model, &net.bounds, kappa_patches)?
            .iter()
            .enumerate()
            .map(|(j, patch)| predicted_column(&self.ctx, j, patch))
            .collect()
    }

    /// Network sized `[m, hidden..., m]`, seeded per `(Nb, mode)`.
    pub fn init_network(&self, nb: usize, mode: DatasetMode) -> Result<MlpModel> {
        let m = self.patch_size();
        let mut widths = vec![m];
        widths.extend(&self.cfg.hidden_widths);
        widths.push(m);
        let step = match mode {
            DatasetMode::Steady => 0,
            DatasetMode::Time(s) => s as u64,
        };
        MlpModel::init(&widths, hash_seed(self.cfg.seed, &[NETWORK_TAG, nb as u64, step]))
    }
}

fn sample_records(exp: &Experiment, index: usize, nb: usize, steps: &[usize], steady: bool) -> Result<Vec<Vec<DatasetRecord>>> {
    let field = exp.field(index)?;
    let kappa = &field.values;
    let picard = if steady { exp.steady_picard() } else { exp.time_picard()? };
    let run = exp.offline_run(kappa, nb, &picard)?;
    let patches = exp.kappa_patches(kappa)?;
    steps
        .iter()
        .map(|&s| {
            exp.online_bases(&run, kappa, s)?
                .iter()
                .map(|b| {
                    Ok(DatasetRecord {
                        vertex: b.vertex as u32,
                        seed: field.seed,
                        kappa: patches[b.vertex].clone(),
                        phi: exp.basis_patch(&b.phi)?,
                    })
                })
                .collect()
        })
        .collect()
}

/// Sample pairs for several enrichment events of one run; all modes must be
/// time events, or a single steady mode.
pub fn gen_datasets(exp: &Experiment, nb: usize, modes: &[DatasetMode]) -> Result<Vec<DatasetFile>> {
    let steady = match modes {
        [DatasetMode::Steady] => true,
        _ if !modes.is_empty() && modes.iter().all(|m| matches!(m, DatasetMode::Time(_))) => false,
        _ => return Err(Error::Config("dataset modes must be one steady mode or time steps only".into())),
    };
    let steps: Vec<usize> = modes
        .iter()
        .map(|m| match m {
            DatasetMode::Steady => 1,
            DatasetMode::Time(s) => *s,
        })
        .collect();
    if !steady {
        let n_steps = exp.time_picard()?.n_steps;
        if let Some(&bad) = steps.iter().find(|&&s| s == 0 || s > n_steps) {
            return Err(Error::Config(format!("dataset step {bad} outside [1, {n_steps}]")));
        }
    }
    let train_seeds: HashSet<u64> = (0..exp.cfg.n_train).map(|i| exp.sample_seed(i)).collect();
    if exp.test_indices().any(|i| train_seeds.contains(&exp.sample_seed(i))) {
        return Err(Error::Config("training and test seeds intersect".into()));
    }

    let total = exp.cfg.n_samples();
    let results = crate::par::map_range(total, |i| sample_records(exp, i, nb, &steps, steady));
    let failures: Vec<(usize, &Error)> = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
        .collect();
    for (i, e) in &failures {
        log::warn!("sample {i} (seed {}) failed: {e}", exp.sample_seed(*i));
    }
    if failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
        let (i, e) = failures[0];
        return Err(Error::Numerical(format!(
            "{} of {total} samples failed; first failure at sample {i}: {e}",
            failures.len()
        )));
    }
    let train_ok = results[..exp.cfg.n_train].iter().filter(|r| r.is_ok()).count();
    let ok: Vec<Vec<Vec<DatasetRecord>>> = results.into_iter().filter_map(|r| r.ok()).collect();
    modes
        .iter()
        .enumerate()
        .map(|(e, &mode)| {
            let header = DatasetHeader {
                patch_size: exp.patch_size(),
                n_vertices: exp.n_vertices(),
                samples_per_neighborhood: ok.len(),
                train_samples: train_ok,
                nb,
                mode,
            };
            DatasetFile::new(header, ok.iter().flat_map(|s| s[e].iter().cloned()).collect())
        })
        .collect()
}

pub fn gen_dataset(exp: &Experiment, nb: usize, mode: DatasetMode) -> Result<DatasetFile> {
    Ok(gen_datasets(exp, nb, &[mode])?.remove(0))
}

fn split_columns(records: &[DatasetRecord]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    records.iter().map(|r| (r.kappa.clone(), r.phi.clone())).unzip()
}

/// Trains a fresh network on the training records of `data`.
pub fn train_network(exp: &Experiment, data: &DatasetFile) -> Result<TrainOutcome> {
    if data.header.patch_size != exp.patch_size() {
        return Err(Error::Dimension {
            expected: exp.patch_size(),
            actual: data.header.patch_size,
        });
    }
    let model = exp.init_network(data.header.nb, data.header.mode)?;
    let (inputs, targets) = split_columns(data.train_records());
    train(model, &inputs, &targets, &exp.cfg.train)
}

/// Relative basis error of `net` over `records`.
pub fn basis_rmse(net: &Network, records: &[DatasetRecord]) -> Result<RelError> {
    let (inputs, targets) = split_columns(records);
    crate::surrogate::rmse(&net.model, &net.bounds, &inputs, &targets)
}

/// Per-test-sample basis errors on the test split, highlighted at test sample 0.
pub fn eval_basis(net: &Network, data: &DatasetFile) -> Result<ErrorReport> {
    let errs = (data.header.train_samples..data.header.samples_per_neighborhood)
        .map(|s| Ok(basis_rmse(net, data.sample_records(s))?.value))
        .collect::<Result<Vec<f64>>>()?;
    aggregate(&errs, Some(0))
}

/// Wall-clock samples, one `(quantity, seconds)` pair per measurement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimingLog {
    pub samples: Vec<(String, f64)>,
}

impl TimingLog {
    pub fn record(&mut self, quantity: impl Into<String>, seconds: f64) {
        self.samples.push((quantity.into(), seconds));
    }

    pub fn extend(&mut self, other: TimingLog) {
        self.samples.extend(other.samples);
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimingRow {
    pub quantity: String,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// One row per quantity, in order of first appearance.
pub fn report_timing(log: &TimingLog) -> Vec<TimingRow> {
    let mut names: Vec<&str> = Vec::new();
    for (q, _) in &log.samples {
        if !names.contains(&q.as_str()) {
            names.push(q);
        }
    }
    names
        .into_iter()
        .map(|q| {
            let v: Vec<f64> = log.samples.iter().filter(|(n, _)| n == q).map(|(_, s)| *s).collect();
            TimingRow {
                quantity: q.to_string(),
                count: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

fn elapsed(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn column_error(pred: &[BasisColumn], direct: &[BasisColumn]) -> RelError {
    let p: Vec<Vec<f64>> = pred.iter().map(|c| c.values.clone()).collect();
    let d: Vec<Vec<f64>> = direct.iter().map(|c| c.values.clone()).collect();
    rmse_values(&p, &d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyRow {
    pub nb: usize,
    /// Predicted against direct online bases.
    pub basis: ErrorReport,
    /// `p_ms_pred` against `p_ms`.
    pub l2: ErrorReport,
    pub h1: ErrorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyReport {
    pub rows: Vec<SteadyRow>,
    pub timing: TimingLog,
}

/// Steady experiment over the test samples, one row per `(Nb, network)`.
pub fn run_steady(exp: &Experiment, networks: &[(usize, Network)]) -> Result<SteadyReport> {
    let picard = exp.steady_picard();
    let mut timing = TimingLog::default();
    let mut rows = Vec::with_capacity(networks.len());
    let nv = exp.n_vertices() as f64;
    for (nb, net) in networks {
        let nb = *nb;
        let (mut basis, mut l2, mut h1) = (Vec::new(), Vec::new(), Vec::new());
        for index in exp.test_indices() {
            let ctx_err = |e: Error| annotate(e, &format!("Nb {nb}, test sample {index}"));
            let field = exp.field(index)?;
            let kappa = &field.values;
            let t = Instant::now();
            let run = exp.offline_run(kappa, nb, &picard).map_err(ctx_err)?;
            let t_off = elapsed(t);

            let t = Instant::now();
            let direct: Vec<BasisColumn> = exp
                .online_bases(&run, kappa, 1)
                .map_err(ctx_err)?
                .into_iter()
                .map(|b| b.phi)
                .collect();
            let t_direct = elapsed(t);
            let t = Instant::now();
            let p_ms = exp.enriched_trajectory(&run, kappa, &[(1, direct.clone())]).map_err(ctx_err)?;
            let t_solve = elapsed(t);

            let t = Instant::now();
            let pred = exp.predicted_columns(net, &exp.kappa_patches(kappa)?)?;
            let t_pred = elapsed(t);
            let t = Instant::now();
            let p_pred = exp.enriched_trajectory(&run, kappa, &[(1, pred.clone())]).map_err(ctx_err)?;
            let t_solve_pred = elapsed(t);

            timing.record(format!("nb{nb}_direct_basis_per_basis"), t_direct / nv);
            timing.record(format!("nb{nb}_predicted_basis_per_basis"), t_pred / nv);
            timing.record(format!("nb{nb}_online_gmsfem_solve"), t_off + t_direct + t_solve);
            timing.record(format!("nb{nb}_predicted_solve"), t_off + t_pred + t_solve_pred);

            basis.push(column_error(&pred, &direct).value);
            let (e2, e1) = rel_l2_h1_solution(&p_pred[0], &p_ms[0], exp.ctx.solver.mass(), &exp.ctx.unit_stiffness);
            l2.push(e2.value);
            h1.push(e1.value);
        }
        rows.push(SteadyRow {
            nb,
            basis: aggregate(&basis, Some(0))?,
            l2: aggregate(&l2, Some(0))?,
            h1: aggregate(&h1, Some(0))?,
        });
    }
    Ok(SteadyReport { rows, timing })
}

/// Errors at one enrichment event, over the test samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    pub step: usize,
    pub basis: ErrorReport,
    pub l2: ErrorReport,
    pub h1: ErrorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeRow {
    pub nb: usize,
    pub last_l2: ErrorReport,
    pub last_h1: ErrorReport,
    pub bochner_l2: ErrorReport,
    pub bochner_h1: ErrorReport,
    pub series: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeReport {
    pub rows: Vec<TimeRow>,
    pub timing: TimingLog,
}

/// Time-dependent experiment. Each entry holds `Nb` and one network per
/// enrichment step of the schedule.
pub fn run_time_dependent(exp: &Experiment, networks: &[(usize, Vec<(usize, Network)>)]) -> Result<TimeReport> {
    let picard = exp.time_picard()?;
    let schedule = exp.schedule()?;
    let mut timing = TimingLog::default();
    let mut rows = Vec::with_capacity(networks.len());
    let nv = exp.n_vertices() as f64;
    let (mass, stiff) = (exp.ctx.solver.mass(), &exp.ctx.unit_stiffness);
    for (nb, nets) in networks {
        let nb = *nb;
        let steps: Vec<usize> = nets.iter().map(|(s, _)| *s).collect();
        if steps != schedule {
            return Err(Error::Config(format!(
                "Nb {nb}: networks for steps {steps:?} do not match the schedule {schedule:?}"
            )));
        }
        let n_ev = schedule.len();
        let mut last = (Vec::new(), Vec::new());
        let mut boch = (Vec::new(), Vec::new());
        let mut series = vec![(Vec::new(), Vec::new(), Vec::new()); n_ev];
        for index in exp.test_indices() {
            let ctx_err = |e: Error| annotate(e, &format!("Nb {nb}, test sample {index}"));
            let field = exp.field(index)?;
            let kappa = &field.values;
            let run = exp.offline_run(kappa, nb, &picard).map_err(ctx_err)?;
            let patches = exp.kappa_patches(kappa)?;
            let mut direct = Vec::with_capacity(n_ev);
            let mut pred = Vec::with_capacity(n_ev);
            for (s, net) in nets {
                let t = Instant::now();
                let cols: Vec<BasisColumn> = exp
                    .online_bases(&run, kappa, *s)
                    .map_err(ctx_err)?
                    .into_iter()
                    .map(|b| b.phi)
                    .collect();
                timing.record(format!("nb{nb}_direct_basis_per_basis"), elapsed(t) / nv);
                direct.push((*s, cols));
                let t = Instant::now();
                let cols = exp.predicted_columns(net, &patches)?;
                timing.record(format!("nb{nb}_predicted_basis_per_basis"), elapsed(t) / nv);
                pred.push((*s, cols));
            }
            let p_ms = exp.enriched_trajectory(&run, kappa, &direct).map_err(ctx_err)?;
            let p_pred = exp.enriched_trajectory(&run, kappa, &pred).map_err(ctx_err)?;
            let (e2, e1) = rel_l2_h1_solution(&p_pred[p_pred.len() - 1], &p_ms[p_ms.len() - 1], mass, stiff);
            last.0.push(e2.value);
            last.1.push(e1.value);
            let ta: Vec<&[f64]> = p_pred.iter().map(Vec::as_slice).collect();
            let tb: Vec<&[f64]> = p_ms.iter().map(Vec::as_slice).collect();
            let (b2, b1) = bochner_errors(&ta, &tb, mass, stiff, picard.tau)?;
            boch.0.push(b2.value);
            boch.1.push(b1.value);
            for (e, (s, _)) in nets.iter().enumerate() {
                let (s2, s1) = rel_l2_h1_solution(&p_pred[s - 1], &p_ms[s - 1], mass, stiff);
                series[e].0.push(column_error(&pred[e].1, &direct[e].1).value);
                series[e].1.push(s2.value);
                series[e].2.push(s1.value);
            }
        }
        rows.push(TimeRow {
            nb,
            last_l2: aggregate(&last.0, Some(0))?,
            last_h1: aggregate(&last.1, Some(0))?,
            bochner_l2: aggregate(&boch.0, Some(0))?,
            bochner_h1: aggregate(&boch.1, Some(0))?,
            series: schedule
                .iter()
                .zip(&series)
                .map(|(&step, (b, l, h))| {
                    Ok(SeriesPoint {
                        step,
                        basis: aggregate(b, Some(0))?,
                        l2: aggregate(l, Some(0))?,
                        h1: aggregate(h, Some(0))?,
                    })
                })
                .collect::<Result<_>>()?,
        });
    }
    Ok(TimeReport { rows, timing })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> RunConfig {
        RunConfig {
            fine_n: 8,
            coarse_n: 2,
            nb: vec![2],
            n_train: 3,
            n_test: 2,
            hidden_widths: vec![6],
            picard: PicardConfig {
                n_steps: 3,
                tau: 25e-7,
                ..PicardConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn seeds_are_distinct_and_fields_in_range() {
        let exp = Experiment::new(tiny_cfg()).unwrap();
        let seeds: HashSet<u64> = (0..5).map(|i| exp.sample_seed(i)).collect();
        assert_eq!(seeds.len(), 5);
        let f = exp.field(0).unwrap();
        let lo = f.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = f.values.iter().copied().fold(0.0, f64::max);
        assert!((lo - 10.0).abs() < 1e-9 && (hi - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn steady_dataset_counts_and_determinism() {
        let exp = Experiment::new(tiny_cfg()).unwrap();
        let d = gen_dataset(&exp, 2, DatasetMode::Steady).unwrap();
        assert_eq!(d.records.len(), 9 * 5);
        assert_eq!(d.train_records().len(), 9 * 3);
        assert_eq!(d.header.patch_size, 81);
        let again = gen_dataset(&exp, 2, DatasetMode::Steady).unwrap();
        let (mut a, mut b) = (Vec::new(), Vec::new());
        d.write(&mut a).unwrap();
        again.write(&mut b).unwrap();
        assert_eq!(a, b);
        // targets vanish on the patch rim and outside the domain
        for r in &d.records {
            let nb = &exp.ctx.neighborhoods[r.vertex as usize];
            for (l, &g) in nb.fine_node_indices.iter().enumerate() {
                let pos = nb.patch_position(l);
                if nb.local_boundary_flags[l] || exp.ctx.fine.boundary_node_flags[g] {
                    assert_eq!(r.phi[pos], 0.0);
                }
            }
        }
    }

    #[test]
    fn time_datasets_share_inputs_across_events() {
        let exp = Experiment::new(tiny_cfg()).unwrap();
        let ds = gen_datasets(&exp, 2, &[DatasetMode::Time(1), DatasetMode::Time(3)]).unwrap();
        assert_eq!(ds.len(), 2);
        for (a, b) in ds[0].records.iter().zip(&ds[1].records) {
            assert_eq!(a.kappa, b.kappa);
            assert_eq!(a.seed, b.seed);
        }
        assert!(gen_datasets(&exp, 2, &[DatasetMode::Time(4)]).is_err());
        assert!(gen_datasets(&exp, 2, &[DatasetMode::Steady, DatasetMode::Time(1)]).is_err());
    }

    #[test]
    fn direct_columns_as_predictions_give_zero_error() {
        let exp = Experiment::new(tiny_cfg()).unwrap();
        let kappa = exp.field(3).unwrap().values;
        let run = exp.offline_run(&kappa, 2, &exp.steady_picard()).unwrap();
        let cols: Vec<BasisColumn> = exp.online_bases(&run, &kappa, 1).unwrap().into_iter().map(|b| b.phi).collect();
        let a = exp.enriched_trajectory(&run, &kappa, &[(1, cols.clone())]).unwrap();
        let patches: Vec<Vec<f64>> = cols.iter().map(|c| exp.basis_patch(c).unwrap()).collect();
        let through_patch: Vec<BasisColumn> = patches
            .iter()
            .enumerate()
            .map(|(j, p)| predicted_column(&exp.ctx, j, p).unwrap())
            .collect();
        assert_eq!(column_error(&through_patch, &cols).value, 0.0);
        let b = exp.enriched_trajectory(&run, &kappa, &[(1, through_patch)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn timing_rows_aggregate_per_quantity() {
        let mut log = TimingLog::default();
        log.record("a", 1.0);
        log.record("b", 4.0);
        log.record("a", 3.0);
        let rows = report_timing(&log);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[0].count, rows[0].mean, rows[0].min, rows[0].max), (2, 2.0, 1.0, 3.0));
        assert_eq!(rows[1].quantity, "b");
    }
}
