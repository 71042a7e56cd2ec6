//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fine_solver::PicardConfig;
use crate::grids::{all_neighborhoods, build_grids};
use crate::random_fields::CovarianceParams;
use crate::surrogate::TrainConfig;

/// Right-hand side of the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `f = 1` for the steady run, `f = sin(πx) cos(πy)` for the time-dependent run.
    #[default]
    Paper,
    /// `f ≡ 0` control.
    Zero,
}

/// Every key is optional; missing keys take the desk-scale defaults and
/// unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Fine cells per side of the unit square.
    pub fine_n: usize,
    /// Coarse blocks per side.
    pub coarse_n: usize,
    pub covariance: CovarianceParams,
    /// Fraction of covariance energy kept by the KLE truncation.
    pub energy_fraction: f64,
    /// `[κ_min, κ_max]`.
    pub kappa_range: [f64; 2],
    /// Offline basis counts per neighborhood, one experiment row each.
    pub nb: Vec<usize>,
    /// Training samples per neighborhood (`N_s`).
    pub n_train: usize,
    /// Test samples per neighborhood (`M`).
    pub n_test: usize,
    /// Picard settings. `n_steps` and `tau` apply to the time-dependent run;
    /// the steady run ignores them.
    pub picard: PicardConfig,
    /// Enrichment time steps; `null` selects {1, 5, 10, 15, 20} clipped to `n_steps`.
    pub schedule: Option<Vec<usize>>,
    /// Hidden layer widths; input and output widths equal the patch size.
    pub hidden_widths: Vec<usize>,
    pub train: TrainConfig,
    /// Base seed for permeability samples and network initialization.
    pub seed: u64,
    pub source: SourceKind,
    /// Output directory.
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            fine_n: 32,
            coarse_n: 4,
            covariance: CovarianceParams::default(),
            energy_fraction: 0.95,
            kappa_range: [10.0, 2000.0],
            nb: vec![2, 4, 6, 8, 12, 16],
            n_train: 200,
            n_test: 50,
            picard: PicardConfig {
                n_steps: 20,
                tau: 25e-7,
                ..PicardConfig::default()
            },
            schedule: None,
            hidden_widths: vec![256, 224, 192],
            train: TrainConfig::default(),
            seed: 1,
            source: SourceKind::Paper,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn kappa_range(&self) -> (f64, f64) {
        (self.kappa_range[0], self.kappa_range[1])
    }

    /// Total samples per neighborhood, train first.
    pub fn n_samples(&self) -> usize {
        self.n_train + self.n_test
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fine_n", self.fine_n),
            ("coarse_n", self.coarse_n),
            ("n_train", self.n_train),
            ("n_test", self.n_test),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.nb.is_empty() || self.nb.contains(&0) {
            return Err(Error::Config("nb must be a nonempty list of positive counts".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        let [lo, hi] = self.kappa_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!("kappa_range [{lo}, {hi}] must satisfy 0 < min < max")));
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "energy_fraction {} outside (0, 1]",
                self.energy_fraction
            )));
        }
        self.covariance.validate()?;
        self.picard.validate()?;
        self.train.validate()?;
        let (fine, coarse) = build_grids(self.fine_n, self.coarse_n)?;
        let min_snapshots = all_neighborhoods(&coarse, &fine)
            .iter()
            .map(|nb| nb.patch_boundary_node_indices.len())
            .min()
            .unwrap_or(0);
        if let Some(&bad) = self.nb.iter().find(|&&n| n > min_snapshots) {
            return Err(Error::Config(format!(
                "nb = {bad} exceeds the smallest snapshot space ({min_snapshots})"
            )));
        }
        Ok(())
    }
}
