//! Log-normal permeability fields from a truncated Karhunen-Loève expansion,
//! and the pressure-dependent conductivity.

use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grids::FineGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceParams {
    pub sigma2: f64,
    pub eta1: f64,
    pub eta2: f64,
}

impl Default for CovarianceParams {
    fn default() -> Self {
        Self {
            sigma2: 2.0,
            eta1: 0.05,
            eta2: 0.2,
        }
    }
}

impl CovarianceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.eta1 > 0.0 && self.eta2 > 0.0) {
            return Err(Error::Config(format!(
                "covariance parameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }

    /// `σ² exp(−√(|x₁−x̂₁|²/η₁² + |x₂−x̂₂|²/η₂²))`.
    pub fn covariance(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let dx = (x[0] - y[0]) / self.eta1;
        let dy = (x[1] - y[1]) / self.eta2;
        self.sigma2 * (-(dx * dx + dy * dy).sqrt()).exp()
    }
}

pub fn covariance_matrix(fine: &FineGrid, params: &CovarianceParams) -> DMatrix<f64> {
    let n = fine.n_nodes();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = params.covariance(fine.nodes[i], fine.nodes[j]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct KleBasis {
    /// Retained eigenvalues, nonincreasing.
    pub eigenvalues: Vec<f64>,
    /// Retained eigenvectors, one nodal vector each.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Sum of all clipped eigenvalues, retained or not.
    pub total_energy: f64,
}

impl KleBasis {
    pub fn n_terms(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.eigenvectors.first().map_or(0, Vec::len)
    }

    pub fn captured_energy(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Keeps only the first `n` terms.
    pub fn truncated(&self, n: usize) -> KleBasis {
        let n = n.min(self.n_terms());
        KleBasis {
            eigenvalues: self.eigenvalues[..n].to_vec(),
            eigenvectors: self.eigenvectors[..n].to_vec(),
            total_energy: self.total_energy,
        }
    }

    /// `Υ = Σ √γ_k ζ_k φ_k`.
    pub fn synthesize(&self, zeta: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_nodes()];
        for ((g, phi), z) in self.eigenvalues.iter().zip(&self.eigenvectors).zip(zeta) {
            let c = g.sqrt() * z;
            for (yi, p) in y.iter_mut().zip(phi) {
                *yi += c * p;
            }
        }
        y
    }
}

pub fn build_kle(fine: &FineGrid, params: &CovarianceParams, energy_fraction: f64) -> Result<KleBasis> {
    params.validate()?;
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "energy_fraction must lie in (0, 1], got {energy_fraction}"
        )));
    }
    let c = covariance_matrix(fine, params);
    let n = c.nrows();
    let eig = SymmetricEigen::try_new(c, f64::EPSILON, 0).ok_or_else(|| {
        Error::Numerical(format!("covariance eigensolver did not converge ({n}x{n})"))
    })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let gammas: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let total: f64 = gammas.iter().sum();
    let target = energy_fraction * total;
    let mut acc = 0.0;
    let mut n_terms = n;
    for (k, g) in gammas.iter().enumerate() {
        acc += g;
        // relative slack so a fraction of 1 is reachable despite summation order
        if acc >= target * (1.0 - 1e-14) {
            n_terms = k + 1;
            break;
        }
    }
    let eigenvectors = order[..n_terms]
        .iter()
        .map(|&k| eig.eigenvectors.column(k).iter().copied().collect())
        .collect();
    Ok(KleBasis {
        eigenvalues: gammas[..n_terms].to_vec(),
        eigenvectors,
        total_energy: total,
    })
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with stream tags into one 64-bit key.
pub fn hash_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |h, &t| splitmix64(h ^ splitmix64(t.wrapping_add(GOLDEN))))
}

/// Deterministic generator keyed by `(base, tags…)`.
pub fn keyed_rng(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_seed(base, tags))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PermeabilityField {
    pub values: Vec<f64>,
    pub range: (f64, f64),
    pub seed: u64,
}

/// Maps `Υ` affinely in the log onto `[ln κ_min, ln κ_max]`.
pub fn rescale_log_field(upsilon: &[f64], range: (f64, f64)) -> Vec<f64> {
    let (kmin, kmax) = range;
    let lo = upsilon.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = upsilon.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo >= 1e-14) {
        return vec![(kmin * kmax).sqrt(); upsilon.len()];
    }
    let (lmin, lmax) = (kmin.ln(), kmax.ln());
    let a = (lmax - lmin) / (hi - lo);
    upsilon
        .iter()
        .map(|&u| {
            if u == lo {
                kmin
            } else if u == hi {
                kmax
            } else {
                (lmin + a * (u - lo)).exp().clamp(kmin, kmax)
            }
        })
        .collect()
}

pub fn sample_zeta(n_terms: usize, seed: u64) -> Vec<f64> {
    let mut rng = keyed_rng(seed, &[]);
    (0..n_terms).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn sample_field(basis: &KleBasis, seed: u64, range: (f64, f64)) -> Result<PermeabilityField> {
    if basis.n_terms() == 0 {
        return Err(Error::Config("KLE basis has no terms".into()));
    }
    let (kmin, kmax) = range;
    if !(kmax > kmin && kmin > 0.0 && kmax.is_finite()) {
        return Err(Error::Config(format!(
            "permeability range must satisfy 0 < min < max, got ({kmin}, {kmax})"
        )));
    }
    let upsilon = basis.synthesize(&sample_zeta(basis.n_terms(), seed));
    Ok(PermeabilityField {
        values: rescale_log_field(&upsilon, range),
        range,
        seed,
    })
}

/// `ϰ = κ / (1 + |p|)`.
pub fn conductivity(kappa: &[f64], p: &[f64]) -> Result<Vec<f64>> {
    if kappa.len() != p.len() {
        return Err(Error::Dimension {
            expected: kappa.len(),
            actual: p.len(),
        });
    }
    if let Some(i) = p.iter().position(|v| !v.is_finite()) {
        return Err(Error::Input(format!("pressure is not finite at node {i}")));
    }
    Ok(kappa.iter().zip(p).map(|(k, p)| k / (1.0 + p.abs())).collect())
}

const MSRF_MAGIC: &[u8; 4] = b"MSRF";
const MSRF_VERSION: u32 = 1;

pub fn write_field<W: Write>(mut w: W, values: &[f64]) -> Result<()> {
    w.write_all(MSRF_MAGIC)?;
    w.write_all(&MSRF_VERSION.to_le_bytes())?;
    w.write_all(&(values.len() as u64).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> Result<Vec<f64>> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..4] != MSRF_MAGIC {
        return Err(Error::Format("missing MSRF magic".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != MSRF_VERSION {
        return Err(Error::Format(format!("unsupported MSRF version {version}")));
    }
    let n = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::build_grids;

    #[test]
    fn covariance_diagonal_and_symmetry() {
        let (fine, _) = build_grids(4, 2).unwrap();
        let c = covariance_matrix(&fine, &CovarianceParams::default());
        for i in 0..fine.n_nodes() {
            assert_eq!(c[(i, i)], 2.0);
        }
        assert_eq!(c.clone(), c.transpose());
    }

    #[test]
    fn small_grid_energy_equals_trace() {
        let (fine, _) = build_grids(2, 1).unwrap();
        let params = CovarianceParams {
            sigma2: 2.0,
            eta1: 0.2,
            eta2: 0.2,
        };
        let c = covariance_matrix(&fine, &params);
        let trace: f64 = (0..9).map(|i| c[(i, i)]).sum();
        assert_eq!(trace, 18.0);
        let kle = build_kle(&fine, &params, 1.0).unwrap();
        assert!((kle.total_energy - trace).abs() < 1e-10);
        assert!(kle.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn field_attains_range_and_is_deterministic() {
        let (fine, _) = build_grids(8, 2).unwrap();
        let kle = build_kle(&fine, &CovarianceParams::default(), 0.95).unwrap();
        let a = sample_field(&kle, 7, (10.0, 2000.0)).unwrap();
        let b = sample_field(&kle, 7, (10.0, 2000.0)).unwrap();
        assert_eq!(a, b);
        let lo = a.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = a.values.iter().copied().fold(0.0, f64::max);
        assert_eq!(lo, 10.0);
        assert_eq!(hi, 2000.0);
        assert!(sample_field(&kle.truncated(0), 7, (10.0, 2000.0)).is_err());
        assert_ne!(a.values, sample_field(&kle, 8, (10.0, 2000.0)).unwrap().values);
    }

    #[test]
    fn flat_field_maps_to_geometric_mean() {
        let k = rescale_log_field(&[0.5; 4], (10.0, 1000.0));
        assert!(k.iter().all(|&v| (v - 100.0).abs() < 1e-12));
    }

    #[test]
    fn conductivity_examples() {
        let c = conductivity(&[10.0, 10.0, 10.0, 2000.0], &[0.0, 1.0, -1.0, -3.0]).unwrap();
        assert_eq!(c, vec![10.0, 5.0, 5.0, 500.0]);
        assert!(conductivity(&[1.0], &[f64::NAN]).is_err());
    }

    #[test]
    fn msrf_round_trip() {
        let v = vec![1.5, -2.0, 1e300, 0.0];
        let mut buf = Vec::new();
        write_field(&mut buf, &v).unwrap();
        assert_eq!(buf.len(), 16 + 32);
        assert_eq!(&buf[..4], b"MSRF");
        assert_eq!(read_field(buf.as_slice()).unwrap(), v);
        buf[0] = b'X';
        assert!(read_field(buf.as_slice()).is_err());
    }

    #[test]
    fn seed_hash_separates_streams() {
        assert_ne!(hash_seed(1, &[0]), hash_seed(1, &[1]));
        assert_ne!(hash_seed(1, &[0, 1]), hash_seed(1, &[1, 0]));
        assert_eq!(hash_seed(5, &[3]), hash_seed(5, &[3]));
    }
}
