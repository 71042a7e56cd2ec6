//! Relative error measures and their aggregation over samples.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fine_solver::sparse::CsrMatrix;

/// A relative error. `degenerate` marks a zero reference norm; the value is
/// then 0 when the numerator is also zero and `+∞` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelError {
    pub value: f64,
    pub degenerate: bool,
}

impl RelError {
    pub fn from_squares(num2: f64, den2: f64) -> Self {
        if den2 > 0.0 {
            Self {
                value: (num2.max(0.0) / den2).sqrt(),
                degenerate: false,
            }
        } else {
            Self {
                value: if num2 > 0.0 { f64::INFINITY } else { 0.0 },
                degenerate: true,
            }
        }
    }
}

/// `‖pred − target‖₂ / ‖target‖₂`.
pub fn rel_l2_vector(pred: &[f64], target: &[f64]) -> RelError {
    let num2: f64 = pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
    let den2: f64 = target.iter().map(|b| b * b).sum();
    RelError::from_squares(num2, den2)
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Relative `L²` and `H¹`-seminorm errors of `p_a` against `p_b`, with `K`
/// the unit-coefficient stiffness matrix.
pub fn rel_l2_h1_solution(
    p_a: &[f64],
    p_b: &[f64],
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
) -> (RelError, RelError) {
    let d = diff(p_a, p_b);
    (
        RelError::from_squares(mass.bilinear(&d, &d), mass.bilinear(p_b, p_b)),
        RelError::from_squares(stiffness.bilinear(&d, &d), stiffness.bilinear(p_b, p_b)),
    )
}

/// `L²(0,T; L²)` and `L²(0,T; H¹)` relative errors by the rectangle rule.
pub fn bochner_errors(
    traj_a: &[&[f64]],
    traj_b: &[&[f64]],
    mass: &CsrMatrix,
    stiffness: &CsrMatrix,
    tau: f64,
) -> Result<(RelError, RelError)> {
    if traj_a.len() != traj_b.len() {
        return Err(Error::Dimension {
            expected: traj_b.len(),
            actual: traj_a.len(),
        });
    }
    if traj_a.is_empty() {
        return Err(Error::Input("Bochner errors need at least one time step".into()));
    }
    let (mut nm, mut dm, mut nk, mut dk) = (0.0, 0.0, 0.0, 0.0);
    for (a, b) in traj_a.iter().zip(traj_b) {
        let d = diff(a, b);
        nm += tau * mass.bilinear(&d, &d);
        dm += tau * mass.bilinear(b, b);
        nk += tau * stiffness.bilinear(&d, &d);
        dk += tau * stiffness.bilinear(b, b);
    }
    Ok((RelError::from_squares(nm, dm), RelError::from_squares(nk, dk)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub values: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub highlight: Option<f64>,
}

pub fn aggregate(values: &[f64], highlight_index: Option<usize>) -> Result<ErrorReport> {
    if values.is_empty() {
        return Err(Error::Input("cannot aggregate an empty error list".into()));
    }
    let highlight = match highlight_index {
        Some(i) if i >= values.len() => {
            return Err(Error::Index {
                index: i,
                len: values.len(),
            })
        }
        Some(i) => Some(values[i]),
        None => None,
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / values.len() as f64;
    Ok(ErrorReport {
        values: values.to_vec(),
        // clamp guards round-off in the mean of identical values
        mean: mean.clamp(sorted[0], sorted[sorted.len() - 1]),
        min: sorted[0],
        max: sorted[sorted.len() - 1],
        highlight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fine_solver::{assemble_mass, assemble_stiffness};
    use crate::grids::build_grids;

    #[test]
    fn vector_examples() {
        let t = [1.0, -2.0, 3.0];
        assert_eq!(rel_l2_vector(&t, &t).value, 0.0);
        assert!((rel_l2_vector(&[2.0, -4.0, 6.0], &t).value - 1.0).abs() < 1e-15);
        assert_eq!(rel_l2_vector(&[0.0; 3], &t).value, 1.0);
        let z = rel_l2_vector(&[0.0; 3], &[0.0; 3]);
        assert!(z.degenerate && z.value == 0.0);
        let z = rel_l2_vector(&[1.0, 0.0, 0.0], &[0.0; 3]);
        assert!(z.degenerate && z.value.is_infinite());
    }

    #[test]
    fn solution_errors_against_dense_quadrature() {
        let (fine, _) = build_grids(4, 2).unwrap();
        let n = fine.n_nodes();
        let m = assemble_mass(&fine);
        let k = assemble_stiffness(&fine, &vec![1.0; n]).unwrap();
        let center = fine.node_index(2, 2);
        let mut hat = vec![0.0; n];
        hat[center] = 1.0;
        let d: Vec<f64> = (0..n).map(|i| if fine.boundary_node_flags[i] { 0.0 } else { 0.3 }).collect();
        let p_a: Vec<f64> = hat.iter().zip(&d).map(|(h, d)| h + d).collect();
        let (el2, eh1) = rel_l2_h1_solution(&p_a, &hat, &m, &k);
        let (md, kd) = (m.to_dense(), k.to_dense());
        let dv = nalgebra::DVector::from_vec(d);
        let hv = nalgebra::DVector::from_vec(hat.clone());
        let o_l2 = ((dv.transpose() * &md * &dv)[(0, 0)] / (hv.transpose() * &md * &hv)[(0, 0)]).sqrt();
        let o_h1 = ((dv.transpose() * &kd * &dv)[(0, 0)] / (hv.transpose() * &kd * &hv)[(0, 0)]).sqrt();
        assert!(el2.value > 0.0 && eh1.value > 0.0);
        assert!((el2.value - o_l2).abs() < 1e-12);
        assert!((eh1.value - o_h1).abs() < 1e-12);
        let twice: Vec<f64> = hat.iter().map(|v| 2.0 * v).collect();
        let (a, b) = rel_l2_h1_solution(&twice, &hat, &m, &k);
        assert!((a.value - 1.0).abs() < 1e-14 && (b.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bochner_examples() {
        let (fine, _) = build_grids(4, 2).unwrap();
        let n = fine.n_nodes();
        let m = assemble_mass(&fine);
        let k = assemble_stiffness(&fine, &vec![1.0; n]).unwrap();
        let b: Vec<f64> = (0..n).map(|i| if fine.boundary_node_flags[i] { 0.0 } else { 1.0 + i as f64 }).collect();
        let a: Vec<f64> = b.iter().map(|v| 1.5 * v).collect();
        let ta = vec![a.as_slice(); 4];
        let tb = vec![b.as_slice(); 4];
        let (l2, h1) = bochner_errors(&ta, &tb, &m, &k, 0.1).unwrap();
        let (s2, sh) = rel_l2_h1_solution(&a, &b, &m, &k);
        assert!((l2.value - s2.value).abs() < 1e-14 && (h1.value - sh.value).abs() < 1e-14);
        let (z, _) = bochner_errors(&tb, &tb, &m, &k, 0.1).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(bochner_errors(&ta[..2], &tb, &m, &k, 0.1).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let r = aggregate(&[1.0, 2.0, 3.0], Some(0)).unwrap();
        assert_eq!((r.mean, r.min, r.max, r.highlight), (2.0, 1.0, 3.0, Some(1.0)));
        let r = aggregate(&[0.7], None).unwrap();
        assert_eq!((r.mean, r.min, r.max), (0.7, 0.7, 0.7));
        assert!(aggregate(&[], None).is_err());
    }
}
