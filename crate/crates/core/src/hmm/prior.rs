use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const RIDGE: f64 = 1e-6;

/// Empirical-Bayes IW prior: `nu = d + 2` and `E[Σ] = s_f` × pooled covariance.
pub fn empirical_bayes_init<S: AsRef<[DVector<f64>]>>(trials: &[S], s_f: f64) -> Result<(f64, DMatrix<f64>)> {
    let frames: Vec<&DVector<f64>> = trials.iter().flat_map(|t| t.as_ref().iter()).collect();
    let d = frames.first().map(|f| f.len()).ok_or_else(|| Error::invalid("no samples"))?;
    if frames.len() <= d {
        return Err(Error::invalid(format!("need more than {d} samples, got {}", frames.len())));
    }
    if frames.iter().any(|f| f.len() != d) {
        return Err(Error::invalid("samples have mixed dimensions"));
    }
    if !(s_f > 0.0) {
        return Err(Error::invalid("s_F must be positive"));
    }
    let n = frames.len() as f64;
    let mean = frames.iter().fold(DVector::zeros(d), |acc, f| acc + *f) / n;
    let mut scatter = DMatrix::zeros(d, d);
    for f in &frames {
        let c = *f - &mean;
        scatter += &c * c.transpose();
    }
    let mut expected = scatter * (s_f / n);
    let rank = expected.clone().svd(false, false).rank(1e-12 * expected.abs().max().max(1e-300));
    if rank < d {
        log::warn!("pooled covariance has rank {rank} < {d}; adding {RIDGE}·I");
        expected += DMatrix::identity(d, d) * RIDGE;
    }
    let nu = d as f64 + 2.0;
    Ok((nu, expected * ((nu - d as f64 - 1.0) / nu)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_summation() {
        let data = vec![vec![
            DVector::from_row_slice(&[1.0, 0.0]),
            DVector::from_row_slice(&[-1.0, 0.0]),
            DVector::from_row_slice(&[0.0, 1.0]),
            DVector::from_row_slice(&[0.0, -1.0]),
        ]];
        // covariance diag(0.5, 0.5), nu = 4, Delta = Σ/4
        let (nu, delta) = empirical_bayes_init(&data, 1.0).unwrap();
        assert_eq!(nu, 4.0);
        assert!((delta[(0, 0)] - 0.125).abs() < 1e-12);
        assert!((delta[(1, 1)] - 0.125).abs() < 1e-12);
        assert!(delta[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_is_regularized() {
        let data = vec![(0..10).map(|i| DVector::from_row_slice(&[i as f64, 2.0 * i as f64])).collect::<Vec<_>>()];
        let (_, delta) = empirical_bayes_init(&data, 1.0).unwrap();
        assert!(delta.clone().cholesky().is_some());
    }

    #[test]
    fn too_few_samples() {
        let data = vec![vec![DVector::from_row_slice(&[1.0, 2.0]), DVector::from_row_slice(&[0.0, 1.0])]];
        assert!(empirical_bayes_init(&data, 1.0).is_err());
    }
}
