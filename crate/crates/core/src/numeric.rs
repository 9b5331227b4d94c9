//! Small numerical helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// `log(sum(exp(xs)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Multivariate log-gamma `ln Γ_d(x)`.
pub fn ln_multigamma(x: f64, d: usize) -> f64 {
    let df = d as f64;
    let mut acc = df * (df - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for i in 0..d {
        acc += ln_gamma(x - i as f64 / 2.0);
    }
    acc
}

/// Multivariate digamma `ψ_d(x) = Σ_i ψ(x - i/2)`.
pub fn multi_digamma(x: f64, d: usize) -> f64 {
    (0..d).map(|i| digamma(x - i as f64 / 2.0)).sum()
}

/// Cholesky factor of a symmetric positive-definite matrix.
///
/// On failure the matrix is jittered with growing multiples of the identity before giving up.
pub fn cholesky(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let sym = symmetrize(m);
    if let Some(c) = sym.clone().cholesky() {
        return Ok(c);
    }
    let scale = sym.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    let n = sym.nrows();
    let mut eps = 1e-10 * scale;
    for _ in 0..12 {
        let jittered = &sym + DMatrix::<f64>::identity(n, n) * eps;
        if let Some(c) = jittered.cholesky() {
            return Ok(c);
        }
        eps *= 10.0;
    }
    Err(Error::Fit("matrix is not positive definite".into()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `log |M|` from a Cholesky factor.
pub fn chol_logdet(c: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    Ok(chol_logdet(&cholesky(m)?))
}

pub fn inverse_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(symmetrize(&cholesky(m)?.inverse()))
}

/// Log density of `N(x; mean, cov)`.
pub fn gaussian_log_density(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let c = cholesky(cov)?;
    let diff = x - mean;
    let z = c.l_dirty().solve_lower_triangular(&diff).ok_or_else(|| Error::Fit("singular covariance".into()))?;
    Ok(-0.5 * (x.len() as f64 * LN_2PI + chol_logdet(&c) + z.norm_squared()))
}

/// Normalizes a non-negative vector in place; a zero vector becomes uniform.
pub fn normalize(v: &mut [f64]) {
    let s: f64 = v.iter().sum();
    if s > 0.0 && s.is_finite() {
        v.iter_mut().for_each(|x| *x /= s);
    } else if !v.is_empty() {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
}

/// Index of the maximal element; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ if x.is_nan() => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_naive() {
        let xs = [0.1, -2.0, 3.5];
        let naive = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), Some(1));
        assert_eq!(argmax(&[]), None);
    }

    #[test]
    fn multigamma_reduces_to_lgamma() {
        assert!((ln_multigamma(3.2, 1) - ln_gamma(3.2)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_density_standard() {
        let x = DVector::from_vec(vec![0.0, 0.0]);
        let lp = gaussian_log_density(&x, &x, &DMatrix::identity(2, 2)).unwrap();
        assert!((lp + LN_2PI).abs() < 1e-12);
    }
}
