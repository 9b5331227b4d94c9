//! Matrix-normal inverse-Wishart posterior for per-state linear-Gaussian emissions
//! `x = A y + e`, `e ~ N(0, Σ)`.
//!
//! A first-order VAR uses `y = x_prev`; a plain Gaussian state uses the constant regressor
//! `y = [1]`, so `A` is the state mean and the prior reduces to a normal-inverse-Wishart.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::numeric::{chol_logdet, cholesky, inverse_spd, ln_multigamma, multi_digamma, symmetrize, LN_2PI};

/// `Σ ~ IW(nu, psi)`, `A | Σ ~ MN(m, Σ, v)` with `v` the column covariance.
#[derive(Debug, Clone)]
pub struct Mniw {
    pub m: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub nu: f64,
    pub psi: DMatrix<f64>,
}

/// Weighted sufficient statistics of `(x, y)` pairs.
#[derive(Debug, Clone)]
pub struct RegressionStats {
    pub n: f64,
    pub syy: DMatrix<f64>,
    pub sxy: DMatrix<f64>,
    pub sxx: DMatrix<f64>,
}

impl RegressionStats {
    pub fn zeros(d: usize, p: usize) -> Self {
        RegressionStats { n: 0.0, syy: DMatrix::zeros(p, p), sxy: DMatrix::zeros(d, p), sxx: DMatrix::zeros(d, d) }
    }

    /// Accumulates `Σ_t w_t (x_t, y_t)` with rows of `x` and `y` as observations.
    pub fn accumulate(&mut self, x: &DMatrix<f64>, y: &DMatrix<f64>, w: &[f64]) {
        let mut xw = x.clone();
        let mut yw = y.clone();
        for (t, &wt) in w.iter().enumerate() {
            xw.row_mut(t).scale_mut(wt);
            yw.row_mut(t).scale_mut(wt);
        }
        self.n += w.iter().sum::<f64>();
        self.syy += y.transpose() * &yw;
        self.sxy += xw.transpose() * y;
        self.sxx += x.transpose() * &xw;
    }

    pub fn add(&mut self, other: &RegressionStats) {
        self.n += other.n;
        self.syy += &other.syy;
        self.sxy += &other.sxy;
        self.sxx += &other.sxx;
    }
}

impl Mniw {
    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn regressors(&self) -> usize {
        self.m.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim() as f64;
        if !(self.nu > d + 1.0) {
            return Err(Error::invalid(format!("nu = {} must exceed d + 1 = {}", self.nu, d + 1.0)));
        }
        if self.v.nrows() != self.regressors() || self.psi.nrows() != self.dim() {
            return Err(Error::invalid("prior matrix shapes are inconsistent"));
        }
        for (name, m) in [("V", &self.v), ("Delta", &self.psi)] {
            if (m - m.transpose()).abs().max() > 1e-9 * m.abs().max().max(1.0) {
                return Err(Error::invalid(format!("{name} is not symmetric")));
            }
            if m.clone().cholesky().is_none() {
                return Err(Error::invalid(format!("{name} is not positive definite")));
            }
        }
        Ok(())
    }

    /// Conjugate update.
    pub fn posterior(&self, s: &RegressionStats) -> Result<Mniw> {
        let v0_inv = inverse_spd(&self.v)?;
        let vn_inv = symmetrize(&(&v0_inv + &s.syy));
        let vn = inverse_spd(&vn_inv)?;
        let m0v0 = &self.m * &v0_inv;
        let mn = (&m0v0 + &s.sxy) * &vn;
        let psi = &self.psi + &s.sxx + &m0v0 * self.m.transpose() - &mn * &vn_inv * mn.transpose();
        Ok(Mniw { m: mn, v: vn, nu: self.nu + s.n, psi: symmetrize(&psi) })
    }

    /// `E[log |Σ|]`.
    pub fn expected_logdet_sigma(&self, psi_chol: &Cholesky<f64, Dyn>) -> f64 {
        let d = self.dim();
        chol_logdet(psi_chol) - d as f64 * std::f64::consts::LN_2 - multi_digamma(self.nu / 2.0, d)
    }

    /// Posterior mean of `Σ`.
    pub fn mean_sigma(&self) -> DMatrix<f64> {
        &self.psi / (self.nu - self.dim() as f64 - 1.0)
    }

    /// `E_q[log N(x_t | A y_t, Σ)]` for every row of `x` / `y`.
    pub fn expected_log_lik(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<Vec<f64>> {
        let d = self.dim() as f64;
        let chol = cholesky(&self.psi)?;
        let elogdet = self.expected_logdet_sigma(&chol);
        let resid = x - y * self.m.transpose();
        let z = chol.l_dirty().solve_lower_triangular(&resid.transpose()).ok_or_else(|| Error::Fit("singular scale matrix".into()))?;
        let yv = y * &self.v;
        let base = -0.5 * (d * LN_2PI + elogdet);
        Ok((0..x.nrows())
            .map(|t| {
                let maha = z.column(t).norm_squared();
                let lever = yv.row(t).dot(&y.row(t));
                base - 0.5 * (self.nu * maha + d * lever)
            })
            .collect())
    }

    /// `KL(self ‖ prior)` for the joint `(A, Σ)`.
    pub fn kl_from(&self, prior: &Mniw) -> Result<f64> {
        let d = self.dim();
        let p = self.regressors() as f64;
        let df = d as f64;
        let cq = cholesky(&self.psi)?;
        let c0 = cholesky(&prior.psi)?;
        let psi_q_inv = cq.inverse();
        // Wishart KL on the precision matrices
        let tr = (&prior.psi * &psi_q_inv).trace();
        let kl_iw = (self.nu - prior.nu) / 2.0 * multi_digamma(self.nu / 2.0, d)
            + self.nu / 2.0 * (tr - df)
            + prior.nu / 2.0 * (chol_logdet(&cq) - chol_logdet(&c0))
            + ln_multigamma(prior.nu / 2.0, d)
            - ln_multigamma(self.nu / 2.0, d);
        let cv0 = cholesky(&prior.v)?;
        let cvn = cholesky(&self.v)?;
        let v0_inv = cv0.inverse();
        let dm = &self.m - &prior.m;
        let maha = (&psi_q_inv * &dm * &v0_inv * dm.transpose()).trace();
        let kl_mn = 0.5 * (df * (&v0_inv * &self.v).trace() + self.nu * maha - df * p + df * (chol_logdet(&cv0) - chol_logdet(&cvn)));
        Ok(kl_iw + kl_mn)
    }
}

/// Plug-in log density `log N(x | A y, Σ)` helper used by trained models.
#[derive(Debug, Clone)]
pub struct PlugIn {
    pub a: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    base: f64,
}

impl PlugIn {
    pub fn new(a: DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<Self> {
        let chol = cholesky(sigma)?;
        let base = -0.5 * (a.nrows() as f64 * LN_2PI + chol_logdet(&chol));
        Ok(PlugIn { a, chol, base })
    }

    pub fn log_density(&self, x: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let r = x - &self.a * y;
        let z = self.chol.l_dirty().solve_lower_triangular(&r).expect("triangular solve on a Cholesky factor");
        self.base - 0.5 * z.norm_squared()
    }

    /// Density of a zero residual.
    pub fn log_density_at_zero(&self) -> f64 {
        self.base
    }
}
