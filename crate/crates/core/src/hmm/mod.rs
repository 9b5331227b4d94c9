//! Bayesian non-parametric sequence models.
//!
//! Allocation: a parametric HMM or a truncated sticky HDP-HMM. Observation: a full-covariance
//! Gaussian or a first-order vector autoregression per state. Training is mean-field
//! variational coordinate ascent with merge and delete moves; queries run on the
//! posterior-mean parameters.
//!
//! The first sample of a VAR sequence (plain or affine) has no predecessor. It is scored as a zero innovation,
//! i.e. the noise density at the origin, both in training and at test time.

mod alloc;
mod forward;
mod prior;
mod regression;
mod select;
mod vb;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forward::{forward_gradient, log_likelihood, viterbi, ForwardFilter};
pub use prior::empirical_bayes_init;
pub use regression::{Mniw, RegressionStats};
pub use select::{kfold_indices, select_hyperparams, select_model_kfold, Selection};
pub use vb::{fit, FitConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocationKind {
    FiniteHmm,
    StickyHdp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Gaussian,
    Var1,
    /// VAR(1) with a per-state intercept: regressor `[x_{t−1}; 1]`.
    AffineVar1,
}

impl ObservationKind {
    /// Regressor dimension for data of dimension `d`.
    pub fn regressors(self, d: usize) -> usize {
        match self {
            ObservationKind::Gaussian => 1,
            ObservationKind::Var1 => d,
            ObservationKind::AffineVar1 => d + 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Gamma shape and rate on `α + κ`.
    pub a: f64,
    pub b: f64,
    /// Beta prior on the self-transition fraction `κ / (α + κ)`.
    pub c: f64,
    pub d: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub nu: f64,
    pub delta: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub s_f: f64,
    pub k_trunc: usize,
    pub max_iter: usize,
    pub n_restarts: usize,
    pub tol: f64,
    /// Enables merge and delete moves.
    pub moves: bool,
}

impl Hyperparams {
    /// Defaults for `dim`-dimensional data with an identity-scale prior.
    pub fn new(dim: usize, observation: ObservationKind) -> Self {
        let p = observation.regressors(dim);
        let nu = dim as f64 + 2.0;
        Hyperparams {
            a: 0.5,
            b: 5.0,
            c: 1.0,
            d: 10.0,
            gamma: 1.0,
            kappa: 50.0,
            nu,
            delta: DMatrix::identity(dim, dim) / nu,
            m: DMatrix::zeros(dim, p),
            v: DMatrix::identity(p, p),
            s_f: 1.0,
            k_trunc: 10,
            max_iter: 1000,
            n_restarts: 3,
            tol: 1e-6,
            moves: true,
        }
    }

    /// Defaults with `(nu, Delta)` set by empirical Bayes on `trials`.
    pub fn empirical<S: AsRef<[DVector<f64>]>>(trials: &[S], observation: ObservationKind) -> Result<Self> {
        let dim = trials.first().and_then(|t| t.as_ref().first()).map(|f| f.len()).ok_or_else(|| Error::invalid("no data"))?;
        let mut h = Hyperparams::new(dim, observation);
        let (nu, delta) = empirical_bayes_init(trials, h.s_f)?;
        h.nu = nu;
        h.delta = delta;
        Ok(h)
    }

    pub fn dim(&self) -> usize {
        self.delta.nrows()
    }

    pub fn validate(&self, observation: ObservationKind) -> Result<()> {
        let dim = self.dim();
        if self.m.nrows() != dim || self.m.ncols() != observation.regressors(dim) {
            return Err(Error::invalid(format!("M must be {}x{}", dim, observation.regressors(dim))));
        }
        if self.k_trunc < 1 {
            return Err(Error::invalid("K_trunc must be at least 1"));
        }
        if self.kappa < 0.0 || !self.kappa.is_finite() {
            return Err(Error::invalid("kappa must be non-negative"));
        }
        for (name, x) in [("a", self.a), ("b", self.b), ("c", self.c), ("d", self.d), ("gamma", self.gamma)] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.n_restarts == 0 || self.max_iter == 0 {
            return Err(Error::invalid("n_restarts and max_iter must be positive"));
        }
        self.obs_prior().validate()
    }

    /// IW scale `Ψ = ν Δ` so that `E[Σ] = ν Δ / (ν − d − 1)`.
    pub fn obs_prior(&self) -> Mniw {
        Mniw { m: self.m.clone(), v: self.v.clone(), nu: self.nu, psi: &self.delta * self.nu }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObsParams {
    Gaussian { mean: DVector<f64>, cov: DMatrix<f64> },
    Var1 { a: DMatrix<f64>, cov: DMatrix<f64> },
    AffineVar1 { a: DMatrix<f64>, b: DVector<f64>, cov: DMatrix<f64> },
}

impl ObsParams {
    pub fn cov(&self) -> &DMatrix<f64> {
        match self {
            ObsParams::Gaussian { cov, .. } | ObsParams::Var1 { cov, .. } | ObsParams::AffineVar1 { cov, .. } => cov,
        }
    }

    /// Regression-form matrix (`d×1` mean for Gaussian states).
    pub fn regression(&self) -> DMatrix<f64> {
        match self {
            ObsParams::Gaussian { mean, .. } => DMatrix::from_column_slice(mean.len(), 1, mean.as_slice()),
            ObsParams::Var1 { a, .. } => a.clone(),
            ObsParams::AffineVar1 { a, b, .. } => {
                let d = a.nrows();
                DMatrix::from_fn(d, d + 1, |i, j| if j < d { a[(i, j)] } else { b[i] })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HmmModel {
    pub version: u32,
    pub allocation: AllocationKind,
    pub observation: ObservationKind,
    pub dim: usize,
    pub pi0: Vec<f64>,
    pub trans: Vec<Vec<f64>>,
    pub obs: Vec<ObsParams>,
    pub hyper: Hyperparams,
    pub alpha: f64,
    pub elbo_trace: Vec<f64>,
    /// Expected number of frames assigned to each exported state.
    pub occupancy: Vec<f64>,
}

impl HmmModel {
    pub fn k(&self) -> usize {
        self.pi0.len()
    }

    pub fn final_elbo(&self) -> f64 {
        self.elbo_trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Mean self-transition probability.
    pub fn self_transition_mass(&self) -> f64 {
        (0..self.k()).map(|j| self.trans[j][j]).sum::<f64>() / self.k() as f64
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 || self.trans.len() != k || self.obs.len() != k {
            return Err(Error::invalid("inconsistent state count"));
        }
        let close = |s: f64| (s - 1.0).abs() <= 1e-9;
        if !close(self.pi0.iter().sum()) || !self.trans.iter().all(|r| r.len() == k && close(r.iter().sum())) {
            return Err(Error::invalid("distributions are not normalized"));
        }
        for o in &self.obs {
            if o.cov().nrows() != self.dim || o.cov().clone().cholesky().is_none() {
                return Err(Error::invalid("state covariance is not positive definite"));
            }
        }
        Ok(())
    }

    pub fn to_writer<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn from_reader<R: Read>(r: R) -> Result<Self> {
        let m: HmmModel = serde_json::from_reader(r)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::invalid(format!("unsupported model version {}", m.version)));
        }
        m.validate()?;
        Ok(m)
    }

    pub(crate) fn check_dim(&self, seq: &[DVector<f64>]) -> Result<()> {
        match seq.iter().find(|x| x.len() != self.dim) {
            Some(x) => Err(Error::invalid(format!("observation has dimension {}, model expects {}", x.len(), self.dim))),
            None => Ok(()),
        }
    }
}

/// Observation rows `x` and regressor rows `y` of one sequence.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

impl Design {
    pub fn new(frames: &[DVector<f64>], observation: ObservationKind) -> Self {
        let t = frames.len();
        let d = frames.first().map_or(0, |f| f.len());
        match observation {
            ObservationKind::Gaussian => Design { x: DMatrix::from_fn(t, d, |i, j| frames[i][j]), y: DMatrix::from_element(t, 1, 1.0) },
            ObservationKind::Var1 => Design {
                x: DMatrix::from_fn(t, d, |i, j| if i == 0 { 0.0 } else { frames[i][j] }),
                y: DMatrix::from_fn(t, d, |i, j| if i == 0 { 0.0 } else { frames[i - 1][j] }),
            },
            ObservationKind::AffineVar1 => Design {
                x: DMatrix::from_fn(t, d, |i, j| if i == 0 { 0.0 } else { frames[i][j] }),
                y: DMatrix::from_fn(t, d + 1, |i, j| match (i, j) {
                    (0, _) => 0.0,
                    (_, j) if j == d => 1.0,
                    (i, j) => frames[i - 1][j],
                }),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }
}

impl AsRef<[DVector<f64>]> for crate::signals::FeatureSequence {
    fn as_ref(&self) -> &[DVector<f64>] {
        &self.frames
    }
}

#[cfg(test)]
pub(crate) mod testutil;
