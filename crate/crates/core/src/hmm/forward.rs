use nalgebra::{DMatrix, DVector};

use super::regression::PlugIn;
use super::{HmmModel, ObservationKind};
use crate::error::{Error, Result};

fn lse_iter(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + it.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub(crate) struct LocalResult {
    pub resp: DMatrix<f64>,
    pub xi: DMatrix<f64>,
    pub log_z: f64,
}

/// Log-space forward-backward on (possibly sub-normalized) log weights.
pub(crate) fn forward_backward(le: &DMatrix<f64>, log_pi0: &[f64], log_a: &DMatrix<f64>) -> LocalResult {
    let (t_len, k) = le.shape();
    let mut la = DMatrix::from_element(t_len, k, f64::NEG_INFINITY);
    for i in 0..k {
        la[(0, i)] = log_pi0[i] + le[(0, i)];
    }
    for t in 1..t_len {
        for i in 0..k {
            la[(t, i)] = le[(t, i)] + lse_iter((0..k).map(|j| la[(t - 1, j)] + log_a[(j, i)]));
        }
    }
    let log_z = lse_iter((0..k).map(|i| la[(t_len - 1, i)]));
    let mut lb = DMatrix::zeros(t_len, k);
    for t in (0..t_len.saturating_sub(1)).rev() {
        for j in 0..k {
            lb[(t, j)] = lse_iter((0..k).map(|i| log_a[(j, i)] + le[(t + 1, i)] + lb[(t + 1, i)]));
        }
    }
    let resp = DMatrix::from_fn(t_len, k, |t, i| (la[(t, i)] + lb[(t, i)] - log_z).exp());
    let mut xi = DMatrix::zeros(k, k);
    for t in 1..t_len {
        for j in 0..k {
            let a = la[(t - 1, j)] - log_z;
            if a == f64::NEG_INFINITY {
                continue;
            }
            for i in 0..k {
                xi[(j, i)] += (a + log_a[(j, i)] + le[(t, i)] + lb[(t, i)]).exp();
            }
        }
    }
    LocalResult { resp, xi, log_z }
}

/// Incremental log-space forward filter on a trained model.
#[derive(Debug, Clone)]
pub struct ForwardFilter {
    observation: ObservationKind,
    dim: usize,
    emit: Vec<PlugIn>,
    log_pi0: Vec<f64>,
    log_trans: DMatrix<f64>,
    log_belief: Vec<f64>,
    prev: Option<DVector<f64>>,
    cumulative: f64,
    steps: usize,
}

impl ForwardFilter {
    pub fn new(model: &HmmModel) -> Result<Self> {
        let emit = model.obs.iter().map(|o| PlugIn::new(o.regression(), o.cov())).collect::<Result<Vec<_>>>()?;
        let k = model.k();
        Ok(ForwardFilter {
            observation: model.observation,
            dim: model.dim,
            emit,
            log_pi0: model.pi0.iter().map(|p| p.ln()).collect(),
            log_trans: DMatrix::from_fn(k, k, |i, j| model.trans[i][j].ln()),
            log_belief: Vec::new(),
            prev: None,
            cumulative: 0.0,
            steps: 0,
        })
    }

    pub fn reset(&mut self) {
        self.log_belief.clear();
        self.prev = None;
        self.cumulative = 0.0;
        self.steps = 0;
    }

    /// Per-state emission log densities for `x` given the previous observation.
    fn emissions(&self, x: &DVector<f64>) -> Vec<f64> {
        match (self.observation, &self.prev) {
            (ObservationKind::Gaussian, _) => {
                let one = DVector::from_element(1, 1.0);
                self.emit.iter().map(|e| e.log_density(x, &one)).collect()
            }
            (ObservationKind::Var1 | ObservationKind::AffineVar1, None) => self.emit.iter().map(|e| e.log_density_at_zero()).collect(),
            (ObservationKind::Var1, Some(prev)) => self.emit.iter().map(|e| e.log_density(x, prev)).collect(),
            (ObservationKind::AffineVar1, Some(prev)) => {
                let y = prev.clone().insert_row(prev.len(), 1.0);
                self.emit.iter().map(|e| e.log_density(x, &y)).collect()
            }
        }
    }

    /// Appends one observation and returns `L_t − L_{t−1}`.
    pub fn push(&mut self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!("observation has dimension {}, model expects {}", x.len(), self.dim)));
        }
        let le = self.emissions(x);
        let k = le.len();
        let un: Vec<f64> = if self.steps == 0 {
            (0..k).map(|i| self.log_pi0[i] + le[i]).collect()
        } else {
            (0..k).map(|i| le[i] + lse_iter((0..k).map(|j| self.log_belief[j] + self.log_trans[(j, i)]))).collect()
        };
        let c = lse_iter(un.iter().copied());
        self.log_belief = un.into_iter().map(|u| u - c).collect();
        self.cumulative += c;
        self.steps += 1;
        self.prev = Some(x.clone());
        Ok(c)
    }

    pub fn cumulative(&self) -> f64 {
        self.cumulative
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Filtered state posterior.
    pub fn belief(&self) -> Vec<f64> {
        self.log_belief.iter().map(|l| l.exp()).collect()
    }
}

/// Cumulative log-likelihood of the first `upto` observations (all if `None`).
pub fn log_likelihood(model: &HmmModel, seq: &[DVector<f64>], upto: Option<usize>) -> Result<f64> {
    model.check_dim(seq)?;
    let n = upto.unwrap_or(seq.len());
    if n > seq.len() {
        return Err(Error::invalid(format!("upto = {n} exceeds sequence length {}", seq.len())));
    }
    let mut f = ForwardFilter::new(model)?;
    for x in &seq[..n] {
        f.push(x)?;
    }
    Ok(f.cumulative())
}

/// `∇L_t` for every prefix.
pub fn forward_gradient(model: &HmmModel, seq: &[DVector<f64>]) -> Result<Vec<f64>> {
    model.check_dim(seq)?;
    let mut f = ForwardFilter::new(model)?;
    seq.iter().map(|x| f.push(x)).collect()
}

/// Most probable state path (0-based state indices; ties resolve to the lower index).
pub fn viterbi(model: &HmmModel, seq: &[DVector<f64>]) -> Result<Vec<usize>> {
    model.check_dim(seq)?;
    if seq.is_empty() {
        return Ok(Vec::new());
    }
    let mut f = ForwardFilter::new(model)?;
    let k = model.k();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(seq.len());
    let mut delta: Vec<f64> = Vec::new();
    for (t, x) in seq.iter().enumerate() {
        let le = f.emissions(x);
        if t == 0 {
            delta = (0..k).map(|i| f.log_pi0[i] + le[i]).collect();
            back.push(vec![0; k]);
        } else {
            let mut next = vec![f64::NEG_INFINITY; k];
            let mut ptr = vec![0; k];
            for i in 0..k {
                for j in 0..k {
                    let s = delta[j] + f.log_trans[(j, i)];
                    if s > next[i] {
                        next[i] = s;
                        ptr[i] = j;
                    }
                }
                next[i] += le[i];
            }
            delta = next;
            back.push(ptr);
        }
        f.prev = Some(x.clone());
    }
    let mut state = crate::numeric::argmax(&delta).unwrap_or(0);
    let mut path = vec![0; seq.len()];
    for t in (0..seq.len()).rev() {
        path[t] = state;
        state = back[t][state];
    }
    Ok(path)
}
