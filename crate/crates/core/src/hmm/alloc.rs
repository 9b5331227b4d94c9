//! Transition posterior for the parametric HMM and the truncated sticky HDP-HMM.
//!
//! Rows are Dirichlet over `K` active states plus, for the HDP, one remainder atom
//! holding the stick mass beyond the truncation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use super::{AllocationKind, Hyperparams};

const MIN_STICK: f64 = 1e-10;

/// Point-estimated top-level weights and concentration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopLevel {
    pub alpha: f64,
    /// `K + 1` entries for the HDP (last is the remainder), `K` for the parametric HMM.
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TransitionPosterior {
    /// Row `j < K` is the transition out of state `j`; row `K` is the initial distribution.
    pub theta: Vec<Vec<f64>>,
    pub prior: Vec<Vec<f64>>,
}

pub(crate) struct Allocation<'h> {
    pub kind: AllocationKind,
    pub hyper: &'h Hyperparams,
}

fn sticks_to_beta(v: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(v.len() + 1);
    let mut rest = 1.0;
    for &vk in v {
        out.push(vk * rest);
        rest *= 1.0 - vk;
    }
    out.push(rest);
    out
}

fn beta_to_sticks(beta: &[f64]) -> Vec<f64> {
    let k = beta.len() - 1;
    let mut rest = 1.0;
    let mut v = Vec::with_capacity(k);
    for &b in &beta[..k] {
        let vk = (b / rest).clamp(MIN_STICK, 1.0 - MIN_STICK);
        v.push(vk);
        rest *= 1.0 - vk;
    }
    v
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(v: f64) -> f64 {
    (v / (1.0 - v)).ln()
}

/// `E[log π]` for a Dirichlet row; zero-parameter components map to `-inf`.
pub fn expected_log(theta: &[f64]) -> Vec<f64> {
    let total = digamma(theta.iter().sum());
    theta.iter().map(|&t| if t > 0.0 { digamma(t) - total } else { f64::NEG_INFINITY }).collect()
}

/// `KL(Dir(q) ‖ Dir(p))`, skipping components absent from both.
pub fn dirichlet_kl(q: &[f64], p: &[f64]) -> f64 {
    let sq: f64 = q.iter().sum();
    let sp: f64 = p.iter().sum();
    let dq = digamma(sq);
    let mut kl = ln_gamma(sq) - ln_gamma(sp);
    for (&a, &b) in q.iter().zip(p) {
        if a <= 0.0 {
            continue;
        }
        kl += ln_gamma(b) - ln_gamma(a) + (a - b) * (digamma(a) - dq);
    }
    kl
}

/// `E_q[log Dir(π | η)]` and its gradient in `η`.
fn expected_log_dir(eta: &[f64], elog: &[f64]) -> (f64, Vec<f64>) {
    let s: f64 = eta.iter().sum();
    let ds = digamma(s);
    let mut val = ln_gamma(s);
    let mut grad = Vec::with_capacity(eta.len());
    for (&e, &l) in eta.iter().zip(elog) {
        if e <= 0.0 {
            grad.push(0.0);
            continue;
        }
        val += -ln_gamma(e) + (e - 1.0) * l;
        grad.push(ds - digamma(e) + l);
    }
    (val, grad)
}

impl<'h> Allocation<'h> {
    pub fn initial_top_level(&self, k: usize) -> TopLevel {
        let beta = match self.kind {
            AllocationKind::FiniteHmm => vec![1.0 / k as f64; k],
            AllocationKind::StickyHdp => vec![1.0 / (k as f64 + 1.0); k + 1],
        };
        TopLevel { alpha: 1.0, beta }
    }

    /// Dirichlet prior parameters for every row.
    pub fn prior_rows(&self, top: &TopLevel, k: usize) -> Vec<Vec<f64>> {
        (0..=k)
            .map(|j| {
                let mut row: Vec<f64> = top.beta.iter().map(|b| top.alpha * b).collect();
                if j < k {
                    row[j] += self.hyper.kappa;
                }
                row
            })
            .collect()
    }

    pub fn posterior(&self, top: &TopLevel, start: &[f64], counts: &DMatrix<f64>) -> TransitionPosterior {
        let k = start.len();
        let prior = self.prior_rows(top, k);
        let theta = prior
            .iter()
            .enumerate()
            .map(|(j, row)| {
                let mut r = row.clone();
                for i in 0..k {
                    r[i] += if j < k { counts[(j, i)] } else { start[i] };
                }
                r
            })
            .collect();
        TransitionPosterior { theta, prior }
    }

    fn log_prior_alpha(&self, alpha: f64) -> (f64, f64) {
        let h = self.hyper;
        let s = alpha + h.kappa;
        let mut val = (h.a - 1.0) * s.ln() - h.b * s;
        let mut grad = (h.a - 1.0) / s - h.b;
        if h.kappa > 0.0 {
            let rho = h.kappa / s;
            val += (h.c - 1.0) * rho.ln() + (h.d - 1.0) * (1.0 - rho).ln();
            grad += -(h.c - 1.0) / s + (h.d - 1.0) * (1.0 / alpha - 1.0 / s);
        }
        (val, grad)
    }

    fn log_prior_sticks(&self, v: &[f64]) -> f64 {
        v.iter().map(|&vk| (self.hyper.gamma - 1.0) * (1.0 - vk).ln()).sum()
    }

    /// Log prior of the point estimates.
    pub fn log_prior(&self, top: &TopLevel) -> f64 {
        let mut lp = self.log_prior_alpha(top.alpha).0;
        if self.kind == AllocationKind::StickyHdp {
            lp += self.log_prior_sticks(&beta_to_sticks(&top.beta));
        }
        lp
    }

    /// Objective in the unconstrained parameters `[logit v_1.., log α]` and its gradient.
    fn objective(&self, params: &[f64], elogs: &[Vec<f64>], k: usize) -> (f64, Vec<f64>) {
        let alpha = params[params.len() - 1].exp();
        let hdp = self.kind == AllocationKind::StickyHdp;
        let (v, beta) = if hdp {
            let v: Vec<f64> = params[..k].iter().map(|&u| sigmoid(u).clamp(MIN_STICK, 1.0 - MIN_STICK)).collect();
            let b = sticks_to_beta(&v);
            (v, b)
        } else {
            (Vec::new(), vec![1.0 / k as f64; k])
        };
        let top = TopLevel { alpha, beta };
        let prior = self.prior_rows(&top, k);
        let mut val = 0.0;
        let mut d_beta = vec![0.0; top.beta.len()];
        let mut d_alpha = 0.0;
        for (eta, elog) in prior.iter().zip(elogs) {
            let (f, g) = expected_log_dir(eta, elog);
            val += f;
            for (m, gm) in g.iter().enumerate() {
                d_beta[m] += alpha * gm;
                d_alpha += gm * top.beta[m];
            }
        }
        let (lpa, glpa) = self.log_prior_alpha(alpha);
        val += lpa;
        d_alpha += glpa;
        let mut grad = Vec::with_capacity(params.len());
        if hdp {
            val += self.log_prior_sticks(&v);
            for kk in 0..k {
                let mut dv = d_beta[kk] * top.beta[kk] / v[kk];
                for m in kk + 1..=k {
                    dv -= d_beta[m] * top.beta[m] / (1.0 - v[kk]);
                }
                dv -= (self.hyper.gamma - 1.0) / (1.0 - v[kk]);
                grad.push(dv * v[kk] * (1.0 - v[kk]));
            }
        }
        grad.push(d_alpha * alpha);
        (val, grad)
    }

    /// Gradient ascent with backtracking; only improving steps are taken.
    pub fn optimize(&self, top: &TopLevel, post: &TransitionPosterior) -> TopLevel {
        let k = post.theta.len() - 1;
        let elogs: Vec<Vec<f64>> = post.theta.iter().map(|t| expected_log(t)).collect();
        let mut params: Vec<f64> = match self.kind {
            AllocationKind::StickyHdp => beta_to_sticks(&top.beta).into_iter().map(logit).collect(),
            AllocationKind::FiniteHmm => Vec::new(),
        };
        params.push(top.alpha.ln());
        let (mut f, mut g) = self.objective(&params, &elogs, k);
        let mut step = 1.0;
        for _ in 0..200 {
            let gnorm2: f64 = g.iter().map(|x| x * x).sum();
            if gnorm2 < 1e-16 {
                break;
            }
            let mut improved = false;
            while step > 1e-12 {
                let cand: Vec<f64> = params.iter().zip(&g).map(|(p, gi)| (p + step * gi).clamp(-30.0, 30.0)).collect();
                let (fc, gc) = self.objective(&cand, &elogs, k);
                if fc.is_finite() && fc > f {
                    let gain = fc - f;
                    params = cand;
                    f = fc;
                    g = gc;
                    step *= 2.0;
                    improved = gain > 1e-12 * (1.0 + f.abs());
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        let alpha = params[params.len() - 1].exp();
        let beta = match self.kind {
            AllocationKind::StickyHdp => {
                sticks_to_beta(&params[..k].iter().map(|&u| sigmoid(u).clamp(MIN_STICK, 1.0 - MIN_STICK)).collect::<Vec<_>>())
            }
            AllocationKind::FiniteHmm => vec![1.0 / k as f64; k],
        };
        TopLevel { alpha, beta }
    }

    /// Collapses the top level after removing state `k` (its weight joins the remainder).
    pub fn drop_state(&self, top: &TopLevel, k: usize) -> TopLevel {
        let mut beta = top.beta.clone();
        let w = beta.remove(k);
        match self.kind {
            AllocationKind::StickyHdp => *beta.last_mut().expect("remainder atom") += w,
            AllocationKind::FiniteHmm => {
                let n = beta.len() as f64;
                beta.iter_mut().for_each(|b| *b = 1.0 / n);
            }
        }
        TopLevel { alpha: top.alpha, beta }
    }

    /// Merges state `k` into state `j`.
    pub fn merge_states(&self, top: &TopLevel, j: usize, k: usize) -> TopLevel {
        let mut beta = top.beta.clone();
        let w = beta.remove(k);
        let j = if j > k { j - 1 } else { j };
        match self.kind {
            AllocationKind::StickyHdp => beta[j] += w,
            AllocationKind::FiniteHmm => {
                let n = beta.len() as f64;
                beta.iter_mut().for_each(|b| *b = 1.0 / n);
            }
        }
        TopLevel { alpha: top.alpha, beta }
    }
}

impl TransitionPosterior {
    pub fn kl(&self) -> f64 {
        self.theta.iter().zip(&self.prior).map(|(q, p)| dirichlet_kl(q, p)).sum()
    }

    /// `E[log π]` restricted to active states: `(initial, K×K transitions)`.
    pub fn expected_logs(&self) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.theta.len() - 1;
        let init = expected_log(&self.theta[k])[..k].to_vec();
        let mut trans = DMatrix::zeros(k, k);
        for j in 0..k {
            let e = expected_log(&self.theta[j]);
            for i in 0..k {
                trans[(j, i)] = e[i];
            }
        }
        (init, trans)
    }

    /// Posterior-mean initial distribution and transition matrix over active states, rows renormalized.
    pub fn expected_probs(&self, keep: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
        let k = self.theta.len() - 1;
        let row = |r: &[f64]| {
            let mut p: Vec<f64> = keep.iter().map(|&i| r[i]).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            p
        };
        let pi0 = row(&self.theta[k]);
        let mut trans = DMatrix::zeros(keep.len(), keep.len());
        for (a, &j) in keep.iter().enumerate() {
            for (b, p) in row(&self.theta[j]).into_iter().enumerate() {
                trans[(a, b)] = p;
            }
        }
        (pi0, trans)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hmm::{Hyperparams, ObservationKind};

    fn hyper() -> Hyperparams {
        Hyperparams::new(2, ObservationKind::Gaussian)
    }

    #[test]
    fn sticks_round_trip() {
        let v = [0.3, 0.5, 0.9];
        let b = sticks_to_beta(&v);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let back = beta_to_sticks(&b);
        for (x, y) in v.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dirichlet_kl_zero_at_equality_and_positive_otherwise() {
        assert!(dirichlet_kl(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).abs() < 1e-12);
        assert!(dirichlet_kl(&[5.0, 2.0, 1.0], &[1.0, 2.0, 3.0]) > 0.0);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let h = hyper();
        for kind in [AllocationKind::StickyHdp, AllocationKind::FiniteHmm] {
            let alloc = Allocation { kind, hyper: &h };
            let k = 3;
            let top = alloc.initial_top_level(k);
            let counts = DMatrix::from_row_slice(3, 3, &[40.0, 2.0, 1.0, 3.0, 30.0, 0.5, 0.0, 1.0, 20.0]);
            let post = alloc.posterior(&top, &[1.0, 0.5, 0.5], &counts);
            let elogs: Vec<Vec<f64>> = post.theta.iter().map(|t| expected_log(t)).collect();
            let params: Vec<f64> = match kind {
                AllocationKind::StickyHdp => vec![0.2, -0.4, 0.7, 0.3],
                AllocationKind::FiniteHmm => vec![0.3],
            };
            let (_, g) = alloc.objective(&params, &elogs, k);
            for i in 0..params.len() {
                let mut hi = params.clone();
                let mut lo = params.clone();
                hi[i] += 1e-6;
                lo[i] -= 1e-6;
                let fd = (alloc.objective(&hi, &elogs, k).0 - alloc.objective(&lo, &elogs, k).0) / 2e-6;
                assert!((fd - g[i]).abs() < 1e-4 * (1.0 + fd.abs()), "{kind:?} param {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn optimize_never_lowers_the_objective() {
        let h = hyper();
        let alloc = Allocation { kind: AllocationKind::StickyHdp, hyper: &h };
        let top = alloc.initial_top_level(4);
        let counts = DMatrix::from_fn(4, 4, |i, j| if i == j { 50.0 } else { 1.0 });
        let post = alloc.posterior(&top, &[1.0, 1.0, 0.0, 0.0], &counts);
        let before = -post.kl() + alloc.log_prior(&top);
        let new_top = alloc.optimize(&top, &post);
        let post2 = TransitionPosterior { theta: post.theta.clone(), prior: alloc.prior_rows(&new_top, 4) };
        let after = -post2.kl() + alloc.log_prior(&new_top);
        assert!(after >= before - 1e-9, "{after} < {before}");
        assert!((new_top.beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
