use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::alloc::{Allocation, TopLevel, TransitionPosterior};
use super::forward::forward_backward;
use super::regression::{Mniw, RegressionStats};
use super::{AllocationKind, Design, HmmModel, Hyperparams, ObsParams, ObservationKind, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};

const MOVE_EVERY: usize = 20;
const MERGE_CANDIDATES: usize = 5;
const DELETE_CANDIDATES: usize = 3;
const DELETE_FRACTION: f64 = 0.01;
const MOVE_SWEEPS: usize = 2;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub hyper: Hyperparams,
    pub allocation: AllocationKind,
    pub observation: ObservationKind,
}

impl FitConfig {
    pub fn new(hyper: Hyperparams, allocation: AllocationKind, observation: ObservationKind) -> Self {
        FitConfig { hyper, allocation, observation }
    }

    /// Default hyperparameters with an empirical-Bayes observation prior.
    pub fn empirical<S: AsRef<[DVector<f64>]>>(trials: &[S], allocation: AllocationKind, observation: ObservationKind) -> Result<Self> {
        Ok(FitConfig { hyper: Hyperparams::empirical(trials, observation)?, allocation, observation })
    }
}

/// Expected sufficient statistics of one local step.
#[derive(Debug, Clone)]
struct Summary {
    stats: Vec<RegressionStats>,
    start: Vec<f64>,
    xi: DMatrix<f64>,
}

impl Summary {
    fn k(&self) -> usize {
        self.stats.len()
    }

    fn occupancy(&self) -> Vec<f64> {
        self.stats.iter().map(|s| s.n).collect()
    }

    fn delete(&self, k: usize) -> Summary {
        let mut stats = self.stats.clone();
        stats.remove(k);
        let mut start = self.start.clone();
        start.remove(k);
        Summary { stats, start, xi: self.xi.clone().remove_row(k).remove_column(k) }
    }

    /// Folds state `k` into state `j`.
    fn merge(&self, j: usize, k: usize) -> Summary {
        let mut out = self.clone();
        let sk = out.stats[k].clone();
        out.stats[j].add(&sk);
        out.start[j] += out.start[k];
        let row = out.xi.row(k).clone_owned();
        let mut r = out.xi.row_mut(j);
        r += row;
        let col = out.xi.column(k).clone_owned();
        let mut c = out.xi.column_mut(j);
        c += col;
        out.delete(k)
    }
}

struct Globals {
    obs: Vec<Mniw>,
    trans: TransitionPosterior,
    top: TopLevel,
}

struct State {
    globals: Globals,
    summary: Summary,
    elbo: f64,
}

struct Run {
    state: State,
    trace: Vec<f64>,
}

struct Vb<'a> {
    designs: &'a [Design],
    prior: Mniw,
    alloc: Allocation<'a>,
    hyper: &'a Hyperparams,
}

impl<'a> Vb<'a> {
    fn global(&self, summary: &Summary, top: &TopLevel) -> Result<Globals> {
        let obs = summary.stats.iter().map(|s| self.prior.posterior(s)).collect::<Result<Vec<_>>>()?;
        let trans = self.alloc.posterior(top, &summary.start, &summary.xi);
        let top = self.alloc.optimize(top, &trans);
        let trans = self.alloc.posterior(&top, &summary.start, &summary.xi);
        Ok(Globals { obs, trans, top })
    }

    fn local(&self, g: &Globals) -> Result<(Summary, f64)> {
        let k = g.obs.len();
        let d = self.prior.dim();
        let p = self.prior.regressors();
        let (lpi0, la) = g.trans.expected_logs();
        let mut summary = Summary { stats: vec![RegressionStats::zeros(d, p); k], start: vec![0.0; k], xi: DMatrix::zeros(k, k) };
        let mut log_z = 0.0;
        for design in self.designs {
            let mut le = DMatrix::zeros(design.len(), k);
            for (i, o) in g.obs.iter().enumerate() {
                le.set_column(i, &DVector::from_vec(o.expected_log_lik(&design.x, &design.y)?));
            }
            let r = forward_backward(&le, &lpi0, &la);
            log_z += r.log_z;
            for i in 0..k {
                let w: Vec<f64> = r.resp.column(i).iter().copied().collect();
                summary.stats[i].accumulate(&design.x, &design.y, &w);
                summary.start[i] += r.resp[(0, i)];
            }
            summary.xi += r.xi;
        }
        Ok((summary, log_z))
    }

    fn elbo(&self, g: &Globals, log_z: f64) -> Result<f64> {
        let mut kl = g.trans.kl();
        for o in &g.obs {
            kl += o.kl_from(&self.prior)?;
        }
        Ok(log_z - kl + self.alloc.log_prior(&g.top))
    }

    /// Global step then local step.
    fn sweep(&self, summary: &Summary, top: &TopLevel, iteration: usize) -> Result<State> {
        let globals = self.global(summary, top)?;
        let (summary, log_z) = self.local(&globals)?;
        let elbo = self.elbo(&globals, log_z)?;
        if !elbo.is_finite() {
            return Err(Error::Numerical { iteration, message: format!("objective is {elbo}") });
        }
        Ok(State { globals, summary, elbo })
    }

    fn init_summary(&self, rng: &mut ChaCha8Rng) -> Summary {
        let k = self.hyper.k_trunc;
        let d = self.prior.dim();
        let p = self.prior.regressors();
        let mut s = Summary { stats: vec![RegressionStats::zeros(d, p); k], start: vec![0.0; k], xi: DMatrix::zeros(k, k) };
        for design in self.designs {
            let t_len = design.len();
            let lo = (t_len / (2 * k)).max(2);
            let hi = (2 * t_len / k).max(lo);
            let mut z = Vec::with_capacity(t_len);
            while z.len() < t_len {
                let len = rng.random_range(lo..=hi);
                let state = rng.random_range(0..k);
                z.extend(std::iter::repeat_n(state, len.min(t_len - z.len())));
            }
            for i in 0..k {
                let w: Vec<f64> = z.iter().map(|&zi| if zi == i { 1.0 } else { 0.0 }).collect();
                s.stats[i].accumulate(&design.x, &design.y, &w);
            }
            s.start[z[0]] += 1.0;
            for t in 1..t_len {
                s.xi[(z[t - 1], z[t])] += 1.0;
            }
        }
        s
    }

    fn merge_order(&self, g: &Globals) -> Vec<(usize, usize)> {
        let k = g.obs.len();
        let mut pairs = Vec::new();
        for j in 0..k {
            for i in j + 1..k {
                let (a, b) = (&g.obs[j], &g.obs[i]);
                let dm = (&a.m - &b.m).norm_squared();
                let ds = (a.mean_sigma() - b.mean_sigma()).norm_squared();
                pairs.push((dm + ds, j, i));
            }
        }
        pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
        pairs.into_iter().take(MERGE_CANDIDATES).map(|(_, j, i)| (j, i)).collect()
    }

    fn try_candidate(&self, summary: Summary, top: TopLevel, iteration: usize) -> Result<State> {
        let mut s = self.sweep(&summary, &top, iteration)?;
        for _ in 1..MOVE_SWEEPS {
            s = self.sweep(&s.summary, &s.globals.top, iteration)?;
        }
        Ok(s)
    }

    /// Attempts delete then merge proposals; returns whether any was accepted.
    fn moves(&self, state: &mut State, iteration: usize) -> Result<bool> {
        let mut accepted = false;
        loop {
            let k = state.summary.k();
            if k <= 1 {
                break;
            }
            let occ = state.summary.occupancy();
            let total: f64 = occ.iter().sum();
            let mut small: Vec<usize> = (0..k).filter(|&i| occ[i] < DELETE_FRACTION * total).collect();
            small.sort_by(|&x, &y| occ[x].total_cmp(&occ[y]));
            let mut hit = false;
            for &i in small.iter().take(DELETE_CANDIDATES) {
                let cand = self.try_candidate(state.summary.delete(i), self.alloc.drop_state(&state.globals.top, i), iteration)?;
                if cand.elbo >= state.elbo {
                    log::debug!("delete state {i}: {} -> {}", state.elbo, cand.elbo);
                    *state = cand;
                    hit = true;
                    break;
                }
            }
            if !hit {
                break;
            }
            accepted = true;
        }
        loop {
            if state.summary.k() <= 1 {
                break;
            }
            let mut hit = false;
            for (j, i) in self.merge_order(&state.globals) {
                let cand = self.try_candidate(state.summary.merge(j, i), self.alloc.merge_states(&state.globals.top, j, i), iteration)?;
                if cand.elbo >= state.elbo {
                    log::debug!("merge states {j},{i}: {} -> {}", state.elbo, cand.elbo);
                    *state = cand;
                    hit = true;
                    break;
                }
            }
            if !hit {
                break;
            }
            accepted = true;
        }
        Ok(accepted)
    }

    fn run(&self, seed: u64) -> Result<Run> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = self.init_summary(&mut rng);
        let top = self.alloc.initial_top_level(self.hyper.k_trunc);
        let mut state = self.sweep(&init, &top, 0)?;
        let mut trace = vec![state.elbo];
        for iteration in 1..self.hyper.max_iter {
            let prev = state.elbo;
            state = self.sweep(&state.summary, &state.globals.top, iteration)?;
            if state.elbo < prev - 1e-6 * prev.abs() {
                log::warn!("objective decreased at iteration {iteration}: {prev} -> {}", state.elbo);
            }
            trace.push(state.elbo);
            let converged = (state.elbo - prev).abs() <= self.hyper.tol * prev.abs();
            if self.hyper.moves && (converged || iteration % MOVE_EVERY == 0) && self.moves(&mut state, iteration)? {
                trace.push(state.elbo);
                continue;
            }
            if converged {
                break;
            }
        }
        Ok(Run { state, trace })
    }
}

fn export(run: Run, cfg: &FitConfig) -> HmmModel {
    let occ = run.state.summary.occupancy();
    let mut keep: Vec<usize> = (0..occ.len()).filter(|&i| occ[i] >= 1.0).collect();
    if keep.is_empty() {
        keep.push(crate::numeric::argmax(&occ).unwrap_or(0));
    }
    let g = &run.state.globals;
    let d = cfg.hyper.dim();
    let obs = keep
        .iter()
        .map(|&i| {
            let cov = g.obs[i].mean_sigma();
            match cfg.observation {
                ObservationKind::Gaussian => ObsParams::Gaussian { mean: g.obs[i].m.column(0).into_owned(), cov },
                ObservationKind::Var1 => ObsParams::Var1 { a: g.obs[i].m.clone(), cov },
                ObservationKind::AffineVar1 => {
                    ObsParams::AffineVar1 { a: g.obs[i].m.columns(0, d).into_owned(), b: g.obs[i].m.column(d).into_owned(), cov }
                }
            }
        })
        .collect();
    let (pi0, trans) = g.trans.expected_probs(&keep);
    HmmModel {
        version: MODEL_FORMAT_VERSION,
        allocation: cfg.allocation,
        observation: cfg.observation,
        dim: d,
        pi0,
        trans: (0..keep.len()).map(|j| trans.row(j).iter().copied().collect()).collect(),
        obs,
        hyper: cfg.hyper.clone(),
        alpha: g.top.alpha,
        elbo_trace: run.trace,
        occupancy: keep.iter().map(|&i| occ[i]).collect(),
    }
}

/// Variational fit; keeps the restart with the highest final objective (lowest index on ties).
pub fn fit<S: AsRef<[DVector<f64>]> + Sync>(trials: &[S], cfg: &FitConfig, seed: u64) -> Result<HmmModel> {
    let h = &cfg.hyper;
    h.validate(cfg.observation)?;
    if trials.is_empty() || trials.iter().any(|t| t.as_ref().is_empty()) {
        return Err(Error::invalid("need at least one non-empty trial"));
    }
    for t in trials {
        if let Some(x) = t.as_ref().iter().find(|x| x.len() != h.dim()) {
            return Err(Error::invalid(format!("frame dimension {} does not match prior dimension {}", x.len(), h.dim())));
        }
    }
    let designs: Vec<Design> = trials.iter().map(|t| Design::new(t.as_ref(), cfg.observation)).collect();
    let vb = Vb { designs: &designs, prior: h.obs_prior(), alloc: Allocation { kind: cfg.allocation, hyper: h }, hyper: h };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..h.n_restarts).map(|_| rng.next_u64()).collect();
    let results: Vec<Result<Run>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&s| {
                scope.spawn({
                    let vb = &vb;
                    move || vb.run(s)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("restart thread panicked")).collect()
    });
    let mut best: Option<Run> = None;
    let mut first_err = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(run) => {
                if best.as_ref().is_none_or(|b| run.state.elbo > b.state.elbo) {
                    best = Some(run);
                }
            }
            Err(e) => {
                log::warn!("restart {i} failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    match best {
        Some(run) => Ok(export(run, cfg)),
        None => Err(first_err.expect("at least one restart")),
    }
}
