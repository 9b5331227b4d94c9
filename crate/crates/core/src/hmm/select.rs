use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::forward::log_likelihood;
use super::vb::{fit, FitConfig};
use super::HmmModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Selection {
    pub model: HmmModel,
    /// Mean held-out cumulative log-likelihood per fold.
    pub fold_scores: Vec<f64>,
    pub best_fold: usize,
}

impl Selection {
    pub fn best_score(&self) -> f64 {
        self.fold_scores[self.best_fold]
    }
}

/// Shuffled `(train, test)` index splits.
pub fn kfold_indices(n: usize, k_splits: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k_splits < 2 {
        return Err(Error::invalid("k_splits must be at least 2"));
    }
    if n < k_splits {
        return Err(Error::invalid(format!("{n} trials cannot fill {k_splits} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..k_splits)
        .map(|f| {
            let (lo, hi) = (f * n / k_splits, (f + 1) * n / k_splits);
            let test = idx[lo..hi].to_vec();
            let train = idx[..lo].iter().chain(&idx[hi..]).copied().collect();
            (train, test)
        })
        .collect())
}

/// Fits one model per fold and returns the one with the best mean held-out likelihood.
pub fn select_model_kfold<S: AsRef<[DVector<f64>]> + Sync>(trials: &[S], k_splits: usize, cfg: &FitConfig, seed: u64) -> Result<Selection> {
    let folds = kfold_indices(trials.len(), k_splits, seed)?;
    let mut best: Option<(usize, HmmModel)> = None;
    let mut scores = Vec::with_capacity(folds.len());
    for (f, (train, test)) in folds.iter().enumerate() {
        let train_set: Vec<&[DVector<f64>]> = train.iter().map(|&i| trials[i].as_ref()).collect();
        let model = fit(&train_set, cfg, seed)?;
        let mut total = 0.0;
        for &i in test {
            total += log_likelihood(&model, trials[i].as_ref(), None)?;
        }
        let score = total / test.len() as f64;
        log::debug!("fold {f}: K = {}, held-out {score:.3}", model.k());
        if best.as_ref().is_none_or(|(b, _)| score > scores[*b]) {
            best = Some((f, model));
        }
        scores.push(score);
    }
    let (best_fold, model) = best.expect("at least two folds");
    Ok(Selection { model, fold_scores: scores, best_fold })
}

/// Runs k-fold selection per candidate and returns the index of the best candidate.
pub fn select_hyperparams<S: AsRef<[DVector<f64>]> + Sync>(
    trials: &[S],
    k_splits: usize,
    candidates: &[FitConfig],
    seed: u64,
) -> Result<(usize, Vec<Selection>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate configurations"));
    }
    let sels = candidates.iter().map(|c| select_model_kfold(trials, k_splits, c, seed)).collect::<Result<Vec<_>>>()?;
    let scores: Vec<f64> = sels.iter().map(Selection::best_score).collect();
    Ok((crate::numeric::argmax(&scores).unwrap_or(0), sels))
}
