use std::collections::BTreeMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{AnomalyClass, AnomalyLabel};
use crate::error::{Error, Result};
use crate::hmm::{log_likelihood, HmmModel};
use crate::numeric::argmax;
use crate::signals::FeatureSequence;

/// Seconds on each side of the flag.
pub const DEFAULT_WINDOW: f64 = 2.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub labels: Vec<AnomalyClass>,
    pub models: Vec<HmmModel>,
    pub pre_window: f64,
    pub post_window: f64,
}

impl ClassifierModel {
    pub fn new(labels: Vec<AnomalyClass>, models: Vec<HmmModel>, pre_window: f64, post_window: f64) -> Result<Self> {
        if labels.is_empty() || labels.len() != models.len() {
            return Err(Error::invalid("need one model per label"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate label {l}")));
            }
        }
        if !(pre_window > 0.0 && post_window > 0.0) {
            return Err(Error::invalid("windows must be positive"));
        }
        if models.iter().any(|m| m.dim != models[0].dim) {
            return Err(Error::invalid("class models disagree on dimension"));
        }
        Ok(ClassifierModel { labels, models, pre_window, post_window })
    }

    /// Argmax of the window's cumulative log-likelihood over classes.
    pub fn classify(&self, window: &[DVector<f64>]) -> Result<AnomalyLabel> {
        if window.len() < 2 {
            return Err(Error::invalid(format!("window has {} samples, need at least 2", window.len())));
        }
        let scores = self.models.iter().map(|m| log_likelihood(m, window, None)).collect::<Result<Vec<_>>>()?;
        let best = argmax(&scores).ok_or_else(|| Error::invalid("no finite class likelihood"))?;
        Ok(AnomalyLabel { class: self.labels[best], log_likelihoods: self.labels.iter().copied().zip(scores).collect() })
    }

    /// Cuts the configured window around `t_flag` and classifies it.
    pub fn classify_at(&self, seq: &FeatureSequence, t_flag: f64) -> Result<AnomalyLabel> {
        let w = extract_window(seq, t_flag, self.pre_window, self.post_window);
        self.classify(&w.frames)
    }
}

/// Frames within `[t − pre, t + post]`, truncated at the sequence bounds.
pub fn extract_window(seq: &FeatureSequence, t: f64, pre: f64, post: f64) -> FeatureSequence {
    seq.slice_time(t - pre, t + post)
}

/// A labeled anomaly: source stream and the reference time the window is centered on.
#[derive(Debug, Clone)]
pub struct LabeledWindow {
    pub class: AnomalyClass,
    pub center: f64,
    pub source: FeatureSequence,
}

impl LabeledWindow {
    pub fn frames(&self, pre: f64, post: f64) -> Vec<DVector<f64>> {
        extract_window(&self.source, self.center, pre, post).frames
    }
}

/// Windows of one class cut at the given extent.
pub fn class_windows(windows: &[LabeledWindow], class: AnomalyClass, pre: f64, post: f64) -> Vec<Vec<DVector<f64>>> {
    windows.iter().filter(|w| w.class == class).map(|w| w.frames(pre, post)).collect()
}

/// Trains one model per class present in `windows`; labels follow the canonical class order.
pub fn train_classifier<F>(windows: &[LabeledWindow], pre: f64, post: f64, trainer: F) -> Result<ClassifierModel>
where
    F: Fn(AnomalyClass, &[Vec<DVector<f64>>]) -> Result<HmmModel>,
{
    let labels: Vec<AnomalyClass> = AnomalyClass::ALL.into_iter().filter(|c| windows.iter().any(|w| w.class == *c)).collect();
    let models = labels.iter().map(|&c| trainer(c, &class_windows(windows, c, pre, post))).collect::<Result<Vec<_>>>()?;
    ClassifierModel::new(labels, models, pre, post)
}

/// Mean over classes of the per-class true-positive rate on `test`.
pub fn mean_class_tpr(clf: &ClassifierModel, test: &[LabeledWindow]) -> Result<f64> {
    let mut tally: BTreeMap<AnomalyClass, (usize, usize)> = BTreeMap::new();
    for w in test {
        let label = clf.classify(&w.frames(clf.pre_window, clf.post_window))?;
        let e = tally.entry(w.class).or_default();
        e.1 += 1;
        if label.class == w.class {
            e.0 += 1;
        }
    }
    if tally.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    Ok(tally.values().map(|(c, n)| *c as f64 / *n as f64).sum::<f64>() / tally.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactivityGrid {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
    /// `accuracy[i][j]` for `pre[i]`, `post[j]`.
    pub accuracy: Vec<Vec<f64>>,
}

impl ReactivityGrid {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pre,post,accuracy\n");
        for (i, p) in self.pre.iter().enumerate() {
            for (j, q) in self.post.iter().enumerate() {
                s.push_str(&format!("{p},{q},{}\n", self.accuracy[i][j]));
            }
        }
        s
    }

    pub fn get(&self, pre: f64, post: f64) -> Option<f64> {
        let i = self.pre.iter().position(|&p| (p - pre).abs() < 1e-9)?;
        let j = self.post.iter().position(|&p| (p - post).abs() < 1e-9)?;
        Some(self.accuracy[i][j])
    }
}

/// Retrains and rescores the classifier bank for every `(pre, post)` window extent.
pub fn reactivity_sweep<F>(
    train: &[LabeledWindow],
    test: &[LabeledWindow],
    pre_grid: &[f64],
    post_grid: &[f64],
    trainer: F,
) -> Result<ReactivityGrid>
where
    F: Fn(AnomalyClass, &[Vec<DVector<f64>>]) -> Result<HmmModel>,
{
    if pre_grid.is_empty() || post_grid.is_empty() {
        return Err(Error::invalid("window grids must be non-empty"));
    }
    let mut accuracy = Vec::with_capacity(pre_grid.len());
    for &pre in pre_grid {
        let mut row = Vec::with_capacity(post_grid.len());
        for &post in post_grid {
            let clf = train_classifier(train, pre, post, &trainer)?;
            let acc = mean_class_tpr(&clf, test)?;
            log::info!("reactivity pre {pre:.2}s post {post:.2}s: {acc:.4}");
            row.push(acc);
        }
        accuracy.push(row);
    }
    Ok(ReactivityGrid { pre: pre_grid.to_vec(), post: post_grid.to_vec(), accuracy })
}
