//! Identification, classification and recovery-success metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use spai_core::introspect::{AnomalyClass, ReactivityGrid};
use spai_sim::{ExecutionTrace, LabelModality, Scenario};

use crate::error::{HarnessError, Result};

/// Flag-to-event matching tolerance (s); equal to the detector debounce.
pub const DEFAULT_MATCH_TOLERANCE: f64 = 1.0;

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Detection outcome counts. Rates with an empty denominator are 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl DetectionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn add(&mut self, o: &DetectionCounts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.tn += o.tn;
    }
}

/// Flags raised on one trial next to its ground-truth anomaly onsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDetections {
    pub node: String,
    pub events: Vec<f64>,
    pub flags: Vec<f64>,
}

/// One-to-one greedy matching by time distance; returns `(tp, fp, fn)`.
pub fn match_flags(events: &[f64], flags: &[f64], tolerance: f64) -> (usize, usize, usize) {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, e) in events.iter().enumerate() {
        for (j, f) in flags.iter().enumerate() {
            let d = (f - e).abs();
            if d <= tolerance + 1e-9 {
                pairs.push((d, j, i));
            }
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut used_event = vec![false; events.len()];
    let mut used_flag = vec![false; flags.len()];
    let mut tp = 0;
    for (_, j, i) in pairs {
        if !used_event[i] && !used_flag[j] {
            used_event[i] = true;
            used_flag[j] = true;
            tp += 1;
        }
    }
    (tp, flags.len() - tp, events.len() - tp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationMetrics {
    pub tolerance: f64,
    pub per_node: BTreeMap<String, DetectionCounts>,
    pub overall: DetectionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    /// Unweighted means over nodes.
    pub macro_precision: f64,
    pub macro_recall: f64,
}

pub fn evaluate_identification(trials: &[TrialDetections], tolerance: f64) -> IdentificationMetrics {
    let mut per_node: BTreeMap<String, DetectionCounts> = BTreeMap::new();
    for t in trials {
        let c = per_node.entry(t.node.clone()).or_default();
        if t.events.is_empty() && t.flags.is_empty() {
            c.tn += 1;
            continue;
        }
        let (tp, fp, fn_) = match_flags(&t.events, &t.flags, tolerance);
        c.add(&DetectionCounts { tp, fp, fn_, tn: 0 });
    }
    let mut overall = DetectionCounts::default();
    for c in per_node.values() {
        overall.add(c);
    }
    let n = per_node.len().max(1) as f64;
    IdentificationMetrics {
        tolerance,
        macro_precision: per_node.values().map(|c| c.precision()).sum::<f64>() / n,
        macro_recall: per_node.values().map(|c| c.recall()).sum::<f64>() / n,
        accuracy: overall.accuracy(),
        precision: overall.precision(),
        recall: overall.recall(),
        per_node,
        overall,
    }
}

/// Counts indexed `[truth][predicted]` over a fixed label alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<AnomalyClass>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: &[AnomalyClass]) -> Self {
        ConfusionMatrix { labels: labels.to_vec(), counts: vec![vec![0; labels.len()]; labels.len()] }
    }

    fn index(&self, c: AnomalyClass) -> Result<usize> {
        self.labels.iter().position(|l| *l == c).ok_or_else(|| HarnessError::invalid(format!("label {c} is outside the alphabet")))
    }

    pub fn add(&mut self, truth: AnomalyClass, predicted: AnomalyClass) -> Result<()> {
        let (i, j) = (self.index(truth)?, self.index(predicted)?);
        self.counts[i][j] += 1;
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, i: usize) -> usize {
        self.counts[i].iter().sum()
    }

    pub fn column_total(&self, j: usize) -> usize {
        self.counts.iter().map(|r| r[j]).sum()
    }

    /// Per-class recall for classes with at least one true instance.
    pub fn class_rates(&self) -> Vec<(AnomalyClass, f64)> {
        (0..self.labels.len())
            .filter(|&i| self.row_total(i) > 0)
            .map(|i| (self.labels[i], self.counts[i][i] as f64 / self.row_total(i) as f64))
            .collect()
    }

    /// Mean of the diagonal rates over supported classes.
    pub fn mean_class_accuracy(&self) -> f64 {
        let rates = self.class_rates();
        if rates.is_empty() {
            return 0.0;
        }
        rates.iter().map(|(_, r)| r).sum::<f64>() / rates.len() as f64
    }

    /// Fraction of all samples on the diagonal.
    pub fn overall_accuracy(&self) -> f64 {
        ratio((0..self.labels.len()).map(|i| self.counts[i][i]).sum(), self.total())
    }

    pub fn macro_recall(&self) -> f64 {
        self.mean_class_accuracy()
    }

    /// Mean precision over classes that were predicted at least once.
    pub fn macro_precision(&self) -> f64 {
        let cols: Vec<f64> = (0..self.labels.len())
            .filter(|&j| self.column_total(j) > 0)
            .map(|j| self.counts[j][j] as f64 / self.column_total(j) as f64)
            .collect();
        if cols.is_empty() {
            return 0.0;
        }
        cols.iter().sum::<f64>() / cols.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("truth");
        for l in &self.labels {
            s.push_str(&format!(",{l}"));
        }
        s.push('\n');
        for (i, row) in self.counts.iter().enumerate() {
            s.push_str(self.labels[i].code());
            for c in row {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub matrix: ConfusionMatrix,
    /// Mean per-class true-positive rate.
    pub accuracy: f64,
    pub overall_accuracy: f64,
    pub macro_precision: f64,
}

pub fn evaluate_classification(
    truth: &[AnomalyClass],
    predicted: &[AnomalyClass],
    labels: &[AnomalyClass],
) -> Result<ClassificationReport> {
    if truth.len() != predicted.len() {
        return Err(HarnessError::invalid(format!("{} truths but {} predictions", truth.len(), predicted.len())));
    }
    let mut matrix = ConfusionMatrix::new(labels);
    for (t, p) in truth.iter().zip(predicted) {
        matrix.add(*t, *p)?;
    }
    Ok(ClassificationReport {
        accuracy: matrix.mean_class_accuracy(),
        overall_accuracy: matrix.overall_accuracy(),
        macro_precision: matrix.macro_precision(),
        matrix,
    })
}

/// One finished episode keyed by its first scripted anomaly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub scenario: String,
    pub node: Option<String>,
    pub class: Option<AnomalyClass>,
    pub modality: LabelModality,
    pub success: bool,
}

impl EpisodeRecord {
    pub fn from_trace(scenario: &Scenario, trace: &ExecutionTrace) -> Self {
        let first = scenario.injectors.first();
        EpisodeRecord {
            scenario: scenario.name.clone(),
            node: first.map(|i| i.node.clone()),
            class: first.map(|i| i.class),
            modality: scenario.modality,
            success: trace.succeeded(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRow {
    /// `-` for episodes without scripted anomalies.
    pub node: String,
    pub class: Option<AnomalyClass>,
    pub modality: LabelModality,
    pub successes: usize,
    pub total: usize,
}

impl SuccessRow {
    pub fn rate(&self) -> f64 {
        ratio(self.successes, self.total)
    }
}

/// Success counts grouped by (node, class, modality), optionally restricted to one modality.
pub fn evaluate_success(records: &[EpisodeRecord], modality: Option<LabelModality>) -> Vec<SuccessRow> {
    let mut groups: BTreeMap<(String, Option<AnomalyClass>, LabelModality), (usize, usize)> = BTreeMap::new();
    for r in records.iter().filter(|r| modality.is_none_or(|m| m == r.modality)) {
        let e = groups.entry((r.node.clone().unwrap_or_else(|| "-".into()), r.class, r.modality)).or_default();
        e.1 += 1;
        if r.success {
            e.0 += 1;
        }
    }
    groups.into_iter().map(|((node, class, modality), (successes, total))| SuccessRow { node, class, modality, successes, total }).collect()
}

/// Overall success rate per modality.
pub fn success_by_modality(rows: &[SuccessRow]) -> BTreeMap<LabelModality, f64> {
    let mut acc: BTreeMap<LabelModality, (usize, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.modality).or_default();
        e.0 += r.successes;
        e.1 += r.total;
    }
    acc.into_iter().map(|(m, (s, t))| (m, ratio(s, t))).collect()
}

/// Nodes down, classes across, one table per modality; cells are `successes/total`.
pub fn success_table_csv(rows: &[SuccessRow]) -> String {
    let mut s = String::from("modality,node");
    for c in AnomalyClass::ALL {
        s.push_str(&format!(",{c}"));
    }
    s.push_str(",none\n");
    let mut keys: Vec<(LabelModality, String)> = rows.iter().map(|r| (r.modality, r.node.clone())).collect();
    keys.sort();
    keys.dedup();
    for (m, node) in keys {
        s.push_str(&format!("{m},{node}"));
        let cells = AnomalyClass::ALL.map(Some).into_iter().chain(std::iter::once(None));
        for c in cells {
            match rows.iter().find(|r| r.modality == m && r.node == node && r.class == c) {
                Some(r) => s.push_str(&format!(",{}/{}", r.successes, r.total)),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// Published figures of the physical system, carried as annotations next to measured values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub identification_accuracy: f64,
    pub identification_precision: f64,
    pub identification_recall: f64,
    pub classification_accuracy: f64,
}

impl Default for ReferenceFigures {
    fn default() -> Self {
        ReferenceFigures {
            identification_accuracy: 0.9309,
            identification_precision: 0.9409,
            identification_recall: 0.9798,
            classification_accuracy: 0.9615,
        }
    }
}

/// Sizes of the evaluated populations, reported separately per experiment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub identification_trials: BTreeMap<String, usize>,
    pub classification_windows: BTreeMap<String, usize>,
    pub episodes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub identification: Option<IdentificationMetrics>,
    pub classification: Option<ClassificationReport>,
    pub success: Vec<SuccessRow>,
    pub success_by_modality: BTreeMap<LabelModality, f64>,
    pub reactivity: Option<ReactivityGrid>,
    pub counts: TrialCounts,
    pub reference: ReferenceFigures,
}

impl MetricsReport {
    /// Checks every rate lies in `[0, 1]` and the counts agree with the tables.
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if let Some(id) = &self.identification {
            if ![id.accuracy, id.precision, id.recall, id.macro_precision, id.macro_recall].into_iter().all(unit) {
                return Err(HarnessError::invalid("identification rate outside [0, 1]"));
            }
        }
        if let Some(c) = &self.classification {
            if !unit(c.accuracy) || !unit(c.overall_accuracy) {
                return Err(HarnessError::invalid("classification rate outside [0, 1]"));
            }
            let windows: usize = self.counts.classification_windows.values().sum();
            if windows > 0 && windows != c.matrix.total() {
                return Err(HarnessError::invalid("confusion matrix does not match the window count"));
            }
        }
        if self.success.iter().any(|r| r.successes > r.total) {
            return Err(HarnessError::invalid("more successes than episodes"));
        }
        Ok(())
    }
}
