use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::AnomalyFlag;
use crate::error::{Error, Result};
use crate::hmm::{forward_gradient, ForwardFilter, HmmModel};
use crate::signals::FeatureSequence;

pub const DEFAULT_DEBOUNCE: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentificationModel {
    pub node_id: String,
    pub model: HmmModel,
    pub grad_min: f64,
    pub grad_max: f64,
    pub grad_range: f64,
    pub debounce: f64,
}

impl IdentificationModel {
    pub fn threshold(&self) -> f64 {
        self.grad_min - self.grad_range / 2.0
    }

    pub fn detector(&self) -> Result<Detector> {
        Detector::new(self)
    }
}

/// Gradient extrema over every step of every nominal trial.
pub fn calibrate<S: AsRef<[DVector<f64>]>>(node_id: impl Into<String>, model: HmmModel, nominal: &[S]) -> Result<IdentificationModel> {
    if nominal.is_empty() || nominal.iter().all(|t| t.as_ref().is_empty()) {
        return Err(Error::invalid("calibration needs at least one non-empty nominal trial"));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for t in nominal {
        for g in forward_gradient(&model, t.as_ref())? {
            lo = lo.min(g);
            hi = hi.max(g);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("nominal gradients are not finite"));
    }
    Ok(IdentificationModel { node_id: node_id.into(), model, grad_min: lo, grad_max: hi, grad_range: hi - lo, debounce: DEFAULT_DEBOUNCE })
}

/// Streaming threshold test with debounce measured from the last emitted flag.
#[derive(Debug, Clone)]
pub struct Detector {
    node_id: String,
    threshold: f64,
    debounce: f64,
    filter: ForwardFilter,
    last_flag: Option<f64>,
}

impl Detector {
    pub fn new(m: &IdentificationModel) -> Result<Self> {
        Ok(Detector {
            node_id: m.node_id.clone(),
            threshold: m.threshold(),
            debounce: m.debounce,
            filter: ForwardFilter::new(&m.model)?,
            last_flag: None,
        })
    }

    pub fn reset(&mut self) {
        self.filter.reset();
        self.last_flag = None;
    }

    /// Returns the gradient and a flag when it falls below threshold outside the debounce interval.
    pub fn push(&mut self, t: f64, x: &DVector<f64>) -> Result<(f64, Option<AnomalyFlag>)> {
        let g = self.filter.push(x)?;
        if g < self.threshold && self.last_flag.is_none_or(|last| t - last >= self.debounce) {
            self.last_flag = Some(t);
            return Ok((g, Some(AnomalyFlag { t, node_id: self.node_id.clone(), gradient: g })));
        }
        Ok((g, None))
    }
}

/// Runs a fresh detector over a whole sequence.
pub fn detect_all(m: &IdentificationModel, seq: &FeatureSequence) -> Result<Vec<AnomalyFlag>> {
    let mut d = m.detector()?;
    let mut flags = Vec::new();
    for (t, x) in seq.times.iter().zip(&seq.frames) {
        if let (_, Some(f)) = d.push(*t, x)? {
            flags.push(f);
        }
    }
    Ok(flags)
}
