use serde::{Deserialize, Serialize};

use super::FeatureSequence;
use crate::error::{Error, Result};

/// Per-dimension absolute maxima observed during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingProfile {
    pub max_abs: Vec<f64>,
}

impl ScalingProfile {
    /// Dimensions whose training maximum was zero; these pass through unscaled.
    pub fn zero_dims(&self) -> Vec<usize> {
        self.max_abs.iter().enumerate().filter(|(_, m)| **m == 0.0).map(|(i, _)| i).collect()
    }

    fn divisor(&self, i: usize) -> f64 {
        let m = self.max_abs[i];
        if m > 0.0 {
            m
        } else {
            1.0
        }
    }

    pub fn apply_frame(&self, frame: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_iterator(frame.len(), frame.iter().enumerate().map(|(i, v)| v / self.divisor(i)))
    }

    pub fn apply(&self, seq: &FeatureSequence) -> Result<FeatureSequence> {
        if seq.dim() != self.max_abs.len() && !seq.is_empty() {
            return Err(Error::invalid(format!("sequence dimension {} does not match scaling profile {}", seq.dim(), self.max_abs.len())));
        }
        Ok(FeatureSequence {
            skill_id: seq.skill_id.clone(),
            times: seq.times.clone(),
            frames: seq.frames.iter().map(|f| self.apply_frame(f)).collect(),
        })
    }
}

pub fn fit_scaling(trials: &[FeatureSequence]) -> Result<ScalingProfile> {
    let dim = trials.iter().find(|t| !t.is_empty()).map(|t| t.dim()).ok_or_else(|| Error::invalid("no training frames for scaling"))?;
    let mut max_abs = vec![0.0_f64; dim];
    for t in trials {
        for f in &t.frames {
            if f.len() != dim {
                return Err(Error::invalid("inconsistent feature dimension across trials"));
            }
            for (m, v) in max_abs.iter_mut().zip(f.iter()) {
                *m = m.max(v.abs());
            }
        }
    }
    Ok(ScalingProfile { max_abs })
}
