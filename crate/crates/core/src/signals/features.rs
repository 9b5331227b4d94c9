use std::collections::VecDeque;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{MultimodalSample, Trial, TAXELS_PER_FINGER};
use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 17;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] =
    ["fx", "fy", "fz", "tx", "ty", "tz", "vx", "vy", "vz", "wx", "wy", "wz", "f_norm", "tau_norm", "v_norm", "w_norm", "taxel_max_std"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub f: [f64; 3],
    pub tau: [f64; 3],
    pub v: [f64; 3],
    pub w: [f64; 3],
    /// `‖F‖, ‖τ‖, ‖ν‖, ‖ω‖`
    pub norms: [f64; 4],
    pub taxel_max_std: f64,
}

fn norm3(x: &[f64]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

impl FeatureVector {
    pub fn from_sample(s: &MultimodalSample, taxel_max_std: f64) -> Self {
        let f = [s.wrench[0], s.wrench[1], s.wrench[2]];
        let tau = [s.wrench[3], s.wrench[4], s.wrench[5]];
        let v = [s.twist[0], s.twist[1], s.twist[2]];
        let w = [s.twist[3], s.twist[4], s.twist[5]];
        FeatureVector { f, tau, v, w, norms: [norm3(&f), norm3(&tau), norm3(&v), norm3(&w)], taxel_max_std }
    }

    pub fn to_array(&self) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        out[0..3].copy_from_slice(&self.f);
        out[3..6].copy_from_slice(&self.tau);
        out[6..9].copy_from_slice(&self.v);
        out[9..12].copy_from_slice(&self.w);
        out[12..16].copy_from_slice(&self.norms);
        out[16] = self.taxel_max_std;
        out
    }

    pub fn from_array(a: &[f64; FEATURE_DIM]) -> Self {
        FeatureVector {
            f: [a[0], a[1], a[2]],
            tau: [a[3], a[4], a[5]],
            v: [a[6], a[7], a[8]],
            w: [a[9], a[10], a[11]],
            norms: [a[12], a[13], a[14], a[15]],
            taxel_max_std: a[16],
        }
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }
}

/// Timestamped frames for one skill execution. After scaling the frames are no longer raw
/// physical units but keep the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub skill_id: String,
    pub times: Vec<f64>,
    pub frames: Vec<DVector<f64>>,
}

impl FeatureSequence {
    pub fn new(skill_id: impl Into<String>, times: Vec<f64>, frames: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != frames.len() {
            return Err(Error::invalid("feature times and frames differ in length"));
        }
        if let Some(d) = frames.first().map(|f| f.len()) {
            if frames.iter().any(|f| f.len() != d) {
                return Err(Error::invalid("feature frames have inconsistent dimension"));
            }
        }
        Ok(FeatureSequence { skill_id: skill_id.into(), times, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }

    /// Frames whose timestamps fall in `[t0, t1]`.
    pub fn slice_time(&self, t0: f64, t1: f64) -> FeatureSequence {
        let eps = 1e-9;
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.times[i] >= t0 - eps && self.times[i] <= t1 + eps).collect();
        FeatureSequence {
            skill_id: self.skill_id.clone(),
            times: idx.iter().map(|&i| self.times[i]).collect(),
            frames: idx.iter().map(|&i| self.frames[i].clone()).collect(),
        }
    }
}

/// Streaming featurizer holding the trailing taxel window.
#[derive(Debug, Clone)]
pub struct OnlineFeaturizer {
    window: f64,
    buffer: VecDeque<(f64, [f64; 2 * TAXELS_PER_FINGER])>,
}

impl OnlineFeaturizer {
    pub fn new(std_window: f64) -> Self {
        OnlineFeaturizer { window: std_window, buffer: VecDeque::new() }
    }

    pub fn reset(&mut self) {
        self.buffer.clear();
    }

    pub fn push(&mut self, s: &MultimodalSample) -> FeatureVector {
        let mut tax = [0.0; 2 * TAXELS_PER_FINGER];
        tax[..TAXELS_PER_FINGER].copy_from_slice(&s.taxels_left);
        tax[TAXELS_PER_FINGER..].copy_from_slice(&s.taxels_right);
        self.buffer.push_back((s.t, tax));
        while let Some(&(t0, _)) = self.buffer.front() {
            if t0 < s.t - self.window - 1e-9 {
                self.buffer.pop_front();
            } else {
                break;
            }
        }
        FeatureVector::from_sample(s, self.taxel_max_std())
    }

    fn taxel_max_std(&self) -> f64 {
        let n = self.buffer.len() as f64;
        if n < 2.0 {
            return 0.0;
        }
        let mut best: f64 = 0.0;
        for k in 0..2 * TAXELS_PER_FINGER {
            let mean = self.buffer.iter().map(|(_, v)| v[k]).sum::<f64>() / n;
            let var = self.buffer.iter().map(|(_, v)| (v[k] - mean).powi(2)).sum::<f64>() / n;
            best = best.max(var.max(0.0).sqrt());
        }
        best
    }
}

/// Per-timestep 17-dimensional features of a resampled, aligned trial.
pub fn extract_features(trial: &Trial, std_window: f64) -> Result<FeatureSequence> {
    trial.validate()?;
    let period = 1.0 / trial.rate_hz;
    if !(std_window >= period - 1e-12) {
        return Err(Error::invalid(format!("taxel window {std_window}s is shorter than one sample period {period}s")));
    }
    let mut fz = OnlineFeaturizer::new(std_window);
    let frames = trial.samples.iter().map(|s| fz.push(s).to_dvector()).collect();
    FeatureSequence::new(trial.skill_id.clone(), trial.times(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn force_norm_in_norm_slot() {
        let mut s = MultimodalSample::at_rest(0.0);
        s.wrench[..3].copy_from_slice(&[3.0, 4.0, 0.0]);
        let f = FeatureVector::from_sample(&s, 0.0);
        assert_eq!(f.norms[0], 5.0);
        assert_eq!(f.to_array()[12], 5.0);
    }

    #[test]
    fn dimension_is_seventeen() {
        assert_eq!(FEATURE_DIM, 12 + 4 + 1);
        assert_eq!(FeatureVector::from_sample(&MultimodalSample::at_rest(0.0), 0.0).to_dvector().len(), 17);
    }

    fn trial_with_taxels(f: impl Fn(usize) -> f64) -> Trial {
        let samples = (0..20)
            .map(|k| {
                let mut s = MultimodalSample::at_rest(k as f64 * 0.02);
                s.taxels_right[5] = f(k);
                s
            })
            .collect();
        Trial::new("t", samples, 50.0).unwrap()
    }

    #[test]
    fn constant_taxels_have_zero_std() {
        let seq = extract_features(&trial_with_taxels(|_| 4.2), 0.1).unwrap();
        assert_eq!(seq.len(), 20);
        assert!(seq.frames.iter().all(|f| f[16] == 0.0));
    }

    #[test]
    fn alternating_taxel_std() {
        let seq = extract_features(&trial_with_taxels(|k| if k % 2 == 0 { 1.0 } else { -1.0 }), 0.1).unwrap();
        // 6 samples in the trailing 0.1 s window: three at +1, three at -1
        assert!((seq.frames[10][16] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn window_shorter_than_period_is_rejected() {
        assert!(matches!(extract_features(&trial_with_taxels(|_| 0.0), 0.005), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn array_roundtrip() {
        let a: [f64; 17] = std::array::from_fn(|i| i as f64 * 0.5);
        assert_eq!(FeatureVector::from_array(&a).to_array(), a);
    }
}
