//! Multimodal sensor streams and the 17-dimensional feature map.
//!
//! Raw samples carry the end-effector wrench, twist, pose and two 4×7 taxel arrays. They are
//! resampled onto a uniform grid, aligned across modalities, featurized and finally scaled so
//! that every training dimension lies in `[-1, 1]`.

mod features;
mod io;
mod scaling;

pub use features::{extract_features, FeatureSequence, FeatureVector, OnlineFeaturizer, FEATURE_DIM, FEATURE_NAMES};
pub use io::{read_trial_file, write_feature_csv, write_trial_csv, TrialFile, RAW_COLUMNS};
pub use scaling::{fit_scaling, ScalingProfile};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical pipeline rate.
pub const DEFAULT_RATE_HZ: f64 = 50.0;
/// Trailing window used for the per-taxel standard deviation.
pub const DEFAULT_STD_WINDOW: f64 = 0.1;
pub const TAXELS_PER_FINGER: usize = 28;

const QUAT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimodalSample {
    pub t: f64,
    /// Force (N) then torque (N·m).
    pub wrench: [f64; 6],
    /// Linear (m/s) then angular (rad/s) velocity.
    pub twist: [f64; 6],
    /// Position (m) then unit quaternion `(x, y, z, w)`.
    pub pose: [f64; 7],
    pub taxels_left: [f64; TAXELS_PER_FINGER],
    pub taxels_right: [f64; TAXELS_PER_FINGER],
}

impl MultimodalSample {
    /// A sample at rest at the origin with identity orientation and zero taxel readings.
    pub fn at_rest(t: f64) -> Self {
        MultimodalSample {
            t,
            wrench: [0.0; 6],
            twist: [0.0; 6],
            pose: [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0],
            taxels_left: [0.0; TAXELS_PER_FINGER],
            taxels_right: [0.0; TAXELS_PER_FINGER],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = std::iter::once(self.t)
            .chain(self.wrench.iter().copied())
            .chain(self.twist.iter().copied())
            .chain(self.pose.iter().copied())
            .chain(self.taxels_left.iter().copied())
            .chain(self.taxels_right.iter().copied())
            .all(f64::is_finite);
        if !finite {
            return Err(Error::invalid(format!("non-finite value in sample at t={}", self.t)));
        }
        let qn = self.pose[3..].iter().map(|q| q * q).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > QUAT_TOL {
            return Err(Error::invalid(format!("quaternion norm {qn} at t={} is not unit", self.t)));
        }
        Ok(())
    }

    fn lerp(a: &Self, b: &Self, w: f64, t: f64) -> Self {
        let mix = |x: f64, y: f64| if w == 0.0 { x } else { x + (y - x) * w };
        let mut out = a.clone();
        out.t = t;
        for i in 0..6 {
            out.wrench[i] = mix(a.wrench[i], b.wrench[i]);
            out.twist[i] = mix(a.twist[i], b.twist[i]);
        }
        for i in 0..3 {
            out.pose[i] = mix(a.pose[i], b.pose[i]);
        }
        out.pose[3..].copy_from_slice(&nlerp(&a.pose[3..], &b.pose[3..], w));
        for i in 0..TAXELS_PER_FINGER {
            out.taxels_left[i] = mix(a.taxels_left[i], b.taxels_left[i]);
            out.taxels_right[i] = mix(a.taxels_right[i], b.taxels_right[i]);
        }
        out
    }
}

/// Normalized linear quaternion interpolation along the shorter arc.
fn nlerp(a: &[f64], b: &[f64], w: f64) -> [f64; 4] {
    if w == 0.0 {
        return [a[0], a[1], a[2], a[3]];
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let sign = if dot < 0.0 { -1.0 } else { 1.0 };
    let mut q = [0.0; 4];
    for i in 0..4 {
        q[i] = a[i] + (sign * b[i] - a[i]) * w;
    }
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        q.iter_mut().for_each(|v| *v /= n);
    }
    q
}

/// One skill execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub skill_id: String,
    pub samples: Vec<MultimodalSample>,
    pub rate_hz: f64,
}

impl Trial {
    pub fn new(skill_id: impl Into<String>, samples: Vec<MultimodalSample>, rate_hz: f64) -> Result<Self> {
        let trial = Trial { skill_id: skill_id.into(), samples, rate_hz };
        trial.validate()?;
        Ok(trial)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("trial has no samples"));
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::invalid("sampling rate must be positive"));
        }
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::invalid(format!("timestamps not strictly increasing at t={}", w[1].t)));
            }
        }
        self.samples.iter().try_for_each(MultimodalSample::validate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }
}

/// Uniform grid `t0, t0 + 1/rate, ...` covering `[t0, t1]` inclusively.
pub fn uniform_grid(t0: f64, t1: f64, rate: f64) -> Vec<f64> {
    let n = ((t1 - t0) * rate + 1e-9).floor() as usize;
    (0..=n).map(|k| t0 + k as f64 / rate).collect()
}

/// Bracketing index and interpolation weight for `t` in a sorted time vector.
fn bracket(times: &[f64], t: f64) -> (usize, f64) {
    let last = times.len() - 1;
    if last == 0 || t <= times[0] {
        return (0, 0.0);
    }
    if t >= times[last] {
        return (last, 0.0);
    }
    // first index with times[i] > t
    let hi = times.partition_point(|&x| x <= t);
    let lo = hi - 1;
    if times[lo] == t {
        return (lo, 0.0);
    }
    (lo, (t - times[lo]) / (times[hi] - times[lo]))
}

/// Linear interpolation of a trial onto a uniform grid at `rate` spanning the input.
pub fn resample(trial: &Trial, rate: f64) -> Result<Trial> {
    if trial.samples.is_empty() {
        return Err(Error::invalid("cannot resample an empty trial"));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::invalid("resampling rate must be positive"));
    }
    let times = trial.times();
    let grid = uniform_grid(times[0], *times.last().unwrap(), rate);
    let samples = grid
        .into_iter()
        .map(|t| {
            let (i, w) = bracket(&times, t);
            let j = (i + 1).min(times.len() - 1);
            MultimodalSample::lerp(&trial.samples[i], &trial.samples[j], w, t)
        })
        .collect();
    Ok(Trial { skill_id: trial.skill_id.clone(), samples, rate_hz: rate })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Wrench,
    Twist,
    Pose,
    TaxelsLeft,
    TaxelsRight,
}

impl Modality {
    pub const ALL: [Modality; 5] = [Modality::Wrench, Modality::Twist, Modality::Pose, Modality::TaxelsLeft, Modality::TaxelsRight];

    pub fn width(self) -> usize {
        match self {
            Modality::Wrench | Modality::Twist => 6,
            Modality::Pose => 7,
            Modality::TaxelsLeft | Modality::TaxelsRight => TAXELS_PER_FINGER,
        }
    }
}

/// One timestamped sensor topic.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub modality: Modality,
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Stream {
    pub fn new(modality: Modality, times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid(format!("{modality:?} stream is empty")));
        }
        if times.len() != values.len() {
            return Err(Error::invalid(format!("{modality:?} stream has mismatched lengths")));
        }
        if values.iter().any(|v| v.len() != modality.width()) {
            return Err(Error::invalid(format!("{modality:?} values must have width {}", modality.width())));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!("{modality:?} timestamps not strictly increasing")));
        }
        Ok(Stream { modality, times, values })
    }

    fn value_at(&self, t: f64) -> Vec<f64> {
        let (i, w) = bracket(&self.times, t);
        let j = (i + 1).min(self.times.len() - 1);
        let (a, b) = (&self.values[i], &self.values[j]);
        if self.modality == Modality::Pose {
            let mut out = Vec::with_capacity(7);
            out.extend((0..3).map(|k| if w == 0.0 { a[k] } else { a[k] + (b[k] - a[k]) * w }));
            out.extend_from_slice(&nlerp(&a[3..], &b[3..], w));
            out
        } else {
            a.iter().zip(b).map(|(x, y)| if w == 0.0 { *x } else { x + (y - x) * w }).collect()
        }
    }
}

/// Merges one stream per modality onto a common uniform grid at `rate` over their overlap.
pub fn align(skill_id: &str, streams: &[Stream], rate: f64) -> Result<Trial> {
    if !(rate > 0.0) {
        return Err(Error::invalid("alignment rate must be positive"));
    }
    let mut by_modality: Vec<&Stream> = Vec::with_capacity(5);
    for m in Modality::ALL {
        let mut found = streams.iter().filter(|s| s.modality == m);
        let s = found.next().ok_or_else(|| Error::invalid(format!("missing {m:?} stream")))?;
        if found.next().is_some() {
            return Err(Error::invalid(format!("duplicate {m:?} stream")));
        }
        if s.times.is_empty() {
            return Err(Error::invalid(format!("{m:?} stream is empty")));
        }
        by_modality.push(s);
    }
    let start = by_modality.iter().map(|s| s.times[0]).fold(f64::NEG_INFINITY, f64::max);
    let end = by_modality.iter().map(|s| *s.times.last().unwrap()).fold(f64::INFINITY, f64::min);
    if start > end {
        return Err(Error::NoOverlap);
    }
    let samples = uniform_grid(start, end, rate)
        .into_iter()
        .map(|t| {
            let mut s = MultimodalSample::at_rest(t);
            s.wrench.copy_from_slice(&by_modality[0].value_at(t));
            s.twist.copy_from_slice(&by_modality[1].value_at(t));
            s.pose.copy_from_slice(&by_modality[2].value_at(t));
            s.taxels_left.copy_from_slice(&by_modality[3].value_at(t));
            s.taxels_right.copy_from_slice(&by_modality[4].value_at(t));
            s
        })
        .collect();
    Ok(Trial { skill_id: skill_id.to_string(), samples, rate_hz: rate })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_trial(times: &[f64]) -> Trial {
        let samples = times
            .iter()
            .map(|&t| {
                let mut s = MultimodalSample::at_rest(t);
                s.wrench[0] = t;
                s.taxels_left[3] = 2.0 * t;
                s
            })
            .collect();
        Trial::new("ramp", samples, 10.0).unwrap()
    }

    #[test]
    fn constant_trial_resamples_unchanged() {
        let samples: Vec<_> = (0..1001)
            .map(|k| {
                let mut s = MultimodalSample::at_rest(k as f64 / 1000.0);
                s.wrench = [1.5, -2.0, 3.0, 0.1, 0.2, 0.3];
                s
            })
            .collect();
        let trial = Trial::new("c", samples, 1000.0).unwrap();
        let out = resample(&trial, 50.0).unwrap();
        assert_eq!(out.len(), 51);
        assert!(out.samples.iter().all(|s| s.wrench == [1.5, -2.0, 3.0, 0.1, 0.2, 0.3]));
    }

    #[test]
    fn two_second_trial_gives_inclusive_grid() {
        let times: Vec<f64> = (0..=2000).map(|k| k as f64 / 1000.0).collect();
        let out = resample(&ramp_trial(&times), 50.0).unwrap();
        assert_eq!(out.len(), 101);
        assert_eq!(out.rate_hz, 50.0);
    }

    #[test]
    fn ramp_midpoint_interpolates() {
        let trial = ramp_trial(&[0.0, 0.1]);
        let out = resample(&trial, 20.0).unwrap();
        assert_eq!(out.len(), 3);
        assert!((out.samples[1].wrench[0] - 0.05).abs() < 1e-12);
        assert!((out.samples[1].taxels_left[3] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn empty_trial_is_rejected() {
        let trial = Trial { skill_id: "x".into(), samples: vec![], rate_hz: 50.0 };
        assert!(matches!(resample(&trial, 50.0), Err(Error::InvalidInput(_))));
    }

    fn stream(m: Modality, times: Vec<f64>, f: impl Fn(f64) -> f64) -> Stream {
        let values = times
            .iter()
            .map(|&t| if m == Modality::Pose { vec![f(t), 0.0, 0.0, 0.0, 0.0, 0.0, 1.0] } else { vec![f(t); m.width()] })
            .collect();
        Stream::new(m, times, values).unwrap()
    }

    #[test]
    fn identical_grids_align_to_same_grid() {
        let times: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let streams: Vec<_> = Modality::ALL.iter().map(|&m| stream(m, times.clone(), |t| t * 3.0)).collect();
        let trial = align("s", &streams, 10.0).unwrap();
        assert_eq!(trial.len(), 11);
        for (s, t) in trial.samples.iter().zip(&times) {
            assert!((s.t - t).abs() < 1e-12);
            assert!((s.wrench[2] - 3.0 * t).abs() < 1e-12);
            assert!((s.pose[0] - 3.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_streams_do_not_overlap() {
        let a: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let b: Vec<f64> = (0..=10).map(|k| 2.0 + k as f64 * 0.1).collect();
        let mut streams: Vec<_> = Modality::ALL.iter().map(|&m| stream(m, a.clone(), |t| t)).collect();
        streams[2] = stream(Modality::Pose, b, |t| t);
        assert!(matches!(align("s", &streams, 50.0), Err(Error::NoOverlap)));
    }

    #[test]
    fn quaternion_interpolation_stays_unit() {
        let a = [0.0, 0.0, 0.0, 1.0];
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let b = [0.0, 0.0, h, h];
        let q = nlerp(&a, &b, 0.5);
        let n: f64 = q.iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
    }
}
