//! CSV trial files. The header row decides whether a file holds raw modalities or features.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;

use super::{FeatureSequence, MultimodalSample, Trial, FEATURE_DIM, FEATURE_NAMES, TAXELS_PER_FINGER};
use crate::error::{Error, Result};

pub const RAW_COLUMNS: usize = 1 + 6 + 6 + 7 + 2 * TAXELS_PER_FINGER;

const RAW_PREFIX: [&str; 20] =
    ["t", "fx", "fy", "fz", "tx", "ty", "tz", "vx", "vy", "vz", "wx", "wy", "wz", "px", "py", "pz", "qx", "qy", "qz", "qw"];

fn raw_header() -> Vec<String> {
    let mut h: Vec<String> = RAW_PREFIX.iter().map(|s| s.to_string()).collect();
    h.extend((0..TAXELS_PER_FINGER).map(|i| format!("tl{i}")));
    h.extend((0..TAXELS_PER_FINGER).map(|i| format!("tr{i}")));
    h
}

fn feature_header() -> Vec<String> {
    std::iter::once("t").chain(FEATURE_NAMES).map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialFile {
    Raw(Trial),
    Features(FeatureSequence),
}

pub fn write_trial_csv<W: Write>(trial: &Trial, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(raw_header())?;
    for s in &trial.samples {
        let row: Vec<String> = std::iter::once(s.t)
            .chain(s.wrench)
            .chain(s.twist)
            .chain(s.pose)
            .chain(s.taxels_left)
            .chain(s.taxels_right)
            .map(|v| v.to_string())
            .collect();
        wr.write_record(row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_feature_csv<W: Write>(seq: &FeatureSequence, w: W) -> Result<()> {
    if seq.dim() != FEATURE_DIM && !seq.is_empty() {
        return Err(Error::invalid("feature files hold exactly 17 feature columns"));
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(feature_header())?;
    for (t, f) in seq.times.iter().zip(&seq.frames) {
        let row: Vec<String> = std::iter::once(*t).chain(f.iter().copied()).map(|v| v.to_string()).collect();
        wr.write_record(row)?;
    }
    wr.flush()?;
    Ok(())
}

fn infer_rate(times: &[f64]) -> f64 {
    if times.len() < 2 {
        return super::DEFAULT_RATE_HZ;
    }
    let mut dts: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(|a, b| a.total_cmp(b));
    1.0 / dts[dts.len() / 2]
}

/// Reads a raw or featurized trial; the header decides which.
pub fn read_trial<R: Read>(skill_id: &str, r: R) -> Result<TrialFile> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    let rows: Vec<Vec<f64>> = rd
        .records()
        .map(|rec| {
            let rec = rec?;
            rec.iter().map(|v| v.parse::<f64>().map_err(|e| Error::invalid(format!("bad number {v:?}: {e}")))).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    if header == feature_header() {
        let times = rows.iter().map(|r| r[0]).collect();
        let frames = rows.iter().map(|r| DVector::from_column_slice(&r[1..])).collect();
        return Ok(TrialFile::Features(FeatureSequence::new(skill_id, times, frames)?));
    }
    if header == raw_header() {
        let samples: Vec<MultimodalSample> = rows
            .iter()
            .map(|r| {
                let mut s = MultimodalSample::at_rest(r[0]);
                s.wrench.copy_from_slice(&r[1..7]);
                s.twist.copy_from_slice(&r[7..13]);
                s.pose.copy_from_slice(&r[13..20]);
                s.taxels_left.copy_from_slice(&r[20..20 + TAXELS_PER_FINGER]);
                s.taxels_right.copy_from_slice(&r[20 + TAXELS_PER_FINGER..RAW_COLUMNS]);
                s
            })
            .collect();
        let rate = infer_rate(&samples.iter().map(|s| s.t).collect::<Vec<_>>());
        return Ok(TrialFile::Raw(Trial::new(skill_id, samples, rate)?));
    }
    Err(Error::invalid(format!("unrecognized trial header ({} columns)", header.len())))
}

/// Reads a trial file; the skill id is taken from the file stem.
pub fn read_trial_file(path: &Path) -> Result<TrialFile> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trial");
    read_trial(stem, std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::extract_features;

    fn trial() -> Trial {
        let samples = (0..5)
            .map(|k| {
                let mut s = MultimodalSample::at_rest(k as f64 * 0.02);
                s.wrench[2] = -9.81 + k as f64 * 0.125;
                s.taxels_left[7] = 0.5 * k as f64;
                s
            })
            .collect();
        Trial::new("pick", samples, 50.0).unwrap()
    }

    #[test]
    fn raw_file_is_detected() {
        let mut buf = Vec::new();
        write_trial_csv(&trial(), &mut buf).unwrap();
        match read_trial("pick", buf.as_slice()).unwrap() {
            TrialFile::Raw(t) => {
                assert_eq!(t, trial());
            }
            other => panic!("expected raw trial, got {other:?}"),
        }
    }

    #[test]
    fn feature_file_is_detected() {
        let seq = extract_features(&trial(), 0.1).unwrap();
        let mut buf = Vec::new();
        write_feature_csv(&seq, &mut buf).unwrap();
        match read_trial("pick", buf.as_slice()).unwrap() {
            TrialFile::Features(f) => assert_eq!(f, seq),
            other => panic!("expected features, got {other:?}"),
        }
    }

    #[test]
    fn unknown_header_is_rejected() {
        assert!(read_trial("x", "a,b\n1,2\n".as_bytes()).is_err());
    }
}
