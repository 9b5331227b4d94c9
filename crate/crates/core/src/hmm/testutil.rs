use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{AllocationKind, HmmModel, Hyperparams, ObsParams, ObservationKind, MODEL_FORMAT_VERSION};

fn random_simplex<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub fn random_model<R: Rng>(rng: &mut R, k: usize, d: usize, observation: ObservationKind) -> HmmModel {
    let obs = (0..k)
        .map(|_| {
            let l = DMatrix::from_fn(d, d, |i, j| if i >= j { rng.random_range(-0.5..0.5) } else { 0.0 });
            let cov = &l * l.transpose() + DMatrix::identity(d, d) * 0.2;
            match observation {
                ObservationKind::Gaussian => ObsParams::Gaussian { mean: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)), cov },
                ObservationKind::Var1 => ObsParams::Var1 { a: DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6)), cov },
                ObservationKind::AffineVar1 => ObsParams::AffineVar1 {
                    a: DMatrix::from_fn(d, d, |_, _| rng.random_range(-0.6..0.6)),
                    b: DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0)),
                    cov,
                },
            }
        })
        .collect();
    HmmModel {
        version: MODEL_FORMAT_VERSION,
        allocation: AllocationKind::FiniteHmm,
        observation,
        dim: d,
        pi0: random_simplex(rng, k),
        trans: (0..k).map(|_| random_simplex(rng, k)).collect(),
        obs,
        hyper: Hyperparams::new(d, observation),
        alpha: 1.0,
        elbo_trace: Vec::new(),
        occupancy: vec![1.0; k],
    }
}
