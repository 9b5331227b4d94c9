//! Dynamic movement primitives.
//!
//! Each degree of freedom is an independent point attractor
//!
//! ```text
//! τ v̇ = K (g − x) − D v − K (g − x0) s + K f(s)
//! τ ẋ = v
//! τ ṡ = −α s
//! ```
//!
//! with `f(s) = Σ wᵢ ψᵢ(s) s / Σ ψᵢ(s)` and Gaussian bases `ψᵢ(s) = exp(−hᵢ (s − cᵢ)²)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_K: f64 = 100.0;
pub const DEFAULT_N_BASIS: usize = 50;
/// Phase value reached at the end of the demonstration.
pub const PHASE_AT_T: f64 = 0.01;
/// Rollouts stop once the phase drops below this value.
pub const PHASE_END: f64 = 1e-3;
pub const DEFAULT_DT: f64 = 1.0 / 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub accelerations: Vec<f64>,
    pub duration: f64,
}

impl Demonstration {
    pub fn new(positions: Vec<f64>, velocities: Vec<f64>, accelerations: Vec<f64>, duration: f64) -> Result<Self> {
        let demo = Demonstration { positions, velocities, accelerations, duration };
        demo.validate()?;
        Ok(demo)
    }

    /// Builds velocities and accelerations by central finite differences on a uniform grid.
    pub fn from_positions(positions: Vec<f64>, duration: f64) -> Result<Self> {
        if positions.len() < 3 || !(duration > 0.0) {
            return Err(Error::Fit("demonstration needs at least 3 samples and a positive duration".into()));
        }
        let dt = duration / (positions.len() - 1) as f64;
        let velocities = gradient(&positions, dt);
        let accelerations = gradient(&velocities, dt);
        Demonstration::new(positions, velocities, accelerations, duration)
    }

    fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n < 3 || self.velocities.len() != n || self.accelerations.len() != n {
            return Err(Error::Fit("demonstration arrays must share a length of at least 3".into()));
        }
        if !(self.duration > 0.0) || !self.duration.is_finite() {
            return Err(Error::Fit("demonstration duration must be positive".into()));
        }
        let all = self.positions.iter().chain(&self.velocities).chain(&self.accelerations);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::Fit("demonstration contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.duration / (self.positions.len() - 1) as f64;
        (0..self.positions.len()).map(|i| i as f64 * dt).collect()
    }
}

fn gradient(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (x[1] - x[0]) / dt
            } else if i == n - 1 {
                (x[n - 1] - x[n - 2]) / dt
            } else {
                (x[i + 1] - x[i - 1]) / (2.0 * dt)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpModel {
    pub k: f64,
    pub d: f64,
    pub alpha: f64,
    pub weights: Vec<f64>,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub x0: f64,
    pub g: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutStep {
    pub t: f64,
    pub x: f64,
    /// Scaled velocity `v = τ ẋ`.
    pub v: f64,
    pub s: f64,
}

impl RolloutStep {
    /// Time derivative of the position.
    pub fn xdot(&self, tau: f64) -> f64 {
        self.v / tau
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub tau: f64,
    pub x0: f64,
    pub g: f64,
    pub steps: Vec<RolloutStep>,
}

impl Rollout {
    pub fn positions(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.x).collect()
    }

    /// Position at time `t`, linearly interpolated between integration steps.
    pub fn position_at(&self, t: f64) -> f64 {
        let idx = self.steps.partition_point(|s| s.t <= t);
        if idx == 0 {
            return self.steps[0].x;
        }
        if idx >= self.steps.len() {
            return self.steps.last().unwrap().x;
        }
        let (a, b) = (&self.steps[idx - 1], &self.steps[idx]);
        a.x + (b.x - a.x) * (t - a.t) / (b.t - a.t)
    }

    /// First time after which `|x − g|` stays within `(1 − fraction)·|g − x0|`.
    pub fn convergence_time(&self, fraction: f64) -> Option<f64> {
        let tol = (1.0 - fraction) * (self.g - self.x0).abs();
        let mut candidate = None;
        for s in &self.steps {
            if (s.x - self.g).abs() <= tol {
                candidate.get_or_insert(s.t);
            } else {
                candidate = None;
            }
        }
        candidate
    }
}

fn basis(centers: &[f64], widths: &[f64], s: f64) -> Vec<f64> {
    centers.iter().zip(widths).map(|(c, h)| (-h * (s - c).powi(2)).exp()).collect()
}

/// Centers equally spaced in time, hence on a log grid in phase.
fn layout_basis(n_basis: usize, alpha: f64) -> (Vec<f64>, Vec<f64>) {
    let centers: Vec<f64> = (0..n_basis).map(|i| (-alpha * i as f64 / (n_basis - 1) as f64).exp()).collect();
    let mut widths: Vec<f64> = centers.windows(2).map(|w| 1.0 / (w[1] - w[0]).powi(2)).collect();
    widths.push(*widths.last().unwrap());
    (centers, widths)
}

impl DmpModel {
    /// An untrained primitive (zero forcing term).
    pub fn zero(n_basis: usize, k: f64, tau: f64, x0: f64, g: f64) -> Result<Self> {
        if n_basis < 2 || !(k > 0.0) || !(tau > 0.0) {
            return Err(Error::invalid("n_basis ≥ 2, K > 0 and tau > 0 are required"));
        }
        let alpha = -PHASE_AT_T.ln();
        let (centers, widths) = layout_basis(n_basis, alpha);
        Ok(DmpModel { k, d: 2.0 * k.sqrt(), alpha, weights: vec![0.0; n_basis], centers, widths, x0, g, tau })
    }

    pub fn n_basis(&self) -> usize {
        self.weights.len()
    }

    pub fn forcing(&self, s: f64) -> f64 {
        let psi = basis(&self.centers, &self.widths, s);
        let den: f64 = psi.iter().sum();
        if den <= f64::MIN_POSITIVE {
            return 0.0;
        }
        psi.iter().zip(&self.weights).map(|(p, w)| p * w).sum::<f64>() * s / den
    }

    fn derivatives(&self, x0: f64, g: f64, tau: f64, state: [f64; 3]) -> [f64; 3] {
        let [x, v, s] = state;
        let vdot = (self.k * (g - x) - self.d * v - self.k * (g - x0) * s + self.k * self.forcing(s)) / tau;
        [v / tau, vdot, -self.alpha * s / tau]
    }

    fn rk4(&self, x0: f64, g: f64, tau: f64, dt: f64, y: [f64; 3]) -> [f64; 3] {
        let add = |a: [f64; 3], b: [f64; 3], h: f64| [a[0] + h * b[0], a[1] + h * b[1], a[2] + h * b[2]];
        let k1 = self.derivatives(x0, g, tau, y);
        let k2 = self.derivatives(x0, g, tau, add(y, k1, dt / 2.0));
        let k3 = self.derivatives(x0, g, tau, add(y, k2, dt / 2.0));
        let k4 = self.derivatives(x0, g, tau, add(y, k3, dt));
        [0, 1, 2].map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
    }

    /// Integrates from phase 1 until the phase falls below [`PHASE_END`].
    pub fn rollout(&self, x0: f64, g: f64, tau: f64, dt: f64) -> Result<Rollout> {
        let max_steps = ((tau * (1.0 / PHASE_END).ln() / self.alpha) / dt).ceil() as usize + 2;
        self.integrate(x0, g, tau, dt, max_steps, true)
    }

    /// Integrates exactly `n_steps` steps regardless of phase.
    pub fn rollout_steps(&self, x0: f64, g: f64, tau: f64, dt: f64, n_steps: usize) -> Result<Rollout> {
        self.integrate(x0, g, tau, dt, n_steps, false)
    }

    fn integrate(&self, x0: f64, g: f64, tau: f64, dt: f64, max_steps: usize, stop_on_phase: bool) -> Result<Rollout> {
        if !(dt > 0.0) || !(tau > 0.0) {
            return Err(Error::invalid("rollout requires dt > 0 and tau > 0"));
        }
        let mut y = [x0, 0.0, 1.0];
        let mut steps = vec![RolloutStep { t: 0.0, x: x0, v: 0.0, s: 1.0 }];
        for i in 1..=max_steps {
            if stop_on_phase && y[2] < PHASE_END {
                break;
            }
            y = self.rk4(x0, g, tau, dt, y);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical { iteration: i, message: "non-finite DMP state".into() });
            }
            steps.push(RolloutStep { t: i as f64 * dt, x: y[0], v: y[1], s: y[2] });
        }
        Ok(Rollout { tau, x0, g, steps })
    }

    /// Rollout with the start, goal and time scale stored in the model.
    pub fn reproduce(&self, dt: f64) -> Result<Rollout> {
        self.rollout(self.x0, self.g, self.tau, dt)
    }
}

/// Fits forcing-term weights to a single demonstration.
///
/// The goal is the final demonstrated position and `τ` the demonstration duration, with `α`
/// chosen so the phase reaches [`PHASE_AT_T`] at the end of the demonstration.
pub fn learn_from_demo(demo: &Demonstration, n_basis: usize, k: f64) -> Result<DmpModel> {
    demo.validate()?;
    if n_basis < 2 {
        return Err(Error::Fit("at least two basis functions are required".into()));
    }
    let x0 = demo.positions[0];
    let g = *demo.positions.last().unwrap();
    let tau = demo.duration;
    let mut model = DmpModel::zero(n_basis, k, tau, x0, g)?;
    let times = demo.times();
    let n = times.len();

    let mut phi = DMatrix::<f64>::zeros(n, n_basis);
    let mut target = DVector::<f64>::zeros(n);
    for (i, &t) in times.iter().enumerate() {
        let s = (-model.alpha * t / tau).exp();
        let psi = basis(&model.centers, &model.widths, s);
        let den: f64 = psi.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        for (j, p) in psi.iter().enumerate() {
            phi[(i, j)] = p * s / den;
        }
        let (x, xd, xdd) = (demo.positions[i], demo.velocities[i], demo.accelerations[i]);
        target[i] = (tau * tau * xdd + model.d * tau * xd) / k - (g - x) + (g - x0) * s;
    }

    let gram = phi.transpose() * &phi;
    let ridge = 1e-10 * gram.diagonal().max().max(1e-300);
    let lhs = gram + DMatrix::<f64>::identity(n_basis, n_basis) * ridge;
    let rhs = phi.transpose() * target;
    let weights = lhs.cholesky().map(|c| c.solve(&rhs)).ok_or_else(|| Error::Fit("singular basis regression".into()))?;
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Fit("non-finite forcing weights".into()));
    }
    model.weights = weights.iter().copied().collect();
    Ok(model)
}

/// One independent primitive per Cartesian / Euler dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmpSkill {
    pub name: String,
    pub dims: Vec<DmpModel>,
}

impl DmpSkill {
    pub fn learn(name: impl Into<String>, demos: &[Demonstration], n_basis: usize, k: f64) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::Fit("no demonstration dimensions".into()));
        }
        let dims = demos.iter().map(|d| learn_from_demo(d, n_basis, k)).collect::<Result<_>>()?;
        Ok(DmpSkill { name: name.into(), dims })
    }

    pub fn tau(&self) -> f64 {
        self.dims[0].tau
    }

    pub fn start(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.x0).collect()
    }

    pub fn goal(&self) -> Vec<f64> {
        self.dims.iter().map(|d| d.g).collect()
    }

    /// Per-dimension rollouts of fixed length, retargeted to `start` → `goal`.
    pub fn rollout_steps(&self, start: &[f64], goal: &[f64], tau: f64, dt: f64, n_steps: usize) -> Result<Vec<Rollout>> {
        if start.len() != self.dims.len() || goal.len() != self.dims.len() {
            return Err(Error::invalid("start/goal dimension does not match the skill"));
        }
        self.dims.iter().enumerate().map(|(i, m)| m.rollout_steps(start[i], goal[i], tau, dt, n_steps)).collect()
    }
}
