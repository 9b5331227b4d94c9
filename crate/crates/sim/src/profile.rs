//! Ground-truth skill dynamics.
//!
//! Each skill owns 2–4 segments of a mean-reverting VAR(1) over a 12-dimensional latent
//! deviation `u` (force, torque, linear and angular velocity, in unit scale):
//! `u_t = c_s + A_s (u_{t−1} − c_s) + ε_t`. Physical deviations are `u ∘ CHANNEL_SCALE`,
//! added to the commanded motion, the object load and the taxel contact pattern.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use spai_core::dmp::{Demonstration, DmpSkill, DEFAULT_K, DEFAULT_N_BASIS};
use spai_core::signals::{MultimodalSample, Trial, DEFAULT_RATE_HZ, TAXELS_PER_FINGER};
use spai_core::taskgraph::KITTING_SKILLS;

use crate::error::{Result, SimError};
use crate::world::{WorldConfig, GRAVITY, HOME, TOOL_DOWN};

pub const LATENT_DIM: usize = 12;

/// Physical units of one latent unit: N, N·m, m/s, rad/s.
pub const CHANNEL_SCALE: [f64; 4] = [0.6, 0.03, 0.004, 0.01];

/// Sensor-to-object lever arm (m).
pub const LEVER_ARM: [f64; 3] = [0.02, 0.0, 0.1];

pub const TAXEL_PRESSURE: f64 = 1.0;
pub const TAXEL_CONTACT_NOISE: f64 = 0.05;
pub const TAXEL_BASELINE_NOISE: f64 = 0.005;

const PROFILE_SEED: u64 = 0x5eed_0001;

pub fn channel_scale(i: usize) -> f64 {
    CHANNEL_SCALE[i / 3]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Start as a fraction of the trial duration.
    pub start: f64,
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Innovation standard deviations in latent units.
    pub sigma: DVector<f64>,
}

/// Piecewise-linear weight over the trial fraction: `from` before `at`, `to` after `at + width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub from: f64,
    pub to: f64,
    pub at: f64,
    pub width: f64,
}

impl Ramp {
    pub fn constant(v: f64) -> Self {
        Ramp { from: v, to: v, at: 0.0, width: 0.0 }
    }

    pub fn weight(&self, frac: f64) -> f64 {
        if frac <= self.at {
            self.from
        } else if self.width <= 0.0 || frac >= self.at + self.width {
            self.to
        } else {
            self.from + (self.to - self.from) * (frac - self.at) / self.width
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillProfile {
    pub skill_id: String,
    pub duration: f64,
    /// DMP time constant as a fraction of the duration; the arm settles afterwards.
    pub motion_fraction: f64,
    pub segments: Vec<Segment>,
    pub contact: Ramp,
    pub load: Ramp,
    pub taxel_pattern: Vec<f64>,
}

impl SkillProfile {
    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.segments.len()) {
            return Err(SimError::invalid(format!("skill {} needs 2 to 4 segments", self.skill_id)));
        }
        if self.segments[0].start != 0.0 || self.segments.windows(2).any(|w| !(w[0].start < w[1].start)) {
            return Err(SimError::invalid("segment starts must begin at 0 and increase"));
        }
        if !(self.duration > 0.0) || !(self.motion_fraction > 0.0 && self.motion_fraction <= 1.0) {
            return Err(SimError::invalid("duration and motion fraction must be positive"));
        }
        if self.taxel_pattern.len() != 2 * TAXELS_PER_FINGER {
            return Err(SimError::invalid("taxel pattern must cover both fingers"));
        }
        Ok(())
    }

    pub fn segment_at(&self, frac: f64) -> usize {
        self.segments.iter().rposition(|s| s.start <= frac).unwrap_or(0)
    }

    pub fn expects_object(&self) -> bool {
        self.contact.from > 0.0 || self.load.from > 0.0
    }

    /// Latent trajectory with `n` samples; `innovation_scale = 0` gives the deterministic orbit
    /// started at the first segment's mean.
    pub fn latent(&self, n: usize, seed: u64, innovation_scale: f64) -> Vec<DVector<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let mut out = Vec::with_capacity(n);
        let mut u = self.segments[0].c.clone();
        for i in 0..n {
            let frac = i as f64 / n as f64;
            let seg = &self.segments[self.segment_at(frac)];
            let eps = DVector::from_fn(LATENT_DIM, |j, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * seg.sigma[j] * innovation_scale
            });
            u = if i == 0 { &u + eps } else { &seg.c + &seg.a * (&u - &seg.c) + eps };
            out.push(u.clone());
        }
        out
    }
}

/// Commanded Cartesian path at the sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionPlan {
    pub positions: Vec<[f64; 3]>,
    pub velocities: Vec<[f64; 3]>,
}

impl MotionPlan {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A skill's learned primitive together with its canonical endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillMotion {
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub dmp: DmpSkill,
}

impl SkillMotion {
    /// Learns a primitive per axis from a minimum-jerk demonstration through `waypoints`.
    pub fn from_waypoints(name: &str, waypoints: &[[f64; 3]], duration: f64, rate_hz: f64) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(SimError::invalid("a demonstration needs at least two waypoints"));
        }
        let path = min_jerk_path(waypoints, duration, rate_hz);
        let demos = (0..3)
            .map(|k| Demonstration::from_positions(path.iter().map(|p| p[k]).collect(), duration))
            .collect::<spai_core::Result<Vec<_>>>()?;
        let dmp = DmpSkill::learn(name, &demos, DEFAULT_N_BASIS, DEFAULT_K)?;
        Ok(SkillMotion { start: waypoints[0], goal: *waypoints.last().unwrap(), dmp })
    }

    pub fn plan(&self, start: &[f64; 3], goal: &[f64; 3], tau: f64, rate_hz: f64, n: usize) -> Result<MotionPlan> {
        let rolls = self.dmp.rollout_steps(start, goal, tau, 1.0 / rate_hz, n)?;
        let positions = (0..n).map(|i| [rolls[0].steps[i].x, rolls[1].steps[i].x, rolls[2].steps[i].x]).collect();
        let velocities = (0..n).map(|i| [rolls[0].steps[i].xdot(tau), rolls[1].steps[i].xdot(tau), rolls[2].steps[i].xdot(tau)]).collect();
        Ok(MotionPlan { positions, velocities })
    }
}

/// Minimum-jerk interpolation through equally timed waypoints.
pub fn min_jerk_path(waypoints: &[[f64; 3]], duration: f64, rate_hz: f64) -> Vec<[f64; 3]> {
    let n = (duration * rate_hz).round() as usize + 1;
    let legs = (waypoints.len() - 1) as f64;
    (0..n)
        .map(|i| {
            let u = (i as f64 / (n - 1) as f64 * legs).min(legs);
            let leg = (u.floor() as usize).min(waypoints.len() - 2);
            let s = u - leg as f64;
            let h = 10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5);
            let (a, b) = (waypoints[leg], waypoints[leg + 1]);
            [a[0] + (b[0] - a[0]) * h, a[1] + (b[1] - a[1]) * h, a[2] + (b[2] - a[2]) * h]
        })
        .collect()
}

/// Whether the object is where the skill expects it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub mass: f64,
    pub object_present: bool,
}

pub fn load_force(mass: f64) -> [f64; 3] {
    [0.0, 0.0, -mass * GRAVITY]
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn sample_count(duration: f64, rate_hz: f64) -> usize {
    (duration * rate_hz).round() as usize
}

/// Fresh taxel readings for contact weight `w`.
pub fn taxel_reading<R: Rng>(pattern: &[f64], w: f64, noise_scale: f64, rng: &mut R) -> [f64; 2 * TAXELS_PER_FINGER] {
    let sd = (TAXEL_BASELINE_NOISE + w * (TAXEL_CONTACT_NOISE - TAXEL_BASELINE_NOISE)) * noise_scale;
    let mut out = [0.0; 2 * TAXELS_PER_FINGER];
    for (k, o) in out.iter_mut().enumerate() {
        let z: f64 = StandardNormal.sample(rng);
        *o = w * TAXEL_PRESSURE * pattern[k] + sd * z;
    }
    out
}

pub fn set_taxels(s: &mut MultimodalSample, t: &[f64; 2 * TAXELS_PER_FINGER]) {
    s.taxels_left.copy_from_slice(&t[..TAXELS_PER_FINGER]);
    s.taxels_right.copy_from_slice(&t[TAXELS_PER_FINGER..]);
}

/// Renders one execution of a skill along `plan`.
pub fn synthesize(
    profile: &SkillProfile,
    plan: &MotionPlan,
    cond: &Conditions,
    seed: u64,
    innovation_scale: f64,
    rate_hz: f64,
) -> Result<Trial> {
    let n = plan.len();
    if n < 2 {
        return Err(SimError::invalid("motion plan is too short"));
    }
    let latent = profile.latent(n, seed, innovation_scale);
    let mut taxel_rng = ChaCha8Rng::seed_from_u64(seed);
    taxel_rng.set_stream(1);
    let f_load = load_force(cond.mass);
    let presence = if cond.object_present { 1.0 } else { 0.0 };
    let samples = (0..n)
        .map(|i| {
            let frac = i as f64 / n as f64;
            let lw = profile.load.weight(frac) * presence;
            let cw = profile.contact.weight(frac) * presence;
            let dev: Vec<f64> = (0..LATENT_DIM).map(|j| latent[i][j] * channel_scale(j)).collect();
            let f = [lw * f_load[0], lw * f_load[1], lw * f_load[2]];
            let tq = cross(&LEVER_ARM, &f);
            let p = plan.positions[i];
            let v = plan.velocities[i];
            let mut s = MultimodalSample {
                t: i as f64 / rate_hz,
                wrench: [f[0] + dev[0], f[1] + dev[1], f[2] + dev[2], tq[0] + dev[3], tq[1] + dev[4], tq[2] + dev[5]],
                twist: [v[0] + dev[6], v[1] + dev[7], v[2] + dev[8], dev[9], dev[10], dev[11]],
                pose: [p[0], p[1], p[2], TOOL_DOWN[0], TOOL_DOWN[1], TOOL_DOWN[2], TOOL_DOWN[3]],
                taxels_left: [0.0; TAXELS_PER_FINGER],
                taxels_right: [0.0; TAXELS_PER_FINGER],
            };
            let tx = taxel_reading(&profile.taxel_pattern, cw, innovation_scale, &mut taxel_rng);
            set_taxels(&mut s, &tx);
            s
        })
        .collect();
    Ok(Trial::new(profile.skill_id.clone(), samples, rate_hz)?)
}

struct SkillShape {
    duration: f64,
    motion_fraction: f64,
    boundaries: &'static [f64],
    contact: Ramp,
    load: Ramp,
}

fn kitting_shape(skill: &str) -> SkillShape {
    let none = Ramp::constant(0.0);
    let full = Ramp::constant(1.0);
    match skill {
        "move_to_pick" => SkillShape { duration: 3.0, motion_fraction: 0.8, boundaries: &[0.0, 0.3, 0.8], contact: none, load: none },
        "pick_approach" => SkillShape {
            duration: 2.5,
            motion_fraction: 0.64,
            boundaries: &[0.0, 0.4, 0.74],
            contact: Ramp { from: 0.0, to: 1.0, at: 0.76, width: 0.08 },
            load: none,
        },
        "pick_lift" => SkillShape { duration: 2.0, motion_fraction: 0.75, boundaries: &[0.0, 0.5], contact: full, load: full },
        "move_to_place" => {
            SkillShape { duration: 3.5, motion_fraction: 0.8, boundaries: &[0.0, 0.25, 0.6, 0.85], contact: full, load: full }
        }
        _ => SkillShape {
            duration: 2.5,
            motion_fraction: 0.64,
            boundaries: &[0.0, 0.45, 0.74],
            contact: Ramp { from: 1.0, to: 0.0, at: 0.8, width: 0.08 },
            load: Ramp { from: 1.0, to: 0.0, at: 0.76, width: 0.04 },
        },
    }
}

fn random_segment<R: Rng>(rng: &mut R, start: f64) -> Segment {
    let mut a = DMatrix::zeros(LATENT_DIM, LATENT_DIM);
    for i in 0..LATENT_DIM {
        a[(i, i)] = rng.random_range(0.3..0.75);
    }
    // forces drive torques and velocities; keeps the spectrum on the diagonal
    for f in 0..3 {
        a[(3 + (f + 1) % 3, f)] = rng.random_range(-0.2..0.2);
        a[(6 + f, f)] = rng.random_range(-0.15..0.15);
    }
    let c = DVector::from_fn(LATENT_DIM, |_, _| rng.random_range(-1.5..1.5));
    let sigma = DVector::from_fn(LATENT_DIM, |_, _| rng.random_range(0.5..1.0));
    Segment { start, a, c, sigma }
}

/// Ground-truth profile for one of the kitting skills, drawn from a fixed profile seed.
pub fn kitting_profile(skill: &str) -> Result<SkillProfile> {
    let idx = KITTING_SKILLS.iter().position(|(_, s)| *s == skill).ok_or_else(|| SimError::invalid(format!("unknown skill {skill}")))?;
    let shape = kitting_shape(skill);
    let mut rng = ChaCha8Rng::seed_from_u64(PROFILE_SEED + idx as u64);
    let segments = shape.boundaries.iter().map(|&b| random_segment(&mut rng, b)).collect();
    let taxel_pattern = (0..2 * TAXELS_PER_FINGER).map(|_| rng.random_range(0.2..1.0)).collect();
    let p = SkillProfile {
        skill_id: skill.to_string(),
        duration: shape.duration,
        motion_fraction: shape.motion_fraction,
        segments,
        contact: shape.contact,
        load: shape.load,
        taxel_pattern,
    };
    p.validate()?;
    Ok(p)
}

/// Registered skills with ground-truth dynamics and learned motion primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillCatalog {
    pub rate_hz: f64,
    pub mass: f64,
    pub profiles: BTreeMap<String, SkillProfile>,
    pub motions: BTreeMap<String, SkillMotion>,
}

impl SkillCatalog {
    /// The five kitting skills for the first object of `world`.
    pub fn kitting(world: &WorldConfig) -> Result<Self> {
        world.validate()?;
        let wp = world.kitting_waypoints(0)?;
        let starts = [HOME, wp[0], wp[1], wp[2], wp[3]];
        let mut profiles = BTreeMap::new();
        let mut motions = BTreeMap::new();
        for (i, (_, skill)) in KITTING_SKILLS.iter().enumerate() {
            let p = kitting_profile(skill)?;
            let tau = p.duration * p.motion_fraction;
            motions.insert(skill.to_string(), SkillMotion::from_waypoints(skill, &[starts[i], wp[i]], tau, DEFAULT_RATE_HZ)?);
            profiles.insert(skill.to_string(), p);
        }
        Ok(SkillCatalog { rate_hz: DEFAULT_RATE_HZ, mass: world.objects[0].mass, profiles, motions })
    }

    pub fn profile(&self, skill: &str) -> Result<&SkillProfile> {
        self.profiles.get(skill).ok_or_else(|| SimError::invalid(format!("unknown skill {skill}")))
    }

    pub fn motion(&self, skill: &str) -> Result<&SkillMotion> {
        self.motions.get(skill).ok_or_else(|| SimError::invalid(format!("unknown skill {skill}")))
    }

    /// One execution from `start` to `goal`, rendered for `duration` seconds.
    pub fn render(
        &self,
        skill: &str,
        start: &[f64; 3],
        goal: &[f64; 3],
        cond: &Conditions,
        seed: u64,
        duration: f64,
        innovation_scale: f64,
    ) -> Result<Trial> {
        let p = self.profile(skill)?;
        let n = sample_count(duration, self.rate_hz);
        let plan = self.motion(skill)?.plan(start, goal, p.motion_fraction * duration, self.rate_hz, n)?;
        synthesize(p, &plan, cond, seed, innovation_scale, self.rate_hz)
    }

    /// Nominal stream along the canonical path with the object where the skill expects it.
    pub fn generate_nominal(&self, skill: &str, seed: u64, duration: f64) -> Result<Trial> {
        self.generate_nominal_scaled(skill, seed, duration, 1.0)
    }

    pub fn generate_nominal_scaled(&self, skill: &str, seed: u64, duration: f64, innovation_scale: f64) -> Result<Trial> {
        if !(duration > 0.0) {
            return Err(SimError::invalid("duration must be positive"));
        }
        let m = self.motion(skill)?;
        let cond = Conditions { mass: self.mass, object_present: true };
        self.render(skill, &m.start, &m.goal, &cond, seed, duration, innovation_scale)
    }

    pub fn default_duration(&self, skill: &str) -> Result<f64> {
        Ok(self.profile(skill)?.duration)
    }

    /// Registers a derived skill sharing `base`'s dynamics with a new motion.
    pub fn register_derived(&mut self, skill: &str, base: &str, motion: SkillMotion) -> Result<()> {
        let mut p = self.profile(base)?.clone();
        p.skill_id = skill.to_string();
        self.profiles.insert(skill.to_string(), p);
        self.motions.insert(skill.to_string(), motion);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_interpolates() {
        let r = Ramp { from: 0.0, to: 1.0, at: 0.5, width: 0.2 };
        assert_eq!(r.weight(0.4), 0.0);
        assert!((r.weight(0.6) - 0.5).abs() < 1e-12);
        assert_eq!(r.weight(0.8), 1.0);
    }

    #[test]
    fn kitting_profiles_are_stable() {
        for (_, s) in KITTING_SKILLS {
            let p = kitting_profile(s).unwrap();
            assert_eq!(p, kitting_profile(s).unwrap());
            for seg in &p.segments {
                for i in 0..LATENT_DIM {
                    assert!(seg.a[(i, i)].abs() < 1.0);
                }
            }
        }
        assert!(kitting_profile("juggle").is_err());
    }

    #[test]
    fn min_jerk_hits_waypoints() {
        let p = min_jerk_path(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]], 1.0, 50.0);
        assert_eq!(p.len(), 51);
        assert_eq!(p[0], [0.0, 0.0, 0.0]);
        assert!((p[50][2] - 3.0).abs() < 1e-12);
    }
}
