use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spai_core::introspect::AnomalyClass;
use spai_core::signals::Trial;

use crate::error::{Result, SimError};
use crate::profile::{cross, load_force, set_taxels, taxel_reading, SkillProfile, LEVER_ARM};

/// Grace after a transient injector ends during which a flag is still attributed to it.
pub const ATTRIBUTION_GRACE: f64 = 1.0;

/// Impact transient preceding a sustained collision force: duration (s) and peak relative to
/// the sustained magnitude.
pub const IMPACT_DURATION: f64 = 0.25;
pub const IMPACT_GAIN: f64 = 0.5;

/// Direction scatter around the nominal contact direction.
const HC_SPREAD: f64 = 3.0;
const CONTACT_SPREAD: f64 = 0.25;

/// A person strikes the arm rather than the tool, so the estimated wrist wrench carries a
/// longer moment arm.
const HC_LEVER_ARM: [f64; 3] = [0.0, 0.1, 0.15];

/// Linear speed retained while blocked by a tool or wall.
const TC_SPEED_RETAINED: f64 = 0.3;
const WC_SPEED_RETAINED: f64 = 0.5;

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyInjector {
    pub class: AnomalyClass,
    /// Exact node id the injector is attached to.
    pub node: String,
    /// Seconds after the node starts executing.
    pub onset: f64,
    pub duration: f64,
    /// Force amplitude in N for collisions; fraction of the object lost for OS/NO.
    pub magnitude: f64,
    /// Build-up time (s) of a sustained force or of a slip; 0 is a step.
    #[serde(default)]
    pub rise: f64,
    #[serde(default)]
    pub persistent: bool,
    /// Which execution of `node` (1-based) a non-persistent injector fires on.
    #[serde(default = "one")]
    pub occurrence: u32,
}

impl AnomalyInjector {
    pub fn new(class: AnomalyClass, node: &str, onset: f64, duration: f64, magnitude: f64) -> Self {
        AnomalyInjector { class, node: node.to_string(), onset, duration, magnitude, rise: 0.0, persistent: false, occurrence: 1 }
    }

    pub fn with_rise(mut self, rise: f64) -> Self {
        self.rise = rise;
        self
    }

    pub fn persistent(mut self) -> Self {
        self.persistent = true;
        self
    }

    pub fn on_occurrence(mut self, k: u32) -> Self {
        self.occurrence = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.onset.is_finite() && self.onset >= 0.0) {
            return Err(SimError::invalid(format!("injector onset {} must be finite and non-negative", self.onset)));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(SimError::invalid("injector duration must be finite and non-negative"));
        }
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(SimError::invalid("injector magnitude must be finite and non-negative"));
        }
        if !(self.rise.is_finite() && self.rise >= 0.0) {
            return Err(SimError::invalid("injector rise time must be finite and non-negative"));
        }
        if self.occurrence == 0 {
            return Err(SimError::invalid("occurrences are counted from 1"));
        }
        if !self.class.loses_object() && self.magnitude > 0.0 && self.duration <= 0.0 {
            return Err(SimError::invalid("collision injectors need a positive duration"));
        }
        Ok(())
    }

    pub fn fires_on(&self, node: &str, occurrence: u32) -> bool {
        self.node == node && (self.persistent || self.occurrence == occurrence)
    }

    /// Whether the injector takes the object away from the gripper.
    pub fn removes_object(&self) -> bool {
        self.class.loses_object() && self.magnitude >= 0.5
    }

    /// Whether a flag at local time `t` is attributable to this injector.
    pub fn explains(&self, t: f64) -> bool {
        if self.magnitude == 0.0 || t < self.onset {
            return false;
        }
        self.class.loses_object() || t <= self.onset + self.duration + ATTRIBUTION_GRACE
    }
}

pub struct InjectionContext<'a> {
    pub profile: &'a SkillProfile,
    pub mass: f64,
    pub seed: u64,
}

fn unit(v: [f64; 3]) -> Option<[f64; 3]> {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    (n > 1e-9).then(|| [v[0] / n, v[1] / n, v[2] / n])
}

fn add_force(s: &mut spai_core::signals::MultimodalSample, f: [f64; 3]) {
    add_force_at(s, f, &LEVER_ARM);
}

fn add_force_at(s: &mut spai_core::signals::MultimodalSample, f: [f64; 3], arm: &[f64; 3]) {
    let tq = cross(arm, &f);
    for k in 0..3 {
        s.wrench[k] += f[k];
        s.wrench[3 + k] += tq[k];
    }
}

/// Applies the class signature of `inj` to a copy of `trial`.
pub fn inject(trial: &Trial, inj: &AnomalyInjector, ctx: &InjectionContext<'_>) -> Result<Trial> {
    inj.validate()?;
    let end = trial.samples.last().map_or(0.0, |s| s.t);
    if inj.onset > end {
        return Err(SimError::invalid(format!("onset {}s is beyond the {end}s stream", inj.onset)));
    }
    let mut out = trial.clone();
    if inj.magnitude == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    rng.set_stream(2);
    let t_end = inj.onset + inj.duration;
    let within = |t: f64| t >= inj.onset - 1e-9 && t <= t_end + 1e-9;
    let build = |t: f64, delay: f64| {
        let t0 = inj.onset + delay;
        if inj.rise > 0.0 {
            ((t - t0) / inj.rise).clamp(0.0, 1.0)
        } else if t >= t0 - 1e-9 {
            1.0
        } else {
            0.0
        }
    };
    let half_sine =
        |t: f64, d: f64| if t >= inj.onset && t <= inj.onset + d { (std::f64::consts::PI * (t - inj.onset) / d).sin() } else { 0.0 };
    let (first, last) = (trial.samples[0].pose, trial.samples[trial.len() - 1].pose);
    let against_motion = unit([first[0] - last[0], first[1] - last[1], first[2] - last[2]]).unwrap_or([0.0, 0.0, 1.0]);
    let mut jitter = |base: [f64; 3], spread: f64| loop {
        let r = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        if let Some(u) = unit([base[0] + spread * r[0], base[1] + spread * r[1], base[2] + spread * r[2]]) {
            break u;
        }
    };
    match inj.class {
        AnomalyClass::HumanCollision => {
            let dir = jitter(against_motion, HC_SPREAD);
            for s in out.samples.iter_mut().filter(|s| within(s.t)) {
                let a = inj.magnitude * half_sine(s.t, inj.duration);
                add_force_at(s, [a * dir[0], a * dir[1], a * dir[2]], &HC_LEVER_ARM);
            }
        }
        AnomalyClass::ToolCollision | AnomalyClass::WallCollision => {
            let (dir, keep) = if inj.class == AnomalyClass::WallCollision {
                (jitter([1.0, 0.0, 0.0], CONTACT_SPREAD), WC_SPEED_RETAINED)
            } else {
                (jitter(against_motion, CONTACT_SPREAD), TC_SPEED_RETAINED)
            };
            for s in out.samples.iter_mut().filter(|s| within(s.t)) {
                let b = build(s.t, IMPACT_DURATION);
                let a = inj.magnitude * (b + IMPACT_GAIN * half_sine(s.t, IMPACT_DURATION));
                add_force(s, [a * dir[0], a * dir[1], a * dir[2]]);
                for k in 0..3 {
                    s.twist[k] *= 1.0 - (1.0 - keep) * b;
                }
            }
        }
        AnomalyClass::ObjectSlip | AnomalyClass::NoObject => {
            let f_load = load_force(ctx.mass);
            let n = out.len() as f64;
            for (i, s) in out.samples.iter_mut().enumerate() {
                if s.t < inj.onset - 1e-9 {
                    continue;
                }
                let frac = i as f64 / n;
                let w = inj.magnitude.min(1.0) * build(s.t, 0.0);
                let lw = ctx.profile.load.weight(frac) * w;
                add_force(s, [-lw * f_load[0], -lw * f_load[1], -lw * f_load[2]]);
                let cw = ctx.profile.contact.weight(frac) * (1.0 - w);
                let tx = taxel_reading(&ctx.profile.taxel_pattern, cw, 1.0, &mut rng);
                set_taxels(s, &tx);
            }
        }
    }
    Ok(out)
}
