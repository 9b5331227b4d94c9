use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};
use spai_core::taskgraph::{pose_from_array, validate_pose};

use crate::error::{Result, SimError};

pub const GRAVITY: f64 = 9.81;

/// Identity orientation `(x, y, z, w)` shared by every scripted pose.
pub const TOOL_DOWN: [f64; 4] = [1.0, 0.0, 0.0, 0.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    /// Position then quaternion `(x, y, z, qx, qy, qz, qw)`.
    pub pose: [f64; 7],
    pub height: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub objects: Vec<ObjectSpec>,
    pub bin_pose: [f64; 7],
    pub box_pose: [f64; 7],
    pub seed: u64,
}

fn pose(p: [f64; 3]) -> [f64; 7] {
    [p[0], p[1], p[2], TOOL_DOWN[0], TOOL_DOWN[1], TOOL_DOWN[2], TOOL_DOWN[3]]
}

pub const HOME: [f64; 3] = [0.4, 0.0, 0.4];
/// Clearance above the object for the approach waypoint.
pub const APPROACH_CLEARANCE: f64 = 0.17;
/// Clearance above the box for the transport waypoint.
pub const TRANSPORT_CLEARANCE: f64 = 0.18;

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            objects: vec![ObjectSpec { id: "snack_box".into(), pose: pose([0.6, -0.3, 0.0]), height: 0.16, mass: 0.5 }],
            bin_pose: pose([0.6, -0.3, 0.0]),
            box_pose: pose([0.6, 0.3, 0.04]),
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(SimError::invalid("world needs at least one object"));
        }
        let finite = |p: &[f64; 7]| p.iter().all(|v| v.is_finite());
        for o in &self.objects {
            if !finite(&o.pose) || !(o.height > 0.0) || !(o.mass > 0.0) {
                return Err(SimError::invalid(format!("object {} has a non-finite pose or non-positive size", o.id)));
            }
            validate_pose(&pose_from_array(&o.pose))?;
        }
        for p in [&self.bin_pose, &self.box_pose] {
            if !finite(p) {
                return Err(SimError::invalid("bin and box poses must be finite"));
            }
            validate_pose(&pose_from_array(p))?;
        }
        Ok(())
    }

    /// Milestone goals for one object: pre-grasp, grasp, lift, pre-place, place.
    pub fn kitting_waypoints(&self, object: usize) -> Result<[[f64; 3]; 5]> {
        let o = self.objects.get(object).ok_or_else(|| SimError::invalid(format!("no object with index {object}")))?;
        let grasp = [o.pose[0], o.pose[1], o.pose[2] + 0.5 * o.height];
        let above = [grasp[0], grasp[1], grasp[2] + APPROACH_CLEARANCE];
        let b = &self.box_pose;
        let place = [b[0], b[1], b[2] + 0.5 * o.height];
        let pre_place = [place[0], place[1], place[2] + TRANSPORT_CLEARANCE];
        Ok([above, grasp, above, pre_place, place])
    }

    pub fn kitting_goals(&self, object: usize) -> Result<[Matrix4<f64>; 5]> {
        let w = self.kitting_waypoints(object)?;
        Ok(w.map(|p| pose_from_array(&pose(p))))
    }
}

/// Mutable object state during an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub current: usize,
    pub holding: bool,
    pub placed: Vec<bool>,
}

impl WorldState {
    pub fn new(cfg: &WorldConfig) -> Self {
        WorldState { current: 0, holding: false, placed: vec![false; cfg.objects.len()] }
    }

    pub fn all_placed(&self) -> bool {
        self.placed.iter().all(|p| *p)
    }
}
