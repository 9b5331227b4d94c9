use nalgebra::{Isometry3, Matrix3, Matrix4, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-6;

/// Homogeneous transform expressed in the parent goal's frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalTransform {
    matrix: Matrix4<f64>,
}

impl GoalTransform {
    pub fn new(matrix: Matrix4<f64>) -> Result<Self> {
        validate_pose(&matrix)?;
        Ok(GoalTransform { matrix })
    }

    pub fn identity() -> Self {
        GoalTransform { matrix: Matrix4::identity() }
    }

    pub fn translation(x: f64, y: f64, z: f64) -> Self {
        GoalTransform { matrix: Translation3::new(x, y, z).to_homogeneous() }
    }

    /// Transform taking `parent_goal` to `child_goal`.
    pub fn between(parent_goal: &Matrix4<f64>, child_goal: &Matrix4<f64>) -> Result<Self> {
        validate_pose(parent_goal)?;
        validate_pose(child_goal)?;
        Self::new(rigid_inverse(parent_goal) * child_goal)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    /// `parent_goal ∘ T`.
    pub fn apply(&self, parent_goal: &Matrix4<f64>) -> Matrix4<f64> {
        parent_goal * self.matrix
    }
}

fn rigid_inverse(m: &Matrix4<f64>) -> Matrix4<f64> {
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
    let mut out = Matrix4::identity();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r.transpose());
    out.fixed_view_mut::<3, 1>(0, 3).copy_from(&(-r.transpose() * t));
    out
}

/// Checks the rotation block is orthonormal with determinant +1 and the last row is `[0 0 0 1]`.
pub fn validate_pose(m: &Matrix4<f64>) -> Result<()> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("pose has non-finite entries"));
    }
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    if (r * r.transpose() - Matrix3::identity()).abs().max() > ORTHO_TOL {
        return Err(Error::invalid("rotation block is not orthonormal"));
    }
    if (r.determinant() - 1.0).abs() > ORTHO_TOL {
        return Err(Error::invalid("rotation determinant is not +1"));
    }
    let last = m.row(3);
    if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > ORTHO_TOL {
        return Err(Error::invalid("last row must be [0 0 0 1]"));
    }
    Ok(())
}

/// Pose matrix from position and quaternion `[x, y, z, qx, qy, qz, qw]`.
pub fn pose_from_array(p: &[f64; 7]) -> Matrix4<f64> {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(p[6], p[3], p[4], p[5]));
    Isometry3::from_parts(Translation3::new(p[0], p[1], p[2]), q).to_homogeneous()
}

pub fn pose_to_array(m: &Matrix4<f64>) -> [f64; 7] {
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
    let q = UnitQuaternion::from_matrix(&r);
    [m[(0, 3)], m[(1, 3)], m[(2, 3)], q.i, q.j, q.k, q.w]
}
