//! Pinhole camera model, ground-plane poses and unicycle kinematics.
//!
//! Camera frame convention: x right, y down, z forward. The camera looks
//! along the robot heading. Positive angular velocity turns the robot left
//! (counterclockwise seen from above).

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points closer than this along the optical axis are not projected.
pub const Z_NEAR: f64 = 0.1;
/// Depth magnitude below which flow predictions are degenerate.
pub const EPS_DEPTH: f64 = 1e-6;
/// Angular rates below this are integrated as straight lines.
pub const EPS_OMEGA: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid camera mount: height must be positive, got {0}")]
    InvalidMount(f64),
    #[error("degenerate depth: |z| or |z - delta| below {EPS_DEPTH} (z = {z}, delta = {delta})")]
    DegenerateDepth { z: f64, delta: f64 },
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        let k = Self { fx, fy, cx, cy, width, height };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(GeometryError::InvalidIntrinsics(msg.to_string())) };
        ok(self.fx > 0.0 && self.fy > 0.0, "focal lengths must be positive")?;
        ok(self.cx > 0.0 && self.cx < self.width, "cx must lie inside the image")?;
        ok(self.cy > 0.0 && self.cy < self.height, "cy must lie inside the image")?;
        Ok(())
    }

    pub fn contains(&self, px: PixelPoint) -> bool {
        px.u >= 0.0 && px.u < self.width && px.v >= 0.0 && px.v < self.height
    }
}

impl Default for CameraIntrinsics {
    /// 640x480 camera with fx = fy = 500.
    fn default() -> Self {
        Self { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640.0, height: 480.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

/// Robot pose on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self { x, y, heading: normalize_angle(heading) }
    }

    pub fn distance_to(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Expresses a world-frame point in this pose's body frame (x forward, y left).
    pub fn to_local(&self, wx: f64, wy: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        let dx = wx - self.x;
        let dy = wy - self.y;
        (c * dx + s * dy, -s * dx + c * dy)
    }

    /// Maps a body-frame point to the world frame.
    pub fn to_world(&self, lx: f64, ly: f64) -> (f64, f64) {
        let (s, c) = self.heading.sin_cos();
        (self.x + c * lx - s * ly, self.y + s * lx + c * ly)
    }
}

/// Where the camera sits on the robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraMount {
    pub height: f64,
    pub forward_offset: f64,
}

impl CameraMount {
    pub fn new(height: f64, forward_offset: f64) -> Result<Self, GeometryError> {
        let m = Self { height, forward_offset };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.height > 0.0 {
            Ok(())
        } else {
            Err(GeometryError::InvalidMount(self.height))
        }
    }

    /// Ground-plane position of the camera center for a robot pose.
    pub fn camera_position(&self, pose: &Pose2) -> (f64, f64) {
        pose.to_world(self.forward_offset, 0.0)
    }

    /// World point expressed in the camera frame (x right, y down, z forward).
    pub fn world_to_camera(&self, pose: &Pose2, p: &Point3) -> Point3 {
        let (cx, cy) = self.camera_position(pose);
        let (s, c) = pose.heading.sin_cos();
        let dx = p.x - cx;
        let dy = p.y - cy;
        let forward = c * dx + s * dy;
        let left = -s * dx + c * dy;
        Point3::new(-left, self.height - p.z, forward)
    }
}

impl Default for CameraMount {
    fn default() -> Self {
        Self { height: 1.0, forward_offset: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub id: u64,
    pub position: Point3,
}

/// Linear (m/s) and angular (rad/s, positive = left) velocity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub linear: f64,
    pub angular: f64,
}

impl VelocityCommand {
    pub fn new(linear: f64, angular: f64) -> Self {
        Self { linear, angular }
    }

    pub fn stop() -> Self {
        Self::default()
    }

    pub fn is_stop(&self) -> bool {
        self.linear == 0.0 && self.angular == 0.0
    }

    pub fn clamped(&self, v_max: f64, omega_max: f64) -> Self {
        Self {
            linear: self.linear.clamp(-v_max, v_max),
            angular: self.angular.clamp(-omega_max, omega_max),
        }
    }
}

/// Projects a camera-frame point. `None` when behind `Z_NEAR` or outside the image.
pub fn project_camera_point(k: &CameraIntrinsics, p: &Point3) -> Option<PixelPoint> {
    if p.z <= Z_NEAR {
        return None;
    }
    let px = PixelPoint::new(k.fx * (p.x / p.z) + k.cx, k.fy * (p.y / p.z) + k.cy);
    k.contains(px).then_some(px)
}

/// Projects a world landmark seen from a robot pose.
pub fn project(k: &CameraIntrinsics, pose: &Pose2, mount: &CameraMount, landmark: &Landmark) -> Option<PixelPoint> {
    project_camera_point(k, &mount.world_to_camera(pose, &landmark.position))
}

/// Inverse of the projection for a known camera-frame depth.
pub fn back_project(k: &CameraIntrinsics, px: PixelPoint, depth: f64) -> Point3 {
    Point3::new((px.u - k.cx) / k.fx * depth, (px.v - k.cy) / k.fy * depth, depth)
}

/// Horizontal pixel shift of a camera-frame point when the camera advances
/// `delta` meters along its optical axis.
pub fn predict_translation_shift(k: &CameraIntrinsics, p: &Point3, delta: f64) -> Result<f64, GeometryError> {
    let z_after = p.z - delta;
    if p.z.abs() < EPS_DEPTH || z_after.abs() < EPS_DEPTH {
        return Err(GeometryError::DegenerateDepth { z: p.z, delta });
    }
    Ok(k.fx * p.x * delta / (p.z * z_after))
}

/// Horizontal pixel shift under a pure yaw of `theta` with depth change neglected.
pub fn predict_rotation_shift(k: &CameraIntrinsics, theta: f64) -> f64 {
    k.fx * theta.sin()
}

/// Exact arc integration of unicycle kinematics over `dt` seconds.
pub fn step_unicycle(pose: &Pose2, cmd: &VelocityCommand, dt: f64) -> Pose2 {
    let (v, w) = (cmd.linear, cmd.angular);
    let h = pose.heading;
    if w.abs() < EPS_OMEGA {
        Pose2::new(pose.x + v * dt * h.cos(), pose.y + v * dt * h.sin(), h)
    } else {
        // chord of the arc, taken along the mid-arc heading
        let half = 0.5 * w * dt;
        let chord = 2.0 * v / w * half.sin();
        let mid = h + half;
        Pose2::new(pose.x + chord * mid.cos(), pose.y + chord * mid.sin(), h + w * dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn k500() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let px = project_camera_point(&k500(), &Point3::new(0.0, 0.0, 5.0)).unwrap();
        assert_eq!(px, PixelPoint::new(320.0, 240.0));
    }

    #[test]
    fn off_axis_projection() {
        let px = project_camera_point(&k500(), &Point3::new(1.0, 0.5, 5.0)).unwrap();
        assert_relative_eq!(px.u, 420.0, epsilon = 1e-12);
        assert_relative_eq!(px.v, 290.0, epsilon = 1e-12);
    }

    #[test]
    fn behind_camera_is_not_projected() {
        assert!(project_camera_point(&k500(), &Point3::new(0.0, 0.0, -1.0)).is_none());
        assert!(project_camera_point(&k500(), &Point3::new(0.0, 0.0, 0.05)).is_none());
        // outside the image
        assert!(project_camera_point(&k500(), &Point3::new(10.0, 0.0, 1.0)).is_none());
    }

    #[test]
    fn world_projection_uses_heading() {
        // robot at origin facing +y, landmark 5 m ahead at camera height
        let pose = Pose2::new(0.0, 0.0, FRAC_PI_2);
        let mount = CameraMount::default();
        let lm = Landmark { id: 0, position: Point3::new(0.0, 5.0, 1.0) };
        let px = project(&k500(), &pose, &mount, &lm).unwrap();
        assert_relative_eq!(px.u, 320.0, epsilon = 1e-9);
        assert_relative_eq!(px.v, 240.0, epsilon = 1e-9);
        // a landmark to the robot's left appears left of center
        let left = Landmark { id: 1, position: Point3::new(-1.0, 5.0, 1.0) };
        assert!(project(&k500(), &pose, &mount, &left).unwrap().u < 320.0);
    }

    #[test]
    fn translation_shift_values() {
        let k = k500();
        assert_relative_eq!(predict_translation_shift(&k, &Point3::new(1.0, 0.0, 5.0), 1.0).unwrap(), 25.0, epsilon = 1e-12);
        assert_eq!(predict_translation_shift(&k, &Point3::new(0.0, 0.3, 5.0), 0.7).unwrap(), 0.0);
        let a = predict_translation_shift(&k, &Point3::new(1.0, 0.0, 5.0), 1.0).unwrap();
        let b = predict_translation_shift(&k, &Point3::new(-1.0, 0.0, 5.0), 1.0).unwrap();
        assert_eq!(a + b, 0.0);
    }

    #[test]
    fn translation_shift_degenerate_depth() {
        let k = k500();
        assert!(matches!(
            predict_translation_shift(&k, &Point3::new(1.0, 0.0, 2.0), 2.0),
            Err(GeometryError::DegenerateDepth { .. })
        ));
        assert!(predict_translation_shift(&k, &Point3::new(1.0, 0.0, 0.0), 1.0).is_err());
    }

    #[test]
    fn translation_shift_matches_projection_difference() {
        let k = k500();
        let p = Point3::new(0.8, -0.2, 6.0);
        let before = project_camera_point(&k, &p).unwrap();
        let after = project_camera_point(&k, &Point3::new(p.x, p.y, p.z - 1.5)).unwrap();
        assert_relative_eq!(after.u - before.u, predict_translation_shift(&k, &p, 1.5).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn rotation_shift_values() {
        let k = k500();
        assert_relative_eq!(predict_rotation_shift(&k, 0.1), 49.916708, epsilon = 1e-6);
        assert_eq!(predict_rotation_shift(&k, 0.0), 0.0);
        assert_relative_eq!(predict_rotation_shift(&k, -0.1), -49.916708, epsilon = 1e-6);
    }

    #[test]
    fn unicycle_examples() {
        let o = Pose2::default();
        let p = step_unicycle(&o, &VelocityCommand::new(1.0, 0.0), 1.0);
        assert_relative_eq!(p.x, 1.0);
        assert_eq!((p.y, p.heading), (0.0, 0.0));

        let p = step_unicycle(&o, &VelocityCommand::new(0.0, FRAC_PI_2), 1.0);
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert_relative_eq!(p.heading, FRAC_PI_2, epsilon = 1e-15);

        let p = step_unicycle(&o, &VelocityCommand::new(1.0, 1.0), FRAC_PI_2);
        assert_relative_eq!(p.x, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.heading, FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn heading_normalized_to_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_relative_eq!(normalize_angle(-PI), PI);
        assert_relative_eq!(normalize_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-15);
        assert_relative_eq!(normalize_angle(7.0), 7.0 - TAU, epsilon = 1e-15);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0, 640.0, 480.0).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 700.0, 240.0, 640.0, 480.0).is_err());
        assert!(CameraMount::new(0.0, 0.0).is_err());
    }

    /// Exact pixel shift of a camera-frame point under a camera yaw of `theta` (left positive).
    fn exact_rotated_u(k: &CameraIntrinsics, p: &Point3, theta: f64) -> Option<f64> {
        let (s, c) = theta.sin_cos();
        let rotated = Point3::new(p.x * c + p.z * s, p.y, p.z * c - p.x * s);
        project_camera_point(k, &rotated).map(|px| px.u)
    }

    proptest! {
        #[test]
        fn projection_round_trip(x in -3.0..3.0f64, y in -2.0..2.0f64, z in 0.5..50.0f64) {
            let k = k500();
            let p = Point3::new(x, y, z);
            if let Some(px) = project_camera_point(&k, &p) {
                let q = back_project(&k, px, z);
                prop_assert!((q.x - p.x).abs() <= 1e-9 * p.x.abs().max(1.0));
                prop_assert!((q.y - p.y).abs() <= 1e-9 * p.y.abs().max(1.0));
            }
        }

        #[test]
        fn mirror_pairs_cancel(pairs in prop::collection::vec((0.05..3.0f64, 2.0..30.0f64), 1..40), delta in 0.05..1.0f64) {
            let k = k500();
            let mut total = 0.0;
            for &(x, z) in &pairs {
                total += predict_translation_shift(&k, &Point3::new(x, 0.0, z), delta).unwrap();
                total += predict_translation_shift(&k, &Point3::new(-x, 0.0, z), delta).unwrap();
            }
            prop_assert!((total / (2 * pairs.len()) as f64).abs() == 0.0);
        }

        #[test]
        fn small_rotation_shift_agrees_with_projection(ratio in -0.1..0.1f64, z in 2.0..50.0f64, theta in -0.15..0.15f64) {
            prop_assume!(theta.abs() > 1e-3);
            let k = k500();
            let p = Point3::new(ratio * z, 0.0, z);
            let before = project_camera_point(&k, &p).unwrap().u;
            let after = exact_rotated_u(&k, &p, theta).unwrap();
            let predicted = predict_rotation_shift(&k, theta);
            prop_assert!(((after - before) - predicted).abs() <= 0.05 * predicted.abs());
        }

        // Off-axis points see a larger shift (sec^2 of the viewing angle), so
        // out to |x/z| = 0.2 the neglected-depth approximation is only good to 9%.
        #[test]
        fn rotation_shift_error_bound_off_axis(ratio in -0.2..0.2f64, z in 2.0..50.0f64, theta in -0.15..0.15f64) {
            prop_assume!(theta.abs() > 1e-3);
            let k = k500();
            let p = Point3::new(ratio * z, 0.0, z);
            let before = project_camera_point(&k, &p).unwrap().u;
            let after = exact_rotated_u(&k, &p, theta).unwrap();
            let predicted = predict_rotation_shift(&k, theta);
            prop_assert!(((after - before) - predicted).abs() <= 0.09 * predicted.abs());
        }

        #[test]
        fn unicycle_steps_compose(x in -5.0..5.0f64, y in -5.0..5.0f64, h in -3.1..3.1f64,
                                  v in -2.0..2.0f64, w in -2.0..2.0f64, dt in 0.01..2.0f64) {
            let p = Pose2::new(x, y, h);
            let cmd = VelocityCommand::new(v, w);
            let one = step_unicycle(&p, &cmd, dt);
            let two = step_unicycle(&step_unicycle(&p, &cmd, dt / 2.0), &cmd, dt / 2.0);
            prop_assert!((one.x - two.x).abs() <= 1e-12 * (1.0 + one.x.abs()));
            prop_assert!((one.y - two.y).abs() <= 1e-12 * (1.0 + one.y.abs()));
            prop_assert!(normalize_angle(one.heading - two.heading).abs() <= 1e-12);
        }
    }
}
