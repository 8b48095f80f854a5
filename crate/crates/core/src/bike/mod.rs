//! Parametric articulated bicycle.
//!
//! Three rigid parts in canonical pose (bike upright on the X–Z ground plane,
//! pedal axle above the origin, front wheel toward +X) are articulated by the
//! crank angle `theta_p` about the pedal axle's Z axis, the steering angle
//! `theta_s` about the steering shaft, and placed by a global rigid motion.

mod toy;

pub use toy::{make_toy_bike, ToyBikeGeometry};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{Rot3, Vec3, SE3};
use crate::splat::keypoints::{
    self, load_bike_keypoints, save_keypoints, HANDLE_L, HANDLE_R, PEDAL_AXLE, PEDAL_L, PEDAL_R, STEER_AXLE_BOTTOM,
    STEER_AXLE_TOP, WHEEL_AXLE_FRONT,
};
use crate::splat::{
    concat_gaussians, load_splat, save_splat, transform_gaussians_with, GaussianSet, KeypointSet, ShMode,
};

/// Planarity threshold on the shaft direction's Z component above which the
/// general axis-angle path is used with a warning.
pub const SHAFT_PLANARITY_WARN: f64 = 1e-3;

/// `(theta_p, theta_s, theta_x, theta_y, theta_z, t)`; angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BikePose8DoF {
    pub theta_p: f64,
    pub theta_s: f64,
    pub theta_x: f64,
    pub theta_y: f64,
    pub theta_z: f64,
    pub translation: [f64; 3],
}

impl BikePose8DoF {
    /// Articulation-only pose (no global motion).
    pub fn articulation(theta_p: f64, theta_s: f64) -> Self {
        BikePose8DoF { theta_p, theta_s, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.theta_p, self.theta_s, self.theta_x, self.theta_y, self.theta_z];
        if all.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("bike pose".into()))
        }
    }
}

/// The three rigid parts plus keypoints, all in canonical pose.
#[derive(Debug, Clone, PartialEq)]
pub struct BikeParts {
    pub frame_rear: GaussianSet,
    pub pedals: GaussianSet,
    pub steering_front: GaussianSet,
    pub keypoints: KeypointSet,
}

pub const PART_NAMES: [&str; 3] = ["frame_rear", "pedals", "steering_front"];

impl BikeParts {
    pub fn new(
        frame_rear: GaussianSet,
        pedals: GaussianSet,
        steering_front: GaussianSet,
        keypoints: KeypointSet,
    ) -> Result<Self> {
        let parts = BikeParts { frame_rear, pedals, steering_front, keypoints };
        parts.validate()?;
        Ok(parts)
    }

    pub fn validate(&self) -> Result<()> {
        self.keypoints.validate_bike()?;
        let axle = self.keypoints.require(PEDAL_AXLE)?;
        let off_axis = (axle.x * axle.x + axle.z * axle.z).sqrt();
        if off_axis > 1e-3 {
            return Err(Error::Schema(format!(
                "pedal_axle is {off_axis:.4} m from the vertical through the origin (canonical pose requires ≤ 1e-3)"
            )));
        }
        let d = self.frame_rear.sh_degree();
        for p in [&self.pedals, &self.steering_front] {
            if p.sh_degree() != d {
                return Err(Error::MixedShDegree(d, p.sh_degree()));
            }
        }
        Ok(())
    }

    pub fn parts(&self) -> [(&'static str, &GaussianSet); 3] {
        [(PART_NAMES[0], &self.frame_rear), (PART_NAMES[1], &self.pedals), (PART_NAMES[2], &self.steering_front)]
    }

    pub fn total_splats(&self) -> usize {
        self.frame_rear.len() + self.pedals.len() + self.steering_front.len()
    }

    /// Reads `frame_rear.ply`, `pedals.ply`, `steering_front.ply` and
    /// `keypoints.json` from `dir`.
    pub fn load(dir: &Path) -> Result<Self> {
        BikeParts::new(
            load_splat(&dir.join("frame_rear.ply"))?,
            load_splat(&dir.join("pedals.ply"))?,
            load_splat(&dir.join("steering_front.ply"))?,
            load_bike_keypoints(&dir.join("keypoints.json"))?,
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        for (name, set) in self.parts() {
            save_splat(set, &dir.join(format!("{name}.ply")))?;
        }
        save_keypoints(&self.keypoints, &dir.join("keypoints.json"))
    }
}

/// Rotation by `theta_s` about the steering shaft through `k_s1` (top) and
/// `k_s2` (bottom), with shaft direction `v = (k_s1 − k_s2)/‖·‖`.
///
/// For a shaft in the X–Y plane this is `T(k_s1)·Rz(θ_v)·Rx(θ_s)·Rz(−θ_v)·T(−k_s1)`
/// with `θ_v = atan2(v_y, v_x)`. Shafts with a Z component fall back to a
/// direct axis-angle rotation about `v`.
pub fn steering_transform(theta_s: f64, k_s1: &Vec3, k_s2: &Vec3) -> Result<SE3> {
    let d = k_s1 - k_s2;
    let len = d.norm();
    if len.is_nan() || len <= 1e-6 {
        return Err(Error::DegenerateAxis(format!("steering shaft endpoints coincide (|k_s1 - k_s2| = {len:.3e})")));
    }
    if theta_s == 0.0 {
        return Ok(SE3::identity());
    }
    let v = d / len;
    let rotation = if v.z.abs() <= 1e-12 {
        let theta_v = v.y.atan2(v.x);
        Rot3::rot_z(theta_v).mul(&Rot3::rot_x(theta_s)).mul(&Rot3::rot_z(-theta_v))
    } else {
        if v.z.abs() > SHAFT_PLANARITY_WARN {
            log::warn!("steering shaft leaves the X-Y plane (v_z = {:.4}); rotating about the 3D shaft axis", v.z);
        }
        Rot3::about_axis(&v, theta_s)?
    };
    Ok(conjugate_about(rotation, k_s1))
}

/// `T(v_p)·Rz(theta_p)·T(−v_p)`.
pub fn pedal_transform(theta_p: f64, v_p: &Vec3) -> SE3 {
    conjugate_about(Rot3::rot_z(theta_p), v_p)
}

fn conjugate_about(rotation: Rot3, pivot: &Vec3) -> SE3 {
    SE3::from_translation(*pivot).compose(&SE3::from_rotation(rotation)).compose(&SE3::from_translation(-pivot))
}

/// `T(t)·Rz(θ_Z)·Ry(θ_Y)·Rx(θ_X)`: world-axis rotations applied X, then Y, then Z.
pub fn global_transform(pose: &BikePose8DoF) -> SE3 {
    let r = Rot3::rot_z(pose.theta_z).mul(&Rot3::rot_y(pose.theta_y)).mul(&Rot3::rot_x(pose.theta_x));
    let t = pose.translation;
    SE3::new(r, Vec3::new(t[0], t[1], t[2]))
}

/// Which rigid part a keypoint rides on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeypointCarrier {
    Frame,
    Pedals,
    Steering,
}

pub fn keypoint_carrier(name: &str) -> KeypointCarrier {
    match name {
        HANDLE_L | HANDLE_R | STEER_AXLE_TOP | STEER_AXLE_BOTTOM | WHEEL_AXLE_FRONT => KeypointCarrier::Steering,
        PEDAL_L | PEDAL_R => KeypointCarrier::Pedals,
        _ => KeypointCarrier::Frame,
    }
}

/// Per-part transforms `(frame, pedals, steering)` for a pose.
pub fn part_transforms(keypoints: &KeypointSet, pose: &BikePose8DoF) -> Result<[SE3; 3]> {
    pose.validate()?;
    let h_g = global_transform(pose);
    let h_s =
        steering_transform(pose.theta_s, &keypoints.require(STEER_AXLE_TOP)?, &keypoints.require(STEER_AXLE_BOTTOM)?)?;
    let h_p = pedal_transform(pose.theta_p, &keypoints.require(PEDAL_AXLE)?);
    Ok([h_g, h_g.compose(&h_p), h_g.compose(&h_s)])
}

/// Poses the keypoints only.
pub fn pose_keypoints(keypoints: &KeypointSet, pose: &BikePose8DoF) -> Result<KeypointSet> {
    let [frame, pedals, steering] = part_transforms(keypoints, pose)?;
    let mut out = KeypointSet::new();
    out.frame = keypoints.frame.clone();
    for (name, p) in keypoints.iter() {
        let t = match keypoint_carrier(name) {
            KeypointCarrier::Frame => &frame,
            KeypointCarrier::Pedals => &pedals,
            KeypointCarrier::Steering => &steering,
        };
        out.insert(name, t.apply(p));
    }
    Ok(out)
}

/// Articulates and places every part, then concatenates
/// `(frame_rear, pedals, steering_front)`.
pub fn compose_bike(parts: &BikeParts, pose: &BikePose8DoF) -> Result<(GaussianSet, KeypointSet)> {
    compose_bike_with(parts, pose, ShMode::Full)
}

pub fn compose_bike_with(parts: &BikeParts, pose: &BikePose8DoF, mode: ShMode) -> Result<(GaussianSet, KeypointSet)> {
    let [frame, pedals, steering] = part_transforms(&parts.keypoints, pose)?;
    let f = transform_gaussians_with(&parts.frame_rear, &frame, mode);
    let p = transform_gaussians_with(&parts.pedals, &pedals, mode);
    let s = transform_gaussians_with(&parts.steering_front, &steering, mode);
    let splats = concat_gaussians(&[&f, &p, &s])?;
    let kp = pose_keypoints(&parts.keypoints, pose)?;
    Ok((splats, kp))
}

/// Names of the keypoints on the bike that the rider's contact joints target.
pub fn contact_keypoint_names() -> [&'static str; 5] {
    [keypoints::HANDLE_L, keypoints::HANDLE_R, keypoints::SEAT, keypoints::PEDAL_L, keypoints::PEDAL_R]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::transform_gaussians;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI, TAU};

    // Rotation of p by angle about the line through `pivot` with unit `axis`,
    // via the explicit Rodrigues vector formula.
    fn axis_angle_oracle(p: &Vec3, pivot: &Vec3, axis: &Vec3, angle: f64) -> Vec3 {
        let r = p - pivot;
        let (s, c) = angle.sin_cos();
        pivot + r * c + axis.cross(&r) * s + axis * axis.dot(&r) * (1.0 - c)
    }

    fn toy() -> BikeParts {
        make_toy_bike(0, 60)
    }

    #[test]
    fn zero_steering_is_identity() {
        let h = steering_transform(0.0, &Vec3::new(0.4, 0.9, 0.0), &Vec3::new(0.5, 0.6, 0.0)).unwrap();
        assert!((h.to_matrix4() - nalgebra::Matrix4::identity()).amax() < 1e-12);
    }

    #[test]
    fn vertical_shaft_quarter_turn() {
        let h = steering_transform(FRAC_PI_2, &Vec3::new(0.0, 1.0, 0.0), &Vec3::zeros()).unwrap();
        let p = h.apply(&Vec3::new(0.0, 0.0, 1.0));
        let o = axis_angle_oracle(&Vec3::new(0.0, 0.0, 1.0), &Vec3::zeros(), &Vec3::y(), FRAC_PI_2);
        assert!((p - o).amax() < 1e-12);
        assert!((p - Vec3::new(1.0, 0.0, 0.0)).amax() < 1e-12);
        assert!((h.apply(&Vec3::y()) - Vec3::y()).amax() < 1e-12);
    }

    #[test]
    fn coincident_shaft_rejected() {
        let k = Vec3::new(0.5, 0.9, 0.0);
        assert!(matches!(steering_transform(0.3, &k, &k), Err(Error::DegenerateAxis(_))));
    }

    #[test]
    fn tilted_planar_shaft_matches_axis_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let k1 = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            let k2 = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            let theta = rng.random_range(-PI..PI);
            let h = steering_transform(theta, &k1, &k2).unwrap();
            let axis = (k1 - k2).normalize();
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            assert!((h.apply(&p) - axis_angle_oracle(&p, &k1, &axis, theta)).amax() < 1e-9);
            assert!((h.apply(&k1) - k1).norm() < 1e-9);
            assert!((h.apply(&k2) - k2).norm() < 1e-9);
        }
    }

    #[test]
    fn non_planar_shaft_uses_general_axis() {
        let k1 = Vec3::new(0.0, 1.0, 0.3);
        let k2 = Vec3::zeros();
        let h = steering_transform(0.7, &k1, &k2).unwrap();
        assert!((h.apply(&k1) - k1).norm() < 1e-12);
        let p = Vec3::new(1.0, 0.0, 0.0);
        let o = axis_angle_oracle(&p, &k1, &k1.normalize(), 0.7);
        assert!((h.apply(&p) - o).amax() < 1e-12);
    }

    #[test]
    fn pedal_examples() {
        let vp = Vec3::new(0.0, 1.0, 0.0);
        assert!((pedal_transform(0.0, &vp).to_matrix4() - nalgebra::Matrix4::identity()).amax() < 1e-15);
        let p = pedal_transform(PI, &vp).apply(&Vec3::new(1.0, 1.0, 0.0));
        assert!((p - Vec3::new(-1.0, 1.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn global_examples() {
        assert_eq!(global_transform(&BikePose8DoF::default()).to_matrix4(), nalgebra::Matrix4::identity());
        let t = global_transform(&BikePose8DoF { translation: [1.0, 2.0, 3.0], ..Default::default() });
        assert_eq!(t.apply(&Vec3::zeros()), Vec3::new(1.0, 2.0, 3.0));
        let r = global_transform(&BikePose8DoF { theta_y: FRAC_PI_2, ..Default::default() });
        assert!((r.apply(&Vec3::x()) - Vec3::new(0.0, 0.0, -1.0)).amax() < 1e-15);
    }

    #[test]
    fn global_rotation_order_is_x_then_y_then_z() {
        let pose = BikePose8DoF { theta_x: 0.3, theta_y: -0.8, theta_z: 1.1, ..Default::default() };
        let p = Vec3::new(0.2, -0.5, 0.9);
        let stepwise = Rot3::rot_z(1.1).apply(&Rot3::rot_y(-0.8).apply(&Rot3::rot_x(0.3).apply(&p)));
        assert!((global_transform(&pose).apply(&p) - stepwise).amax() < 1e-15);
    }

    #[test]
    fn zero_pose_composes_untransformed_parts() {
        let parts = toy();
        let (splats, kp) = compose_bike(&parts, &BikePose8DoF::default()).unwrap();
        let expect = concat_gaussians(&[&parts.frame_rear, &parts.pedals, &parts.steering_front]).unwrap();
        assert_eq!(splats, expect);
        assert_eq!(kp, parts.keypoints);
    }

    #[test]
    fn quarter_turned_keypoints_match_oracle() {
        let parts = toy();
        let pose = BikePose8DoF::articulation(FRAC_PI_2, FRAC_PI_2);
        let (_, kp) = compose_bike(&parts, &pose).unwrap();
        let k = &parts.keypoints;
        let top = k.get(STEER_AXLE_TOP).unwrap();
        let axis = (top - k.get(STEER_AXLE_BOTTOM).unwrap()).normalize();
        let vp = k.get(PEDAL_AXLE).unwrap();
        for (name, p) in k.iter() {
            let expect = match keypoint_carrier(name) {
                KeypointCarrier::Steering => axis_angle_oracle(p, &top, &axis, FRAC_PI_2),
                KeypointCarrier::Pedals => axis_angle_oracle(p, &vp, &Vec3::z(), FRAC_PI_2),
                KeypointCarrier::Frame => *p,
            };
            assert!((kp.get(name).unwrap() - expect).amax() < 1e-9, "{name}");
        }
    }

    #[test]
    fn inverse_global_returns_frame_to_canonical() {
        let parts = toy();
        let pose = BikePose8DoF {
            theta_p: 0.4,
            theta_s: -0.3,
            theta_x: 0.2,
            theta_y: 1.3,
            theta_z: -0.1,
            translation: [3.0, 0.5, -2.0],
        };
        let (splats, _) = compose_bike(&parts, &pose).unwrap();
        let back = transform_gaussians(&splats, &global_transform(&pose).inverse());
        for i in 0..parts.frame_rear.len() {
            assert!((back.mean(i) - parts.frame_rear.mean(i)).amax() < 1e-6);
        }
    }

    #[test]
    fn global_only_equals_transforming_the_concatenation() {
        let parts = toy();
        let pose = BikePose8DoF {
            theta_x: 0.1,
            theta_y: 0.7,
            theta_z: -0.4,
            translation: [1.0, 0.0, 2.0],
            ..Default::default()
        };
        let (splats, _) = compose_bike(&parts, &pose).unwrap();
        let all = concat_gaussians(&[&parts.frame_rear, &parts.pedals, &parts.steering_front]).unwrap();
        assert_eq!(splats, transform_gaussians(&all, &global_transform(&pose)));
    }

    #[test]
    fn periodic_in_angles() {
        let parts = toy();
        let a = BikePose8DoF { theta_p: 0.5, theta_s: -0.4, theta_y: 0.3, ..Default::default() };
        let b = BikePose8DoF { theta_p: 0.5 + TAU, theta_s: -0.4 - TAU, theta_y: 0.3 + TAU, ..Default::default() };
        let (sa, _) = compose_bike(&parts, &a).unwrap();
        let (sb, _) = compose_bike(&parts, &b).unwrap();
        for i in 0..sa.len() {
            assert!((sa.mean(i) - sb.mean(i)).amax() < 1e-6);
        }
    }

    #[test]
    fn canonical_pose_check() {
        let mut parts = toy();
        parts.keypoints.insert(PEDAL_AXLE, Vec3::new(0.01, 0.3, 0.0));
        assert!(parts.validate().is_err());
    }

    #[test]
    fn bike_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let parts = toy();
        parts.save(dir.path()).unwrap();
        assert_eq!(BikeParts::load(dir.path()).unwrap(), parts);
    }
}
