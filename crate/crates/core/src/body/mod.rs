//! 24-joint kinematic body: skeleton tree, axis-angle forward kinematics,
//! contact joints, and pose/skeleton files.
//!
//! The bundled skeleton is a 1.7 m T-pose expressed in the bicycle's
//! canonical frame: facing +X, Y up, left side toward +Z.

mod derive;

pub use derive::{derive_pedal_angle, derive_steering_angle};

use std::path::Path;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::se3::{wrap_angle, Rot3, Vec3, SE3};

pub const NUM_JOINTS: usize = 24;
pub const NUM_BETAS: usize = 10;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "Pelvis",
    "L_Hip",
    "R_Hip",
    "Spine1",
    "L_Knee",
    "R_Knee",
    "Spine2",
    "L_Ankle",
    "R_Ankle",
    "Spine3",
    "L_Foot",
    "R_Foot",
    "Neck",
    "L_Collar",
    "R_Collar",
    "Head",
    "L_Shoulder",
    "R_Shoulder",
    "L_Elbow",
    "R_Elbow",
    "L_Wrist",
    "R_Wrist",
    "L_Hand",
    "R_Hand",
];

pub const PELVIS: usize = 0;
pub const L_ANKLE: usize = 7;
pub const R_ANKLE: usize = 8;
pub const L_WRIST: usize = 20;
pub const R_WRIST: usize = 21;

const DEFAULT_SKELETON: &str = include_str!("../../assets/skeleton_tpose.json");

/// Looks a joint up by name in the standard table.
pub fn joint_index(name: &str) -> Option<usize> {
    JOINT_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    joint_names: Vec<String>,
    parents: Vec<Option<usize>>,
    rest_offsets: Vec<Vec3>,
}

#[derive(Serialize, Deserialize)]
struct SkeletonFile {
    joint_names: Vec<String>,
    parents: Vec<i64>,
    rest_offsets: Vec<[f64; 3]>,
}

impl Skeleton {
    /// Validates a 24-joint tree rooted at joint 0 in which every parent
    /// index precedes its child.
    pub fn new(joint_names: Vec<String>, parents: Vec<Option<usize>>, rest_offsets: Vec<Vec3>) -> Result<Self> {
        if joint_names.len() != NUM_JOINTS || parents.len() != NUM_JOINTS || rest_offsets.len() != NUM_JOINTS {
            return Err(Error::Schema(format!(
                "skeleton needs exactly {NUM_JOINTS} joints, got {} names, {} parents, {} offsets",
                joint_names.len(),
                parents.len(),
                rest_offsets.len()
            )));
        }
        if parents[0].is_some() {
            return Err(Error::Schema("joint 0 must be the root".into()));
        }
        for (k, p) in parents.iter().enumerate().skip(1) {
            match p {
                Some(p) if *p < k => {}
                Some(p) => {
                    return Err(Error::Schema(format!("joint {k} has parent {p}; parents must precede children")))
                }
                None => return Err(Error::Schema(format!("joint {k} has no parent; only joint 0 may be a root"))),
            }
        }
        if !rest_offsets.iter().all(|o| o.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("skeleton rest offsets".into()));
        }
        Ok(Skeleton { joint_names, parents, rest_offsets })
    }

    /// The bundled 1.7 m T-pose.
    pub fn default_tpose() -> Self {
        let file: SkeletonFile = serde_json::from_str(DEFAULT_SKELETON).expect("bundled skeleton parses");
        Self::from_file(file).expect("bundled skeleton is valid")
    }

    fn from_file(f: SkeletonFile) -> Result<Self> {
        let parents = f
            .parents
            .iter()
            .map(|&p| match p {
                -1 => Ok(None),
                p if p >= 0 => Ok(Some(p as usize)),
                p => Err(Error::Schema(format!("invalid parent index {p}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let offsets = f.rest_offsets.iter().map(|o| Vec3::from(*o)).collect();
        Skeleton::new(f.joint_names, parents, offsets)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(read_json(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = SkeletonFile {
            joint_names: self.joint_names.clone(),
            parents: self.parents.iter().map(|p| p.map_or(-1, |p| p as i64)).collect(),
            rest_offsets: self.rest_offsets.iter().map(|o| [o.x, o.y, o.z]).collect(),
        };
        write_json(path, &f)
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parents[k]
    }

    pub fn rest_offset(&self, k: usize) -> Vec3 {
        self.rest_offsets[k]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    /// True if `k` lies in the subtree rooted at `ancestor` (inclusive).
    pub fn is_descendant(&self, mut k: usize, ancestor: usize) -> bool {
        loop {
            if k == ancestor {
                return true;
            }
            match self.parents[k] {
                Some(p) => k = p,
                None => return false,
            }
        }
    }
}

/// Per-joint axis-angle rotations, shape pass-through, and global placement.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyPose {
    pub thetas: [Vec3; NUM_JOINTS],
    /// Shape coefficients, carried but unused by the kinematics.
    pub beta: [f64; NUM_BETAS],
    pub global: SE3,
}

impl Default for BodyPose {
    fn default() -> Self {
        BodyPose { thetas: [Vec3::zeros(); NUM_JOINTS], beta: [0.0; NUM_BETAS], global: SE3::identity() }
    }
}

#[derive(Serialize, Deserialize)]
struct BodyPoseFile {
    thetas: Vec<[f64; 3]>,
    beta: Vec<f64>,
    global_rotation: [[f64; 3]; 3],
    global_translation: [f64; 3],
}

/// Rewrites an axis-angle vector so its magnitude lies in `[0, π]`.
pub fn canonical_axis_angle(v: &Vec3) -> Vec3 {
    let angle = v.norm();
    if angle <= std::f64::consts::PI {
        return *v;
    }
    v * (wrap_angle(angle) / angle)
}

impl BodyPose {
    pub fn validate(&self) -> Result<()> {
        let finite = self.thetas.iter().all(|t| t.iter().all(|v| v.is_finite()))
            && self.beta.iter().all(|v| v.is_finite())
            && self.global.translation.iter().all(|v| v.is_finite())
            && self.global.rotation.matrix().iter().all(|v| v.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::NonFinite("body pose".into()))
        }
    }

    pub fn canonicalized(mut self) -> Self {
        for t in self.thetas.iter_mut() {
            *t = canonical_axis_angle(t);
        }
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: BodyPoseFile = read_json(path)?;
        if f.thetas.len() != NUM_JOINTS {
            return Err(Error::Schema(format!("pose has {} joint rotations, expected {NUM_JOINTS}", f.thetas.len())));
        }
        if f.beta.len() != NUM_BETAS {
            return Err(Error::Schema(format!("pose has {} shape values, expected {NUM_BETAS}", f.beta.len())));
        }
        let flat = f
            .thetas
            .iter()
            .flatten()
            .chain(&f.beta)
            .chain(f.global_rotation.iter().flatten())
            .chain(&f.global_translation);
        if let Some(bad) = flat.into_iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("pose file contains {bad}")));
        }
        let rotation = Rot3::from_row_major(f.global_rotation, 1e-6)?;
        let mut thetas = [Vec3::zeros(); NUM_JOINTS];
        for (t, v) in thetas.iter_mut().zip(&f.thetas) {
            *t = Vec3::from(*v);
        }
        let mut beta = [0.0; NUM_BETAS];
        beta.copy_from_slice(&f.beta);
        let pose = BodyPose { thetas, beta, global: SE3::new(rotation, Vec3::from(f.global_translation)) };
        Ok(pose.canonicalized())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let t = &self.global.translation;
        let f = BodyPoseFile {
            thetas: self.thetas.iter().map(|v| [v.x, v.y, v.z]).collect(),
            beta: self.beta.to_vec(),
            global_rotation: self.global.rotation.to_row_major(),
            global_translation: [t.x, t.y, t.z],
        };
        write_json(path, &f)
    }
}

/// World joint positions and world joint orientations.
#[derive(Debug, Clone)]
pub struct FkResult {
    pub positions: Vec<Vec3>,
    pub rotations: Vec<Matrix3<f64>>,
}

/// Root-to-leaf accumulation: `G_k = G_parent·Exp(θ_k)`,
/// `p_k = p_parent + G_parent·offset_k`. The root uses the pose's global
/// transform as its parent frame.
pub fn forward_kinematics_full(skel: &Skeleton, pose: &BodyPose) -> FkResult {
    let mut positions = Vec::with_capacity(NUM_JOINTS);
    let mut rotations: Vec<Matrix3<f64>> = Vec::with_capacity(NUM_JOINTS);
    for k in 0..NUM_JOINTS {
        let local = *Rot3::from_axis_angle_vector(&pose.thetas[k]).matrix();
        let (parent_rot, parent_pos) = match skel.parents[k] {
            Some(p) => (rotations[p], positions[p]),
            None => (*pose.global.rotation.matrix(), pose.global.translation),
        };
        positions.push(parent_pos + parent_rot * skel.rest_offsets[k]);
        rotations.push(parent_rot * local);
    }
    FkResult { positions, rotations }
}

pub fn forward_kinematics(skel: &Skeleton, pose: &BodyPose) -> Vec<Vec3> {
    forward_kinematics_full(skel, pose).positions
}

/// The five body points that meet the bicycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactJoints {
    pub l_wrist: Vec3,
    pub r_wrist: Vec3,
    pub pelvis: Vec3,
    pub l_ankle: Vec3,
    pub r_ankle: Vec3,
}

impl ContactJoints {
    /// Skeleton indices in `(Lwrist, Rwrist, pelvis, Lank, Rank)` order.
    pub const INDICES: [usize; 5] = [L_WRIST, R_WRIST, PELVIS, L_ANKLE, R_ANKLE];

    pub fn as_array(&self) -> [Vec3; 5] {
        [self.l_wrist, self.r_wrist, self.pelvis, self.l_ankle, self.r_ankle]
    }
}

pub fn extract_contact_joints(joints: &[Vec3]) -> ContactJoints {
    ContactJoints {
        l_wrist: joints[L_WRIST],
        r_wrist: joints[R_WRIST],
        pelvis: joints[PELVIS],
        l_ankle: joints[L_ANKLE],
        r_ankle: joints[R_ANKLE],
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    pub(crate) fn random_pose(rng: &mut ChaCha8Rng, scale: f64) -> BodyPose {
        let mut pose = BodyPose::default();
        for t in pose.thetas.iter_mut() {
            *t = Vec3::new(
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
                rng.random_range(-scale..scale),
            );
        }
        pose
    }

    fn rest_positions(skel: &Skeleton) -> Vec<Vec3> {
        let mut out: Vec<Vec3> = Vec::new();
        for k in 0..NUM_JOINTS {
            let base = skel.parent(k).map_or(Vec3::zeros(), |p| out[p]);
            out.push(base + skel.rest_offset(k));
        }
        out
    }

    #[test]
    fn bundled_skeleton_matches_name_table() {
        let s = Skeleton::default_tpose();
        for (i, n) in JOINT_NAMES.iter().enumerate() {
            assert_eq!(s.index_of(n), Some(i));
        }
        // 1.7 m tall, left side toward +Z
        let p = rest_positions(&s);
        let height = p[15].y + 0.15 - p[10].y;
        assert!((height - 1.70).abs() < 1e-9, "{height}");
        assert!(p[16].z > 0.0 && p[17].z < 0.0);
    }

    #[test]
    fn rest_pose_is_cumulative_offsets() {
        let s = Skeleton::default_tpose();
        let fk = forward_kinematics(&s, &BodyPose::default());
        assert_eq!(fk, rest_positions(&s));
    }

    #[test]
    fn pelvis_half_turn_rotates_everything() {
        let s = Skeleton::default_tpose();
        let mut pose = BodyPose::default();
        pose.thetas[0] = Vec3::new(0.0, PI, 0.0);
        let fk = forward_kinematics(&s, &pose);
        let r = Rot3::rot_y(PI);
        for (got, rest) in fk.iter().zip(rest_positions(&s)) {
            assert!((got - r.apply(&rest)).amax() < 1e-12);
        }
    }

    #[test]
    fn elbow_bend_is_local() {
        let s = Skeleton::default_tpose();
        let rest = forward_kinematics(&s, &BodyPose::default());
        let mut pose = BodyPose::default();
        pose.thetas[18] = Vec3::new(0.0, FRAC_PI_2, 0.0);
        let fk = forward_kinematics(&s, &pose);
        for k in 0..NUM_JOINTS {
            if k == 20 || k == 22 {
                assert_ne!(fk[k], rest[k]);
            } else {
                assert_eq!(fk[k], rest[k], "joint {k}");
            }
        }
    }

    #[test]
    fn contact_extraction() {
        let s = Skeleton::default_tpose();
        let mut pose = BodyPose::default();
        let t = Vec3::new(1.0, 2.0, -3.0);
        pose.global = SE3::from_translation(t);
        let c = extract_contact_joints(&forward_kinematics(&s, &pose));
        assert_eq!(c.pelvis, t);
        let c0 = extract_contact_joints(&forward_kinematics(&s, &BodyPose::default()));
        for (a, b) in c.as_array().iter().zip(c0.as_array()) {
            assert!((a - b - t).amax() < 1e-15);
        }
        let lookup: Vec<usize> =
            ["L_Wrist", "R_Wrist", "Pelvis", "L_Ankle", "R_Ankle"].iter().map(|n| s.index_of(n).unwrap()).collect();
        assert_eq!(lookup, ContactJoints::INDICES.to_vec());
    }

    #[test]
    fn bone_lengths_preserved() {
        let s = Skeleton::default_tpose();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let mut pose = random_pose(&mut rng, PI);
            pose.global = SE3::new(Rot3::rot_x(rng.random_range(-3.0..3.0)), Vec3::new(1.0, 2.0, 3.0));
            let fk = forward_kinematics(&s, &pose);
            for k in 1..NUM_JOINTS {
                let p = s.parent(k).unwrap();
                assert!(((fk[k] - fk[p]).norm() - s.rest_offset(k).norm()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn global_equivariance() {
        let s = Skeleton::default_tpose();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pose = random_pose(&mut rng, 1.0);
        let g = SE3::new(Rot3::about_axis(&Vec3::new(0.0, 0.6, 0.8), 0.9).unwrap(), Vec3::new(-1.0, 0.5, 4.0));
        let placed = BodyPose { global: g, ..pose.clone() };
        for (a, b) in forward_kinematics(&s, &placed).iter().zip(forward_kinematics(&s, &pose)) {
            assert!((a - g.apply(&b)).amax() < 1e-9);
        }
    }

    #[test]
    fn skeleton_validation() {
        let s = Skeleton::default_tpose();
        let mut parents = s.parents.clone();
        parents[5] = Some(7);
        assert!(Skeleton::new(s.joint_names.clone(), parents, s.rest_offsets.clone()).is_err());
        assert!(Skeleton::new(s.joint_names[..23].to_vec(), s.parents[..23].to_vec(), s.rest_offsets[..23].to_vec())
            .is_err());
    }

    #[test]
    fn skeleton_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("skel.json");
        let s = Skeleton::default_tpose();
        s.save(&path).unwrap();
        assert_eq!(Skeleton::load(&path).unwrap(), s);
    }

    #[test]
    fn pose_file_round_trip_and_canonicalization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pose.json");
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pose = random_pose(&mut rng, 1.0);
        pose.beta = [0.1, -0.2, 0.3, 0.0, 1.5, 2.0, -1.0, 0.25, 0.125, 3.0];
        pose.global = SE3::new(Rot3::rot_z(0.3), Vec3::new(1.0, 0.0, -2.0));
        pose.save(&path).unwrap();
        assert_eq!(BodyPose::load(&path).unwrap(), pose);

        // 1.5π about +X is the same rotation as 0.5π about −X
        pose.thetas[4] = Vec3::new(1.5 * PI, 0.0, 0.0);
        pose.save(&path).unwrap();
        let back = BodyPose::load(&path).unwrap();
        assert!((back.thetas[4] - Vec3::new(-0.5 * PI, 0.0, 0.0)).amax() < 1e-12);
        let a = Rot3::from_axis_angle_vector(&pose.thetas[4]);
        let b = Rot3::from_axis_angle_vector(&back.thetas[4]);
        assert!((a.matrix() - b.matrix()).amax() < 1e-12);
    }

    #[test]
    fn zero_pose_file_is_rest_pose() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pose.json");
        BodyPose::default().save(&path).unwrap();
        assert_eq!(BodyPose::load(&path).unwrap(), BodyPose::default());
    }

    #[test]
    fn wrong_joint_count_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pose.json");
        let text = serde_json::json!({
            "thetas": vec![[0.0, 0.0, 0.0]; 23],
            "beta": vec![0.0; 10],
            "global_rotation": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            "global_translation": [0.0, 0.0, 0.0],
        });
        std::fs::write(&path, text.to_string()).unwrap();
        let err = BodyPose::load(&path).unwrap_err().to_string();
        assert!(err.contains("23"), "{err}");
    }
}
