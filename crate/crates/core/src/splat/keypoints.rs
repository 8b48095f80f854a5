use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_json, write_json};
use crate::se3::{Vec3, SE3};

pub const SEAT: &str = "seat";
pub const STEER_AXLE_TOP: &str = "steer_axle_top";
pub const STEER_AXLE_BOTTOM: &str = "steer_axle_bottom";
pub const HANDLE_L: &str = "handle_L";
pub const HANDLE_R: &str = "handle_R";
pub const PEDAL_AXLE: &str = "pedal_axle";
pub const PEDAL_L: &str = "pedal_L";
pub const PEDAL_R: &str = "pedal_R";
pub const WHEEL_AXLE_FRONT: &str = "wheel_axle_front";
pub const WHEEL_AXLE_REAR: &str = "wheel_axle_rear";
pub const GROUND_ORIGIN: &str = "ground_origin";

/// Keypoint names every bike-rig asset must carry.
pub const BIKE_KEYPOINTS: [&str; 11] = [
    SEAT,
    STEER_AXLE_TOP,
    STEER_AXLE_BOTTOM,
    HANDLE_L,
    HANDLE_R,
    PEDAL_AXLE,
    PEDAL_L,
    PEDAL_R,
    WHEEL_AXLE_FRONT,
    WHEEL_AXLE_REAR,
    GROUND_ORIGIN,
];

/// Named 3D points, ordered by name.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointSet {
    pub frame: String,
    points: BTreeMap<String, Vec3>,
}

#[derive(Serialize, Deserialize)]
struct KeypointFile {
    frame: String,
    units: String,
    points: BTreeMap<String, [f64; 3]>,
}

impl Default for KeypointSet {
    fn default() -> Self {
        KeypointSet { frame: "canonical".into(), points: BTreeMap::new() }
    }
}

impl KeypointSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, p: Vec3) {
        self.points.insert(name.into(), p);
    }

    pub fn get(&self, name: &str) -> Option<Vec3> {
        self.points.get(name).copied()
    }

    /// Like [`get`](Self::get) but reports a schema error for absent names.
    pub fn require(&self, name: &str) -> Result<Vec3> {
        self.get(name).ok_or_else(|| Error::Schema(format!("missing keypoint '{name}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vec3)> {
        self.points.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the bike-rig invariants: every required name present, all
    /// coordinates finite, distinct steering-shaft endpoints.
    pub fn validate_bike(&self) -> Result<()> {
        let missing: Vec<&str> = BIKE_KEYPOINTS.iter().copied().filter(|n| !self.points.contains_key(*n)).collect();
        if !missing.is_empty() {
            return Err(Error::Schema(format!("missing bike keypoints: {}", missing.join(", "))));
        }
        self.validate_finite()?;
        let top = self.points[STEER_AXLE_TOP];
        let bottom = self.points[STEER_AXLE_BOTTOM];
        if (top - bottom).norm() <= 1e-6 {
            return Err(Error::DegenerateAxis("steer_axle_top coincides with steer_axle_bottom".into()));
        }
        Ok(())
    }

    fn validate_finite(&self) -> Result<()> {
        for (name, p) in &self.points {
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("keypoint '{name}'")));
            }
        }
        Ok(())
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self.to_file()).expect("keypoints serialize")
    }

    fn to_file(&self) -> KeypointFile {
        KeypointFile {
            frame: self.frame.clone(),
            units: "meters".into(),
            points: self.points.iter().map(|(k, v)| (k.clone(), [v.x, v.y, v.z])).collect(),
        }
    }
}

/// Applies `t` to every keypoint; names and frame label are kept.
pub fn transform_keypoints(set: &KeypointSet, t: &SE3) -> KeypointSet {
    KeypointSet { frame: set.frame.clone(), points: set.points.iter().map(|(k, v)| (k.clone(), t.apply(v))).collect() }
}

pub fn save_keypoints(set: &KeypointSet, path: &Path) -> Result<()> {
    write_json(path, &set.to_file())
}

pub fn load_keypoints(path: &Path) -> Result<KeypointSet> {
    let file: KeypointFile = read_json(path)?;
    if file.units != "meters" {
        return Err(Error::Schema(format!("unsupported units '{}'", file.units)));
    }
    let set = KeypointSet {
        frame: file.frame,
        points: file.points.into_iter().map(|(k, v)| (k, Vec3::new(v[0], v[1], v[2]))).collect(),
    };
    set.validate_finite()?;
    Ok(set)
}

/// Loads keypoints and checks the bike-rig required names.
pub fn load_bike_keypoints(path: &Path) -> Result<KeypointSet> {
    let set = load_keypoints(path)?;
    set.validate_bike()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Rot3;

    fn sample() -> KeypointSet {
        let mut k = KeypointSet::new();
        for (i, name) in BIKE_KEYPOINTS.iter().enumerate() {
            let f = i as f64;
            k.insert(*name, Vec3::new(0.1 * f + 1.0 / 3.0, (f * 0.7).sin(), -f / 7.0));
        }
        k
    }

    #[test]
    fn identity_and_translation() {
        let k = sample();
        assert_eq!(transform_keypoints(&k, &SE3::identity()), k);
        let moved = transform_keypoints(&k, &SE3::from_translation(Vec3::new(0.0, 1.0, 0.0)));
        for ((_, a), (_, b)) in k.iter().zip(moved.iter()) {
            assert_eq!(b.y, a.y + 1.0);
            assert_eq!(b.x, a.x);
        }
    }

    #[test]
    fn isometry_preserves_distances() {
        let k = sample();
        let t = SE3::new(Rot3::about_axis(&Vec3::new(0.6, 0.0, 0.8), 1.1).unwrap(), Vec3::new(3.0, -2.0, 0.5));
        let m = transform_keypoints(&k, &t);
        let a: Vec<Vec3> = k.iter().map(|(_, p)| *p).collect();
        let b: Vec<Vec3> = m.iter().map(|(_, p)| *p).collect();
        for i in 0..a.len() {
            for j in 0..a.len() {
                assert!(((a[i] - a[j]).norm() - (b[i] - b[j]).norm()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kp.json");
        let k = sample();
        save_keypoints(&k, &path).unwrap();
        assert_eq!(load_bike_keypoints(&path).unwrap(), k);
    }

    #[test]
    fn missing_names_are_listed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kp.json");
        let mut k = KeypointSet::new();
        k.insert(SEAT, Vec3::zeros());
        save_keypoints(&k, &path).unwrap();
        let err = load_bike_keypoints(&path).unwrap_err().to_string();
        assert!(err.contains("handle_L") && err.contains("pedal_axle") && !err.contains("seat,"), "{err}");
        // plain load does not require bike names
        assert!(load_keypoints(&path).is_ok());
    }

    #[test]
    fn coincident_shaft_rejected() {
        let mut k = sample();
        k.insert(STEER_AXLE_BOTTOM, k.get(STEER_AXLE_TOP).unwrap());
        assert!(matches!(k.validate_bike(), Err(Error::DegenerateAxis(_))));
    }
}
