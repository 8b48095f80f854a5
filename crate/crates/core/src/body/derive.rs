//! Crank and steering angles from rider joints, by planar projection.
//!
//! Inputs must already be in the canonical bicycle frame.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::se3::Vec3;

const MIN_SEPARATION: f64 = 1e-6;

fn atan2_half_open(y: f64, x: f64) -> f64 {
    let a = y.atan2(x);
    if a == -PI {
        PI
    } else {
        a
    }
}

/// Left-crank angle from the ankles projected onto the X–Y plane:
/// `atan2(d_y, d_x)` with `d = Lank − Rank`. Zero means the left crank
/// points along +X.
pub fn derive_pedal_angle(l_ankle: &Vec3, r_ankle: &Vec3) -> Result<f64> {
    let (dx, dy) = (l_ankle.x - r_ankle.x, l_ankle.y - r_ankle.y);
    if !(dx.is_finite() && dy.is_finite()) {
        return Err(Error::NonFinite("ankle keypoints".into()));
    }
    if dx.hypot(dy) <= MIN_SEPARATION {
        return Err(Error::DegenerateConfiguration(
            "ankles coincide in the X-Y projection; crank angle undefined".into(),
        ));
    }
    Ok(atan2_half_open(dy, dx))
}

/// Steering angle from the handlebar line through the wrists projected onto
/// the X–Z plane: `atan2(h_x, h_z)` with `h = Lwrist − Rwrist`. Zero means
/// the bar runs along Z with the left grip toward +Z.
pub fn derive_steering_angle(l_wrist: &Vec3, r_wrist: &Vec3) -> Result<f64> {
    let (hx, hz) = (l_wrist.x - r_wrist.x, l_wrist.z - r_wrist.z);
    if !(hx.is_finite() && hz.is_finite()) {
        return Err(Error::NonFinite("wrist keypoints".into()));
    }
    if hx.hypot(hz) <= MIN_SEPARATION {
        return Err(Error::DegenerateConfiguration(
            "wrists coincide in the X-Z projection; steering angle undefined".into(),
        ));
    }
    Ok(atan2_half_open(hx, hz))
}
