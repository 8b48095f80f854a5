//! Orbit cameras, a z-buffered point-projection preview renderer, and the
//! multi-view dataset writer.
//!
//! Pixel coordinates follow the pinhole model `u = fx·x/z + cx`,
//! `v = fy·y/z + cy` in camera coordinates, with `v` used directly as the
//! image row. With world +Y up the previews therefore appear rotated by
//! 180°; the camera files describe exactly the projection used.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{write_atomic, write_json};
use crate::se3::{Rot3, Vec3};
use crate::splat::keypoints::{save_keypoints, KeypointSet};
use crate::splat::sh::SH_C0;
use crate::splat::GaussianSet;

pub const DEFAULT_FOCAL: f64 = 2084.97;
pub const DEFAULT_IMAGE_SIZE: u32 = 512;
pub const DEFAULT_RADIUS: f64 = 12.0;
pub const DEFAULT_VIEWS: usize = 36;
/// Largest footprint half-width in pixels.
pub const MAX_FOOTPRINT: f64 = 16.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for Intrinsics {
    fn default() -> Self {
        Intrinsics { fx: DEFAULT_FOCAL, fy: DEFAULT_FOCAL, width: DEFAULT_IMAGE_SIZE, height: DEFAULT_IMAGE_SIZE }
    }
}

impl Intrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::Config(format!("focal lengths must be positive, got {} and {}", self.fx, self.fy)));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::Config("image size must be at least 1x1".into()));
        }
        Ok(())
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn matrix(&self) -> [[f64; 3]; 3] {
        let (cx, cy) = self.principal_point();
        [[self.fx, 0.0, cx], [0.0, self.fy, cy], [0.0, 0.0, 1.0]]
    }
}

/// Pinhole camera; `rotation` maps world directions into camera axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub rotation: Rot3,
    pub center: Vec3,
    pub intrinsics: Intrinsics,
}

impl Camera {
    /// Camera at `center` looking at `target` with world +Y as up.
    pub fn look_at(center: Vec3, target: Vec3, intrinsics: Intrinsics) -> Result<Camera> {
        let z = target - center;
        if z.norm() < 1e-12 {
            return Err(Error::DegenerateConfiguration("camera center coincides with its target".into()));
        }
        let z = z.normalize();
        let x = Vec3::y().cross(&z);
        if x.norm() < 1e-9 {
            return Err(Error::DegenerateConfiguration("camera looks along the up axis".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        let m = nalgebra::Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        Ok(Camera { rotation: Rot3::from_matrix_unchecked(m), center, intrinsics })
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.apply(&(p - self.center))
    }

    /// World point to pixel coordinates `(u, v)` and depth; `None` behind
    /// the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = self.to_camera(p);
        if c.z <= 1e-9 {
            return None;
        }
        let (cx, cy) = self.intrinsics.principal_point();
        Some((self.intrinsics.fx * c.x / c.z + cx, self.intrinsics.fy * c.y / c.z + cy, c.z))
    }

    /// World-to-camera `[R | −R·C]`.
    pub fn extrinsics(&self) -> [[f64; 4]; 3] {
        let r = self.rotation.to_row_major();
        let t = -self.rotation.apply(&self.center);
        [0, 1, 2].map(|i| [r[i][0], r[i][1], r[i][2], t[i]])
    }
}

/// `n_views` cameras at equal azimuth steps on a circle of `radius` around
/// `orbit_center` in the horizontal plane. View 0 sits at
/// `orbit_center + (0, 0, −radius)`.
pub fn orbit_cameras(n_views: usize, radius: f64, intrinsics: Intrinsics, orbit_center: Vec3) -> Result<Vec<Camera>> {
    if n_views < 1 {
        return Err(Error::Config("n_views must be at least 1".into()));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Config(format!("orbit radius must be positive, got {radius}")));
    }
    intrinsics.validate()?;
    let step = 360.0 / n_views as f64;
    (0..n_views)
        .map(|i| {
            let az = (i as f64 * step).to_radians();
            let center = orbit_center + Rot3::rot_y(az).apply(&Vec3::new(0.0, 0.0, -radius));
            Camera::look_at(center, orbit_center, intrinsics)
        })
        .collect()
}

/// RGBA preview and 8-bit mask, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Preview {
    pub width: u32,
    pub height: u32,
    pub rgba: Vec<u8>,
    pub mask: Vec<u8>,
}

impl Preview {
    pub fn pixel(&self, col: u32, row: u32) -> [u8; 4] {
        let i = 4 * (row as usize * self.width as usize + col as usize);
        [self.rgba[i], self.rgba[i + 1], self.rgba[i + 2], self.rgba[i + 3]]
    }

    pub fn mask_at(&self, col: u32, row: u32) -> u8 {
        self.mask[row as usize * self.width as usize + col as usize]
    }

    pub fn coverage(&self) -> usize {
        self.mask.iter().filter(|&&m| m != 0).count()
    }

    pub fn rgba_png(&self) -> Result<Vec<u8>> {
        encode_png(self.width, self.height, png::ColorType::Rgba, &self.rgba)
    }

    pub fn mask_png(&self) -> Result<Vec<u8>> {
        encode_png(self.width, self.height, png::ColorType::Grayscale, &self.mask)
    }
}

fn encode_png(width: u32, height: u32, color: png::ColorType, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, width, height);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let err = |e: png::EncodingError| Error::Format(format!("PNG encoding failed: {e}"));
    let mut w = enc.write_header().map_err(err)?;
    w.write_image_data(data).map_err(err)?;
    w.finish().map_err(err)?;
    Ok(out)
}

/// Projects every splat mean and paints a square footprint whose half-width
/// is `exp(max log-scale)·fx/z` pixels (at most [`MAX_FOOTPRINT`]). The
/// nearest splat wins each pixel; ties keep the earlier splat. Color is the
/// DC term mapped linearly to `0.5 + SH_C0·dc`, clamped.
pub fn render_preview(set: &GaussianSet, cam: &Camera) -> Preview {
    let (w, h) = (cam.intrinsics.width as usize, cam.intrinsics.height as usize);
    let mut depth = vec![f64::INFINITY; w * h];
    let mut rgba = vec![0u8; 4 * w * h];
    let mut mask = vec![0u8; w * h];
    for i in 0..set.len() {
        let Some((u, v, z)) = cam.project(&set.mean(i)) else {
            continue;
        };
        let scale = set.log_scales()[i].iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b)) as f64;
        let half = (scale.exp() * cam.intrinsics.fx / z).clamp(0.0, MAX_FOOTPRINT).floor() as i64;
        let (pu, pv) = (u.floor(), v.floor());
        if !(pu.is_finite() && pv.is_finite()) {
            continue;
        }
        let (pu, pv) = (pu as i64, pv as i64);
        let sh = set.sh_block(i);
        let color = [0, 1, 2].map(|c| ((0.5 + SH_C0 * sh[c] as f64).clamp(0.0, 1.0) * 255.0).round() as u8);
        for row in (pv - half).max(0)..=(pv + half).min(h as i64 - 1) {
            for col in (pu - half).max(0)..=(pu + half).min(w as i64 - 1) {
                let idx = row as usize * w + col as usize;
                if z < depth[idx] {
                    depth[idx] = z;
                    rgba[4 * idx..4 * idx + 4].copy_from_slice(&[color[0], color[1], color[2], 255]);
                    mask[idx] = 255;
                }
            }
        }
    }
    Preview { width: w as u32, height: h as u32, rgba, mask }
}

#[derive(Serialize)]
struct CameraFile {
    view: usize,
    width: u32,
    height: u32,
    intrinsics: [[f64; 3]; 3],
    extrinsics: [[f64; 4]; 3],
    center: [f64; 3],
}

pub fn save_camera(path: &Path, view: usize, cam: &Camera) -> Result<()> {
    let f = CameraFile {
        view,
        width: cam.intrinsics.width,
        height: cam.intrinsics.height,
        intrinsics: cam.intrinsics.matrix(),
        extrinsics: cam.extrinsics(),
        center: [cam.center.x, cam.center.y, cam.center.z],
    };
    write_json(path, &f)
}

/// One asset to capture: a named splat set and the keypoints it carries.
pub struct DatasetItem<'a> {
    pub name: &'a str,
    pub splats: &'a GaussianSet,
    pub keypoints: &'a KeypointSet,
}

/// Writes `<out>/<name>/{img,mask,cam}/view_%03d.*` and
/// `<out>/<name>/keypoints.json` for every item. Returns the number of
/// images written.
pub fn write_dataset(out: &Path, items: &[DatasetItem], cameras: &[Camera]) -> Result<usize> {
    let mut count = 0;
    for item in items {
        let dir = out.join(item.name);
        save_keypoints(item.keypoints, &dir.join("keypoints.json"))?;
        for (view, cam) in cameras.iter().enumerate() {
            let name = format!("view_{view:03}");
            let preview = render_preview(item.splats, cam);
            if preview.coverage() == 0 {
                log::warn!("{}: view {view} shows no splats", item.name);
            }
            write_atomic(&dir.join("img").join(format!("{name}.png")), &preview.rgba_png()?)?;
            write_atomic(&dir.join("mask").join(format!("{name}.png")), &preview.mask_png()?)?;
            save_camera(&dir.join("cam").join(format!("{name}.json")), view, cam)?;
            count += 1;
        }
    }
    Ok(count)
}
