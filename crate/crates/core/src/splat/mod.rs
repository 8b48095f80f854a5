//! Gaussian-splat attribute sets, keypoints, and their rigid transformation.

pub mod keypoints;
pub mod ply;
pub mod sh;

pub use keypoints::{transform_keypoints, KeypointSet};
pub use ply::{load_splat, save_splat};
pub use sh::{rotate_sh, sh_width, ShRotation};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{UnitQuat, Vec3, SE3};

/// Tolerance on `‖q‖ − 1` for stored splat rotations.
pub const QUAT_NORM_TOL: f64 = 1e-6;

/// How SH bands above DC are handled under rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShMode {
    /// Exact band-wise rotation of every band.
    #[default]
    Full,
    /// Keep DC and zero the higher bands (the degree is kept).
    DcOnly,
}

/// Splat attribute table. All arrays share the same length `N`.
///
/// Values are stored as `f32`, matching the on-disk representation, so a
/// save/load cycle is bit-exact. Arithmetic happens in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    means: Vec<[f32; 3]>,
    rotations: Vec<[f32; 4]>,
    log_scales: Vec<[f32; 3]>,
    sh_coeffs: Vec<f32>,
    opacities: Vec<f32>,
    sh_degree: usize,
}

impl GaussianSet {
    pub fn empty(sh_degree: usize) -> Result<Self> {
        if sh_degree > sh::MAX_SH_DEGREE {
            return Err(Error::UnsupportedShDegree(sh_degree));
        }
        Ok(GaussianSet {
            means: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            sh_coeffs: Vec::new(),
            opacities: Vec::new(),
            sh_degree,
        })
    }

    /// Builds a set from flat attribute arrays, checking every invariant.
    pub fn from_parts(
        means: Vec<[f32; 3]>,
        rotations: Vec<[f32; 4]>,
        log_scales: Vec<[f32; 3]>,
        sh_coeffs: Vec<f32>,
        opacities: Vec<f32>,
        sh_degree: usize,
    ) -> Result<Self> {
        if sh_degree > sh::MAX_SH_DEGREE {
            return Err(Error::UnsupportedShDegree(sh_degree));
        }
        let n = means.len();
        if rotations.len() != n || log_scales.len() != n || opacities.len() != n {
            return Err(Error::Schema(format!(
                "attribute length mismatch: means {n}, rotations {}, scales {}, opacities {}",
                rotations.len(),
                log_scales.len(),
                opacities.len()
            )));
        }
        if sh_coeffs.len() != n * sh_width(sh_degree) {
            return Err(Error::Schema(format!(
                "sh_coeffs has {} scalars, expected {} ({} per splat)",
                sh_coeffs.len(),
                n * sh_width(sh_degree),
                sh_width(sh_degree)
            )));
        }
        for (i, q) in rotations.iter().enumerate() {
            let norm = q.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > QUAT_NORM_TOL {
                return Err(Error::Schema(format!("rotation {i} is not a unit quaternion (norm {norm})")));
            }
        }
        Ok(GaussianSet { means, rotations, log_scales, sh_coeffs, opacities, sh_degree })
    }

    /// Appends one splat. `sh` must have width `3·(L+1)²`.
    pub fn push(
        &mut self,
        mean: Vec3,
        rotation: UnitQuat,
        log_scale: [f32; 3],
        sh: &[f32],
        opacity: f32,
    ) -> Result<()> {
        if sh.len() != sh_width(self.sh_degree) {
            return Err(Error::Schema(format!("SH block of width {} for degree {}", sh.len(), self.sh_degree)));
        }
        let q = rotation.canonical();
        self.means.push([mean.x as f32, mean.y as f32, mean.z as f32]);
        self.rotations.push([q.w as f32, q.x as f32, q.y as f32, q.z as f32]);
        self.log_scales.push(log_scale);
        self.sh_coeffs.extend_from_slice(sh);
        self.opacities.push(opacity);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn sh_degree(&self) -> usize {
        self.sh_degree
    }

    pub fn means(&self) -> &[[f32; 3]] {
        &self.means
    }

    pub fn rotations(&self) -> &[[f32; 4]] {
        &self.rotations
    }

    pub fn log_scales(&self) -> &[[f32; 3]] {
        &self.log_scales
    }

    pub fn opacities(&self) -> &[f32] {
        &self.opacities
    }

    pub fn sh_coeffs(&self) -> &[f32] {
        &self.sh_coeffs
    }

    /// SH block of splat `i`.
    pub fn sh_block(&self, i: usize) -> &[f32] {
        let w = sh_width(self.sh_degree);
        &self.sh_coeffs[i * w..(i + 1) * w]
    }

    pub fn mean(&self, i: usize) -> Vec3 {
        let m = self.means[i];
        Vec3::new(m[0] as f64, m[1] as f64, m[2] as f64)
    }

    pub fn rotation(&self, i: usize) -> UnitQuat {
        let q = self.rotations[i];
        UnitQuat { w: q[0] as f64, x: q[1] as f64, y: q[2] as f64, z: q[3] as f64 }
    }
}

/// Applies a rigid motion to every splat attribute.
///
/// Means are mapped by `T`, orientations are left-multiplied by `T`'s
/// rotation, SH coefficients are rotated band-wise. Log-scales and opacities
/// are untouched.
pub fn transform_gaussians(set: &GaussianSet, t: &SE3) -> GaussianSet {
    transform_gaussians_with(set, t, ShMode::Full)
}

pub fn transform_gaussians_with(set: &GaussianSet, t: &SE3, mode: ShMode) -> GaussianSet {
    let mut out = set.clone();
    let pure_translation = t.rotation.is_identity();
    if !(pure_translation && t.translation == Vec3::zeros()) {
        for (i, m) in out.means.iter_mut().enumerate() {
            let p = t.apply(&set.mean(i));
            *m = [p.x as f32, p.y as f32, p.z as f32];
        }
    }
    if !pure_translation {
        let qr = UnitQuat::from_rot(&t.rotation);
        for (i, q) in out.rotations.iter_mut().enumerate() {
            let r = qr.mul(&set.rotation(i)).canonical();
            *q = [r.w as f32, r.x as f32, r.y as f32, r.z as f32];
        }
        if mode == ShMode::Full && set.sh_degree > 0 {
            // degree already validated at construction
            let rot = ShRotation::new(&t.rotation, set.sh_degree).expect("valid SH degree");
            let w = sh_width(set.sh_degree);
            let mut block = vec![0.0f64; w];
            for chunk in out.sh_coeffs.chunks_exact_mut(w) {
                for (b, &c) in block.iter_mut().zip(chunk.iter()) {
                    *b = c as f64;
                }
                rot.apply_block(&mut block);
                for (c, &b) in chunk.iter_mut().zip(block.iter()) {
                    *c = b as f32;
                }
            }
        }
    }
    if mode == ShMode::DcOnly && set.sh_degree > 0 {
        let w = sh_width(set.sh_degree);
        for chunk in out.sh_coeffs.chunks_exact_mut(w) {
            chunk[3..].fill(0.0);
        }
    }
    out
}

/// Concatenates sets in order. All inputs must share one SH degree.
pub fn concat_gaussians(sets: &[&GaussianSet]) -> Result<GaussianSet> {
    let Some(first) = sets.first() else {
        return Err(Error::EmptySet);
    };
    let degree = first.sh_degree;
    let mut out = GaussianSet::empty(degree)?;
    for s in sets {
        if s.sh_degree != degree {
            return Err(Error::MixedShDegree(degree, s.sh_degree));
        }
        out.means.extend_from_slice(&s.means);
        out.rotations.extend_from_slice(&s.rotations);
        out.log_scales.extend_from_slice(&s.log_scales);
        out.sh_coeffs.extend_from_slice(&s.sh_coeffs);
        out.opacities.extend_from_slice(&s.opacities);
    }
    Ok(out)
}
