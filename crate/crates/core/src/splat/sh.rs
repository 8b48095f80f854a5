//! Rotation of real spherical-harmonic color coefficients.
//!
//! Band matrices are built in the positive-constant real SH basis
//! (`m = -l..=l`, band 1 ordered as `(y, z, x)`) with the Ivanic–Ruedenberg
//! recurrence seeded by the band-1 matrix, then conjugated by the
//! Condon–Shortley signs `(-1)^m` used by splat files
//! (`-y, z, -x` for band 1).
//!
//! Per-splat coefficient layout matches the splat PLY: `[dc_r, dc_g, dc_b,
//! rest_r.., rest_g.., rest_b..]` with `(L+1)² - 1` rest terms per channel.

use crate::error::{Error, Result};
use crate::se3::Rot3;

pub const MAX_SH_DEGREE: usize = 3;

/// Degree-0 basis constant `1/(2√π)`; color = 0.5 + SH_C0·dc.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// Number of coefficients per color channel for degree `l`.
pub fn coeffs_per_channel(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Width of one splat's SH block: `3·(L+1)²`.
pub fn sh_width(degree: usize) -> usize {
    3 * coeffs_per_channel(degree)
}

/// Infers the degree from the number of `f_rest_*` scalars.
pub fn degree_from_rest_count(rest: usize) -> Option<usize> {
    (0..=MAX_SH_DEGREE).find(|&l| 3 * (coeffs_per_channel(l) - 1) == rest)
}

/// Square `(2l+1)×(2l+1)` block acting on one band, indexed by `m, n ∈ -l..=l`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    l: i32,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(l: i32) -> Self {
        let d = (2 * l + 1) as usize;
        BandMatrix { l, data: vec![0.0; d * d] }
    }

    fn idx(&self, m: i32, n: i32) -> usize {
        ((m + self.l) * (2 * self.l + 1) + (n + self.l)) as usize
    }

    pub fn get(&self, m: i32, n: i32) -> f64 {
        self.data[self.idx(m, n)]
    }

    fn set(&mut self, m: i32, n: i32, v: f64) {
        let i = self.idx(m, n);
        self.data[i] = v;
    }

    pub fn degree(&self) -> usize {
        self.l as usize
    }

    /// `out = M · input` for one band of one channel.
    fn apply(&self, input: &[f64], out: &mut [f64]) {
        let d = (2 * self.l + 1) as usize;
        for (row, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..d).map(|col| self.data[row * d + col] * input[col]).sum();
        }
    }
}

/// Rotation matrices for bands `1..=degree` in the splat basis.
#[derive(Debug, Clone)]
pub struct ShRotation {
    bands: Vec<BandMatrix>,
    identity: bool,
}

impl ShRotation {
    pub fn new(r: &Rot3, degree: usize) -> Result<Self> {
        if degree > MAX_SH_DEGREE {
            return Err(Error::UnsupportedShDegree(degree));
        }
        let identity = r.is_identity();
        let standard = standard_band_matrices(r, degree);
        let bands = standard.into_iter().map(to_splat_signs).collect();
        Ok(ShRotation { bands, identity })
    }

    pub fn band(&self, l: usize) -> &BandMatrix {
        &self.bands[l - 1]
    }

    /// Rotates one splat's `3·(L+1)²` block in place.
    pub fn apply_block(&self, block: &mut [f64]) {
        if self.identity || self.bands.is_empty() {
            return;
        }
        let rest = block.len() / 3 - 1;
        let mut buf_in = [0.0f64; 7];
        let mut buf_out = [0.0f64; 7];
        for channel in 0..3 {
            let base = 3 + channel * rest;
            let mut offset = 0;
            for band in &self.bands {
                let d = 2 * band.degree() + 1;
                let slot = &mut block[base + offset..base + offset + d];
                buf_in[..d].copy_from_slice(slot);
                band.apply(&buf_in[..d], &mut buf_out[..d]);
                slot.copy_from_slice(&buf_out[..d]);
                offset += d;
            }
        }
    }
}

/// Rotates a single splat's SH block (width `3·(L+1)²`) by `r`.
pub fn rotate_sh(coeffs: &[f64], r: &Rot3, degree: usize) -> Result<Vec<f64>> {
    if degree > MAX_SH_DEGREE {
        return Err(Error::UnsupportedShDegree(degree));
    }
    if coeffs.len() != sh_width(degree) {
        return Err(Error::Format(format!(
            "SH block has {} coefficients, degree {degree} needs {}",
            coeffs.len(),
            sh_width(degree)
        )));
    }
    let rot = ShRotation::new(r, degree)?;
    let mut out = coeffs.to_vec();
    rot.apply_block(&mut out);
    Ok(out)
}

fn to_splat_signs(mut b: BandMatrix) -> BandMatrix {
    let l = b.l;
    let sign = |m: i32| if m.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    for m in -l..=l {
        for n in -l..=l {
            let v = b.get(m, n) * sign(m) * sign(n);
            b.set(m, n, v);
        }
    }
    b
}

fn standard_band_matrices(r: &Rot3, degree: usize) -> Vec<BandMatrix> {
    if degree == 0 {
        return Vec::new();
    }
    let m = r.matrix();
    // (y, z, x) ordering: index -1 → y, 0 → z, 1 → x
    let axis = |i: i32| match i {
        -1 => 1,
        0 => 2,
        _ => 0,
    };
    let mut r1 = BandMatrix::zeros(1);
    for i in -1..=1 {
        for j in -1..=1 {
            r1.set(i, j, m[(axis(i), axis(j))]);
        }
    }
    let mut bands = vec![r1];
    for l in 2..=degree as i32 {
        let next = next_band(&bands[0], bands.last().unwrap(), l);
        bands.push(next);
    }
    bands
}

fn p_term(i: i32, l: i32, a: i32, b: i32, r1: &BandMatrix, prev: &BandMatrix) -> f64 {
    let ri1 = r1.get(i, 1);
    let rim1 = r1.get(i, -1);
    let ri0 = r1.get(i, 0);
    if b == -l {
        ri1 * prev.get(a, -l + 1) + rim1 * prev.get(a, l - 1)
    } else if b == l {
        ri1 * prev.get(a, l - 1) - rim1 * prev.get(a, -l + 1)
    } else {
        ri0 * prev.get(a, b)
    }
}

fn next_band(r1: &BandMatrix, prev: &BandMatrix, l: i32) -> BandMatrix {
    let mut out = BandMatrix::zeros(l);
    for m in -l..=l {
        for n in -l..=l {
            let d = if m == 0 { 1.0 } else { 0.0 };
            let denom = if n.abs() == l { ((2 * l) * (2 * l - 1)) as f64 } else { ((l + n) * (l - n)) as f64 };
            let ma = m.abs();
            let u = (((l + m) * (l - m)) as f64 / denom).sqrt();
            let v = 0.5 * ((1.0 + d) * ((l + ma - 1) * (l + ma)) as f64 / denom).sqrt() * (1.0 - 2.0 * d);
            let w = -0.5 * (((l - ma - 1) * (l - ma)) as f64 / denom).sqrt() * (1.0 - d);

            let mut value = 0.0;
            if u != 0.0 {
                value += u * p_term(0, l, m, n, r1, prev);
            }
            if v != 0.0 {
                let vv = if m == 0 {
                    p_term(1, l, 1, n, r1, prev) + p_term(-1, l, -1, n, r1, prev)
                } else if m > 0 {
                    let d1: f64 = if m == 1 { 1.0 } else { 0.0 };
                    p_term(1, l, m - 1, n, r1, prev) * (1.0 + d1).sqrt()
                        - p_term(-1, l, -m + 1, n, r1, prev) * (1.0 - d1)
                } else {
                    let d1: f64 = if m == -1 { 1.0 } else { 0.0 };
                    p_term(1, l, m + 1, n, r1, prev) * (1.0 - d1)
                        + p_term(-1, l, -m - 1, n, r1, prev) * (1.0 + d1).sqrt()
                };
                value += v * vv;
            }
            if w != 0.0 {
                let ww = if m > 0 {
                    p_term(1, l, m + 1, n, r1, prev) + p_term(-1, l, -m - 1, n, r1, prev)
                } else {
                    p_term(1, l, m - 1, n, r1, prev) - p_term(-1, l, -m + 1, n, r1, prev)
                };
                value += w * ww;
            }
            out.set(m, n, value);
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::se3::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    /// Splat-convention real SH basis evaluated at a unit direction (one channel).
    pub(crate) fn eval_basis(d: &Vec3, degree: usize) -> Vec<f64> {
        let (x, y, z) = (d.x, d.y, d.z);
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let mut out = vec![0.282_094_791_773_878_14];
        if degree >= 1 {
            let c1 = 0.488_602_511_902_919_9;
            out.extend([-c1 * y, c1 * z, -c1 * x]);
        }
        if degree >= 2 {
            out.extend([
                1.092_548_430_592_079_2 * x * y,
                -1.092_548_430_592_079_2 * y * z,
                0.315_391_565_252_520_05 * (2.0 * zz - xx - yy),
                -1.092_548_430_592_079_2 * x * z,
                0.546_274_215_296_039_6 * (xx - yy),
            ]);
        }
        if degree >= 3 {
            out.extend([
                -0.590_043_589_926_643_5 * y * (3.0 * xx - yy),
                2.890_611_442_640_554 * x * y * z,
                -0.457_045_799_464_465_8 * y * (4.0 * zz - xx - yy),
                0.373_176_332_590_115_4 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
                -0.457_045_799_464_465_8 * x * (4.0 * zz - xx - yy),
                1.445_305_721_320_277 * z * (xx - yy),
                -0.590_043_589_926_643_5 * x * (xx - 3.0 * yy),
            ]);
        }
        out
    }

    /// Color of channel `c` of a splat block in direction `d`.
    pub(crate) fn eval_channel(block: &[f64], degree: usize, c: usize, d: &Vec3) -> f64 {
        let rest = coeffs_per_channel(degree) - 1;
        let basis = eval_basis(d, degree);
        let mut v = block[c] * basis[0];
        for k in 0..rest {
            v += block[3 + c * rest + k] * basis[k + 1];
        }
        v
    }

    pub(crate) fn random_rot(rng: &mut ChaCha8Rng) -> Rot3 {
        let axis = loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 {
                break v.normalize();
            }
        };
        Rot3::about_axis(&axis, rng.random_range(-3.1..3.1)).unwrap()
    }

    fn random_block(rng: &mut ChaCha8Rng, degree: usize) -> Vec<f64> {
        (0..sh_width(degree)).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn random_dir(rng: &mut ChaCha8Rng) -> Vec3 {
        loop {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            if v.norm() > 0.1 {
                return v.normalize();
            }
        }
    }

    #[test]
    fn widths() {
        assert_eq!(sh_width(0), 3);
        assert_eq!(sh_width(3), 48);
        assert_eq!(degree_from_rest_count(45), Some(3));
        assert_eq!(degree_from_rest_count(0), Some(0));
        assert_eq!(degree_from_rest_count(10), None);
    }

    #[test]
    fn identity_leaves_block_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let block = random_block(&mut rng, 3);
        assert_eq!(rotate_sh(&block, &Rot3::identity(), 3).unwrap(), block);
    }

    #[test]
    fn unsupported_degree_rejected() {
        assert!(matches!(rotate_sh(&[0.0; 75], &Rot3::identity(), 4), Err(Error::UnsupportedShDegree(4))));
    }

    #[test]
    fn band_one_rotates_like_a_vector() {
        // band-1 coefficients (c0, c1, c2) encode f(d) = C1·a·d with a = (-c2, -c0, c1)
        let r = Rot3::rot_z(FRAC_PI_2);
        let block = vec![0.1, 0.2, 0.3, 0.7, -0.4, 0.25, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let out = rotate_sh(&block, &r, 1).unwrap();
        assert_eq!(&out[..3], &block[..3]);
        for c in 0..3 {
            let coeff = |b: &[f64], k: usize| b[3 + c * 3 + k];
            let a = Vec3::new(-coeff(&block, 2), -coeff(&block, 0), coeff(&block, 1));
            let expect = r.apply(&a);
            let got = Vec3::new(-coeff(&out, 2), -coeff(&out, 0), coeff(&out, 1));
            assert!((got - expect).amax() < 1e-9, "channel {c}: {got:?} vs {expect:?}");
        }
    }

    #[test]
    fn rotated_color_field_matches_direction_sampling() {
        // f'(d) = f(Rᵀ d) at random directions, every degree
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for degree in 0..=3 {
            for _ in 0..20 {
                let r = random_rot(&mut rng);
                let block = random_block(&mut rng, degree);
                let out = rotate_sh(&block, &r, degree).unwrap();
                for _ in 0..10 {
                    let d = random_dir(&mut rng);
                    let back = r.transpose().apply(&d);
                    for c in 0..3 {
                        let lhs = eval_channel(&out, degree, c, &d);
                        let rhs = eval_channel(&block, degree, c, &back);
                        assert!((lhs - rhs).abs() < 1e-10, "degree {degree}: {lhs} vs {rhs}");
                    }
                }
            }
        }
    }

    #[test]
    fn composition_is_a_homomorphism() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let r1 = random_rot(&mut rng);
            let r2 = random_rot(&mut rng);
            let block = random_block(&mut rng, 3);
            let two_step = rotate_sh(&rotate_sh(&block, &r1, 3).unwrap(), &r2, 3).unwrap();
            let direct = rotate_sh(&block, &r2.mul(&r1), 3).unwrap();
            for (a, b) in two_step.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn band_matrices_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rot = ShRotation::new(&random_rot(&mut rng), 3).unwrap();
        for l in 1..=3i32 {
            let b = rot.band(l as usize);
            for m1 in -l..=l {
                for m2 in -l..=l {
                    let dot: f64 = (-l..=l).map(|n| b.get(m1, n) * b.get(m2, n)).sum();
                    let expect = if m1 == m2 { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12);
                }
            }
        }
    }
}
