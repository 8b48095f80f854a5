//! Binary little-endian splat PLY.
//!
//! Vertex properties, all `float`, in this exact order:
//! `x y z nx ny nz f_dc_0..2 f_rest_0..K-1 opacity scale_0..2 rot_0..3`
//! where `K = 3·((L+1)² − 1)`. Normals are written as zeros and ignored on
//! read (files without the normal triple are accepted). Quaternions whose
//! norm is off by more than 1e-6 are normalized on load.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_atomic};

use super::sh::{coeffs_per_channel, degree_from_rest_count, sh_width};
use super::{GaussianSet, QUAT_NORM_TOL};

fn property_names(degree: usize, with_normals: bool) -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    if with_normals {
        names.extend(["nx", "ny", "nz"].iter().map(|s| s.to_string()));
    }
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.extend((0..3 * (coeffs_per_channel(degree) - 1)).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

pub fn encode_splat(set: &GaussianSet) -> Vec<u8> {
    let names = property_names(set.sh_degree(), true);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", set.len()));
    for n in &names {
        header.push_str(&format!("property float {n}\n"));
    }
    header.push_str("end_header\n");

    let w = sh_width(set.sh_degree());
    let mut bytes = header.into_bytes();
    bytes.reserve(set.len() * names.len() * 4);
    let mut put = |v: f32| bytes.extend_from_slice(&v.to_le_bytes());
    for i in 0..set.len() {
        set.means()[i].iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(0.0));
        set.sh_coeffs()[i * w..(i + 1) * w].iter().for_each(|&v| put(v));
        put(set.opacities()[i]);
        set.log_scales()[i].iter().for_each(|&v| put(v));
        set.rotations()[i].iter().for_each(|&v| put(v));
    }
    bytes
}

pub fn save_splat(set: &GaussianSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_splat(set))
}

pub fn load_splat(path: &Path) -> Result<GaussianSet> {
    decode_splat(&read_bytes(path)?)
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let marker = b"end_header\n";
    bytes.windows(marker.len()).position(|w| w == marker).map(|p| p + marker.len())
}

pub fn decode_splat(bytes: &[u8]) -> Result<GaussianSet> {
    let end = find_header_end(bytes).ok_or_else(|| Error::Format("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(Error::Format("missing 'ply' magic".into()));
    }

    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, ..] => {
                return Err(Error::Format(format!("unsupported PLY format '{other}'")));
            }
            ["comment", ..] | ["obj_info", ..] | ["end_header"] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse().map_err(|_| Error::Format(format!("bad vertex count '{n}'")))?);
                in_vertex = true;
            }
            ["element", name, _] => {
                return Err(Error::Format(format!("unexpected element '{name}'")));
            }
            ["property", ty, name] if in_vertex => {
                if *ty != "float" && *ty != "float32" {
                    return Err(Error::Format(format!("property '{name}' has type '{ty}', expected float")));
                }
                props.push(name.to_string());
            }
            [] => {}
            _ => return Err(Error::Format(format!("unrecognized header line '{line}'"))),
        }
    }
    let n = count.ok_or_else(|| Error::Format("missing 'element vertex'".into()))?;

    let rest = props.iter().filter(|p| p.starts_with("f_rest_")).count();
    let degree = degree_from_rest_count(rest)
        .ok_or_else(|| Error::Format(format!("f_rest property count {rest} matches no SH degree 0..=3")))?;
    let with_normals = props.iter().any(|p| p == "nx" || p == "ny" || p == "nz");
    let expected = property_names(degree, with_normals);
    check_properties(&props, &expected)?;

    let stride = expected.len();
    let payload = &bytes[end..];
    let needed = n * stride * 4;
    if payload.len() < needed {
        return Err(Error::Length { expected: needed, found: payload.len() });
    }
    if payload.len() > needed {
        return Err(Error::Format(format!("{} trailing bytes after vertex payload", payload.len() - needed)));
    }

    let floats: Vec<f32> = payload.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let w = sh_width(degree);
    let off_dc = if with_normals { 6 } else { 3 };
    let off_op = off_dc + w;

    let mut means = Vec::with_capacity(n);
    let mut sh = Vec::with_capacity(n * w);
    let mut opacities = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    let mut rots = Vec::with_capacity(n);
    for row in floats.chunks_exact(stride) {
        means.push([row[0], row[1], row[2]]);
        sh.extend_from_slice(&row[off_dc..off_dc + w]);
        opacities.push(row[off_op]);
        scales.push([row[off_op + 1], row[off_op + 2], row[off_op + 3]]);
        let q = [row[off_op + 4], row[off_op + 5], row[off_op + 6], row[off_op + 7]];
        rots.push(normalize_quat(q)?);
    }
    GaussianSet::from_parts(means, rots, scales, sh, opacities, degree)
}

fn normalize_quat(q: [f32; 4]) -> Result<[f32; 4]> {
    let norm = q.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Format(format!("degenerate rotation quaternion {q:?}")));
    }
    if (norm - 1.0).abs() <= QUAT_NORM_TOL {
        return Ok(q);
    }
    Ok(q.map(|v| (v as f64 / norm) as f32))
}

fn check_properties(actual: &[String], expected: &[String]) -> Result<()> {
    for (i, exp) in expected.iter().enumerate() {
        match actual.get(i) {
            Some(a) if a == exp => {}
            Some(a) => {
                return Err(if actual.contains(exp) {
                    Error::Format(format!("unexpected property '{a}' at position {i}, expected '{exp}'"))
                } else {
                    Error::Format(format!("missing property '{exp}'"))
                });
            }
            None => return Err(Error::Format(format!("missing property '{exp}'"))),
        }
    }
    if let Some(extra) = actual.get(expected.len()) {
        return Err(Error::Format(format!("unexpected property '{extra}'")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::tests::random_set;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits(set: &GaussianSet) -> Vec<u32> {
        set.means()
            .iter()
            .flatten()
            .chain(set.rotations().iter().flatten())
            .chain(set.log_scales().iter().flatten())
            .chain(set.sh_coeffs())
            .chain(set.opacities())
            .map(|v| v.to_bits())
            .collect()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for degree in 0..=3 {
            let s = random_set(&mut rng, 3, degree);
            let path = dir.path().join(format!("s{degree}.ply"));
            save_splat(&s, &path).unwrap();
            let back = load_splat(&path).unwrap();
            assert_eq!(back.sh_degree(), degree);
            assert_eq!(bits(&back), bits(&s));
        }
    }

    #[test]
    fn empty_set_round_trips() {
        let s = GaussianSet::empty(2).unwrap();
        let back = decode_splat(&encode_splat(&s)).unwrap();
        assert_eq!(back.len(), 0);
        assert_eq!(back.sh_degree(), 2);
    }

    #[test]
    fn degree_three_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = random_set(&mut rng, 2, 3);
        let back = decode_splat(&encode_splat(&s)).unwrap();
        assert_eq!(back.sh_block(0).len(), 48);
    }

    fn replace_header(bytes: &[u8], from: &str, to: &str) -> Vec<u8> {
        let end = find_header_end(bytes).unwrap();
        let header = std::str::from_utf8(&bytes[..end]).unwrap().replacen(from, to, 1);
        let mut out = header.into_bytes();
        out.extend_from_slice(&bytes[end..]);
        out
    }

    #[test]
    fn missing_property_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bytes = encode_splat(&random_set(&mut rng, 2, 0));
        let broken = replace_header(&bytes, "property float opacity\n", "");
        let err = decode_splat(&broken).unwrap_err().to_string();
        assert!(err.contains("opacity"), "{err}");
    }

    #[test]
    fn extra_property_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bytes = encode_splat(&random_set(&mut rng, 1, 0));
        let broken = replace_header(&bytes, "end_header\n", "property float bogus\nend_header\n");
        let err = decode_splat(&broken).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn truncated_payload_is_length_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let bytes = encode_splat(&random_set(&mut rng, 3, 1));
        let err = decode_splat(&bytes[..bytes.len() - 5]).unwrap_err();
        assert!(matches!(err, Error::Length { .. }));
    }

    #[test]
    fn unnormalized_quaternions_are_normalized() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = random_set(&mut rng, 1, 0);
        let mut bytes = encode_splat(&s);
        let len = bytes.len();
        // rot_0..3 are the last 16 bytes
        for k in 0..4 {
            let at = len - 16 + 4 * k;
            let v = f32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) * 3.0;
            bytes[at..at + 4].copy_from_slice(&v.to_le_bytes());
        }
        let back = decode_splat(&bytes).unwrap();
        let q = back.rotation(0);
        assert!((q.norm() - 1.0).abs() < 1e-6);
    }
}
