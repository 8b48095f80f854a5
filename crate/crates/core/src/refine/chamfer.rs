use crate::error::{Error, Result};
use crate::se3::Vec3;

fn nearest(p: &Vec3, set: &[Vec3]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, q) in set.iter().enumerate() {
        let d = (p - q).norm_squared();
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// Symmetric mean of squared nearest-neighbor distances (meters²).
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let ab: f64 = a.iter().map(|p| nearest(p, b).1).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|q| nearest(q, a).1).sum::<f64>() / b.len() as f64;
    Ok(ab + ba)
}

/// Gradient of [`chamfer_distance`] with respect to the points of `a`
/// (`b` held fixed). Ties resolve to the lowest index.
pub fn chamfer_gradient_wrt_a(a: &[Vec3], b: &[Vec3]) -> Result<Vec<Vec3>> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut grad = vec![Vec3::zeros(); a.len()];
    let wa = 2.0 / a.len() as f64;
    let wb = 2.0 / b.len() as f64;
    for (i, p) in a.iter().enumerate() {
        let (j, _) = nearest(p, b);
        grad[i] += (p - b[j]) * wa;
    }
    for q in b {
        let (i, _) = nearest(q, a);
        grad[i] += (a[i] - q) * wb;
    }
    Ok(grad)
}
