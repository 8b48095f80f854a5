//! Procedural toy bicycle used as a self-contained fixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::se3::{UnitQuat, Vec3};
use crate::splat::keypoints::*;
use crate::splat::sh::SH_C0;
use crate::splat::{sh_width, GaussianSet, KeypointSet};

use super::BikeParts;

const TOY_SH_DEGREE: usize = 3;

/// Dimensions (meters) of the generated bike.
#[derive(Debug, Clone, Copy)]
pub struct ToyBikeGeometry {
    pub wheel_radius: f64,
    pub rear_axle_x: f64,
    pub front_axle_x: f64,
    /// Height `h` of the pedal axle; the axle sits at `(0, h, 0)`.
    pub pedal_axle_height: f64,
    pub crank_length: f64,
    pub pedal_offset_z: f64,
    pub seat: [f64; 3],
    /// The steering shaft is vertical at this X.
    pub shaft_x: f64,
    pub shaft_top_y: f64,
    pub shaft_bottom_y: f64,
    pub handlebar: [f64; 2],
    pub handlebar_half_width: f64,
}

impl Default for ToyBikeGeometry {
    fn default() -> Self {
        ToyBikeGeometry {
            wheel_radius: 0.33,
            rear_axle_x: -0.55,
            front_axle_x: 0.50,
            pedal_axle_height: 0.30,
            crank_length: 0.17,
            pedal_offset_z: 0.10,
            seat: [-0.20, 0.88, 0.0],
            shaft_x: 0.50,
            shaft_top_y: 0.90,
            shaft_bottom_y: 0.65,
            handlebar: [0.45, 0.98],
            handlebar_half_width: 0.25,
        }
    }
}

impl ToyBikeGeometry {
    pub fn keypoints(&self) -> KeypointSet {
        let h = self.pedal_axle_height;
        let r = self.wheel_radius;
        let [hx, hy] = self.handlebar;
        let mut k = KeypointSet::new();
        k.insert(SEAT, Vec3::from(self.seat));
        k.insert(STEER_AXLE_TOP, Vec3::new(self.shaft_x, self.shaft_top_y, 0.0));
        k.insert(STEER_AXLE_BOTTOM, Vec3::new(self.shaft_x, self.shaft_bottom_y, 0.0));
        k.insert(HANDLE_L, Vec3::new(hx, hy, self.handlebar_half_width));
        k.insert(HANDLE_R, Vec3::new(hx, hy, -self.handlebar_half_width));
        k.insert(PEDAL_AXLE, Vec3::new(0.0, h, 0.0));
        k.insert(PEDAL_L, Vec3::new(self.crank_length, h, self.pedal_offset_z));
        k.insert(PEDAL_R, Vec3::new(-self.crank_length, h, -self.pedal_offset_z));
        k.insert(WHEEL_AXLE_FRONT, Vec3::new(self.front_axle_x, r, 0.0));
        k.insert(WHEEL_AXLE_REAR, Vec3::new(self.rear_axle_x, r, 0.0));
        k.insert(GROUND_ORIGIN, Vec3::zeros());
        k
    }
}

enum Primitive {
    Tube {
        a: Vec3,
        b: Vec3,
        radius: f64,
    },
    /// Wheel in the X–Y plane.
    Torus {
        center: Vec3,
        major: f64,
        minor: f64,
    },
    Ring {
        center: Vec3,
        radius: f64,
    },
    Box {
        center: Vec3,
        half: Vec3,
    },
}

impl Primitive {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        match self {
            Primitive::Tube { a, b, radius } => {
                let t: f64 = rng.random();
                let d = (b - a).normalize();
                let helper = if d.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
                let u = d.cross(&helper).normalize();
                let w = d.cross(&u);
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                a + (b - a) * t + (u * phi.cos() + w * phi.sin()) * *radius
            }
            Primitive::Torus { center, major, minor } => {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                let psi = rng.random_range(0.0..std::f64::consts::TAU);
                let radial = major + minor * psi.cos();
                center + Vec3::new(radial * phi.cos(), radial * phi.sin(), minor * psi.sin())
            }
            Primitive::Ring { center, radius } => {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                center + Vec3::new(radius * phi.cos(), radius * phi.sin(), 0.0)
            }
            Primitive::Box { center, half } => {
                center
                    + Vec3::new(
                        rng.random_range(-half.x..=half.x),
                        rng.random_range(-half.y..=half.y),
                        rng.random_range(-half.z..=half.z),
                    )
            }
        }
    }
}

struct Component {
    primitive: Primitive,
    weight: f64,
    color: [f64; 3],
}

fn comp(primitive: Primitive, weight: f64, color: [f64; 3]) -> Component {
    Component { primitive, weight, color }
}

fn tube(a: [f64; 3], b: [f64; 3], radius: f64) -> Primitive {
    Primitive::Tube { a: Vec3::from(a), b: Vec3::from(b), radius }
}

const FRAME_RED: [f64; 3] = [0.80, 0.12, 0.10];
const TIRE: [f64; 3] = [0.10, 0.10, 0.11];
const STEEL: [f64; 3] = [0.70, 0.70, 0.72];
const SADDLE: [f64; 3] = [0.15, 0.12, 0.10];
const FORK_BLUE: [f64; 3] = [0.12, 0.25, 0.75];

fn sample_part(rng: &mut ChaCha8Rng, components: &[Component], count: usize) -> GaussianSet {
    let total: f64 = components.iter().map(|c| c.weight).sum();
    let mut counts: Vec<usize> =
        components.iter().map(|c| (count as f64 * c.weight / total).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    counts[0] += count - assigned;

    let width = sh_width(TOY_SH_DEGREE);
    let mut set = GaussianSet::empty(TOY_SH_DEGREE).expect("degree 3 is supported");
    let mut sh = vec![0.0f32; width];
    for (c, &n) in components.iter().zip(&counts) {
        for _ in 0..n {
            let mean = c.primitive.sample(rng);
            let q = UnitQuat::new_normalized(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let log_scale = [0, 1, 2].map(|_| rng.random_range(0.006f64..0.015).ln() as f32);
            for (dc, color) in sh[..3].iter_mut().zip(c.color) {
                let jitter = rng.random_range(-0.03..0.03);
                *dc = (((color + jitter).clamp(0.0, 1.0) - 0.5) / SH_C0) as f32;
            }
            for v in sh[3..].iter_mut() {
                *v = rng.random_range(-0.05f32..0.05);
            }
            let opacity = rng.random_range(2.0f32..4.0);
            set.push(mean, q, log_scale, &sh, opacity).expect("width matches degree");
        }
    }
    set
}

/// Deterministic procedural bike with `density` splats per part.
///
/// Frame and rear wheel, crankset, and fork with front wheel and handlebar
/// are sampled from tubes, tori and boxes; keypoints sit on the generating
/// geometry. The steering shaft is vertical (in the X–Y plane).
pub fn make_toy_bike(seed: u64, density: usize) -> BikeParts {
    let g = ToyBikeGeometry::default();
    let density = density.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let h = g.pedal_axle_height;
    let r = g.wheel_radius;
    let axle = [0.0, h, 0.0];
    let rear = [g.rear_axle_x, r, 0.0];
    let head_top = [g.shaft_x, g.shaft_top_y - 0.05, 0.0];
    let head_low = [g.shaft_x - 0.02, g.shaft_bottom_y + 0.05, 0.0];
    let seat_top = [g.seat[0] + 0.02, g.seat[1] - 0.06, 0.0];

    let frame = [
        comp(Primitive::Torus { center: Vec3::from(rear), major: r, minor: 0.02 }, 4.0, TIRE),
        comp(tube(axle, seat_top, 0.015), 1.2, FRAME_RED),
        comp(tube(seat_top, head_top, 0.015), 1.4, FRAME_RED),
        comp(tube(axle, head_low, 0.018), 1.4, FRAME_RED),
        comp(tube(axle, rear, 0.01), 1.0, FRAME_RED),
        comp(tube(seat_top, rear, 0.01), 1.1, FRAME_RED),
        comp(
            Primitive::Box { center: Vec3::new(g.seat[0], g.seat[1] - 0.02, 0.0), half: Vec3::new(0.12, 0.02, 0.06) },
            0.8,
            SADDLE,
        ),
    ];

    let zl = g.pedal_offset_z;
    let crank = g.crank_length;
    let pedals = [
        comp(tube([0.0, h, zl - 0.02], [crank, h, zl - 0.02], 0.008), 1.0, STEEL),
        comp(tube([0.0, h, -zl + 0.02], [-crank, h, -zl + 0.02], 0.008), 1.0, STEEL),
        comp(Primitive::Box { center: Vec3::new(crank, h, zl), half: Vec3::new(0.05, 0.01, 0.04) }, 1.0, SADDLE),
        comp(Primitive::Box { center: Vec3::new(-crank, h, -zl), half: Vec3::new(0.05, 0.01, 0.04) }, 1.0, SADDLE),
        comp(Primitive::Ring { center: Vec3::new(0.0, h, -0.05), radius: 0.10 }, 1.5, STEEL),
        comp(tube([0.0, h, -zl], [0.0, h, zl], 0.01), 0.4, STEEL),
    ];

    let [hx, hy] = g.handlebar;
    let hw = g.handlebar_half_width;
    let front = [g.front_axle_x, r, 0.0];
    let steering = [
        comp(Primitive::Torus { center: Vec3::from(front), major: r, minor: 0.02 }, 4.0, TIRE),
        comp(tube([g.shaft_x, g.shaft_bottom_y, 0.05], [front[0], r, 0.05], 0.01), 0.8, FORK_BLUE),
        comp(tube([g.shaft_x, g.shaft_bottom_y, -0.05], [front[0], r, -0.05], 0.01), 0.8, FORK_BLUE),
        comp(tube([g.shaft_x, g.shaft_bottom_y, 0.0], [g.shaft_x, g.shaft_top_y, 0.0], 0.016), 0.6, FORK_BLUE),
        comp(tube([g.shaft_x, g.shaft_top_y, 0.0], [hx, hy, 0.0], 0.012), 0.3, STEEL),
        comp(tube([hx, hy, -hw], [hx, hy, hw], 0.011), 1.4, STEEL),
    ];

    let frame_rear = sample_part(&mut rng, &frame, density);
    let pedals = sample_part(&mut rng, &pedals, density);
    let steering_front = sample_part(&mut rng, &steering, density);
    BikeParts::new(frame_rear, pedals, steering_front, g.keypoints()).expect("toy bike satisfies the rig invariants")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::ply::encode_splat;

    #[test]
    fn sizes_and_axle_position() {
        let b = make_toy_bike(0, 100);
        for (_, p) in b.parts() {
            assert!(p.len() >= 100);
        }
        let h = ToyBikeGeometry::default().pedal_axle_height;
        assert_eq!(b.keypoints.get(PEDAL_AXLE).unwrap(), Vec3::new(0.0, h, 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_toy_bike(7, 50);
        let b = make_toy_bike(7, 50);
        for ((_, x), (_, y)) in a.parts().iter().zip(b.parts().iter()) {
            assert_eq!(encode_splat(x), encode_splat(y));
        }
        assert_ne!(encode_splat(&make_toy_bike(8, 50).pedals), encode_splat(&a.pedals));
    }

    #[test]
    fn shaft_lies_in_xy_plane() {
        let b = make_toy_bike(0, 10);
        let v = b.keypoints.get(STEER_AXLE_TOP).unwrap() - b.keypoints.get(STEER_AXLE_BOTTOM).unwrap();
        assert_eq!(v.z, 0.0);
        assert!(v.y > 0.0);
    }

    #[test]
    fn density_floor_is_one() {
        let b = make_toy_bike(1, 0);
        assert_eq!(b.frame_rear.len(), 1);
    }
}
