//! Synthetic seated-rider benchmark on the toy bicycle.
//!
//! The reference pose is solved with damped least squares until all five
//! contact joints sit on their bike targets; the benchmark input perturbs
//! its elbows and knees.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bike::{pose_keypoints, BikePose8DoF, ToyBikeGeometry};
use crate::body::{forward_kinematics, joint_index, BodyPose, ContactJoints, Skeleton};
use crate::error::{Error, Result};
use crate::refine::{BikeTargets, ObjectiveMode, RefineConfig, RefineContext};
use crate::se3::{Rot3, UnitQuat, Vec3, SE3};
use crate::splat::sh::SH_C0;
use crate::splat::{sh_width, GaussianSet};

pub const BENCHMARK_THETA_P_DEG: f64 = 30.0;
pub const BENCHMARK_THETA_S_DEG: f64 = 10.0;
/// Per-axis perturbation (radians) applied to elbows and knees.
pub const BENCHMARK_PERTURBATION: f64 = 0.15;
pub const BENCHMARK_PERTURBED_JOINTS: [&str; 4] = ["L_Elbow", "R_Elbow", "L_Knee", "R_Knee"];
/// Largest accepted `best_loss / initial_loss` after refinement with
/// default settings. The reference run reaches about 2.7e-3.
pub const BENCHMARK_MAX_LOSS_RATIO: f64 = 0.05;

pub fn benchmark_bike_pose() -> BikePose8DoF {
    BikePose8DoF::articulation(BENCHMARK_THETA_P_DEG.to_radians(), BENCHMARK_THETA_S_DEG.to_radians())
}

/// Toy-bike targets at the benchmark articulation, in the bike frame.
pub fn benchmark_targets() -> Result<BikeTargets> {
    let kp = pose_keypoints(&ToyBikeGeometry::default().keypoints(), &benchmark_bike_pose())?;
    BikeTargets::from_keypoints(&kp)
}

/// A rough seated posture with the pelvis on `seat`: torso leaning forward,
/// arms reaching ahead, thighs forward and shins back.
pub fn seated_guess(seat: &Vec3) -> BodyPose {
    let mut pose = BodyPose { global: SE3::from_translation(*seat), ..Default::default() };
    let set = |pose: &mut BodyPose, name: &str, v: Vec3| {
        pose.thetas[joint_index(name).expect("joint name")] = v;
    };
    let d = f64::to_radians;
    set(&mut pose, "Spine1", Vec3::new(0.0, 0.0, -d(50.0)));
    set(&mut pose, "L_Shoulder", Vec3::new(0.0, d(90.0), 0.0));
    set(&mut pose, "R_Shoulder", Vec3::new(0.0, -d(90.0), 0.0));
    for hip in ["L_Hip", "R_Hip"] {
        set(&mut pose, hip, Vec3::new(0.0, 0.0, d(60.0)));
    }
    for knee in ["L_Knee", "R_Knee"] {
        set(&mut pose, knee, Vec3::new(0.0, 0.0, -d(80.0)));
    }
    pose
}

/// Moves the refined joints of `guess` until each contact joint coincides
/// with its paired target (Levenberg–Marquardt on the 15 residuals).
/// Fails if the residual does not vanish.
pub fn solve_seated(skel: &Skeleton, targets: &BikeTargets, guess: &BodyPose) -> Result<BodyPose> {
    let cfg = RefineConfig { objective_mode: ObjectiveMode::Paired, ..Default::default() };
    let ctx = RefineContext::new(guess, skel, targets, &cfg)?;
    let goal = targets.as_array();
    let residual = |x: &[f64]| -> Result<DVector<f64>> {
        let joints = forward_kinematics(skel, &ctx.overlay(x)?);
        Ok(DVector::from_iterator(
            15,
            ContactJoints::INDICES
                .iter()
                .zip(&goal)
                .flat_map(|(&c, t)| (joints[c] - t).iter().copied().collect::<Vec<_>>()),
        ))
    };
    let mut x = ctx.initial_params();
    let mut r = residual(&x)?;
    let mut lambda = 1e-2;
    for _ in 0..500 {
        if r.norm() < 1e-13 {
            break;
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(15, x.len());
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            jac.set_column(i, &((residual(&xp)? - residual(&xm)?) / (2.0 * h)));
        }
        let jjt = &jac * jac.transpose();
        loop {
            let a = &jjt + DMatrix::identity(15, 15) * lambda;
            let y = a.lu().solve(&r).ok_or_else(|| Error::DegenerateConfiguration("singular IK system".into()))?;
            let step = jac.transpose() * y;
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a - b).collect();
            let rt = residual(&trial)?;
            if rt.norm() < r.norm() {
                x = trial;
                r = rt;
                lambda = (lambda / 3.0).max(1e-12);
                break;
            }
            lambda *= 4.0;
            if lambda > 1e8 {
                return Err(Error::DegenerateConfiguration(format!(
                    "seated pose solve stalled at residual {:.3e} m",
                    r.norm()
                )));
            }
        }
    }
    if r.norm() > 1e-9 {
        return Err(Error::DegenerateConfiguration(format!("seated pose residual {:.3e} m", r.norm())));
    }
    Ok(ctx.overlay(&x)?.canonicalized())
}

/// Adds `amount` to every axis-angle component of the elbows and knees.
pub fn perturb_elbows_knees(pose: &BodyPose, amount: f64) -> BodyPose {
    let mut out = pose.clone();
    for name in BENCHMARK_PERTURBED_JOINTS {
        out.thetas[joint_index(name).expect("joint name")] += Vec3::repeat(amount);
    }
    out
}

/// The seated-rider benchmark in the canonical bike frame.
#[derive(Debug, Clone)]
pub struct RefineBenchmark {
    pub skeleton: Skeleton,
    pub targets: BikeTargets,
    /// Contacts exactly on targets.
    pub seated: BodyPose,
    /// Refinement input.
    pub perturbed: BodyPose,
}

pub fn refine_benchmark() -> Result<RefineBenchmark> {
    let skeleton = Skeleton::default_tpose();
    let targets = benchmark_targets()?;
    let seated = solve_seated(&skeleton, &targets, &seated_guess(&targets.seat))?;
    let perturbed = perturb_elbows_knees(&seated, BENCHMARK_PERTURBATION);
    Ok(RefineBenchmark { skeleton, targets, seated, perturbed })
}

/// Places a bike-frame pose in the world by `h`: the global transform of
/// the result is `h·global`.
pub fn place_pose(pose: &BodyPose, h: &SE3) -> BodyPose {
    BodyPose { global: h.compose(&pose.global), ..pose.clone() }
}

/// A fixed world placement used by the fixture pose file.
pub fn fixture_world_placement() -> SE3 {
    SE3::new(Rot3::rot_y(35f64.to_radians()), Vec3::new(2.0, 0.0, -1.5))
}

/// A stick-figure rider: `per_bone` splats scattered along every
/// parent–child segment of the posed skeleton, SH degree 3.
pub fn rider_stick_splats(skel: &Skeleton, pose: &BodyPose, per_bone: usize, seed: u64) -> GaussianSet {
    let joints = forward_kinematics(skel, pose);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = GaussianSet::empty(3).expect("degree 3 is supported");
    let mut sh = vec![0.0f32; sh_width(3)];
    for k in 0..joints.len() {
        let Some(parent) = skel.parent(k) else { continue };
        let (a, b) = (joints[parent], joints[k]);
        let color = if k >= 12 { [0.85, 0.65, 0.5] } else { [0.15, 0.3, 0.7] };
        for _ in 0..per_bone.max(1) {
            let t: f64 = rng.random_range(0.0..1.0);
            let jitter =
                Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
            let q = UnitQuat::new_normalized(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let log_scale = [0, 1, 2].map(|_| rng.random_range(0.01f64..0.02).ln() as f32);
            for ch in 0..3 {
                sh[ch] = ((color[ch] - 0.5) / SH_C0) as f32;
            }
            set.push(a + (b - a) * t + jitter, q, log_scale, &sh, 3.0).expect("width matches degree");
        }
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refine::{chamfer_distance, refine_pose};

    #[test]
    fn seated_pose_hits_targets() {
        let b = refine_benchmark().unwrap();
        let joints = forward_kinematics(&b.skeleton, &b.seated);
        for (c, t) in ContactJoints::INDICES.iter().zip(b.targets.as_array()) {
            assert!((joints[*c] - t).norm() < 1e-9);
        }
        let contacts = ContactJoints::INDICES.map(|i| joints[i]);
        assert!(chamfer_distance(&contacts, &b.targets.as_array()).unwrap() < 1e-18);
    }

    #[test]
    fn benchmark_converges_with_default_settings() {
        let b = refine_benchmark().unwrap();
        let (_, report) = refine_pose(&b.perturbed, &b.skeleton, &b.targets, &RefineConfig::default()).unwrap();
        let ratio = report.best_loss / report.initial_loss;
        assert!(report.initial_loss > 1e-3, "{}", report.initial_loss);
        assert!(ratio <= BENCHMARK_MAX_LOSS_RATIO, "ratio {ratio}");
    }

    #[test]
    fn stick_figure_is_deterministic_and_sized() {
        let b = refine_benchmark().unwrap();
        let a = rider_stick_splats(&b.skeleton, &b.seated, 5, 7);
        assert_eq!(a.len(), 23 * 5);
        assert_eq!(a, rider_stick_splats(&b.skeleton, &b.seated, 5, 7));
    }
}
