//! Rider-on-bicycle pose refinement.
//!
//! Eleven joints (belly button, shoulders, elbows, hips, knees, ankles) are
//! optimized with Adam so that the five contact joints land on the bicycle's
//! handles, seat and pedals. All other joint rotations stay fixed.

mod adam;
mod chamfer;

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamParams, AdamState};
pub use chamfer::{chamfer_distance, chamfer_gradient_wrt_a};

use crate::body::{canonical_axis_angle, forward_kinematics_full, BodyPose, ContactJoints, Skeleton};
use crate::error::{Error, Result};
use crate::se3::{skew_matrix, so3_right_jacobian, Vec3};
use crate::splat::keypoints::{KeypointSet, HANDLE_L, HANDLE_R, PEDAL_L, PEDAL_R, SEAT};

/// Number of refined joints.
pub const NUM_REFINE_JOINTS: usize = 11;
/// Number of refined scalars (11 axis-angle vectors).
pub const NUM_REFINE_PARAMS: usize = 3 * NUM_REFINE_JOINTS;

/// Slot names of the refined joints, in parameter-vector order.
pub const REFINE_SLOTS: [&str; NUM_REFINE_JOINTS] =
    ["bbtn", "Lsho", "Rsho", "Lelb", "Relb", "Lhip", "Rhip", "Lknee", "Rknee", "Lank", "Rank"];

const DEFAULT_SLOT_JOINTS: [&str; NUM_REFINE_JOINTS] = [
    "Spine1",
    "L_Shoulder",
    "R_Shoulder",
    "L_Elbow",
    "R_Elbow",
    "L_Hip",
    "R_Hip",
    "L_Knee",
    "R_Knee",
    "L_Ankle",
    "R_Ankle",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    FiniteDifference,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveMode {
    /// Symmetric Chamfer distance between contacts and targets.
    Chamfer,
    /// Sum of squared distances over the five named correspondences.
    Paired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub gradient_mode: GradientMode,
    pub fd_step: f64,
    pub objective_mode: ObjectiveMode,
    /// Slot name → skeleton joint name.
    pub refine_joint_map: BTreeMap<String, String>,
}

pub fn default_refine_joint_map() -> BTreeMap<String, String> {
    REFINE_SLOTS.iter().zip(DEFAULT_SLOT_JOINTS).map(|(s, j)| (s.to_string(), j.to_string())).collect()
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig {
            learning_rate: 0.05,
            max_iters: 50,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            gradient_mode: GradientMode::FiniteDifference,
            fd_step: 1e-4,
            objective_mode: ObjectiveMode::Chamfer,
            refine_joint_map: default_refine_joint_map(),
        }
    }
}

impl RefineConfig {
    pub fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(Error::Config(format!("fd_step must be positive, got {}", self.fd_step)));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps >= 0.0 && self.adam_eps.is_finite()) {
            return Err(Error::Config(format!("adam_eps must be non-negative, got {}", self.adam_eps)));
        }
        Ok(())
    }

    /// Skeleton indices of the refined joints in parameter order.
    pub fn resolve_joints(&self, skel: &Skeleton) -> Result<[usize; NUM_REFINE_JOINTS]> {
        if self.refine_joint_map.len() != NUM_REFINE_JOINTS {
            return Err(Error::Config(format!(
                "refine_joint_map has {} entries, expected {NUM_REFINE_JOINTS}",
                self.refine_joint_map.len()
            )));
        }
        let mut out = [0; NUM_REFINE_JOINTS];
        for (slot, idx) in REFINE_SLOTS.iter().zip(out.iter_mut()) {
            let name = self
                .refine_joint_map
                .get(*slot)
                .ok_or_else(|| Error::Config(format!("refine_joint_map is missing slot {slot:?}")))?;
            *idx = skel
                .index_of(name)
                .ok_or_else(|| Error::Config(format!("refine_joint_map: unknown joint {name:?} for slot {slot:?}")))?;
        }
        for i in 0..NUM_REFINE_JOINTS {
            if out[..i].contains(&out[i]) {
                return Err(Error::Config(format!(
                    "refine_joint_map maps two slots to joint {:?}",
                    skel.joint_names()[out[i]]
                )));
            }
        }
        Ok(out)
    }
}

/// The posed bicycle contact points the rider is pulled toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BikeTargets {
    pub l_handle: Vec3,
    pub r_handle: Vec3,
    pub seat: Vec3,
    pub l_pedal: Vec3,
    pub r_pedal: Vec3,
}

impl BikeTargets {
    pub fn from_keypoints(kp: &KeypointSet) -> Result<Self> {
        let t = BikeTargets {
            l_handle: kp.require(HANDLE_L)?,
            r_handle: kp.require(HANDLE_R)?,
            seat: kp.require(SEAT)?,
            l_pedal: kp.require(PEDAL_L)?,
            r_pedal: kp.require(PEDAL_R)?,
        };
        t.validate()?;
        Ok(t)
    }

    /// Targets in the order matching [`ContactJoints::as_array`].
    pub fn as_array(&self) -> [Vec3; 5] {
        [self.l_handle, self.r_handle, self.seat, self.l_pedal, self.r_pedal]
    }

    pub fn validate(&self) -> Result<()> {
        if self.as_array().iter().all(|p| p.iter().all(|v| v.is_finite())) {
            Ok(())
        } else {
            Err(Error::NonFinite("bike targets".into()))
        }
    }
}

/// Everything the objective needs besides the refined parameters.
#[derive(Debug, Clone)]
pub struct RefineContext<'a> {
    pub base: &'a BodyPose,
    pub skeleton: &'a Skeleton,
    pub targets: &'a BikeTargets,
    pub config: &'a RefineConfig,
    joints: [usize; NUM_REFINE_JOINTS],
}

impl<'a> RefineContext<'a> {
    pub fn new(
        base: &'a BodyPose,
        skeleton: &'a Skeleton,
        targets: &'a BikeTargets,
        config: &'a RefineConfig,
    ) -> Result<Self> {
        config.validate()?;
        base.validate()?;
        targets.validate()?;
        let joints = config.resolve_joints(skeleton)?;
        Ok(RefineContext { base, skeleton, targets, config, joints })
    }

    pub fn joints(&self) -> &[usize; NUM_REFINE_JOINTS] {
        &self.joints
    }

    /// Current values of the refined joints, flattened.
    pub fn initial_params(&self) -> Vec<f64> {
        self.joints.iter().flat_map(|&k| self.base.thetas[k].iter().copied().collect::<Vec<_>>()).collect()
    }

    /// The base pose with `params` written into the refined joints.
    pub fn overlay(&self, params: &[f64]) -> Result<BodyPose> {
        if params.len() != NUM_REFINE_PARAMS {
            return Err(Error::Length { expected: NUM_REFINE_PARAMS, found: params.len() });
        }
        if let Some(bad) = params.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("refinement parameter {bad}")));
        }
        let mut pose = self.base.clone();
        for (s, &k) in self.joints.iter().enumerate() {
            pose.thetas[k] = Vec3::new(params[3 * s], params[3 * s + 1], params[3 * s + 2]);
        }
        Ok(pose)
    }
}

fn contacts_of(positions: &[Vec3]) -> [Vec3; 5] {
    ContactJoints::INDICES.map(|i| positions[i])
}

fn objective(contacts: &[Vec3; 5], targets: &[Vec3; 5], mode: ObjectiveMode) -> Result<f64> {
    match mode {
        ObjectiveMode::Chamfer => chamfer_distance(contacts, targets),
        ObjectiveMode::Paired => Ok(contacts.iter().zip(targets).map(|(a, b)| (a - b).norm_squared()).sum()),
    }
}

/// Objective value with `params` overlaid on the refined joints.
pub fn refine_loss(params: &[f64], ctx: &RefineContext) -> Result<f64> {
    let pose = ctx.overlay(params)?;
    let fk = forward_kinematics_full(ctx.skeleton, &pose);
    objective(&contacts_of(&fk.positions), &ctx.targets.as_array(), ctx.config.objective_mode)
}

/// Gradient of [`refine_loss`] by the configured method.
pub fn loss_gradient(params: &[f64], ctx: &RefineContext) -> Result<Vec<f64>> {
    match ctx.config.gradient_mode {
        GradientMode::FiniteDifference => fd_gradient(params, ctx),
        GradientMode::Analytic => analytic_gradient(params, ctx),
    }
}

/// Central differences with step `fd_step`, evaluated in index order.
pub fn fd_gradient(params: &[f64], ctx: &RefineContext) -> Result<Vec<f64>> {
    ctx.overlay(params)?;
    let h = ctx.config.fd_step;
    let mut x = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = refine_loss(&x, ctx)?;
        x[i] = orig - h;
        let fm = refine_loss(&x, ctx)?;
        x[i] = orig;
        grad.push((fp - fm) / (2.0 * h));
    }
    Ok(grad)
}

/// Derivative of a descendant point `p = p_k + G_k·w` with respect to the
/// axis-angle `θ_k` of joint `k`, whose world orientation is `G_k`.
pub fn point_jacobian(g_k: &Matrix3<f64>, w: &Vec3, theta_k: &Vec3) -> Matrix3<f64> {
    -(g_k * skew_matrix(w) * so3_right_jacobian(theta_k))
}

/// Chain-rule gradient through the kinematic tree.
pub fn analytic_gradient(params: &[f64], ctx: &RefineContext) -> Result<Vec<f64>> {
    let pose = ctx.overlay(params)?;
    let fk = forward_kinematics_full(ctx.skeleton, &pose);
    let contacts = contacts_of(&fk.positions);
    let targets = ctx.targets.as_array();
    let dl_dp: Vec<Vec3> = match ctx.config.objective_mode {
        ObjectiveMode::Chamfer => chamfer_gradient_wrt_a(&contacts, &targets)?,
        ObjectiveMode::Paired => contacts.iter().zip(&targets).map(|(a, b)| 2.0 * (a - b)).collect(),
    };
    let mut grad = vec![0.0; NUM_REFINE_PARAMS];
    for (s, &k) in ctx.joints.iter().enumerate() {
        let g_k = fk.rotations[k];
        let mut g = Vec3::zeros();
        for (ci, &c) in ContactJoints::INDICES.iter().enumerate() {
            if c == k || !ctx.skeleton.is_descendant(c, k) {
                continue;
            }
            let w = g_k.transpose() * (fk.positions[c] - fk.positions[k]);
            g += point_jacobian(&g_k, &w, &pose.thetas[k]).transpose() * dl_dp[ci];
        }
        grad[3 * s..3 * s + 3].copy_from_slice(g.as_slice());
    }
    Ok(grad)
}

/// Outcome of an Adam run with best-iterate tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamRun {
    pub best_x: Vec<f64>,
    pub best_iter: usize,
    pub loss_trace: Vec<f64>,
    pub aborted: Option<String>,
}

/// Runs `max_iters` Adam steps from `x0`, evaluating `f` at every iterate
/// including the start, and keeps the iterate with the smallest value.
/// A non-finite objective or gradient stops the run early.
pub fn minimize_adam<F, G>(x0: &[f64], params: &AdamParams, max_iters: usize, mut f: F, mut g: G) -> Result<AdamRun>
where
    F: FnMut(&[f64]) -> Result<f64>,
    G: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = x0.to_vec();
    let mut state = AdamState::new(x.len());
    let mut trace = Vec::with_capacity(max_iters + 1);
    let mut best: Option<(usize, f64, Vec<f64>)> = None;
    let mut aborted = None;
    for i in 0..=max_iters {
        let loss = f(&x)?;
        if !loss.is_finite() {
            aborted = Some(format!("objective is {loss} at iterate {i}"));
            break;
        }
        trace.push(loss);
        if best.as_ref().is_none_or(|(_, b, _)| loss < *b) {
            best = Some((i, loss, x.clone()));
        }
        if i == max_iters {
            break;
        }
        let grad = g(&x)?;
        if grad.iter().any(|v| !v.is_finite()) {
            aborted = Some(format!("gradient is not finite at iterate {i}"));
            break;
        }
        let (delta, next) = adam_step(&state, &grad, params);
        state = next;
        for (xi, d) in x.iter_mut().zip(delta) {
            *xi += d;
        }
    }
    let (best_iter, _, best_x) =
        best.ok_or_else(|| Error::NonFinite(aborted.clone().unwrap_or_else(|| "objective".into())))?;
    Ok(AdamRun { best_x, best_iter, loss_trace: trace, aborted })
}

/// Convergence record of one refinement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub loss_trace: Vec<f64>,
    pub best_iter: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    /// Wall time in seconds; not serialized so reports stay reproducible.
    #[serde(skip)]
    pub elapsed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

/// Seats the rider: Adam over the refined joints from the given pose,
/// returning the best iterate. Fixed joints, β and the global transform
/// are copied through untouched.
pub fn refine_pose(
    pose: &BodyPose,
    skel: &Skeleton,
    targets: &BikeTargets,
    config: &RefineConfig,
) -> Result<(BodyPose, RefineReport)> {
    let start = Instant::now();
    let ctx = RefineContext::new(pose, skel, targets, config)?;
    let x0 = ctx.initial_params();
    let run =
        minimize_adam(&x0, &config.adam(), config.max_iters, |x| refine_loss(x, &ctx), |x| loss_gradient(x, &ctx))?;
    if let Some(reason) = &run.aborted {
        log::error!("refinement aborted: {reason}; returning best iterate {}", run.best_iter);
    }
    let mut out = pose.clone();
    if run.best_iter != 0 {
        for (s, &k) in ctx.joints.iter().enumerate() {
            let v = Vec3::new(run.best_x[3 * s], run.best_x[3 * s + 1], run.best_x[3 * s + 2]);
            out.thetas[k] = canonical_axis_angle(&v);
        }
    }
    let report = RefineReport {
        initial_loss: run.loss_trace[0],
        best_loss: run.loss_trace[run.best_iter],
        best_iter: run.best_iter,
        loss_trace: run.loss_trace,
        elapsed: start.elapsed().as_secs_f64(),
        aborted: run.aborted,
    };
    Ok((out, report))
}
