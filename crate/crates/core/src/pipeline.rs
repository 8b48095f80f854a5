//! Configuration and the six pipeline commands.
//!
//! Angles in the configuration are degrees; everything past this boundary
//! uses radians. Relative paths in a config file resolve against the file's
//! directory.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bike::{compose_bike_with, make_toy_bike, pose_keypoints, BikeParts, BikePose8DoF};
use crate::bike::{keypoint_carrier, part_transforms, KeypointCarrier};
use crate::body::{derive_pedal_angle, derive_steering_angle, forward_kinematics, BodyPose, ContactJoints, Skeleton};
use crate::body::{L_ANKLE, L_WRIST, R_ANKLE, R_WRIST};
use crate::dataset::{orbit_cameras, write_dataset, DatasetItem, Intrinsics};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::io::{write_atomic, write_json};
use crate::refine::{refine_pose, BikeTargets, RefineConfig, RefineReport};
use crate::se3::{Vec3, SE3};
use crate::splat::keypoints::{save_keypoints, transform_keypoints, KeypointSet, SEAT};
use crate::splat::{concat_gaussians, load_splat, save_splat, transform_gaussians_with, ShMode};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixturesSection {
    /// Splats per bike part.
    pub density: usize,
    /// Splats per bone of the stick-figure rider.
    pub rider_per_bone: usize,
}

impl Default for FixturesSection {
    fn default() -> Self {
        FixturesSection { density: 400, rider_per_bone: 12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BikeSection {
    pub dir: PathBuf,
    pub theta_p_deg: f64,
    pub theta_s_deg: f64,
    /// Global rotation about world X, Y, Z (degrees).
    pub rot_deg: [f64; 3],
    pub translation: [f64; 3],
    /// Take crank and steering angles from the rider pose instead.
    pub derive: bool,
    pub sh_mode: ShMode,
}

impl Default for BikeSection {
    fn default() -> Self {
        BikeSection {
            dir: PathBuf::from("bike"),
            theta_p_deg: 0.0,
            theta_s_deg: 0.0,
            rot_deg: [0.0; 3],
            translation: [0.0; 3],
            derive: false,
            sh_mode: ShMode::Full,
        }
    }
}

impl BikeSection {
    pub fn pose(&self) -> BikePose8DoF {
        let [x, y, z] = self.rot_deg.map(f64::to_radians);
        BikePose8DoF {
            theta_p: self.theta_p_deg.to_radians(),
            theta_s: self.theta_s_deg.to_radians(),
            theta_x: x,
            theta_y: y,
            theta_z: z,
            translation: self.translation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiderSection {
    /// Skeleton JSON; the built-in T-pose when absent.
    pub skeleton: Option<PathBuf>,
    pub pose: PathBuf,
    /// Rider splats in the canonical bike frame, concatenated by `compose`.
    pub splats: Option<PathBuf>,
}

impl Default for RiderSection {
    fn default() -> Self {
        RiderSection { skeleton: None, pose: PathBuf::from("rider_pose.json"), splats: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n_views: usize,
    pub azimuth_step_deg: Option<f64>,
    pub radius: f64,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub orbit_center: [f64; 3],
}

impl Default for DatasetSection {
    fn default() -> Self {
        let i = Intrinsics::default();
        DatasetSection {
            n_views: crate::dataset::DEFAULT_VIEWS,
            azimuth_step_deg: None,
            radius: crate::dataset::DEFAULT_RADIUS,
            width: i.width,
            height: i.height,
            fx: i.fx,
            fy: i.fy,
            orbit_center: [0.0; 3],
        }
    }
}

impl DatasetSection {
    pub fn validate(&self) -> Result<()> {
        if let Some(step) = self.azimuth_step_deg {
            if (step * self.n_views as f64 - 360.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "n_views ({}) times azimuth_step_deg ({step}) must equal 360",
                    self.n_views
                )));
            }
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Intrinsics {
        Intrinsics { fx: self.fx, fy: self.fy, width: self.width, height: self.height }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub fixtures: FixturesSection,
    pub bike: BikeSection,
    pub rider: RiderSection,
    pub refine: RefineConfig,
    pub dataset: DatasetSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            out: PathBuf::from("out"),
            fixtures: FixturesSection::default(),
            bike: BikeSection::default(),
            rider: RiderSection::default(),
            refine: RefineConfig::default(),
            dataset: DatasetSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().replace('\n', " ")))
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = crate::io::read_bytes(path)?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
        let mut cfg = PipelineConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.out);
        join(&mut self.bike.dir);
        join(&mut self.rider.pose);
        if let Some(p) = self.rider.skeleton.as_mut() {
            join(p);
        }
        if let Some(p) = self.rider.splats.as_mut() {
            join(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.refine.validate()?;
        self.dataset.validate()?;
        self.bike.pose().validate().map_err(|_| Error::Config("bike angles must be finite".into()))
    }

    fn skeleton(&self) -> Result<Skeleton> {
        match &self.rider.skeleton {
            Some(p) => Skeleton::load(p),
            None => Ok(Skeleton::default_tpose()),
        }
    }
}

/// Rider pose with its global transform replaced by a pure translation to
/// `seat`, i.e. expressed in the canonical bike frame.
pub fn canonical_rider(pose: &BodyPose, seat: &Vec3) -> BodyPose {
    BodyPose { global: SE3::from_translation(*seat), ..pose.clone() }
}

/// The world placement of a canonical cyclist whose rider has global
/// transform `rider_global`: `rider_global·T(−seat)`.
pub fn world_placement(rider_global: &SE3, seat: &Vec3) -> SE3 {
    rider_global.compose(&SE3::from_translation(-seat))
}

/// Crank and steering angles from a rider pose in the canonical bike frame.
pub fn derive_angles(skel: &Skeleton, canonical: &BodyPose) -> Result<(f64, f64)> {
    let j = forward_kinematics(skel, canonical);
    let theta_p = derive_pedal_angle(&j[L_ANKLE], &j[R_ANKLE])?;
    let theta_s = derive_steering_angle(&j[L_WRIST], &j[R_WRIST])?;
    Ok((theta_p, theta_s))
}

fn fmt_deg(r: f64) -> String {
    format!("{:.4}", r.to_degrees())
}

/// Writes the toy bike, skeleton, seated reference pose, perturbed rider
/// pose (placed in the world), stick-figure rider splats, and a
/// `config.toml` wiring them together.
pub fn cmd_make_fixtures(cfg: &PipelineConfig) -> Result<String> {
    let out = &cfg.out;
    let bike = make_toy_bike(cfg.seed, cfg.fixtures.density);
    bike.save(&out.join("bike"))?;
    let bench = fixtures::refine_benchmark()?;
    bench.skeleton.save(&out.join("skeleton.json"))?;
    bench.seated.save(&out.join("rider_reference.json"))?;
    let placed = fixtures::place_pose(&bench.perturbed, &fixtures::fixture_world_placement());
    placed.save(&out.join("rider_pose.json"))?;
    let rider = fixtures::rider_stick_splats(&bench.skeleton, &bench.seated, cfg.fixtures.rider_per_bone, cfg.seed);
    save_splat(&rider, &out.join("rider.ply"))?;

    let mut fc = PipelineConfig {
        seed: cfg.seed,
        out: PathBuf::from("results"),
        fixtures: cfg.fixtures.clone(),
        ..Default::default()
    };
    fc.bike.theta_p_deg = fixtures::BENCHMARK_THETA_P_DEG;
    fc.bike.theta_s_deg = fixtures::BENCHMARK_THETA_S_DEG;
    fc.rider.skeleton = Some(PathBuf::from("skeleton.json"));
    fc.rider.splats = Some(PathBuf::from("rider.ply"));
    write_atomic(&out.join("config.toml"), fc.to_toml()?.as_bytes())?;
    Ok(format!(
        "fixtures written to {}: bike with {} splats, rider with {} splats",
        out.display(),
        bike.total_splats(),
        rider.len()
    ))
}

/// Poses the bicycle with the configured 8 DoF.
pub fn cmd_repose_bike(cfg: &PipelineConfig) -> Result<String> {
    let parts = BikeParts::load(&cfg.bike.dir)?;
    let pose = cfg.bike.pose();
    let (splats, kp) = compose_bike_with(&parts, &pose, cfg.bike.sh_mode)?;
    save_splat(&splats, &cfg.out.join("bike_posed.ply"))?;
    save_keypoints(&kp, &cfg.out.join("bike_posed_keypoints.json"))?;
    write_json(&cfg.out.join("bike_pose.json"), &pose)?;
    Ok(format!(
        "posed bike written to {} ({} splats, theta_p {} deg, theta_s {} deg)",
        cfg.out.display(),
        splats.len(),
        fmt_deg(pose.theta_p),
        fmt_deg(pose.theta_s)
    ))
}

#[derive(Debug, Clone, Serialize)]
struct AnglesFile {
    theta_p: f64,
    theta_s: f64,
    theta_p_deg: f64,
    theta_s_deg: f64,
}

struct RiderInputs {
    skeleton: Skeleton,
    pose: BodyPose,
    keypoints: KeypointSet,
    seat: Vec3,
}

fn load_rider_inputs(cfg: &PipelineConfig) -> Result<RiderInputs> {
    let skeleton = cfg.skeleton()?;
    let pose = BodyPose::load(&cfg.rider.pose)?;
    let keypoints = crate::splat::keypoints::load_bike_keypoints(&cfg.bike.dir.join("keypoints.json"))?;
    let seat = keypoints.require(SEAT)?;
    Ok(RiderInputs { skeleton, pose, keypoints, seat })
}

/// Crank and steering angles from the rider pose.
pub fn cmd_derive_angles(cfg: &PipelineConfig) -> Result<(f64, f64)> {
    let r = load_rider_inputs(cfg)?;
    let (theta_p, theta_s) = derive_angles(&r.skeleton, &canonical_rider(&r.pose, &r.seat))?;
    let f = AnglesFile { theta_p, theta_s, theta_p_deg: theta_p.to_degrees(), theta_s_deg: theta_s.to_degrees() };
    write_json(&cfg.out.join("angles.json"), &f)?;
    Ok((theta_p, theta_s))
}

fn articulation(cfg: &PipelineConfig, r: &RiderInputs) -> Result<BikePose8DoF> {
    if cfg.bike.derive {
        let (p, s) = derive_angles(&r.skeleton, &canonical_rider(&r.pose, &r.seat))?;
        log::info!("derived theta_p {} deg, theta_s {} deg", fmt_deg(p), fmt_deg(s));
        Ok(BikePose8DoF::articulation(p, s))
    } else {
        Ok(BikePose8DoF::articulation(cfg.bike.theta_p_deg.to_radians(), cfg.bike.theta_s_deg.to_radians()))
    }
}

/// Refinement outcome plus the world-placed refined pose.
pub struct RefineOutcome {
    pub pose: BodyPose,
    pub report: RefineReport,
}

fn refine_rider(cfg: &PipelineConfig, r: &RiderInputs, bike_pose: &BikePose8DoF) -> Result<RefineOutcome> {
    let targets = BikeTargets::from_keypoints(&pose_keypoints(&r.keypoints, bike_pose)?)?;
    let canonical = canonical_rider(&r.pose, &r.seat);
    let (refined, report) = refine_pose(&canonical, &r.skeleton, &targets, &cfg.refine)?;
    Ok(RefineOutcome { pose: BodyPose { global: r.pose.global, ..refined }, report })
}

fn report_line(report: &RefineReport) -> String {
    let mut s = format!(
        "refinement: initial loss {:.6e}, best loss {:.6e} at iteration {} ({:.3} s)",
        report.initial_loss, report.best_loss, report.best_iter, report.elapsed
    );
    if let Some(reason) = &report.aborted {
        let _ = write!(s, ", aborted: {reason}");
    }
    s
}

/// Seats the rider on the bicycle.
pub fn cmd_refine(cfg: &PipelineConfig) -> Result<RefineReport> {
    let r = load_rider_inputs(cfg)?;
    let bike_pose = articulation(cfg, &r)?;
    let o = refine_rider(cfg, &r, &bike_pose)?;
    o.pose.save(&cfg.out.join("rider_refined.json"))?;
    write_json(&cfg.out.join("refine_report.json"), &o.report)?;
    log::info!("{}", report_line(&o.report));
    Ok(o.report)
}

#[derive(Debug, Clone, Serialize)]
struct ContactCheck {
    joint: &'static str,
    target: &'static str,
    distance: f64,
}

#[derive(Debug, Clone, Serialize)]
struct FkCheck {
    theta_p: f64,
    theta_s: f64,
    contacts: Vec<ContactCheck>,
    max_distance: f64,
}

/// Assembles the full cyclist: articulate the bike, seat the rider, merge
/// rider splats, then move everything by the rider's world placement.
pub fn cmd_compose(cfg: &PipelineConfig) -> Result<String> {
    let r = load_rider_inputs(cfg)?;
    let parts = BikeParts::load(&cfg.bike.dir)?;
    let bike_pose = articulation(cfg, &r)?;
    let (bike_splats, bike_kp) = compose_bike_with(&parts, &bike_pose, cfg.bike.sh_mode)?;
    let o = refine_rider(cfg, &r, &bike_pose)?;

    let canonical = canonical_rider(&o.pose, &r.seat);
    let joints = forward_kinematics(&r.skeleton, &canonical);
    let targets = BikeTargets::from_keypoints(&bike_kp)?.as_array();
    let names = [
        ("L_Wrist", "handle_L"),
        ("R_Wrist", "handle_R"),
        ("Pelvis", "seat"),
        ("L_Ankle", "pedal_L"),
        ("R_Ankle", "pedal_R"),
    ];
    let contacts: Vec<ContactCheck> = ContactJoints::INDICES
        .iter()
        .zip(targets)
        .zip(names)
        .map(|((&j, t), (joint, target))| ContactCheck { joint, target, distance: (joints[j] - t).norm() })
        .collect();
    let max_distance = contacts.iter().map(|c| c.distance).fold(0.0, f64::max);
    let check = FkCheck { theta_p: bike_pose.theta_p, theta_s: bike_pose.theta_s, contacts, max_distance };

    let assembled = match &cfg.rider.splats {
        Some(p) => {
            let rider = load_splat(p)?;
            concat_gaussians(&[&bike_splats, &rider])?
        }
        None => bike_splats,
    };
    let place = world_placement(&r.pose.global, &r.seat);
    let world = transform_gaussians_with(&assembled, &place, cfg.bike.sh_mode);
    let world_kp = transform_keypoints(&bike_kp, &place);

    save_splat(&world, &cfg.out.join("cyclist.ply"))?;
    save_keypoints(&world_kp, &cfg.out.join("cyclist_keypoints.json"))?;
    o.pose.save(&cfg.out.join("rider_refined.json"))?;
    write_json(&cfg.out.join("refine_report.json"), &o.report)?;
    write_json(&cfg.out.join("fk_check.json"), &check)?;
    Ok(format!(
        "cyclist written to {} ({} splats); {}; largest contact gap {:.4} m",
        cfg.out.display(),
        world.len(),
        report_line(&o.report),
        max_distance
    ))
}

/// Renders every bicycle part (posed by the configured 8 DoF) from an orbit
/// of cameras.
pub fn cmd_dataset_gen(cfg: &PipelineConfig) -> Result<usize> {
    cfg.dataset.validate()?;
    let parts = BikeParts::load(&cfg.bike.dir)?;
    let pose = cfg.bike.pose();
    let transforms = part_transforms(&parts.keypoints, &pose)?;
    let carriers = [KeypointCarrier::Frame, KeypointCarrier::Pedals, KeypointCarrier::Steering];
    let mut posed = Vec::new();
    for (((name, set), t), carrier) in parts.parts().into_iter().zip(&transforms).zip(carriers) {
        let mut kp = KeypointSet::new();
        kp.frame = parts.keypoints.frame.clone();
        for (n, p) in parts.keypoints.iter() {
            if keypoint_carrier(n) == carrier {
                kp.insert(n, t.apply(p));
            }
        }
        posed.push((name, transform_gaussians_with(set, t, cfg.bike.sh_mode), kp));
    }
    let d = &cfg.dataset;
    let cams = orbit_cameras(d.n_views, d.radius, d.intrinsics(), Vec3::from(d.orbit_center))?;
    let items: Vec<DatasetItem> =
        posed.iter().map(|(name, splats, keypoints)| DatasetItem { name, splats, keypoints }).collect();
    write_dataset(&cfg.out, &items, &cams)
}
