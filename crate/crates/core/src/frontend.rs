//! Keyframing and measurement generation.
//!
//! Keyframes follow the distance rule: a new keyframe is taken at the first
//! reference sample whose accumulated travel since the previous keyframe
//! exceeds `d_kf`. Loop-closure detection and registration are replaced by a
//! parameterized model: pairs within `r_detect` are detected with probability
//! `p_detect`; each computed loop closure is a Gaussian inlier or, with
//! probability `p_outlier`, a gross outlier.

use crate::comm::{Scan, ScanSchedule};
use crate::key::Key;
use crate::lie::{cov_serde, sample_tangent, Covariance6, Pose3, Tangent6};
use crate::sync::Trial;
use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

/// Prior rotational standard deviation, radians.
pub const PRIOR_SIGMA_ROT: f64 = 1e-4;
/// Prior translational standard deviation, meters.
pub const PRIOR_SIGMA_TRANS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub robot_id: String,
    pub index: usize,
    pub stamp: f64,
    pub pose: Pose3,
    pub num_points: u64,
}

impl Keyframe {
    pub fn key(&self) -> Key {
        Key::new(self.robot_id.clone(), self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Prior,
    Odometry,
    IntraLc,
    InterLc,
}

impl MeasurementKind {
    pub fn is_loop_closure(self) -> bool {
        matches!(self, MeasurementKind::IntraLc | MeasurementKind::InterLc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub kind: MeasurementKind,
    pub from: Key,
    /// `None` for priors.
    pub to: Option<Key>,
    pub value: Pose3,
    pub covariance: Covariance6,
    /// When the measurement becomes available.
    pub stamp: f64,
    /// Whether generation perturbed it as a gross outlier.
    pub injected_outlier: bool,
}

fn diag(rot_var: f64, trans_var: f64) -> Covariance6 {
    Covariance6::from_diagonal(&Tangent6::new(rot_var, rot_var, rot_var, trans_var, trans_var, trans_var))
}

fn default_d_kf() -> f64 {
    2.0
}
fn default_r_detect() -> f64 {
    10.0
}
fn default_min_index_gap() -> usize {
    25
}
fn default_p_detect() -> f64 {
    0.7
}
fn default_p_outlier() -> f64 {
    0.05
}
fn default_q_odom() -> Covariance6 {
    diag(1e-6, 1e-4)
}
fn default_q_lc() -> Covariance6 {
    diag(2.5e-5, 2.5e-3)
}
fn default_outlier_translation() -> [f64; 2] {
    [2.0, 10.0]
}
fn default_outlier_rotation() -> [f64; 2] {
    [0.2, PI]
}
fn default_num_points() -> u64 {
    100_000
}

/// Front-end configuration. Covariances accept 36 row-major values or 6
/// standard deviations in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendParams {
    #[serde(default = "default_d_kf")]
    pub d_kf: f64,
    #[serde(default = "default_r_detect")]
    pub r_detect: f64,
    #[serde(default = "default_min_index_gap")]
    pub min_index_gap: usize,
    #[serde(default = "default_p_detect")]
    pub p_detect: f64,
    #[serde(default = "default_p_outlier")]
    pub p_outlier: f64,
    #[serde(default = "default_q_odom", with = "cov_serde")]
    pub q_odom: Covariance6,
    #[serde(default = "default_q_lc", with = "cov_serde")]
    pub q_lc: Covariance6,
    /// Outlier translation error range, meters.
    #[serde(default = "default_outlier_translation")]
    pub outlier_translation: [f64; 2],
    /// Outlier rotation error range, radians.
    #[serde(default = "default_outlier_rotation")]
    pub outlier_rotation: [f64; 2],
    /// Points per synthetic keyframe scan.
    #[serde(default = "default_num_points")]
    pub num_points: u64,
}

impl Default for FrontendParams {
    fn default() -> Self {
        Self {
            d_kf: default_d_kf(),
            r_detect: default_r_detect(),
            min_index_gap: default_min_index_gap(),
            p_detect: default_p_detect(),
            p_outlier: default_p_outlier(),
            q_odom: default_q_odom(),
            q_lc: default_q_lc(),
            outlier_translation: default_outlier_translation(),
            outlier_rotation: default_outlier_rotation(),
            num_points: default_num_points(),
        }
    }
}

impl FrontendParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.d_kf.is_finite() && self.d_kf > 0.0) {
            return Err(format!("d_kf must be > 0, got {}", self.d_kf));
        }
        if !(self.r_detect.is_finite() && self.r_detect >= 0.0) {
            return Err(format!("r_detect must be >= 0, got {}", self.r_detect));
        }
        for (name, p) in [("p_detect", self.p_detect), ("p_outlier", self.p_outlier)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        let [t0, t1] = self.outlier_translation;
        if !(t0 >= 0.0 && t0 <= t1 && t1.is_finite()) {
            return Err(format!("outlier_translation range [{t0}, {t1}] is not ordered"));
        }
        let [r0, r1] = self.outlier_rotation;
        if !(r0 >= 0.0 && r0 <= r1 && r1 <= PI) {
            return Err(format!("outlier_rotation range [{r0}, {r1}] must be ordered within [0, π]"));
        }
        for (name, q) in [("q_odom", &self.q_odom), ("q_lc", &self.q_lc)] {
            if !crate::lie::is_symmetric_psd(q, 1e-12, 1e-12) {
                return Err(format!("{name} is not symmetric positive semi-definite"));
            }
        }
        Ok(())
    }
}

/// Distance-based keyframing over the (already synchronized) reference trajectory.
pub fn select_keyframes(trial: &Trial, d_kf: f64, num_points: u64) -> Vec<Keyframe> {
    let poses = trial.poses();
    let make = |index: usize, i: usize| Keyframe {
        robot_id: trial.robot_id().to_string(),
        index,
        stamp: poses[i].stamp,
        pose: poses[i].pose,
        num_points,
    };
    let mut keyframes = vec![make(0, 0)];
    let mut travelled = 0.0;
    for i in 1..poses.len() {
        travelled += (poses[i].pose.translation() - poses[i - 1].pose.translation()).norm();
        if travelled > d_kf {
            keyframes.push(make(keyframes.len(), i));
            travelled = 0.0;
        }
    }
    keyframes
}

pub fn prior_covariance() -> Covariance6 {
    diag(PRIOR_SIGMA_ROT * PRIOR_SIGMA_ROT, PRIOR_SIGMA_TRANS * PRIOR_SIGMA_TRANS)
}

/// Prior on the first keyframe at its reference pose.
pub fn make_prior(first: &Keyframe) -> Measurement {
    Measurement {
        kind: MeasurementKind::Prior,
        from: first.key(),
        to: None,
        value: first.pose,
        covariance: prior_covariance(),
        stamp: first.stamp,
        injected_outlier: false,
    }
}

/// Relative motion between consecutive keyframes, `between(kᵢ, kᵢ₊₁) ∘ exp(ε)`
/// with `ε ~ N(0, q_odom)`.
pub fn make_odometry<R: Rng + ?Sized>(keyframes: &[Keyframe], q_odom: &Covariance6, rng: &mut R) -> Vec<Measurement> {
    keyframes
        .windows(2)
        .map(|w| {
            let truth = w[0].pose.between(&w[1].pose);
            Measurement {
                kind: MeasurementKind::Odometry,
                from: w[0].key(),
                to: Some(w[1].key()),
                value: perturb(&truth, q_odom, rng),
                covariance: *q_odom,
                stamp: w[1].stamp,
                injected_outlier: false,
            }
        })
        .collect()
}

/// `truth ∘ exp(ε)`, `ε ~ N(0, cov)`; exactly `truth` when the draw is zero.
fn perturb<R: Rng + ?Sized>(truth: &Pose3, cov: &Covariance6, rng: &mut R) -> Pose3 {
    let eps = sample_tangent(cov, rng);
    if eps == Tangent6::zeros() {
        *truth
    } else {
        truth.compose(&Pose3::expmap(&eps))
    }
}

/// A detected keyframe pair awaiting registration.
#[derive(Debug, Clone, PartialEq)]
pub struct LcCandidate {
    pub from: Key,
    pub to: Key,
    pub from_pose: Pose3,
    pub to_pose: Pose3,
    pub stamp: f64,
}

impl LcCandidate {
    fn new(from: &Keyframe, to: &Keyframe, stamp: f64) -> Self {
        Self {
            from: from.key(),
            to: to.key(),
            from_pose: from.pose,
            to_pose: to.pose,
            stamp,
        }
    }

    pub fn truth(&self) -> Pose3 {
        self.from_pose.between(&self.to_pose)
    }
}

fn within(a: &Keyframe, b: &Keyframe, r: f64) -> bool {
    (a.pose.translation() - b.pose.translation()).norm() <= r
}

/// Intra-robot detections: pair `(i, j)`, `j − i ≥ min_index_gap`, within
/// `r_detect`, thinned by `p_detect`; reported when keyframe `j` is created.
pub fn detect_intra_lc<R: Rng + ?Sized>(keyframes: &[Keyframe], params: &FrontendParams, rng: &mut R) -> Vec<LcCandidate> {
    let mut out = Vec::new();
    let gap = params.min_index_gap.max(1);
    for j in 0..keyframes.len() {
        for i in 0..(j + 1).saturating_sub(gap) {
            if !within(&keyframes[i], &keyframes[j], params.r_detect) {
                continue;
            }
            if rng.random::<f64>() < params.p_detect {
                out.push(LcCandidate::new(&keyframes[i], &keyframes[j], keyframes[j].stamp));
            }
        }
    }
    out
}

/// A teammate scan that arrived at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedScan {
    pub t: f64,
    pub keyframe: Keyframe,
}

/// Inter-robot detections for one receiving robot.
///
/// Each received scan is matched against the local keyframes that exist when
/// it arrives and against every later local keyframe; each (local, remote)
/// pair is tested at most once. A candidate becomes available at
/// `max(arrival, local keyframe time)`.
pub fn detect_inter_lc<R: Rng + ?Sized>(
    local: &[Keyframe],
    received: &[ReceivedScan],
    params: &FrontendParams,
    rng: &mut R,
) -> Vec<LcCandidate> {
    let mut order: Vec<&ReceivedScan> = received.iter().collect();
    order.sort_by(|a, b| a.t.total_cmp(&b.t).then_with(|| a.keyframe.key().cmp(&b.keyframe.key())));
    let mut tested: BTreeSet<(usize, Key)> = BTreeSet::new();
    let mut out = Vec::new();
    for scan in order {
        let remote = &scan.keyframe;
        for kf in local {
            if !tested.insert((kf.index, remote.key())) {
                continue;
            }
            if !within(kf, remote, params.r_detect) {
                continue;
            }
            if rng.random::<f64>() < params.p_detect {
                out.push(LcCandidate::new(kf, remote, scan.t.max(kf.stamp)));
            }
        }
    }
    out.sort_by(|a, b| a.stamp.total_cmp(&b.stamp).then_with(|| (&a.from, &a.to).cmp(&(&b.from, &b.to))));
    out
}

fn random_unit<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        let n = v.norm();
        if n > 1e-9 {
            return v / n;
        }
    }
}

fn uniform_in<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..=range[1])
    } else {
        range[0]
    }
}

/// Gross error pose: rotation angle and translation norm drawn uniformly from
/// the configured ranges, random axis and direction.
pub fn outlier_perturbation<R: Rng + ?Sized>(params: &FrontendParams, rng: &mut R) -> Pose3 {
    let angle = uniform_in(params.outlier_rotation, rng);
    let axis = random_unit(rng);
    let dist = uniform_in(params.outlier_translation, rng);
    let dir = random_unit(rng);
    Pose3::from_parts(UnitQuaternion::from_scaled_axis(axis * angle), dir * dist)
}

/// Registration stand-in: Gaussian inlier around the true relative pose, or
/// a gross outlier with probability `p_outlier`. The reported covariance is
/// `q_lc` either way.
pub fn compute_lc_measurement<R: Rng + ?Sized>(candidate: &LcCandidate, params: &FrontendParams, rng: &mut R) -> Measurement {
    let truth = candidate.truth();
    let outlier = rng.random::<f64>() < params.p_outlier;
    let value = if outlier {
        truth.compose(&outlier_perturbation(params, rng))
    } else {
        perturb(&truth, &params.q_lc, rng)
    };
    let kind = if candidate.from.robot == candidate.to.robot {
        MeasurementKind::IntraLc
    } else {
        MeasurementKind::InterLc
    };
    Measurement {
        kind,
        from: candidate.from.clone(),
        to: Some(candidate.to.clone()),
        value,
        covariance: params.q_lc,
        stamp: candidate.stamp,
        injected_outlier: outlier,
    }
}

/// Scan availability for the channel simulation.
pub fn scan_schedule(keyframes: &BTreeMap<String, Vec<Keyframe>>) -> ScanSchedule {
    keyframes
        .iter()
        .map(|(robot, kfs)| {
            (
                robot.clone(),
                kfs.iter()
                    .map(|k| Scan {
                        stamp: k.stamp,
                        index: k.index,
                        num_points: k.num_points,
                    })
                    .collect(),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::SimRng;
    use crate::sync::StampedPose;
    use rand::SeedableRng;

    fn straight(step: f64, length: f64) -> Trial {
        let n = (length / step).round() as usize;
        let poses = (0..=n)
            .map(|i| StampedPose {
                stamp: i as f64,
                pose: Pose3::from_translation(i as f64 * step, 0.0, 0.0),
            })
            .collect();
        Trial::new("a", poses).unwrap()
    }

    /// Circle of radius 10 m traversed twice, one sample per 0.5 m of arc.
    fn double_loop() -> Trial {
        let radius = 10.0;
        let circumference = 2.0 * PI * radius;
        let n = (2.0 * circumference / 0.5) as usize;
        let poses = (0..n)
            .map(|i| {
                let s = i as f64 * 0.5;
                let a = s / radius;
                StampedPose {
                    stamp: i as f64 * 0.25,
                    pose: Pose3::from_parts(
                        UnitQuaternion::from_euler_angles(0.0, 0.0, a + PI / 2.0),
                        Vector3::new(radius * a.cos(), radius * a.sin(), 0.0),
                    ),
                }
            })
            .collect();
        Trial::new("a", poses).unwrap()
    }

    #[test]
    fn keyframes_on_straight_line() {
        let kfs = select_keyframes(&straight(0.5, 10.0), 2.0, 10);
        let xs: Vec<f64> = kfs.iter().map(|k| k.pose.translation().x).collect();
        assert_eq!(xs, vec![0.0, 2.5, 5.0, 7.5, 10.0]);
        assert_eq!(kfs.iter().map(|k| k.index).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn stationary_and_short_trajectories() {
        let still = Trial::new(
            "a",
            (0..20)
                .map(|i| StampedPose {
                    stamp: i as f64,
                    pose: Pose3::identity(),
                })
                .collect(),
        )
        .unwrap();
        assert_eq!(select_keyframes(&still, 2.0, 1).len(), 1);
        assert_eq!(select_keyframes(&straight(0.5, 10.0), 50.0, 1).len(), 1);
    }

    #[test]
    fn keyframe_spacing_is_minimal() {
        let trial = double_loop();
        let kfs = select_keyframes(&trial, 2.0, 1);
        let poses = trial.poses();
        let sample_of = |k: &Keyframe| poses.iter().position(|p| p.stamp == k.stamp).unwrap();
        for w in kfs.windows(2) {
            let (a, b) = (sample_of(&w[0]), sample_of(&w[1]));
            let path = |to: usize| -> f64 {
                (a + 1..=to)
                    .map(|i| (poses[i].pose.translation() - poses[i - 1].pose.translation()).norm())
                    .sum()
            };
            assert!(path(b) > 2.0);
            assert!(path(b - 1) <= 2.0);
        }
    }

    #[test]
    fn prior_uses_fixed_sigmas() {
        let kfs = select_keyframes(&straight(0.5, 10.0), 2.0, 1);
        let prior = make_prior(&kfs[0]);
        let d = prior.covariance.diagonal();
        for i in 0..3 {
            assert!((d[i] - 1e-8).abs() < 1e-22);
            assert!((d[i + 3] - 1e-6).abs() < 1e-20);
        }
        assert_eq!(prior.value, kfs[0].pose);
        assert!(prior.to.is_none());
    }

    #[test]
    fn noiseless_odometry_chains_to_reference() {
        let kfs = select_keyframes(&double_loop(), 2.0, 1);
        let mut rng = SimRng::seed_from_u64(0);
        let odo = make_odometry(&kfs, &Covariance6::zeros(), &mut rng);
        assert_eq!(odo.len(), kfs.len() - 1);
        let mut pose = kfs[0].pose;
        for (m, kf) in odo.iter().zip(&kfs[1..]) {
            assert_eq!(m.value, kfs[m.from.index].pose.between(&kf.pose));
            pose = pose.compose(&m.value);
            assert!(pose.tangent_distance(&kf.pose) < 1e-9);
            assert_eq!(m.stamp, kf.stamp);
            assert_eq!(m.to.as_ref().unwrap().index, m.from.index + 1);
        }
    }

    #[test]
    fn odometry_residual_covariance_matches_q() {
        // Many keyframes along a line; residual log(m⁻¹ ∘ truth) should have
        // second moment q_odom.
        let kfs = select_keyframes(&straight(0.5, 25_000.0), 2.0, 1);
        assert!(kfs.len() > 9_999);
        let q = Covariance6::identity() * 1e-4;
        let mut rng = SimRng::seed_from_u64(17);
        let odo = make_odometry(&kfs[..10_001], &q, &mut rng);
        let mut acc = Covariance6::zeros();
        for m in &odo {
            let truth = kfs[m.from.index].pose.between(&kfs[m.from.index + 1].pose);
            let r = m.value.between(&truth).logmap();
            acc += r * r.transpose();
        }
        acc /= odo.len() as f64;
        let rel = (acc - q).norm() / q.norm();
        assert!(rel < 0.1, "relative Frobenius error {rel}");
    }

    #[test]
    fn intra_detection_rules() {
        let params = FrontendParams {
            p_detect: 1.0,
            ..Default::default()
        };
        let mut rng = SimRng::seed_from_u64(1);
        let line = select_keyframes(&straight(0.5, 500.0), 2.0, 1);
        assert!(detect_intra_lc(&line, &params, &mut rng).is_empty());

        let loop_kfs = select_keyframes(&double_loop(), 2.0, 1);
        let cands = detect_intra_lc(&loop_kfs, &params, &mut rng);
        assert!(!cands.is_empty());
        // Revisit keyframes: those with an older keyframe ≥ 25 indices back within 10 m.
        let revisits: BTreeSet<usize> = (0..loop_kfs.len())
            .filter(|&j| (0..j).any(|i| j - i >= 25 && within(&loop_kfs[i], &loop_kfs[j], 10.0)))
            .collect();
        let hit: BTreeSet<usize> = cands.iter().map(|c| c.to.index).collect();
        assert_eq!(hit, revisits);
        assert!(revisits.len() > 20);
        for c in &cands {
            assert!(c.to.index - c.from.index >= 25);
            assert!((c.from_pose.translation() - c.to_pose.translation()).norm() <= 10.0);
            assert_eq!(c.stamp, loop_kfs[c.to.index].stamp);
        }
        let none = FrontendParams {
            p_detect: 0.0,
            ..Default::default()
        };
        assert!(detect_intra_lc(&loop_kfs, &none, &mut rng).is_empty());
    }

    fn kf(robot: &str, index: usize, stamp: f64, x: f64) -> Keyframe {
        Keyframe {
            robot_id: robot.into(),
            index,
            stamp,
            pose: Pose3::from_translation(x, 0.0, 0.0),
            num_points: 1,
        }
    }

    #[test]
    fn inter_detection_rules() {
        let params = FrontendParams {
            p_detect: 1.0,
            ..Default::default()
        };
        let mut rng = SimRng::seed_from_u64(2);
        let local = vec![kf("a", 0, 0.0, 0.0), kf("a", 1, 5.0, 2.5), kf("a", 2, 50.0, 100.0)];
        assert!(detect_inter_lc(&local, &[], &params, &mut rng).is_empty());

        let far = ReceivedScan {
            t: 1.0,
            keyframe: kf("b", 0, 0.5, 500.0),
        };
        assert!(detect_inter_lc(&local, &[far], &params, &mut rng).is_empty());

        let near = ReceivedScan {
            t: 3.0,
            keyframe: kf("b", 4, 2.0, 1.0),
        };
        let dup = near.clone();
        let cands = detect_inter_lc(&local, &[near, dup], &params, &mut rng);
        assert_eq!(cands.len(), 2);
        assert_eq!(cands[0].from, Key::new("a", 0));
        assert_eq!(cands[0].stamp, 3.0);
        // Local keyframe 1 is created after the scan arrived.
        assert_eq!(cands[1].from, Key::new("a", 1));
        assert_eq!(cands[1].stamp, 5.0);
        assert!(cands.iter().all(|c| c.stamp >= 3.0));
    }

    fn candidate() -> LcCandidate {
        LcCandidate {
            from: Key::new("a", 0),
            to: Key::new("b", 3),
            from_pose: Pose3::from_translation(1.0, 2.0, 0.0),
            to_pose: Pose3::from_parts(UnitQuaternion::from_euler_angles(0.1, 0.0, 0.4), Vector3::new(3.0, 2.0, 1.0)),
            stamp: 4.0,
        }
    }

    #[test]
    fn lc_measurement_noiseless_inlier() {
        let params = FrontendParams {
            p_outlier: 0.0,
            q_lc: Covariance6::zeros(),
            ..Default::default()
        };
        let mut rng = SimRng::seed_from_u64(3);
        let m = compute_lc_measurement(&candidate(), &params, &mut rng);
        assert_eq!(m.value, candidate().truth());
        assert_eq!(m.kind, MeasurementKind::InterLc);
        assert!(!m.injected_outlier);
    }

    #[test]
    fn lc_outliers_are_gross() {
        let params = FrontendParams {
            p_outlier: 1.0,
            ..Default::default()
        };
        let mut rng = SimRng::seed_from_u64(4);
        let c = candidate();
        for _ in 0..2000 {
            let m = compute_lc_measurement(&c, &params, &mut rng);
            assert!(m.injected_outlier);
            assert_eq!(m.covariance, params.q_lc);
            let err = m.value.between(&c.truth());
            assert!(err.translation().norm() >= 2.0 - 1e-9);
            assert!(err.translation().norm() <= 10.0 + 1e-9);
            assert!(err.rotation_angle() >= 0.2 - 1e-9);
        }
    }

    #[test]
    fn lc_outlier_fraction() {
        let params = FrontendParams::default();
        let mut rng = SimRng::seed_from_u64(5);
        let c = candidate();
        let n = 10_000;
        let outliers = (0..n)
            .filter(|_| compute_lc_measurement(&c, &params, &mut rng).injected_outlier)
            .count();
        let frac = outliers as f64 / n as f64;
        assert!((frac - 0.05).abs() <= 0.007, "fraction {frac}");
    }

    #[test]
    fn params_round_trip_through_toml() {
        let p = FrontendParams::default();
        let text = toml::to_string(&p).unwrap();
        let back: FrontendParams = toml::from_str(&text).unwrap();
        assert_eq!(p, back);
        let sigmas: FrontendParams = toml::from_str("q_lc = [0.1, 0.1, 0.1, 1.0, 1.0, 1.0]\n").unwrap();
        assert!((sigmas.q_lc[(0, 0)] - 0.01).abs() < 1e-15);
        assert_eq!(sigmas.q_lc[(5, 5)], 1.0);
        assert!(p.validate().is_ok());
        let bad = FrontendParams {
            p_detect: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
