//! Single-robot trials and their synchronization into one multi-robot sequence.
//!
//! Each non-anchor trial is shifted so that it starts `Δᵢ ~ N(0, σ²)` seconds
//! after the anchor, and all clocks are rebased so the anchor starts at `t = 0`.
//! A robot is inactive before its first stamp and parks at its final pose after
//! its last stamp.

use crate::lie::{Covariance6, Pose3};
use crate::seeds::SimRng;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("trial `{robot}` needs at least 2 poses, got {count}")]
    TooFewPoses { robot: String, count: usize },
    #[error("trial `{robot}`: timestamps not strictly increasing at record {index} ({prev} then {next})")]
    NonIncreasing {
        robot: String,
        index: usize,
        prev: f64,
        next: f64,
    },
    #[error("no trials to synchronize")]
    NoTrials,
    #[error("anchor index {anchor} out of range for {count} trials")]
    AnchorOutOfRange { anchor: usize, count: usize },
    #[error("duplicate robot id `{0}`")]
    DuplicateRobot(String),
    #[error("unknown robot `{0}`")]
    UnknownRobot(String),
    #[error("offset spread must be finite and non-negative, got {0}")]
    BadSpread(f64),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub stamp: f64,
    pub pose: Pose3,
}

/// Relative motion reported by an on-board odometry source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedDelta {
    pub stamp: f64,
    pub delta: Pose3,
    pub covariance: Covariance6,
}

/// One robot's recorded run: its reference trajectory in the global frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    robot_id: String,
    poses: Vec<StampedPose>,
    odometry: Vec<StampedDelta>,
}

impl Trial {
    pub fn new(robot_id: impl Into<String>, poses: Vec<StampedPose>) -> Result<Self, SyncError> {
        let robot_id = robot_id.into();
        if poses.len() < 2 {
            return Err(SyncError::TooFewPoses {
                robot: robot_id,
                count: poses.len(),
            });
        }
        for (i, w) in poses.windows(2).enumerate() {
            if !(w[1].stamp > w[0].stamp) {
                return Err(SyncError::NonIncreasing {
                    robot: robot_id,
                    index: i + 1,
                    prev: w[0].stamp,
                    next: w[1].stamp,
                });
            }
        }
        Ok(Self {
            robot_id,
            poses,
            odometry: Vec::new(),
        })
    }

    pub fn with_odometry(mut self, odometry: Vec<StampedDelta>) -> Self {
        self.odometry = odometry;
        self
    }

    pub fn robot_id(&self) -> &str {
        &self.robot_id
    }

    pub fn poses(&self) -> &[StampedPose] {
        &self.poses
    }

    pub fn odometry(&self) -> &[StampedDelta] {
        &self.odometry
    }

    pub fn first_stamp(&self) -> f64 {
        self.poses[0].stamp
    }

    pub fn last_stamp(&self) -> f64 {
        self.poses[self.poses.len() - 1].stamp
    }

    /// Sum of consecutive translation distances, meters.
    pub fn path_length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| (w[1].pose.translation() - w[0].pose.translation()).norm())
            .sum()
    }

    fn shifted(&self, by: f64) -> Trial {
        Trial {
            robot_id: self.robot_id.clone(),
            poses: self
                .poses
                .iter()
                .map(|p| StampedPose {
                    stamp: p.stamp + by,
                    pose: p.pose,
                })
                .collect(),
            odometry: self
                .odometry
                .iter()
                .map(|o| StampedDelta {
                    stamp: o.stamp + by,
                    ..*o
                })
                .collect(),
        }
    }

    /// Pose at `t`: `None` before the first stamp, geodesic interpolation inside
    /// the window, the final pose afterwards.
    pub fn pose_at(&self, t: f64) -> Option<Pose3> {
        if t < self.first_stamp() {
            return None;
        }
        let idx = self.poses.partition_point(|p| p.stamp <= t);
        if idx >= self.poses.len() {
            return Some(self.poses[self.poses.len() - 1].pose);
        }
        let lo = &self.poses[idx - 1];
        if lo.stamp == t {
            return Some(lo.pose);
        }
        let hi = &self.poses[idx];
        let alpha = (t - lo.stamp) / (hi.stamp - lo.stamp);
        Some(lo.pose.interpolate(&hi.pose, alpha))
    }
}

/// Parses the stamped-pose text format: `timestamp tx ty tz qw qx qy qz` per
/// line, whitespace separated, `#` starts a comment.
pub fn parse_stamped_poses(text: &str, origin: &str) -> Result<Vec<StampedPose>, SyncError> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| SyncError::Parse {
            path: origin.to_string(),
            line: lineno + 1,
            message,
        };
        let values = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().map_err(|e| err(format!("`{tok}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", values.len())));
        }
        let pose = Pose3::from_wxyz(
            [values[4], values[5], values[6], values[7]],
            [values[1], values[2], values[3]],
        )
        .ok_or_else(|| err("degenerate quaternion or non-finite value".into()))?;
        out.push(StampedPose {
            stamp: values[0],
            pose,
        });
    }
    Ok(out)
}

pub fn read_trial(robot_id: &str, path: &Path) -> Result<Trial, SyncError> {
    let text = fs::read_to_string(path).map_err(|source| SyncError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Trial::new(robot_id, parse_stamped_poses(&text, &path.display().to_string())?)
}

/// Writes poses in the format read by [`parse_stamped_poses`].
pub fn format_stamped_poses(poses: &[StampedPose]) -> String {
    let mut s = String::from("# timestamp tx ty tz qw qx qy qz\n");
    for p in poses {
        let t = p.pose.translation_array();
        let q = p.pose.quaternion_wxyz();
        s.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            p.stamp, t[0], t[1], t[2], q[0], q[1], q[2], q[3]
        ));
    }
    s
}

/// Trials placed on a common clock.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncedSequence {
    trials: Vec<Trial>,
    offsets: Vec<f64>,
    anchor_index: usize,
}

/// Relative start times for the non-anchor trials.
///
/// `spread` is the standard deviation of `Δᵢ` in seconds; set
/// `spread_is_variance` to read it as a variance instead.
pub fn synchronize(
    trials: &[Trial],
    anchor_index: usize,
    spread: f64,
    spread_is_variance: bool,
    seed: u64,
) -> Result<SyncedSequence, SyncError> {
    if trials.is_empty() {
        return Err(SyncError::NoTrials);
    }
    if anchor_index >= trials.len() {
        return Err(SyncError::AnchorOutOfRange {
            anchor: anchor_index,
            count: trials.len(),
        });
    }
    if !spread.is_finite() || spread < 0.0 {
        return Err(SyncError::BadSpread(spread));
    }
    let mut seen = BTreeSet::new();
    for t in trials {
        if !seen.insert(t.robot_id()) {
            return Err(SyncError::DuplicateRobot(t.robot_id().to_string()));
        }
    }
    let sigma = if spread_is_variance { spread.sqrt() } else { spread };
    let offsets = sample_offsets(trials.len(), anchor_index, sigma, seed);
    let shifted = trials
        .iter()
        .zip(&offsets)
        .map(|(t, off)| t.shifted(off - t.first_stamp()))
        .collect();
    Ok(SyncedSequence {
        trials: shifted,
        offsets,
        anchor_index,
    })
}

/// Anchor gets 0; the others draw `σ·z`, `z ~ N(0, 1)`, in trial order.
pub fn sample_offsets(count: usize, anchor_index: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = SimRng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            if i == anchor_index {
                0.0
            } else {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            }
        })
        .collect()
}

impl SyncedSequence {
    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn anchor_index(&self) -> usize {
        self.anchor_index
    }

    pub fn robot_ids(&self) -> Vec<&str> {
        self.trials.iter().map(|t| t.robot_id()).collect()
    }

    pub fn robot_index(&self, robot_id: &str) -> Result<usize, SyncError> {
        self.trials
            .iter()
            .position(|t| t.robot_id() == robot_id)
            .ok_or_else(|| SyncError::UnknownRobot(robot_id.to_string()))
    }

    pub fn trial(&self, robot_id: &str) -> Result<&Trial, SyncError> {
        Ok(&self.trials[self.robot_index(robot_id)?])
    }

    /// Active window `[first, last]` on the shared clock.
    pub fn window(&self, robot_id: &str) -> Result<(f64, f64), SyncError> {
        let t = self.trial(robot_id)?;
        Ok((t.first_stamp(), t.last_stamp()))
    }

    /// Earliest start and latest end over all robots.
    pub fn span(&self) -> (f64, f64) {
        let start = self.trials.iter().map(Trial::first_stamp).fold(f64::INFINITY, f64::min);
        let end = self.trials.iter().map(Trial::last_stamp).fold(f64::NEG_INFINITY, f64::max);
        (start, end)
    }

    pub fn pose_at(&self, robot_id: &str, t: f64) -> Result<Option<Pose3>, SyncError> {
        Ok(self.trial(robot_id)?.pose_at(t))
    }

    pub fn active_robots(&self, t: f64) -> BTreeSet<String> {
        self.trials
            .iter()
            .filter(|tr| tr.first_stamp() <= t)
            .map(|tr| tr.robot_id().to_string())
            .collect()
    }
}

/// Reference keyframe poses per robot; a keyframe's index is its position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReferenceSolution {
    pub robots: BTreeMap<String, Vec<StampedPose>>,
}

impl ReferenceSolution {
    pub fn pose(&self, robot: &str, index: usize) -> Option<&StampedPose> {
        self.robots.get(robot).and_then(|v| v.get(index))
    }
}
