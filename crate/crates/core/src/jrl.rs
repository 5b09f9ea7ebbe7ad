//! JSON Robot Log (JRL) datasets.
//!
//! A dataset file is one JSON object, versioned `cosmoforge-jrl/1`, holding per-robot
//! time-ordered measurement streams, the reference solution for every keyframe,
//! noise models, outlier labels and provenance metadata. The schema is described
//! in `docs/jrl.md` and `docs/jrl.schema.json`.

use crate::frontend::{Measurement, MeasurementKind};
use crate::key::Key;
use crate::lie::{cov_serde, is_symmetric_psd, Covariance6, Pose3};
use crate::noise::NoiseEstimate;
use crate::sync::{StampedPose, SyncError, Trial};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "cosmoforge-jrl/1";

/// Relative tolerance for covariance symmetry checks.
const COV_SYM_TOL: f64 = 1e-9;
/// Eigenvalue tolerance, relative to the largest entry.
const COV_EIG_TOL: f64 = 1e-12;
/// Accepted deviation of a stored quaternion from unit norm.
const QUAT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum JrlError {
    #[error("{path}: malformed JSON at line {line}, column {column}: {message}")]
    Json {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: unsupported schema version `{found}` (expected `{SCHEMA_VERSION}`)")]
    Version { path: String, found: String },
    #[error("{path}: dangling key {key} referenced by {location}")]
    DanglingKey { path: String, location: String, key: Key },
    #[error("{path}: {} invariant violation(s); first: {}", .violations.len(), .violations[0])]
    Invalid { path: String, violations: Vec<Violation> },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    UnknownRobot,
    DuplicateRobot,
    DanglingKey,
    TimeOrder,
    WrongStream,
    OdometryNotConsecutive,
    OdometryGap,
    BadCovariance,
    BadLabel,
    GroundtruthGap,
    MissingPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    /// JSON-path-like location, e.g. `measurements.a[3]`.
    pub location: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", kind_name(self.kind), self.location, self.message)
    }
}

fn kind_name(kind: ViolationKind) -> String {
    serde_json::to_value(kind)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Position of a measurement inside its robot's stream.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MeasurementId {
    pub robot: String,
    pub seq: usize,
}

impl MeasurementId {
    pub fn new(robot: impl Into<String>, seq: usize) -> Self {
        Self {
            robot: robot.into(),
            seq,
        }
    }
}

impl fmt::Display for MeasurementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "measurements.{}[{}]", self.robot, self.seq)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundtruthEntry {
    pub stamp: f64,
    pub index: usize,
    #[serde(with = "pose_serde")]
    pub pose: Pose3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceTrial {
    pub robot: String,
    pub path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default)]
    pub generator: String,
    #[serde(default)]
    pub source_trials: Vec<SourceTrial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm_model: Option<String>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    /// Start time of each robot on the shared clock.
    #[serde(default)]
    pub offsets: BTreeMap<String, f64>,
    /// First and last trajectory stamp over all robots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub version: String,
    pub robots: Vec<String>,
    pub measurements: BTreeMap<String, Vec<Measurement>>,
    pub groundtruth: BTreeMap<String, Vec<GroundtruthEntry>>,
    #[serde(default)]
    pub noise_models: BTreeMap<String, NoiseEstimate>,
    #[serde(default)]
    pub outlier_labels: Vec<MeasurementId>,
    #[serde(default)]
    pub metadata: Metadata,
    /// Unrecognized top-level fields, kept for round-tripping.
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, robots: Vec<String>) -> Self {
        let measurements = robots.iter().map(|r| (r.clone(), Vec::new())).collect();
        let groundtruth = robots.iter().map(|r| (r.clone(), Vec::new())).collect();
        Self {
            name: name.into(),
            version: SCHEMA_VERSION.to_owned(),
            robots,
            measurements,
            groundtruth,
            noise_models: BTreeMap::new(),
            outlier_labels: Vec::new(),
            metadata: Metadata {
                generator: crate::GENERATOR_VERSION.to_owned(),
                ..Metadata::default()
            },
            extra: BTreeMap::new(),
        }
    }

    pub fn keyframe_count(&self, robot: &str) -> usize {
        self.groundtruth.get(robot).map_or(0, Vec::len)
    }

    pub fn groundtruth_entry(&self, key: &Key) -> Option<&GroundtruthEntry> {
        self.groundtruth
            .get(&key.robot)
            .and_then(|g| g.get(key.index))
            .filter(|e| e.index == key.index)
    }

    pub fn reference_pose(&self, key: &Key) -> Option<Pose3> {
        self.groundtruth_entry(key).map(|e| e.pose)
    }

    pub fn measurement(&self, id: &MeasurementId) -> Option<&Measurement> {
        self.measurements.get(&id.robot).and_then(|s| s.get(id.seq))
    }

    /// True value of a measurement under the reference solution.
    pub fn true_value(&self, m: &Measurement) -> Option<Pose3> {
        let a = self.reference_pose(&m.from)?;
        match &m.to {
            None => Some(a),
            Some(to) => Some(a.between(&self.reference_pose(to)?)),
        }
    }

    /// All measurements with their identifiers, in robot then stream order.
    pub fn iter_measurements(&self) -> impl Iterator<Item = (MeasurementId, &Measurement)> {
        self.measurements
            .iter()
            .flat_map(|(r, s)| s.iter().enumerate().map(move |(i, m)| (MeasurementId::new(r.clone(), i), m)))
    }

    pub fn is_labeled_outlier(&self, id: &MeasurementId) -> bool {
        self.outlier_labels.binary_search(id).is_ok()
    }

    /// Reference trajectory of one robot as a trial on the dataset clock.
    pub fn reference_trial(&self, robot: &str) -> Result<Trial, SyncError> {
        let poses = self
            .groundtruth
            .get(robot)
            .ok_or_else(|| SyncError::UnknownRobot(robot.to_owned()))?
            .iter()
            .map(|e| StampedPose {
                stamp: e.stamp,
                pose: e.pose,
            })
            .collect();
        Trial::new(robot, poses)
    }

    /// Sorts every stream into canonical order and relabels outliers to match.
    pub fn canonicalize(&mut self) {
        let mut remap: BTreeMap<MeasurementId, MeasurementId> = BTreeMap::new();
        for (robot, stream) in self.measurements.iter_mut() {
            let mut order: Vec<usize> = (0..stream.len()).collect();
            order.sort_by(|&a, &b| canonical_cmp(&stream[a], &stream[b]));
            let sorted: Vec<Measurement> = order.iter().map(|&i| stream[i].clone()).collect();
            for (new, &old) in order.iter().enumerate() {
                remap.insert(MeasurementId::new(robot.clone(), old), MeasurementId::new(robot.clone(), new));
            }
            *stream = sorted;
        }
        let mut labels: Vec<MeasurementId> = self
            .outlier_labels
            .iter()
            .map(|id| remap.get(id).cloned().unwrap_or_else(|| id.clone()))
            .collect();
        labels.sort();
        labels.dedup();
        self.outlier_labels = labels;
    }

    /// Every invariant violation, in a stable order.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |kind, location: String, message: String| out.push(Violation { kind, location, message });

        let mut seen = BTreeSet::new();
        for (i, r) in self.robots.iter().enumerate() {
            if !seen.insert(r) {
                push(ViolationKind::DuplicateRobot, format!("robots[{i}]"), format!("robot `{r}` listed twice"));
            }
        }
        for r in self.measurements.keys() {
            if !seen.contains(r) {
                push(ViolationKind::UnknownRobot, format!("measurements.{r}"), format!("stream for unlisted robot `{r}`"));
            }
        }
        for r in self.groundtruth.keys() {
            if !seen.contains(r) {
                push(ViolationKind::UnknownRobot, format!("groundtruth.{r}"), format!("reference for unlisted robot `{r}`"));
            }
        }

        for (robot, entries) in &self.groundtruth {
            let mut prev = f64::NEG_INFINITY;
            for (i, e) in entries.iter().enumerate() {
                let loc = format!("groundtruth.{robot}[{i}]");
                if e.index != i {
                    push(ViolationKind::GroundtruthGap, loc.clone(), format!("expected index {i}, found {}", e.index));
                }
                if !(e.stamp >= prev) {
                    push(ViolationKind::TimeOrder, loc, format!("stamp {} precedes {prev}", e.stamp));
                }
                prev = e.stamp;
            }
        }

        let exists = |k: &Key| self.groundtruth_entry(k).is_some();
        for (robot, stream) in &self.measurements {
            let mut prev = f64::NEG_INFINITY;
            let mut odom_edges = BTreeSet::new();
            let mut has_prior = false;
            for (i, m) in stream.iter().enumerate() {
                let loc = format!("measurements.{robot}[{i}]");
                if !m.stamp.is_finite() || m.stamp < prev {
                    push(ViolationKind::TimeOrder, loc.clone(), format!("stamp {} precedes {prev}", m.stamp));
                }
                prev = prev.max(m.stamp);
                for k in std::iter::once(&m.from).chain(m.to.iter()) {
                    if !exists(k) {
                        push(ViolationKind::DanglingKey, loc.clone(), format!("key {k} has no reference keyframe"));
                    }
                }
                match m.kind {
                    MeasurementKind::Prior | MeasurementKind::Odometry => {
                        if &m.from.robot != robot {
                            push(ViolationKind::WrongStream, loc.clone(), format!("key {} belongs to another robot", m.from));
                        }
                    }
                    MeasurementKind::IntraLc | MeasurementKind::InterLc => {
                        let to_robot = m.to.as_ref().map(|k| k.robot.as_str());
                        if &m.from.robot != robot && to_robot != Some(robot.as_str()) {
                            push(ViolationKind::WrongStream, loc.clone(), "loop closure touches no keyframe of this robot".into());
                        }
                    }
                }
                match m.kind {
                    MeasurementKind::Prior => has_prior = true,
                    MeasurementKind::Odometry => {
                        let ok = m
                            .to
                            .as_ref()
                            .is_some_and(|to| to.robot == m.from.robot && to.index == m.from.index + 1);
                        if ok {
                            odom_edges.insert(m.from.index);
                        } else {
                            push(
                                ViolationKind::OdometryNotConsecutive,
                                loc.clone(),
                                format!("odometry {} -> {} is not between consecutive keyframes", m.from, fmt_opt(&m.to)),
                            );
                        }
                    }
                    _ => {}
                }
                if !is_symmetric_psd(&m.covariance, COV_SYM_TOL, COV_EIG_TOL) {
                    push(ViolationKind::BadCovariance, loc, "covariance is not symmetric positive semi-definite".into());
                }
            }
            let n = self.keyframe_count(robot);
            if let Some(missing) = (0..n.saturating_sub(1)).find(|i| !odom_edges.contains(i)) {
                push(
                    ViolationKind::OdometryGap,
                    format!("measurements.{robot}"),
                    format!("no odometry between keyframes {missing} and {}", missing + 1),
                );
            }
            if n > 0 && !has_prior {
                push(ViolationKind::MissingPrior, format!("measurements.{robot}"), "stream has no prior".into());
            }
        }

        for (name, est) in &self.noise_models {
            if !is_symmetric_psd(&est.covariance, COV_SYM_TOL, COV_EIG_TOL) {
                push(ViolationKind::BadCovariance, format!("noise_models.{name}"), "covariance is not symmetric positive semi-definite".into());
            }
        }

        for (i, id) in self.outlier_labels.iter().enumerate() {
            let loc = format!("outlier_labels[{i}]");
            match self.measurement(id) {
                None => push(ViolationKind::BadLabel, loc, format!("{id} does not exist")),
                Some(m) if !m.kind.is_loop_closure() => {
                    push(ViolationKind::BadLabel, loc, format!("{id} is not a loop closure"))
                }
                _ => {}
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dataset serializes");
        s.push('\n');
        s
    }

    /// Parses without checking invariants.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, JrlError> {
        let value: Value = serde_json::from_str(text).map_err(|e| json_error(origin, &e))?;
        match value.get("version").and_then(Value::as_str) {
            Some(SCHEMA_VERSION) => {}
            found => {
                return Err(JrlError::Version {
                    path: origin.to_owned(),
                    found: found.unwrap_or("<missing>").to_owned(),
                })
            }
        }
        // Parse from text again so errors carry a line and column.
        serde_json::from_str(text).map_err(|e| json_error(origin, &e))
    }
}

fn fmt_opt(k: &Option<Key>) -> String {
    k.as_ref().map_or_else(|| "-".to_owned(), Key::to_string)
}

fn json_error(origin: &str, e: &serde_json::Error) -> JrlError {
    JrlError::Json {
        path: origin.to_owned(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn kind_rank(kind: MeasurementKind) -> u8 {
    match kind {
        MeasurementKind::Prior => 0,
        MeasurementKind::Odometry => 1,
        MeasurementKind::IntraLc => 2,
        MeasurementKind::InterLc => 2,
    }
}

/// Stream order: stamp, then prior < odometry < loop closure, then keys.
pub fn canonical_cmp(a: &Measurement, b: &Measurement) -> std::cmp::Ordering {
    a.stamp
        .total_cmp(&b.stamp)
        .then(kind_rank(a.kind).cmp(&kind_rank(b.kind)))
        .then_with(|| a.from.cmp(&b.from))
        .then_with(|| a.to.cmp(&b.to))
}

/// Writes `dataset` after checking its invariants.
pub fn write(dataset: &Dataset, path: &Path) -> Result<(), JrlError> {
    let origin = path.display().to_string();
    let violations = dataset.validate();
    if !violations.is_empty() {
        return Err(JrlError::Invalid {
            path: origin,
            violations,
        });
    }
    fs::write(path, dataset.to_json()).map_err(|source| JrlError::Io { path: origin, source })
}

/// Reads a dataset without checking invariants.
pub fn read_unchecked(path: &Path) -> Result<Dataset, JrlError> {
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| JrlError::Io {
        path: origin.clone(),
        source,
    })?;
    Dataset::from_json(&text, &origin)
}

/// Reads a dataset and checks its invariants.
pub fn read(path: &Path) -> Result<Dataset, JrlError> {
    let dataset = read_unchecked(path)?;
    check(dataset, &path.display().to_string())
}

fn check(dataset: Dataset, origin: &str) -> Result<Dataset, JrlError> {
    let violations = dataset.validate();
    if violations.is_empty() {
        return Ok(dataset);
    }
    if let Some(v) = violations.iter().find(|v| v.kind == ViolationKind::DanglingKey) {
        let key = dangling_key(&dataset, &v.location).unwrap_or_else(|| Key::new("?", 0));
        return Err(JrlError::DanglingKey {
            path: origin.to_owned(),
            location: v.location.clone(),
            key,
        });
    }
    Err(JrlError::Invalid {
        path: origin.to_owned(),
        violations,
    })
}

fn dangling_key(dataset: &Dataset, location: &str) -> Option<Key> {
    let rest = location.strip_prefix("measurements.")?;
    let (robot, idx) = rest.rsplit_once('[')?;
    let seq: usize = idx.trim_end_matches(']').parse().ok()?;
    let m = dataset.measurement(&MeasurementId::new(robot, seq))?;
    std::iter::once(&m.from)
        .chain(m.to.iter())
        .find(|k| dataset.groundtruth_entry(k).is_none())
        .cloned()
}

/// Wire form of a pose: `{"t": [x, y, z], "q": [w, x, y, z]}`.
pub mod pose_serde {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub(super) struct WirePose {
        pub t: [f64; 3],
        pub q: [f64; 4],
    }

    pub(super) fn to_wire(p: &Pose3) -> WirePose {
        WirePose {
            t: p.translation_array(),
            q: p.quaternion_wxyz(),
        }
    }

    pub(super) fn from_wire(w: &WirePose) -> Result<Pose3, String> {
        if w.t.iter().chain(w.q.iter()).any(|v| !v.is_finite()) {
            return Err("pose has non-finite components".into());
        }
        let q = Quaternion::new(w.q[0], w.q[1], w.q[2], w.q[3]);
        let norm = q.norm();
        if (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(format!("quaternion norm {norm} is not 1"));
        }
        // Keep stored unit quaternions bit-exact; only flip to the w >= 0 hemisphere.
        let q = if q.w < 0.0 { -q } else { q };
        let t = Vector3::new(w.t[0], w.t[1], w.t[2]);
        Ok(Pose3::from_unit_parts(UnitQuaternion::new_unchecked(q), t))
    }

    pub fn serialize<S: Serializer>(p: &Pose3, s: S) -> Result<S::Ok, S::Error> {
        to_wire(p).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Pose3, D::Error> {
        let w = WirePose::deserialize(d)?;
        from_wire(&w).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum WireType {
    Prior,
    Between,
    Loop,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireMeasurement {
    stamp: f64,
    #[serde(rename = "type")]
    kind: WireType,
    key1: Key,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key2: Option<Key>,
    pose: pose_serde::WirePose,
    #[serde(with = "cov_serde")]
    cov: Covariance6,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    injected_outlier: bool,
}

impl Serialize for Measurement {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let kind = match self.kind {
            MeasurementKind::Prior => WireType::Prior,
            MeasurementKind::Odometry => WireType::Between,
            MeasurementKind::IntraLc | MeasurementKind::InterLc => WireType::Loop,
        };
        WireMeasurement {
            stamp: self.stamp,
            kind,
            key1: self.from.clone(),
            key2: self.to.clone(),
            pose: pose_serde::to_wire(&self.value),
            cov: self.covariance,
            injected_outlier: self.injected_outlier,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Measurement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = WireMeasurement::deserialize(d)?;
        let kind = match (w.kind, &w.key2) {
            (WireType::Prior, None) => MeasurementKind::Prior,
            (WireType::Prior, Some(_)) => return Err(D::Error::custom("prior must not have key2")),
            (_, None) => return Err(D::Error::custom("between/loop entries need key2")),
            (WireType::Between, Some(_)) => MeasurementKind::Odometry,
            (WireType::Loop, Some(k2)) if k2.robot == w.key1.robot => MeasurementKind::IntraLc,
            (WireType::Loop, Some(_)) => MeasurementKind::InterLc,
        };
        Ok(Measurement {
            kind,
            from: w.key1,
            to: w.key2,
            value: pose_serde::from_wire(&w.pose).map_err(D::Error::custom)?,
            covariance: w.cov,
            stamp: w.stamp,
            injected_outlier: w.injected_outlier,
        })
    }
}

// ---------------------------------------------------------------------------
// Partitioning a centralized factor graph into per-robot streams.

#[derive(Debug, Error, PartialEq)]
pub enum PartitionError {
    #[error("key {0} has no robot mapping")]
    UnmappedKey(u64),
    #[error("robot `{robot}`: odometry chain broken between keyframes {index} and {}", .index + 1)]
    OdometryGap { robot: String, index: usize },
    #[error("robot `{robot}`: reference pose for keyframe {index} missing")]
    MissingReference { robot: String, index: usize },
    #[error("global graph line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One factor of a centralized graph, keyed by opaque integers.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalEntry {
    pub key1: u64,
    /// `None` for a prior.
    pub key2: Option<u64>,
    pub pose: Pose3,
    pub covariance: Covariance6,
    pub stamp: f64,
}

/// Maps an integer graph key to its robot keyframe.
pub trait KeyMapping {
    fn map_key(&self, key: u64) -> Option<Key>;
}

impl<F: Fn(u64) -> Option<Key>> KeyMapping for F {
    fn map_key(&self, key: u64) -> Option<Key> {
        self(key)
    }
}

/// Character-tagged keys: top 8 bits hold an ASCII tag, low 56 bits the index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymbolMapping {
    pub robots: BTreeMap<char, String>,
}

const SYMBOL_INDEX_BITS: u32 = 56;

impl SymbolMapping {
    pub fn symbol(tag: char, index: u64) -> u64 {
        ((tag as u64) << SYMBOL_INDEX_BITS) | (index & ((1 << SYMBOL_INDEX_BITS) - 1))
    }

    pub fn decode(key: u64) -> (char, u64) {
        let tag = (key >> SYMBOL_INDEX_BITS) as u8 as char;
        (tag, key & ((1 << SYMBOL_INDEX_BITS) - 1))
    }

    /// Parses `a=alpha,b=bravo`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut robots = BTreeMap::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (tag, robot) = part.split_once('=').ok_or_else(|| format!("`{part}`: expected tag=robot"))?;
            let mut chars = tag.trim().chars();
            let c = match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii() => c,
                _ => return Err(format!("`{tag}`: tag must be one ASCII character")),
            };
            robots.insert(c, robot.trim().to_owned());
        }
        Ok(Self { robots })
    }
}

impl KeyMapping for SymbolMapping {
    fn map_key(&self, key: u64) -> Option<Key> {
        let (tag, index) = Self::decode(key);
        let robot = self.robots.get(&tag)?;
        Some(Key::new(robot.clone(), usize::try_from(index).ok()?))
    }
}

fn entry_cmp(a: &GlobalEntry, b: &GlobalEntry) -> std::cmp::Ordering {
    let bits = |e: &GlobalEntry| -> Vec<u64> {
        e.pose
            .quaternion_wxyz()
            .iter()
            .chain(e.pose.translation_array().iter())
            .chain(e.covariance.iter())
            .map(|v| v.to_bits())
            .collect()
    };
    a.stamp
        .total_cmp(&b.stamp)
        .then(a.key2.is_some().cmp(&b.key2.is_some()))
        .then(a.key1.cmp(&b.key1))
        .then(a.key2.cmp(&b.key2))
        .then_with(|| bits(a).cmp(&bits(b)))
}

/// Splits a centralized graph into per-robot streams.
///
/// Per robot, the first edge (in stamp order) between keyframes `i` and `i + 1`
/// is its odometry; all other non-prior edges are loop closures. An inter-robot
/// loop closure goes to the robot whose keyframe is later in time, ties going
/// to the lexicographically smaller robot id. Keyframe times come from the
/// reference when given, otherwise from the odometry edge that reaches each
/// keyframe; without a reference, the reference solution is dead-reckoned from
/// each robot's prior (or the origin) along its odometry.
pub fn partition_global_graph(
    name: &str,
    entries: &[GlobalEntry],
    mapping: &dyn KeyMapping,
    reference: Option<&BTreeMap<String, Vec<GroundtruthEntry>>>,
) -> Result<Dataset, PartitionError> {
    let mut sorted: Vec<&GlobalEntry> = entries.iter().collect();
    sorted.sort_by(|a, b| entry_cmp(a, b));

    struct Mapped {
        from: Key,
        to: Option<Key>,
        pose: Pose3,
        cov: Covariance6,
        stamp: f64,
    }
    let mut mapped = Vec::with_capacity(sorted.len());
    for e in sorted {
        let from = mapping.map_key(e.key1).ok_or(PartitionError::UnmappedKey(e.key1))?;
        let to = match e.key2 {
            Some(k) => Some(mapping.map_key(k).ok_or(PartitionError::UnmappedKey(k))?),
            None => None,
        };
        mapped.push(Mapped {
            from,
            to,
            pose: e.pose,
            cov: e.covariance,
            stamp: e.stamp,
        });
    }

    let mut max_index: BTreeMap<String, usize> = BTreeMap::new();
    for m in &mapped {
        for k in std::iter::once(&m.from).chain(m.to.iter()) {
            let e = max_index.entry(k.robot.clone()).or_insert(0);
            *e = (*e).max(k.index);
        }
    }

    // Classify edges.
    let mut kinds = Vec::with_capacity(mapped.len());
    let mut odom: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for (i, m) in mapped.iter().enumerate() {
        let kind = match &m.to {
            None => MeasurementKind::Prior,
            Some(to) if to.robot == m.from.robot => {
                if to.index == m.from.index + 1 && !odom.contains_key(&(m.from.robot.clone(), m.from.index)) {
                    odom.insert((m.from.robot.clone(), m.from.index), i);
                    MeasurementKind::Odometry
                } else {
                    MeasurementKind::IntraLc
                }
            }
            Some(_) => MeasurementKind::InterLc,
        };
        kinds.push(kind);
    }
    for (robot, &max) in &max_index {
        if let Some(index) = (0..max).find(|&i| !odom.contains_key(&(robot.clone(), i))) {
            return Err(PartitionError::OdometryGap {
                robot: robot.clone(),
                index,
            });
        }
    }

    let groundtruth: BTreeMap<String, Vec<GroundtruthEntry>> = match reference {
        Some(reference) => {
            let mut gt = BTreeMap::new();
            for (robot, &max) in &max_index {
                let entries = reference.get(robot).map(Vec::as_slice).unwrap_or(&[]);
                for index in 0..=max {
                    if entries.get(index).is_none_or(|e| e.index != index) {
                        return Err(PartitionError::MissingReference {
                            robot: robot.clone(),
                            index,
                        });
                    }
                }
                gt.insert(robot.clone(), entries[..=max].to_vec());
            }
            gt
        }
        None => {
            let mut gt = BTreeMap::new();
            for (robot, &max) in &max_index {
                let prior = mapped
                    .iter()
                    .zip(&kinds)
                    .find(|(m, k)| **k == MeasurementKind::Prior && m.from.robot == *robot && m.from.index == 0)
                    .map(|(m, _)| m);
                let first_odom_stamp = odom.get(&(robot.clone(), 0)).map_or(0.0, |&i| mapped[i].stamp);
                let mut pose = prior.map_or(Pose3::identity(), |p| p.pose);
                let mut stamp = prior.map_or(first_odom_stamp, |p| p.stamp);
                let mut entries = vec![GroundtruthEntry { stamp, index: 0, pose }];
                for i in 0..max {
                    let edge = &mapped[odom[&(robot.clone(), i)]];
                    pose = pose.compose(&edge.pose);
                    stamp = stamp.max(edge.stamp);
                    entries.push(GroundtruthEntry {
                        stamp,
                        index: i + 1,
                        pose,
                    });
                }
                gt.insert(robot.clone(), entries);
            }
            gt
        }
    };

    let robots: Vec<String> = max_index.keys().cloned().collect();
    let mut dataset = Dataset::new(name, robots);
    dataset.groundtruth = groundtruth;
    for (m, kind) in mapped.into_iter().zip(kinds) {
        let owner = match (&kind, &m.to) {
            (MeasurementKind::InterLc, Some(to)) => {
                let ta = dataset.groundtruth[&m.from.robot][m.from.index].stamp;
                let tb = dataset.groundtruth[&to.robot][to.index].stamp;
                match ta.total_cmp(&tb) {
                    std::cmp::Ordering::Greater => m.from.robot.clone(),
                    std::cmp::Ordering::Less => to.robot.clone(),
                    std::cmp::Ordering::Equal => m.from.robot.clone().min(to.robot.clone()),
                }
            }
            _ => m.from.robot.clone(),
        };
        dataset.measurements.get_mut(&owner).expect("owner is a mapped robot").push(Measurement {
            kind,
            from: m.from,
            to: m.to,
            value: m.pose,
            covariance: m.cov,
            stamp: m.stamp,
            injected_outlier: false,
        });
    }
    dataset.canonicalize();
    Ok(dataset)
}

/// Parses the plain-text global graph format.
///
/// ```text
/// PRIOR   <key> <stamp> tx ty tz qw qx qy qz <36 cov values | 6 sigmas>
/// BETWEEN <key1> <key2> <stamp> tx ty tz qw qx qy qz <36 cov values | 6 sigmas>
/// POSE    <key> <stamp> tx ty tz qw qx qy qz
/// ```
///
/// Keys are unsigned integers. `POSE` lines, when present, give the reference.
pub fn parse_global_graph(text: &str) -> Result<(Vec<GlobalEntry>, Vec<(u64, f64, Pose3)>), PartitionError> {
    let mut entries = Vec::new();
    let mut poses = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| PartitionError::Parse { line: line_no, message };
        let mut tokens = line.split_whitespace();
        let tag = tokens.next().unwrap_or_default().to_ascii_uppercase();
        let rest: Vec<&str> = tokens.collect();
        let key_count = match tag.as_str() {
            "PRIOR" | "POSE" => 1,
            "BETWEEN" => 2,
            other => return Err(err(format!("unknown record `{other}`"))),
        };
        if rest.len() < key_count + 8 {
            return Err(err("too few fields".into()));
        }
        let keys = rest[..key_count]
            .iter()
            .map(|t| t.parse::<u64>().map_err(|e| err(format!("key `{t}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let nums = rest[key_count..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| err(format!("`{t}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let stamp = nums[0];
        let pose = Pose3::from_wxyz([nums[4], nums[5], nums[6], nums[7]], [nums[1], nums[2], nums[3]])
            .ok_or_else(|| err("degenerate quaternion".into()))?;
        if tag == "POSE" {
            if nums.len() != 8 {
                return Err(err(format!("POSE takes 8 numbers, found {}", nums.len())));
            }
            poses.push((keys[0], stamp, pose));
            continue;
        }
        let covariance = cov_serde::from_values(&nums[8..]).map_err(err)?;
        entries.push(GlobalEntry {
            key1: keys[0],
            key2: keys.get(1).copied(),
            pose,
            covariance,
            stamp,
        });
    }
    Ok((entries, poses))
}

/// Groups `POSE` records into a reference solution keyed by robot.
pub fn reference_from_poses(
    poses: &[(u64, f64, Pose3)],
    mapping: &dyn KeyMapping,
) -> Result<BTreeMap<String, Vec<GroundtruthEntry>>, PartitionError> {
    let mut by_robot: BTreeMap<String, BTreeMap<usize, GroundtruthEntry>> = BTreeMap::new();
    for &(k, stamp, pose) in poses {
        let key = mapping.map_key(k).ok_or(PartitionError::UnmappedKey(k))?;
        by_robot.entry(key.robot).or_default().insert(
            key.index,
            GroundtruthEntry {
                stamp,
                index: key.index,
                pose,
            },
        );
    }
    Ok(by_robot
        .into_iter()
        .map(|(r, m)| (r, m.into_values().collect()))
        .collect())
}
