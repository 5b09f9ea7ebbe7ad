//! Discrete-time simulation of inter-robot scan exchange.
//!
//! Robots exchange compressed keyframe scans over a shared channel. Each step
//! of length `δ`:
//!
//! 1. idle, active robots within `d_init` of each other try to open a link,
//!    nearest pair first, succeeding with probability `φ(d)`;
//! 2. every open link draws connectivity `C ~ Bern(φ(d))` and moves
//!    `(B / I) · C · δ` bytes, where `I` counts the open links that have an
//!    endpoint within `d_intf` of either end (the link itself included);
//! 3. links whose payload is complete are delivered, links without a positive
//!    transfer for `T` seconds time out. Both free their robots.
//!
//! Bandwidth is given in KB/s with 1 KB = [`CommModel::bytes_per_kb`] bytes
//! (1000 unless configured otherwise).

use crate::key::Key;
use crate::seeds::SimRng;
use crate::sync::SyncedSequence;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommError {
    #[error("invalid communication model: {0}")]
    InvalidModel(String),
    #[error("unknown communication model `{0}` (expected wifi, pro-radio or custom:<path>)")]
    UnknownModel(String),
    #[error("t_start ({start}) must be before t_end ({end})")]
    BadWindow { start: f64, end: f64 },
    #[error("scan schedule names robot `{0}` which is not in the sequence")]
    UnknownRobot(String),
    #[error("robot `{robot}` keyframe {index} at t={stamp} precedes the robot's start at t={start}")]
    ScanBeforeStart {
        robot: String,
        index: usize,
        stamp: f64,
        start: f64,
    },
    #[error("reading model {path}: {message}")]
    Config { path: String, message: String },
    #[error("event log: {0}")]
    Csv(String),
}

fn default_timeout() -> f64 {
    2.0
}
fn default_step() -> f64 {
    0.1
}
fn default_mu_xz() -> f64 {
    0.653
}
fn default_sigma_xz() -> f64 {
    0.04
}
fn default_bytes_per_point() -> u64 {
    12
}
fn default_bytes_per_kb() -> f64 {
    1000.0
}

/// Parametric channel model. Field names in config files follow the usual
/// notation: `B`, `d_init`, `d_intf`, `P_max`, `alpha`, `beta`, `r_max`, `T`,
/// `delta`, `mu_xz`, `sigma_xz`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommModel {
    #[serde(default)]
    pub name: String,
    /// KB/s.
    #[serde(rename = "B")]
    pub bandwidth: f64,
    /// Link initialization range; 0 disables communication entirely.
    pub d_init: f64,
    pub d_intf: f64,
    #[serde(rename = "P_max")]
    pub p_max: f64,
    pub alpha: f64,
    pub beta: f64,
    pub r_max: f64,
    #[serde(rename = "T", default = "default_timeout")]
    pub timeout: f64,
    #[serde(rename = "delta", default = "default_step")]
    pub step: f64,
    #[serde(default = "default_mu_xz")]
    pub mu_xz: f64,
    #[serde(default = "default_sigma_xz")]
    pub sigma_xz: f64,
    #[serde(default = "default_bytes_per_point")]
    pub bytes_per_point: u64,
    #[serde(default = "default_bytes_per_kb")]
    pub bytes_per_kb: f64,
}

impl CommModel {
    fn with_channel(
        name: &str,
        bandwidth: f64,
        d_init: f64,
        d_intf: f64,
        p_max: f64,
        alpha: f64,
        beta: f64,
        r_max: f64,
    ) -> Self {
        Self {
            name: name.to_string(),
            bandwidth,
            d_init,
            d_intf,
            p_max,
            alpha,
            beta,
            r_max,
            timeout: default_timeout(),
            step: default_step(),
            mu_xz: default_mu_xz(),
            sigma_xz: default_sigma_xz(),
            bytes_per_point: default_bytes_per_point(),
            bytes_per_kb: default_bytes_per_kb(),
        }
    }

    pub fn wifi() -> Self {
        Self::with_channel("wifi", 2000.0, 30.0, 40.0, 0.7, 1.1, 0.1, 70.0)
    }

    pub fn pro_radio() -> Self {
        Self::with_channel("pro-radio", 1000.0, 150.0, 150.0, 0.8, 1.8, 0.3, 200.0)
    }

    /// `wifi`, `pro-radio` (or `pro_radio`), or `custom:<path>` to a TOML file.
    pub fn resolve(selector: &str) -> Result<Self, CommError> {
        match selector {
            "wifi" => Ok(Self::wifi()),
            "pro-radio" | "pro_radio" => Ok(Self::pro_radio()),
            other => match other.strip_prefix("custom:") {
                Some(path) => Self::load(Path::new(path)),
                None => Err(CommError::UnknownModel(other.to_string())),
            },
        }
    }

    pub fn load(path: &Path) -> Result<Self, CommError> {
        let text = std::fs::read_to_string(path).map_err(|e| CommError::Config {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut model = Self::from_toml(&text).map_err(|e| match e {
            CommError::Config { message, .. } => CommError::Config {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })?;
        if model.name.is_empty() {
            model.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into());
        }
        Ok(model)
    }

    pub fn from_toml(text: &str) -> Result<Self, CommError> {
        let model: Self = toml::from_str(text).map_err(|e| CommError::Config {
            path: "<inline>".into(),
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), CommError> {
        let positive = [
            ("B", self.bandwidth),
            ("d_intf", self.d_intf),
            ("r_max", self.r_max),
            ("T", self.timeout),
            ("delta", self.step),
            ("bytes_per_kb", self.bytes_per_kb),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CommError::InvalidModel(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.d_init.is_finite() && self.d_init >= 0.0) {
            return Err(CommError::InvalidModel(format!("d_init must be >= 0, got {}", self.d_init)));
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(CommError::InvalidModel(format!("P_max must be in (0, 1], got {}", self.p_max)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(CommError::InvalidModel(format!("beta must be in (0, 1), got {}", self.beta)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(CommError::InvalidModel(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.mu_xz > 0.0 && self.mu_xz <= 1.0) {
            return Err(CommError::InvalidModel(format!("mu_xz must be in (0, 1], got {}", self.mu_xz)));
        }
        if !(self.sigma_xz.is_finite() && self.sigma_xz >= 0.0) {
            return Err(CommError::InvalidModel(format!("sigma_xz must be >= 0, got {}", self.sigma_xz)));
        }
        if self.bytes_per_point == 0 {
            return Err(CommError::InvalidModel("bytes_per_point must be > 0".into()));
        }
        Ok(())
    }

    /// `φ(d) = clamp(min(P_max, α(β^{d/r_max} − β)), 0, 1)`.
    pub fn connectivity_prob(&self, d: f64) -> f64 {
        if d >= self.r_max {
            return 0.0;
        }
        let raw = self.alpha * (self.beta.powf(d.max(0.0) / self.r_max) - self.beta);
        raw.min(self.p_max).clamp(0.0, 1.0)
    }

    /// Bytes moved in one step: `(B / I) · draw · δ`.
    pub fn step_throughput(&self, interference: usize, draw: bool) -> f64 {
        if !draw {
            return 0.0;
        }
        self.bandwidth * self.bytes_per_kb * self.step / interference.max(1) as f64
    }

    /// Compressed size of a scan of `num_points` xyz points (f32 each).
    ///
    /// The compression factor is drawn from `N(mu_xz, sigma_xz²)` truncated to
    /// `(0, 1]` by rejection.
    pub fn compressed_scan_bytes<R: Rng + ?Sized>(&self, num_points: u64, rng: &mut R) -> u64 {
        let raw = (self.bytes_per_point * num_points) as f64;
        (self.compression_factor(rng) * raw).round() as u64
    }

    fn compression_factor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma_xz == 0.0 {
            return self.mu_xz;
        }
        for _ in 0..10_000 {
            let z: f64 = rng.sample(StandardNormal);
            let f = self.mu_xz + self.sigma_xz * z;
            if f > 0.0 && f <= 1.0 {
                return f;
            }
        }
        self.mu_xz
    }

    fn timeout_steps(&self) -> usize {
        ((self.timeout / self.step).round() as usize).max(1)
    }
}

/// Keyframe scan available for transmission from its creation time onwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scan {
    pub stamp: f64,
    pub index: usize,
    pub num_points: u64,
}

/// Scans per robot id, each list in creation order.
pub type ScanSchedule = BTreeMap<String, Vec<Scan>>;

/// Uniform draw among scans created by `t` that the receiver does not have yet.
pub fn select_payload<R: Rng + ?Sized>(
    scans: &[Scan],
    t: f64,
    delivered: &BTreeSet<usize>,
    rng: &mut R,
) -> Option<usize> {
    let candidates: Vec<usize> = scans
        .iter()
        .filter(|s| s.stamp <= t && !delivered.contains(&s.index))
        .map(|s| s.index)
        .collect();
    if candidates.is_empty() {
        None
    } else {
        Some(candidates[rng.random_range(0..candidates.len())])
    }
}

/// Number of open links with an endpoint within `d_intf` of `a` or `b`,
/// counting the `(a, b)` link itself.
pub fn interference_count(
    model: &CommModel,
    links: &[(usize, usize)],
    a: usize,
    b: usize,
    positions: &[Vector3<f64>],
) -> usize {
    let near = |e: usize| {
        (positions[e] - positions[a]).norm() <= model.d_intf
            || (positions[e] - positions[b]).norm() <= model.d_intf
    };
    let count = links.iter().filter(|&&(s, r)| near(s) || near(r)).count();
    count.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailReason {
    Timeout,
}

impl fmt::Display for FailReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailReason::Timeout => f.write_str("timeout"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommEvent {
    Init {
        t: f64,
        sender: String,
        receiver: String,
        payload: Key,
        payload_bytes: u64,
    },
    Progress {
        t: f64,
        sender: String,
        receiver: String,
        payload: Key,
        bytes: f64,
        interference: usize,
        draw: bool,
    },
    Delivered {
        t: f64,
        sender: String,
        receiver: String,
        payload: Key,
    },
    Failed {
        t: f64,
        sender: String,
        receiver: String,
        payload: Key,
        reason: FailReason,
    },
}

impl CommEvent {
    pub fn time(&self) -> f64 {
        match self {
            CommEvent::Init { t, .. }
            | CommEvent::Progress { t, .. }
            | CommEvent::Delivered { t, .. }
            | CommEvent::Failed { t, .. } => *t,
        }
    }

    pub fn endpoints(&self) -> (&str, &str) {
        match self {
            CommEvent::Init { sender, receiver, .. }
            | CommEvent::Progress { sender, receiver, .. }
            | CommEvent::Delivered { sender, receiver, .. }
            | CommEvent::Failed { sender, receiver, .. } => (sender, receiver),
        }
    }

    pub fn payload(&self) -> &Key {
        match self {
            CommEvent::Init { payload, .. }
            | CommEvent::Progress { payload, .. }
            | CommEvent::Delivered { payload, .. }
            | CommEvent::Failed { payload, .. } => payload,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CommEvent::Init { .. } => "init",
            CommEvent::Progress { .. } => "progress",
            CommEvent::Delivered { .. } => "delivered",
            CommEvent::Failed { .. } => "failed",
        }
    }
}

/// A scan that reached its receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub t: f64,
    pub sender: String,
    pub receiver: String,
    pub scan: Key,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    pub initialized: usize,
    pub delivered: usize,
    pub failed: usize,
    pub bytes_delivered: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommEventLog {
    pub events: Vec<CommEvent>,
}

const CSV_HEADER: [&str; 9] = [
    "t",
    "event",
    "sender",
    "receiver",
    "kf_robot",
    "kf_index",
    "bytes",
    "interference",
    "draw",
];

impl CommEventLog {
    pub fn deliveries(&self) -> Vec<Delivery> {
        self.events
            .iter()
            .filter_map(|e| match e {
                CommEvent::Delivered {
                    t,
                    sender,
                    receiver,
                    payload,
                } => Some(Delivery {
                    t: *t,
                    sender: sender.clone(),
                    receiver: receiver.clone(),
                    scan: payload.clone(),
                }),
                _ => None,
            })
            .collect()
    }

    pub fn stats(&self) -> CommStats {
        let mut stats = CommStats::default();
        let mut sizes: HashMap<(&str, &str, &Key), u64> = HashMap::new();
        for e in &self.events {
            match e {
                CommEvent::Init {
                    sender,
                    receiver,
                    payload,
                    payload_bytes,
                    ..
                } => {
                    stats.initialized += 1;
                    sizes.insert((sender, receiver, payload), *payload_bytes);
                }
                CommEvent::Delivered {
                    sender,
                    receiver,
                    payload,
                    ..
                } => {
                    stats.delivered += 1;
                    stats.bytes_delivered += sizes
                        .get(&(sender.as_str(), receiver.as_str(), payload))
                        .copied()
                        .unwrap_or(0);
                }
                CommEvent::Failed { .. } => stats.failed += 1,
                CommEvent::Progress { .. } => {}
            }
        }
        stats
    }

    /// CSV with columns `t,event,sender,receiver,kf_robot,kf_index,bytes,interference,draw`.
    /// `bytes` holds the payload size for `init` rows and the transferred amount
    /// for `progress` rows; `failed` rows always mean a timeout.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_HEADER).expect("in-memory write");
        for e in &self.events {
            let (s, r) = e.endpoints();
            let p = e.payload();
            let (bytes, intf, draw) = match e {
                CommEvent::Init { payload_bytes, .. } => (payload_bytes.to_string(), String::new(), String::new()),
                CommEvent::Progress {
                    bytes,
                    interference,
                    draw,
                    ..
                } => (bytes.to_string(), interference.to_string(), u8::from(*draw).to_string()),
                _ => (String::new(), String::new(), String::new()),
            };
            w.write_record([
                e.time().to_string(),
                e.kind().to_string(),
                s.to_string(),
                r.to_string(),
                p.robot.clone(),
                p.index.to_string(),
                bytes,
                intf,
                draw,
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn from_csv(text: &str) -> Result<Self, CommError> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| CommError::Csv(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(CommError::Csv(format!("unexpected header {:?}", headers)));
        }
        let mut events = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| CommError::Csv(format!("row {row}: {e}")))?;
            let field = |k: usize| rec.get(k).unwrap_or("");
            let num = |k: usize| -> Result<f64, CommError> {
                field(k)
                    .parse::<f64>()
                    .map_err(|e| CommError::Csv(format!("row {row}, column {}: {e}", CSV_HEADER[k])))
            };
            let int = |k: usize| -> Result<u64, CommError> {
                field(k)
                    .parse::<u64>()
                    .map_err(|e| CommError::Csv(format!("row {row}, column {}: {e}", CSV_HEADER[k])))
            };
            let t = num(0)?;
            let sender = field(2).to_string();
            let receiver = field(3).to_string();
            let payload = Key::new(field(4), int(5)? as usize);
            let ev = match field(1) {
                "init" => CommEvent::Init {
                    t,
                    sender,
                    receiver,
                    payload,
                    payload_bytes: int(6)?,
                },
                "progress" => CommEvent::Progress {
                    t,
                    sender,
                    receiver,
                    payload,
                    bytes: num(6)?,
                    interference: int(7)? as usize,
                    draw: match field(8) {
                        "1" => true,
                        "0" => false,
                        other => return Err(CommError::Csv(format!("row {row}: draw `{other}`"))),
                    },
                },
                "delivered" => CommEvent::Delivered {
                    t,
                    sender,
                    receiver,
                    payload,
                },
                "failed" => CommEvent::Failed {
                    t,
                    sender,
                    receiver,
                    payload,
                    reason: FailReason::Timeout,
                },
                other => return Err(CommError::Csv(format!("row {row}: unknown event `{other}`"))),
            };
            events.push(ev);
        }
        Ok(Self { events })
    }
}

struct Link {
    sender: usize,
    receiver: usize,
    scan: usize,
    payload_bytes: u64,
    transferred: f64,
    last_progress_step: usize,
}

/// Runs the channel simulation from `t_start` to `t_end` inclusive.
///
/// Three independent ChaCha streams of `seed` drive link initialization,
/// per-step connectivity, and payload selection/sizing.
pub fn simulate(
    model: &CommModel,
    seq: &SyncedSequence,
    schedule: &ScanSchedule,
    t_start: f64,
    t_end: f64,
    seed: u64,
) -> Result<CommEventLog, CommError> {
    model.validate()?;
    if !(t_start < t_end) {
        return Err(CommError::BadWindow {
            start: t_start,
            end: t_end,
        });
    }
    let trials = seq.trials();
    let n = trials.len();
    let names: Vec<&str> = trials.iter().map(|t| t.robot_id()).collect();
    let mut scans: Vec<Vec<Scan>> = vec![Vec::new(); n];
    for (robot, list) in schedule {
        let idx = names
            .iter()
            .position(|r| r == robot)
            .ok_or_else(|| CommError::UnknownRobot(robot.clone()))?;
        let start = trials[idx].first_stamp();
        if let Some(s) = list.iter().find(|s| s.stamp < start) {
            return Err(CommError::ScanBeforeStart {
                robot: robot.clone(),
                index: s.index,
                stamp: s.stamp,
                start,
            });
        }
        scans[idx] = list.clone();
    }

    let stream = |k: u64| {
        let mut rng = SimRng::seed_from_u64(seed);
        rng.set_stream(k);
        rng
    };
    let mut init_rng = stream(0);
    let mut link_rng = stream(1);
    let mut payload_rng = stream(2);

    let mut log = CommEventLog::default();
    let mut busy = vec![false; n];
    let mut links: Vec<Link> = Vec::new();
    // delivered[s][r]: scans of s already held by r
    let mut delivered: Vec<Vec<BTreeSet<usize>>> = vec![vec![BTreeSet::new(); n]; n];
    let mut sizes: HashMap<(usize, usize), u64> = HashMap::new();
    let timeout_steps = model.timeout_steps();
    let steps = ((t_end - t_start) / model.step + 1e-9).floor() as usize;
    let key = |robot: usize, index: usize| Key::new(names[robot], index);

    for k in 0..=steps {
        let t = t_start + k as f64 * model.step;
        let positions: Vec<Option<Vector3<f64>>> = trials
            .iter()
            .map(|tr| tr.pose_at(t).map(|p| *p.translation()))
            .collect();

        // Initialize new links among idle, active robots, nearest pair first.
        let mut candidates = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if busy[i] || busy[j] {
                    continue;
                }
                if let (Some(pi), Some(pj)) = (positions[i], positions[j]) {
                    let d = (pi - pj).norm();
                    if model.d_init > 0.0 && d <= model.d_init {
                        candidates.push((d, i, j));
                    }
                }
            }
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        for (d, i, j) in candidates {
            if busy[i] || busy[j] {
                continue;
            }
            let u: f64 = init_rng.random();
            if u >= model.connectivity_prob(d) {
                continue;
            }
            let (first, second) = if init_rng.random_bool(0.5) { (i, j) } else { (j, i) };
            let choice = select_payload(&scans[first], t, &delivered[first][second], &mut payload_rng)
                .map(|s| (first, second, s))
                .or_else(|| {
                    select_payload(&scans[second], t, &delivered[second][first], &mut payload_rng)
                        .map(|s| (second, first, s))
                });
            let Some((sender, receiver, scan)) = choice else {
                continue;
            };
            let num_points = scans[sender]
                .iter()
                .find(|s| s.index == scan)
                .map(|s| s.num_points)
                .unwrap_or(0);
            let payload_bytes = *sizes
                .entry((sender, scan))
                .or_insert_with(|| model.compressed_scan_bytes(num_points, &mut payload_rng));
            busy[sender] = true;
            busy[receiver] = true;
            log.events.push(CommEvent::Init {
                t,
                sender: names[sender].to_string(),
                receiver: names[receiver].to_string(),
                payload: key(sender, scan),
                payload_bytes,
            });
            links.push(Link {
                sender,
                receiver,
                scan,
                payload_bytes,
                transferred: 0.0,
                last_progress_step: k,
            });
        }

        // Progress on every open link; robots in a link are always active.
        let pos: Vec<Vector3<f64>> = positions.iter().map(|p| p.unwrap_or_else(Vector3::zeros)).collect();
        let pairs: Vec<(usize, usize)> = links.iter().map(|l| (l.sender, l.receiver)).collect();
        for link in links.iter_mut() {
            let d = (pos[link.sender] - pos[link.receiver]).norm();
            let draw = link_rng.random::<f64>() < model.connectivity_prob(d);
            let interference = interference_count(model, &pairs, link.sender, link.receiver, &pos);
            let bytes = model.step_throughput(interference, draw);
            link.transferred += bytes;
            if bytes > 0.0 {
                link.last_progress_step = k;
            }
            log.events.push(CommEvent::Progress {
                t,
                sender: names[link.sender].to_string(),
                receiver: names[link.receiver].to_string(),
                payload: key(link.sender, link.scan),
                bytes,
                interference,
                draw,
            });
        }

        // Termination.
        let mut still_open = Vec::with_capacity(links.len());
        for link in links.drain(..) {
            let done = link.transferred >= link.payload_bytes as f64;
            let stale = k - link.last_progress_step >= timeout_steps;
            if !done && !stale {
                still_open.push(link);
                continue;
            }
            busy[link.sender] = false;
            busy[link.receiver] = false;
            let sender = names[link.sender].to_string();
            let receiver = names[link.receiver].to_string();
            let payload = key(link.sender, link.scan);
            if done {
                delivered[link.sender][link.receiver].insert(link.scan);
                log.events.push(CommEvent::Delivered {
                    t,
                    sender,
                    receiver,
                    payload,
                });
            } else {
                log.events.push(CommEvent::Failed {
                    t,
                    sender,
                    receiver,
                    payload,
                    reason: FailReason::Timeout,
                });
            }
        }
        links = still_open;
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::Pose3;
    use crate::sync::{synchronize, StampedPose, Trial};

    fn stationary(id: &str, x: f64, duration: f64) -> Trial {
        Trial::new(
            id,
            vec![
                StampedPose {
                    stamp: 0.0,
                    pose: Pose3::from_translation(x, 0.0, 0.0),
                },
                StampedPose {
                    stamp: duration,
                    pose: Pose3::from_translation(x, 0.0, 0.0),
                },
            ],
        )
        .unwrap()
    }

    fn seq(trials: &[Trial]) -> SyncedSequence {
        synchronize(trials, 0, 0.0, false, 0).unwrap()
    }

    fn one_scan(robots: &[&str], points: u64) -> ScanSchedule {
        robots
            .iter()
            .map(|r| {
                (
                    r.to_string(),
                    vec![Scan {
                        stamp: 0.0,
                        index: 0,
                        num_points: points,
                    }],
                )
            })
            .collect()
    }

    #[test]
    fn connectivity_examples() {
        let wifi = CommModel::wifi();
        assert!((wifi.connectivity_prob(0.0) - 0.7).abs() < 1e-15);
        assert_eq!(wifi.connectivity_prob(70.0), 0.0);
        assert_eq!(wifi.connectivity_prob(500.0), 0.0);
        let pro = CommModel::pro_radio();
        assert_eq!(pro.connectivity_prob(200.0), 0.0);
        let mut prev = f64::INFINITY;
        for i in 0..=700 {
            let p = wifi.connectivity_prob(i as f64 * 0.1);
            assert!(p <= prev + 1e-15 && (0.0..=1.0).contains(&p));
            prev = p;
        }
    }

    #[test]
    fn throughput_examples() {
        let wifi = CommModel::wifi();
        assert!((wifi.step_throughput(1, true) - 200_000.0).abs() < 1e-6);
        assert!((wifi.step_throughput(4, true) - 50_000.0).abs() < 1e-6);
        assert_eq!(wifi.step_throughput(1, false), 0.0);
        assert_eq!(CommModel::pro_radio().step_throughput(3, false), 0.0);
    }

    #[test]
    fn no_compression_limit() {
        let mut m = CommModel::wifi();
        m.mu_xz = 1.0;
        m.sigma_xz = 0.0;
        let mut rng = SimRng::seed_from_u64(0);
        assert_eq!(m.compressed_scan_bytes(100_000, &mut rng), 1_200_000);
    }

    #[test]
    fn compression_factor_stays_in_unit_interval() {
        let mut m = CommModel::wifi();
        m.mu_xz = 0.95;
        m.sigma_xz = 0.2;
        let mut rng = SimRng::seed_from_u64(5);
        for _ in 0..2000 {
            let b = m.compressed_scan_bytes(1000, &mut rng);
            assert!(b > 0 && b <= 12_000);
        }
    }

    #[test]
    fn select_payload_cases() {
        let scans: Vec<Scan> = (0..4)
            .map(|i| Scan {
                stamp: i as f64,
                index: i,
                num_points: 1,
            })
            .collect();
        let mut rng = SimRng::seed_from_u64(3);
        let all: BTreeSet<usize> = (0..4).collect();
        assert_eq!(select_payload(&scans, 10.0, &all, &mut rng), None);
        let three: BTreeSet<usize> = [0, 1, 3].into();
        for _ in 0..20 {
            assert_eq!(select_payload(&scans, 10.0, &three, &mut rng), Some(2));
        }
        // Only scans created by t are eligible.
        for _ in 0..20 {
            assert_eq!(select_payload(&scans, 0.5, &BTreeSet::new(), &mut rng), Some(0));
        }
    }

    #[test]
    fn interference_examples() {
        let m = CommModel::wifi();
        let pos = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(5.0, 0.0, 0.0),
            Vector3::new(10.0, 0.0, 0.0),
            Vector3::new(15.0, 0.0, 0.0),
        ];
        assert_eq!(interference_count(&m, &[(0, 1)], 0, 1, &pos), 1);
        let links = [(0, 1), (2, 3)];
        assert_eq!(interference_count(&m, &links, 0, 1, &pos), 2);
        assert_eq!(interference_count(&m, &links, 2, 3, &pos), 2);
        let far = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(5.0, 0.0, 0.0),
            Vector3::new(500.0, 0.0, 0.0),
            Vector3::new(505.0, 0.0, 0.0),
        ];
        assert_eq!(interference_count(&m, &links, 0, 1, &far), 1);
        assert_eq!(interference_count(&m, &links, 2, 3, &far), 1);
    }

    #[test]
    fn far_apart_robots_never_initialize() {
        let s = seq(&[stationary("a", 0.0, 30.0), stationary("b", 31.0, 30.0)]);
        let log = simulate(&CommModel::wifi(), &s, &one_scan(&["a", "b"], 1000), 0.0, 30.0, 1).unwrap();
        assert!(log.events.is_empty());
    }

    #[test]
    fn colocated_pair_delivers_both_scans() {
        let s = seq(&[stationary("a", 0.0, 30.0), stationary("b", 0.0, 30.0)]);
        let log = simulate(&CommModel::wifi(), &s, &one_scan(&["a", "b"], 100_000), 0.0, 30.0, 4).unwrap();
        let d = log.deliveries();
        assert_eq!(d.len(), 2);
        assert_ne!(d[0].sender, d[1].sender);
        assert_eq!(log.stats().failed, 0);
    }

    #[test]
    fn replay_is_identical() {
        let s = seq(&[stationary("a", 0.0, 60.0), stationary("b", 10.0, 60.0), stationary("c", 20.0, 60.0)]);
        let sched = one_scan(&["a", "b", "c"], 50_000);
        let m = CommModel::wifi();
        let a = simulate(&m, &s, &sched, 0.0, 60.0, 9).unwrap();
        let b = simulate(&m, &s, &sched, 0.0, 60.0, 9).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert!(!a.events.is_empty());
    }

    #[test]
    fn schedule_errors() {
        let s = seq(&[stationary("a", 0.0, 30.0)]);
        let bad = one_scan(&["zz"], 10);
        assert!(matches!(
            simulate(&CommModel::wifi(), &s, &bad, 0.0, 1.0, 0),
            Err(CommError::UnknownRobot(_))
        ));
        let early: ScanSchedule = [(
            "a".to_string(),
            vec![Scan {
                stamp: -1.0,
                index: 0,
                num_points: 1,
            }],
        )]
        .into();
        assert!(matches!(
            simulate(&CommModel::wifi(), &s, &early, 0.0, 1.0, 0),
            Err(CommError::ScanBeforeStart { .. })
        ));
        assert!(matches!(
            simulate(&CommModel::wifi(), &s, &ScanSchedule::new(), 1.0, 1.0, 0),
            Err(CommError::BadWindow { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let s = seq(&[stationary("a", 0.0, 20.0), stationary("b", 3.0, 20.0)]);
        let log = simulate(&CommModel::wifi(), &s, &one_scan(&["a", "b"], 200_000), 0.0, 20.0, 2).unwrap();
        let back = CommEventLog::from_csv(&log.to_csv()).unwrap();
        assert_eq!(back, log);
        assert!(CommEventLog::from_csv("a,b\n").is_err());
    }

    #[test]
    fn model_config_keys() {
        let text = "B = 500\nd_init = 10\nd_intf = 20\nP_max = 0.9\nalpha = 1.0\nbeta = 0.2\nr_max = 50\n";
        let m = CommModel::from_toml(text).unwrap();
        assert_eq!(m.bandwidth, 500.0);
        assert_eq!(m.timeout, 2.0);
        assert_eq!(m.step, 0.1);
        assert!(CommModel::from_toml(&format!("{text}bogus = 1\n")).is_err());
        assert!(CommModel::from_toml(&text.replace("beta = 0.2", "beta = 1.5")).is_err());
        assert!(matches!(CommModel::resolve("lora"), Err(CommError::UnknownModel(_))));
        assert_eq!(CommModel::resolve("pro-radio").unwrap(), CommModel::pro_radio());
    }
}
