//! Dataset summaries and evaluation of back-end solutions against the reference.

use crate::comm::{CommEventLog, CommStats};
use crate::frontend::MeasurementKind;
use crate::jrl::Dataset;
use crate::lie::Pose3;
use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub count: usize,
    pub outliers: usize,
}

impl CategoryCount {
    pub fn outlier_percent(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            100.0 * self.outliers as f64 / self.count as f64
        }
    }

    /// `10(20.0%)`
    pub fn display(&self) -> String {
        format!("{}({:.1}%)", self.count, self.outlier_percent())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub name: String,
    pub duration_s: f64,
    pub duration: String,
    pub length_km: f64,
    pub keyframes: BTreeMap<String, usize>,
    pub lc: CategoryCount,
    pub irlc: CategoryCount,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comm: Option<CommStats>,
}

/// Seconds as `MM:SS`, rounded to the nearest second. Minutes may exceed 59.
pub fn format_mmss(seconds: f64) -> String {
    let total = seconds.max(0.0).round() as u64;
    format!("{:02}:{:02}", total / 60, total % 60)
}

/// Sum of consecutive reference translation distances, meters.
pub fn reference_length(dataset: &Dataset, robot: &str) -> f64 {
    dataset.groundtruth.get(robot).map_or(0.0, |g| {
        g.windows(2)
            .map(|w| (w[1].pose.translation() - w[0].pose.translation()).norm())
            .sum()
    })
}

fn stamp_span(dataset: &Dataset) -> Option<(f64, f64)> {
    if let Some([a, b]) = dataset.metadata.span {
        return Some((a, b));
    }
    let stamps = dataset
        .groundtruth
        .values()
        .flat_map(|g| g.iter().map(|e| e.stamp))
        .chain(dataset.measurements.values().flat_map(|s| s.iter().map(|m| m.stamp)));
    stamps.fold(None, |acc, t| match acc {
        None => Some((t, t)),
        Some((lo, hi)) => Some((lo.min(t), hi.max(t))),
    })
}

pub fn summarize(dataset: &Dataset, log: Option<&CommEventLog>) -> DatasetSummary {
    let duration_s = stamp_span(dataset).map_or(0.0, |(a, b)| (b - a).max(0.0));
    let length_m: f64 = dataset.robots.iter().map(|r| reference_length(dataset, r)).sum();
    let mut lc = CategoryCount::default();
    let mut irlc = CategoryCount::default();
    for (id, m) in dataset.iter_measurements() {
        let slot = match m.kind {
            MeasurementKind::IntraLc => &mut lc,
            MeasurementKind::InterLc => &mut irlc,
            _ => continue,
        };
        slot.count += 1;
        if dataset.is_labeled_outlier(&id) {
            slot.outliers += 1;
        }
    }
    DatasetSummary {
        name: dataset.name.clone(),
        duration_s,
        duration: format_mmss(duration_s),
        length_km: length_m / 1000.0,
        keyframes: dataset
            .robots
            .iter()
            .map(|r| (r.clone(), dataset.keyframe_count(r)))
            .collect(),
        lc,
        irlc,
        comm: log.map(CommEventLog::stats),
    }
}

impl DatasetSummary {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let row = |s: &mut String, k: &str, v: &str| {
            let _ = writeln!(s, "{k:<18} {v}");
        };
        row(&mut s, "dataset", &self.name);
        row(&mut s, "duration", &self.duration);
        row(&mut s, "length", &format!("{:.2} km", self.length_km));
        for (robot, n) in &self.keyframes {
            row(&mut s, &format!("keyframes[{robot}]"), &n.to_string());
        }
        row(&mut s, "LC", &self.lc.display());
        row(&mut s, "IRLC", &self.irlc.display());
        if let Some(c) = &self.comm {
            row(&mut s, "comm init", &c.initialized.to_string());
            row(&mut s, "comm delivered", &c.delivered.to_string());
            row(&mut s, "comm failed", &c.failed.to_string());
            row(&mut s, "comm bytes", &c.bytes_delivered.to_string());
        }
        s
    }
}

// ---------------------------------------------------------------------------

/// Estimated keyframe poses, robot → index → pose.
pub type Estimate = BTreeMap<String, BTreeMap<usize, Pose3>>;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("estimate misses keyframes: {}", format_missing(.0))]
    MissingKeyframes(BTreeMap<String, Vec<usize>>),
    #[error("estimate line {line}: {message}")]
    Parse { line: usize, message: String },
}

fn format_missing(m: &BTreeMap<String, Vec<usize>>) -> String {
    m.iter()
        .map(|(r, idx)| {
            let shown: Vec<String> = idx.iter().take(8).map(usize::to_string).collect();
            let more = if idx.len() > 8 { format!(", … ({} total)", idx.len()) } else { String::new() };
            format!("{r}[{}{more}]", shown.join(", "))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses `robot index stamp tx ty tz qw qx qy qz` records; the stamp is ignored.
pub fn parse_estimate(text: &str) -> Result<Estimate, EvalError> {
    let mut est = Estimate::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| EvalError::Parse { line: i + 1, message };
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 10 {
            return Err(err(format!("expected 10 fields, found {}", tok.len())));
        }
        let index: usize = tok[1].parse().map_err(|e| err(format!("index `{}`: {e}", tok[1])))?;
        let v = tok[2..]
            .iter()
            .map(|t| t.parse::<f64>().map_err(|e| err(format!("`{t}`: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let pose = Pose3::from_wxyz([v[4], v[5], v[6], v[7]], [v[1], v[2], v[3]])
            .ok_or_else(|| err("degenerate pose".into()))?;
        est.entry(tok[0].to_owned()).or_default().insert(index, pose);
    }
    Ok(est)
}

/// Writes an estimate in the format read by [`parse_estimate`], with stamps from `dataset`.
pub fn format_estimate(est: &Estimate, dataset: &Dataset) -> String {
    let mut s = String::new();
    for (robot, poses) in est {
        for (&index, p) in poses {
            let stamp = dataset
                .groundtruth_entry(&crate::Key::new(robot.clone(), index))
                .map_or(0.0, |e| e.stamp);
            let t = p.translation_array();
            let q = p.quaternion_wxyz();
            let _ = writeln!(
                s,
                "{robot} {index} {stamp:?} {:?} {:?} {:?} {:?} {:?} {:?} {:?}",
                t[0], t[1], t[2], q[0], q[1], q[2], q[3]
            );
        }
    }
    s
}

/// The reference solution as an estimate.
pub fn reference_estimate(dataset: &Dataset) -> Estimate {
    dataset
        .groundtruth
        .iter()
        .map(|(r, g)| (r.clone(), g.iter().map(|e| (e.index, e.pose)).collect()))
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub keyframes: usize,
    /// Meters.
    pub ate_rmse: f64,
    /// Radians.
    pub rot_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetrics {
    pub per_robot: BTreeMap<String, ErrorMetrics>,
    pub aggregate: ErrorMetrics,
    pub aligned: bool,
}

impl SolutionMetrics {
    pub fn to_table(&self) -> String {
        let mut s = format!("{:<14} {:>9} {:>12} {:>12}\n", "robot", "keyframes", "ATE [m]", "rot [rad]");
        let mut row = |name: &str, m: &ErrorMetrics| {
            let _ = writeln!(s, "{name:<14} {:>9} {:>12.6} {:>12.6}", m.keyframes, m.ate_rmse, m.rot_rmse);
        };
        for (r, m) in &self.per_robot {
            row(r, m);
        }
        row("all", &self.aggregate);
        s
    }
}

/// Rigid transform `T` minimizing `Σ ‖T·src − dst‖²` over point pairs.
pub fn align_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Pose3 {
    let n = src.len().min(dst.len());
    if n == 0 {
        return Pose3::identity();
    }
    let cs = src[..n].iter().sum::<Vector3<f64>>() / n as f64;
    let cd = dst[..n].iter().sum::<Vector3<f64>>() / n as f64;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    if (v_t.transpose() * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = v_t.transpose() * d * u.transpose();
    let rot = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let t = cd - rot * cs;
    Pose3::from_parts(rot, t)
}

/// Translational and rotational RMSE of `estimate` against the reference.
///
/// With `align`, the estimate is first moved by the single rigid transform that
/// best fits its keyframe positions to the reference.
pub fn evaluate(estimate: &Estimate, dataset: &Dataset, align: bool) -> Result<SolutionMetrics, EvalError> {
    let mut missing: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    let mut pairs: Vec<(&str, Pose3, Pose3)> = Vec::new();
    for robot in &dataset.robots {
        let est = estimate.get(robot);
        for e in dataset.groundtruth.get(robot).map(Vec::as_slice).unwrap_or(&[]) {
            match est.and_then(|m| m.get(&e.index)) {
                Some(p) => pairs.push((robot, *p, e.pose)),
                None => missing.entry(robot.clone()).or_default().push(e.index),
            }
        }
    }
    if !missing.is_empty() {
        return Err(EvalError::MissingKeyframes(missing));
    }
    if align {
        let src: Vec<_> = pairs.iter().map(|(_, e, _)| *e.translation()).collect();
        let dst: Vec<_> = pairs.iter().map(|(_, _, r)| *r.translation()).collect();
        let t = align_rigid(&src, &dst);
        for p in &mut pairs {
            p.1 = t.compose(&p.1);
        }
    }
    let mut sums: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    let mut total = (0usize, 0.0, 0.0);
    for (robot, est, reference) in &pairs {
        let et = (est.translation() - reference.translation()).norm_squared();
        let er = est.rotation().angle_to(&reference.rotation()).powi(2);
        let s = sums.entry((*robot).to_owned()).or_default();
        s.0 += 1;
        s.1 += et;
        s.2 += er;
        total.0 += 1;
        total.1 += et;
        total.2 += er;
    }
    let metrics = |(n, t, r): (usize, f64, f64)| ErrorMetrics {
        keyframes: n,
        ate_rmse: if n == 0 { 0.0 } else { (t / n as f64).sqrt() },
        rot_rmse: if n == 0 { 0.0 } else { (r / n as f64).sqrt() },
    };
    Ok(SolutionMetrics {
        per_robot: dataset
            .robots
            .iter()
            .map(|r| (r.clone(), metrics(sums.get(r).copied().unwrap_or_default())))
            .collect(),
        aggregate: metrics(total),
        aligned: align,
    })
}
