//! Empirical SE(3) noise models and χ² outlier labelling.
//!
//! Residuals are `r = log(m⁻¹ ∘ m*)` for a measurement `m` and its true value
//! `m*`. The noise model is their zero-mean second moment, optionally
//! computed only over "good" samples whose translation and rotation errors are
//! below user thresholds. A measurement is an outlier when `rᵀ Q⁻¹ r` exceeds
//! the 95% quantile of χ² with 6 degrees of freedom.

use crate::lie::{cov_serde, Covariance6, Pose3, Tangent6};
use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

/// Residual dimension, and so the χ² degrees of freedom.
pub const RESIDUAL_DOF: usize = 6;
pub const DEFAULT_CONFIDENCE: f64 = 0.95;
pub const DEFAULT_TRANS_MAX: f64 = 0.5;
pub const DEFAULT_ROT_MAX: f64 = 0.05;
/// Added to the diagonal before inverting a noise model.
pub const REGULARIZATION: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("cannot estimate a covariance from zero samples")]
    Empty,
    #[error("noise model is not positive definite even after regularization")]
    Singular,
    #[error("matrix text line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualSample {
    pub measured: Pose3,
    pub truth: Pose3,
    pub residual: Tangent6,
}

impl ResidualSample {
    pub fn new(measured: Pose3, truth: Pose3) -> Self {
        Self {
            measured,
            truth,
            residual: residual(&measured, &truth),
        }
    }

    fn error_pose(&self) -> Pose3 {
        self.measured.between(&self.truth)
    }

    /// Translation norm of `m⁻¹ ∘ m*`, meters.
    pub fn translation_error(&self) -> f64 {
        self.error_pose().translation().norm()
    }

    /// Geodesic rotation angle of `m⁻¹ ∘ m*`, radians.
    pub fn rotation_error(&self) -> f64 {
        self.error_pose().rotation_angle()
    }
}

/// `log(m⁻¹ ∘ truth)`.
pub fn residual(measured: &Pose3, truth: &Pose3) -> Tangent6 {
    if measured == truth {
        return Tangent6::zeros();
    }
    measured.between(truth).logmap()
}

/// Keeps samples with translation error `< trans_max` and rotation error `< rot_max`.
pub fn good_filter(samples: &[ResidualSample], trans_max: f64, rot_max: f64) -> Vec<ResidualSample> {
    samples
        .iter()
        .filter(|s| s.translation_error() < trans_max && s.rotation_error() < rot_max)
        .copied()
        .collect()
}

/// Divisor for the second moment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalizer {
    /// `1/|M|`
    #[default]
    Count,
    /// `1/(|M| − 1)`
    CountMinusOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    #[serde(with = "cov_serde")]
    pub covariance: Covariance6,
    pub sample_count: usize,
    /// Good-sample thresholds, when a filter was applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trans_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rot_max: Option<f64>,
    #[serde(default)]
    pub normalizer: Normalizer,
}

impl NoiseEstimate {
    /// A fixed model not derived from samples.
    pub fn fixed(covariance: Covariance6) -> Self {
        Self {
            covariance,
            sample_count: 0,
            trans_max: None,
            rot_max: None,
            normalizer: Normalizer::Count,
        }
    }
}

/// Second moment of the residuals. Full rank needs at least 6 samples.
pub fn estimate_covariance(samples: &[ResidualSample], normalizer: Normalizer) -> Result<NoiseEstimate, NoiseError> {
    let residuals: Vec<Tangent6> = samples.iter().map(|s| s.residual).collect();
    let covariance = second_moment(&residuals, normalizer)?;
    Ok(NoiseEstimate {
        covariance,
        sample_count: samples.len(),
        trans_max: None,
        rot_max: None,
        normalizer,
    })
}

/// [`good_filter`] then [`estimate_covariance`], recording the thresholds.
pub fn estimate_filtered(
    samples: &[ResidualSample],
    trans_max: f64,
    rot_max: f64,
    normalizer: Normalizer,
) -> Result<NoiseEstimate, NoiseError> {
    let good = good_filter(samples, trans_max, rot_max);
    let mut est = estimate_covariance(&good, normalizer)?;
    est.trans_max = Some(trans_max);
    est.rot_max = Some(rot_max);
    Ok(est)
}

pub fn second_moment(residuals: &[Tangent6], normalizer: Normalizer) -> Result<Covariance6, NoiseError> {
    if residuals.is_empty() {
        return Err(NoiseError::Empty);
    }
    // Summing in a canonical order makes the result independent of input order.
    let mut sorted: Vec<&Tangent6> = residuals.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut acc = Covariance6::zeros();
    for r in sorted {
        acc += r * r.transpose();
    }
    let n = residuals.len() as f64;
    let divisor = match normalizer {
        Normalizer::Count => n,
        Normalizer::CountMinusOne => (n - 1.0).max(1.0),
    };
    let q = acc / divisor;
    Ok((q + q.transpose()) * 0.5)
}

/// Upper `confidence` quantile of χ² with `dof` degrees of freedom.
pub fn chi2_critical(dof: usize, confidence: f64) -> f64 {
    ChiSquared::new(dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(confidence)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Inlier,
    Outlier,
}

/// Mahalanobis test against a fixed noise model.
#[derive(Debug, Clone)]
pub struct Classifier {
    chol: Cholesky<f64, nalgebra::U6>,
    threshold: f64,
}

impl Classifier {
    pub fn new(q: &Covariance6) -> Result<Self, NoiseError> {
        Self::with_confidence(q, DEFAULT_CONFIDENCE)
    }

    pub fn with_confidence(q: &Covariance6, confidence: f64) -> Result<Self, NoiseError> {
        if q.iter().any(|v| !v.is_finite()) {
            return Err(NoiseError::Singular);
        }
        let reg = (q + q.transpose()) * 0.5 + Covariance6::identity() * REGULARIZATION;
        let chol = Cholesky::new(reg).ok_or(NoiseError::Singular)?;
        Ok(Self {
            chol,
            threshold: chi2_critical(RESIDUAL_DOF, confidence),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// `rᵀ Q⁻¹ r`.
    pub fn mahalanobis_sq(&self, r: &Tangent6) -> f64 {
        r.dot(&self.chol.solve(r))
    }

    pub fn classify_residual(&self, r: &Tangent6) -> Label {
        if self.mahalanobis_sq(r) > self.threshold {
            Label::Outlier
        } else {
            Label::Inlier
        }
    }

    pub fn classify(&self, measured: &Pose3, truth: &Pose3) -> Label {
        self.classify_residual(&residual(measured, truth))
    }
}

pub fn classify(measured: &Pose3, truth: &Pose3, q: &Covariance6) -> Result<Label, NoiseError> {
    Ok(Classifier::new(q)?.classify(measured, truth))
}

/// Six whitespace-separated rows of six numbers.
pub fn format_matrix(q: &Covariance6) -> String {
    let mut s = String::new();
    for r in 0..6 {
        let row: Vec<String> = (0..6).map(|c| format!("{:e}", q[(r, c)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<Covariance6, NoiseError> {
    let mut values = Vec::with_capacity(36);
    let mut rows = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>().map_err(|e| NoiseError::Parse {
                    line: i + 1,
                    message: format!("`{t}`: {e}"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if row.len() != 6 {
            return Err(NoiseError::Parse {
                line: i + 1,
                message: format!("expected 6 values, found {}", row.len()),
            });
        }
        rows += 1;
        values.extend(row);
    }
    if rows != 6 {
        return Err(NoiseError::Parse {
            line: 0,
            message: format!("expected 6 rows, found {rows}"),
        });
    }
    Ok(Covariance6::from_row_slice(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::sample_tangent;
    use crate::seeds::SimRng;
    use nalgebra::{UnitQuaternion, Vector3};
    use rand::SeedableRng;

    /// χ²₆ CDF in closed form (even dof): 1 − e^{−x/2}(1 + x/2 + (x/2)²/2).
    fn chi2_6_cdf(x: f64) -> f64 {
        let h = x / 2.0;
        1.0 - (-h).exp() * (1.0 + h + h * h / 2.0)
    }

    fn bisect_quantile(p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 100.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if chi2_6_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn diag_q() -> Covariance6 {
        Covariance6::from_diagonal(&Tangent6::new(1e-4, 2e-4, 5e-5, 1e-3, 4e-3, 2e-3))
    }

    #[test]
    fn residual_examples() {
        let p = Pose3::from_parts(UnitQuaternion::from_euler_angles(0.2, 0.1, -0.3), Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(residual(&p, &p), Tangent6::zeros());
        let v = Tangent6::new(0.01, -0.02, 0.005, 0.1, 0.0, -0.05);
        let truth = p.compose(&Pose3::expmap(&v));
        assert!((residual(&p, &truth) - v).norm() < 1e-12);
        // measured is 0.1 m off in x: m⁻¹ ∘ m* = translation (−0.1, 0, 0)
        let m = Pose3::from_translation(0.1, 0.0, 0.0);
        let r = residual(&m, &Pose3::identity());
        assert!((r - Tangent6::new(0.0, 0.0, 0.0, -0.1, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn filter_examples() {
        let id = Pose3::identity();
        let zero = ResidualSample::new(id, id);
        let far = ResidualSample::new(Pose3::from_translation(1.0, 0.0, 0.0), id);
        let ok = ResidualSample::new(
            Pose3::from_parts(UnitQuaternion::from_euler_angles(0.04, 0.0, 0.0), Vector3::new(0.0, 0.4, 0.0)),
            id,
        );
        assert!((ok.rotation_error() - 0.04).abs() < 1e-12);
        let kept = good_filter(&[zero, far, ok], DEFAULT_TRANS_MAX, DEFAULT_ROT_MAX);
        assert_eq!(kept, vec![zero, ok]);
    }

    #[test]
    fn estimator_hand_examples() {
        let zeros = vec![Tangent6::zeros(); 5];
        assert_eq!(second_moment(&zeros, Normalizer::Count).unwrap(), Covariance6::zeros());
        let two = [Tangent6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0), Tangent6::new(-1.0, 0.0, 0.0, 0.0, 0.0, 0.0)];
        let mut expect = Covariance6::zeros();
        expect[(0, 0)] = 1.0;
        assert_eq!(second_moment(&two, Normalizer::Count).unwrap(), expect);
        assert_eq!(second_moment(&two, Normalizer::CountMinusOne).unwrap(), expect * 2.0);
        assert!(matches!(estimate_covariance(&[], Normalizer::Count), Err(NoiseError::Empty)));
    }

    #[test]
    fn estimator_recovers_known_q() {
        let q0 = diag_q();
        let mut rng = SimRng::seed_from_u64(11);
        let samples: Vec<ResidualSample> = (0..10_000)
            .map(|_| {
                let m = Pose3::expmap(&sample_tangent(&q0, &mut rng));
                ResidualSample::new(m, Pose3::identity())
            })
            .collect();
        let est = estimate_covariance(&samples, Normalizer::Count).unwrap();
        let rel = (est.covariance - q0).norm() / q0.norm();
        assert!(rel < 0.1, "relative error {rel}");
        assert_eq!(est.sample_count, 10_000);
    }

    #[test]
    fn chi2_critical_matches_closed_form() {
        let crit = chi2_critical(6, 0.95);
        let oracle = bisect_quantile(0.95);
        assert!((crit - oracle).abs() < 1e-3, "{crit} vs {oracle}");
        assert!((crit - 12.5916).abs() < 1e-3);
    }

    #[test]
    fn inlier_false_alarm_rate() {
        let q = diag_q();
        let classifier = Classifier::new(&q).unwrap();
        let mut rng = SimRng::seed_from_u64(21);
        let n = 10_000;
        let truth = Pose3::from_translation(3.0, -1.0, 2.0);
        let outliers = (0..n)
            .filter(|_| {
                let m = truth.compose(&Pose3::expmap(&sample_tangent(&q, &mut rng)));
                classifier.classify(&m, &truth) == Label::Outlier
            })
            .count();
        let rate = outliers as f64 / n as f64;
        assert!((rate - 0.05).abs() <= 0.007, "rate {rate}");
    }

    #[test]
    fn classify_basics() {
        let q = diag_q();
        let p = Pose3::from_translation(1.0, 1.0, 1.0);
        assert_eq!(classify(&p, &p, &q).unwrap(), Label::Inlier);
        let off = p.compose(&Pose3::from_translation(3.0, 0.0, 0.0));
        assert_eq!(classify(&off, &p, &q).unwrap(), Label::Outlier);
        let mut bad = Covariance6::zeros();
        bad[(0, 0)] = -1.0;
        assert!(matches!(Classifier::new(&bad), Err(NoiseError::Singular)));
        // zero model regularizes to a tiny isotropic one
        assert_eq!(classify(&p, &p, &Covariance6::zeros()).unwrap(), Label::Inlier);
    }

    #[test]
    fn matrix_text_round_trip() {
        let q = diag_q();
        let back = parse_matrix(&format_matrix(&q)).unwrap();
        assert_eq!(q, back);
        assert!(parse_matrix("1 2 3\n").is_err());
    }
}
