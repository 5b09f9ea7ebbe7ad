//! Rigid-body poses in SE(3) and their tangent-space statistics.
//!
//! Conventions used everywhere in the crate:
//! - Tangent vectors are ordered `[rotation; translation]`, radians then meters.
//! - Quaternions are stored scalar-first and canonicalized to a non-negative
//!   scalar part, so every rotation has a single stored representation
//!   (except at exactly π, where the log map picks its axis from the rotation
//!   matrix instead of the quaternion sign).
//! - `compose(a, b)` maps points from `b`'s frame through `a`; `between(a, b)`
//!   is `a⁻¹ ∘ b`.

use nalgebra::{Matrix3, Matrix6, Quaternion, SymmetricEigen, UnitQuaternion, Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt;
use std::ops::Mul;

/// 6-DoF tangent vector, `[ω; v]`.
pub type Tangent6 = Vector6<f64>;

/// Covariance over [`Tangent6`], same ordering.
pub type Covariance6 = Matrix6<f64>;

/// Below this rotation angle the Jacobian coefficients use their series
/// expansions (truncation error < 1e-17).
const SMALL_ANGLE: f64 = 1e-2;

/// A rigid-body transform.
#[derive(Clone, Copy, PartialEq)]
pub struct Pose3 {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl fmt::Debug for Pose3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quaternion_wxyz();
        let t = self.translation;
        write!(
            f,
            "Pose3 {{ t: [{}, {}, {}], q: [{}, {}, {}, {}] }}",
            t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        )
    }
}

impl Default for Pose3 {
    fn default() -> Self {
        Self::identity()
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

impl Pose3 {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: canonical(UnitQuaternion::new_normalize(rotation.into_inner())),
            translation,
        }
    }

    /// Uses `rotation` as given; the caller guarantees unit norm and `w >= 0`.
    pub fn from_unit_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    /// Builds a pose from a scalar-first quaternion, normalizing it.
    ///
    /// Returns `None` when the quaternion is (numerically) zero or not finite.
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3]) -> Option<Self> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if !norm.is_finite() || norm < 1e-12 || t.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some(Self {
            rotation: canonical(UnitQuaternion::new_normalize(quat)),
            translation: Vector3::from(t),
        })
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::new(x, y, z),
        }
    }

    /// Pure rotation given as an axis-angle vector (radians).
    pub fn from_rotation_vector(rv: Vector3<f64>) -> Self {
        Self::from_parts(UnitQuaternion::from_scaled_axis(rv), Vector3::zeros())
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `[w, x, y, z]` with `w >= 0`.
    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn translation_array(&self) -> [f64; 3] {
        [self.translation.x, self.translation.y, self.translation.z]
    }

    /// Geodesic rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let q = self.rotation.quaternion();
        2.0 * q.imag().norm().atan2(q.w.abs())
    }

    pub fn compose(&self, other: &Pose3) -> Pose3 {
        Pose3::from_parts(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose3 {
        let inv = self.rotation.inverse();
        Pose3::from_parts(inv, -(inv * self.translation))
    }

    /// `self⁻¹ ∘ other`: `other` expressed in `self`'s frame.
    pub fn between(&self, other: &Pose3) -> Pose3 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Exponential map from `[ω; v]`.
    pub fn expmap(xi: &Tangent6) -> Pose3 {
        let omega = Vector3::new(xi[0], xi[1], xi[2]);
        let v = Vector3::new(xi[3], xi[4], xi[5]);
        let rotation = UnitQuaternion::from_scaled_axis(omega);
        Pose3::from_parts(rotation, left_jacobian(&omega) * v)
    }

    /// Logarithm map to `[ω; v]`.
    ///
    /// For rotation angles of exactly π the axis is not determined by the
    /// quaternion sign; it is taken from the largest diagonal element of the
    /// rotation matrix with that component chosen positive.
    pub fn logmap(&self) -> Tangent6 {
        let omega = so3_log(&self.rotation);
        let v = left_jacobian_inverse(&omega) * self.translation;
        Tangent6::new(omega.x, omega.y, omega.z, v.x, v.y, v.z)
    }

    /// Geodesic interpolation `p0 ∘ exp(α · log(p0⁻¹ ∘ p1))`.
    pub fn interpolate(&self, other: &Pose3, alpha: f64) -> Pose3 {
        if alpha <= 0.0 {
            return *self;
        }
        if alpha >= 1.0 {
            return *other;
        }
        let delta = self.between(other).logmap();
        self.compose(&Pose3::expmap(&(delta * alpha)))
    }

    /// Tangent-space distance to `other`, `‖log(self⁻¹ ∘ other)‖`.
    pub fn tangent_distance(&self, other: &Pose3) -> f64 {
        self.between(other).logmap().norm()
    }
}

impl Mul for Pose3 {
    type Output = Pose3;

    fn mul(self, rhs: Pose3) -> Pose3 {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Pose3> for &'a Pose3 {
    type Output = Pose3;

    fn mul(self, rhs: &'a Pose3) -> Pose3 {
        self.compose(rhs)
    }
}

pub fn skew(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = canonical(*q);
    let w = q.w;
    let imag = q.imag();
    let n = imag.norm();
    if n < 1e-12 {
        // θ/|v| → 2/w as |v| → 0
        return imag * (2.0 / w) * (1.0 - n * n / (3.0 * w * w));
    }
    if w <= 1e-15 {
        return rotation_pi_axis(&q.to_rotation_matrix().into_inner()) * std::f64::consts::PI;
    }
    let theta = 2.0 * n.atan2(w);
    imag * (theta / n)
}

/// Unit axis of a rotation by π, from `R = 2aaᵀ − I`.
fn rotation_pi_axis(r: &Matrix3<f64>) -> Vector3<f64> {
    let k = (0..3)
        .max_by(|&a, &b| r[(a, a)].total_cmp(&r[(b, b)]).then(b.cmp(&a)))
        .unwrap_or(0);
    let ak = ((r[(k, k)] + 1.0) * 0.5).max(0.0).sqrt();
    let mut axis = Vector3::zeros();
    for i in 0..3 {
        axis[i] = if i == k { ak } else { r[(i, k)] / (2.0 * ak) };
    }
    axis.normalize()
}

/// Left Jacobian of SO(3), `V(ω)` in `t = V(ω) v`.
fn left_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let w2 = w * w;
    let (a, b) = if theta < SMALL_ANGLE {
        (
            0.5 - theta2 / 24.0 + theta2 * theta2 / 720.0,
            1.0 / 6.0 - theta2 / 120.0 + theta2 * theta2 / 5040.0,
        )
    } else {
        let s = (0.5 * theta).sin();
        (2.0 * s * s / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    Matrix3::identity() + w * a + w2 * b
}

fn left_jacobian_inverse(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let w2 = w * w;
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / theta2
    };
    Matrix3::identity() - w * 0.5 + w2 * c
}

/// Draws `ε ~ N(0, cov)`.
///
/// Works for singular (PSD) covariances by factoring through the symmetric
/// eigendecomposition; negative round-off eigenvalues are clamped to zero.
pub fn sample_tangent<R: Rng + ?Sized>(cov: &Covariance6, rng: &mut R) -> Tangent6 {
    let factor = covariance_factor(cov);
    let z = Tangent6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    factor * z
}

/// A matrix `L` with `L Lᵀ = cov` (for PSD `cov`).
pub fn covariance_factor(cov: &Covariance6) -> Matrix6<f64> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let sqrt_vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    eig.eigenvectors * Matrix6::from_diagonal(&sqrt_vals)
}

/// Symmetric within `rel_tol` of its largest entry and no eigenvalue below `-eig_tol`.
pub fn is_symmetric_psd(cov: &Covariance6, rel_tol: f64, eig_tol: f64) -> bool {
    if cov.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = cov.amax().max(1.0);
    if (cov - cov.transpose()).amax() > rel_tol * scale {
        return false;
    }
    let eig = SymmetricEigen::new((cov + cov.transpose()) * 0.5);
    eig.eigenvalues.iter().all(|&l| l >= -eig_tol * scale)
}

/// Serde helper for [`Covariance6`]: writes 36 row-major numbers; reads either
/// 36 row-major numbers or 6 standard deviations (diagonal covariance).
pub mod cov_serde {
    use super::Covariance6;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(cov: &Covariance6, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(row_major(cov))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Covariance6, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        from_values(&v).map_err(D::Error::custom)
    }

    pub fn row_major(cov: &Covariance6) -> Vec<f64> {
        (0..6).flat_map(|r| (0..6).map(move |c| cov[(r, c)])).collect()
    }

    pub fn from_values(v: &[f64]) -> Result<Covariance6, String> {
        match v.len() {
            36 => Ok(Covariance6::from_row_slice(v)),
            6 => Ok(Covariance6::from_diagonal(&super::Tangent6::from_iterator(
                v.iter().map(|s| s * s),
            ))),
            n => Err(format!("covariance needs 36 row-major values or 6 sigmas, got {n}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    const TOL: f64 = 1e-9;

    fn close(a: &Pose3, b: &Pose3) -> bool {
        a.tangent_distance(b) < TOL
    }

    fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64) -> Pose3 {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(0.0..max_angle);
        let t = Vector3::new(
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
            rng.random_range(-20.0..20.0),
        );
        Pose3::from_parts(UnitQuaternion::from_scaled_axis(axis * angle), t)
    }

    #[test]
    fn compose_identity_and_inverse() {
        let p = Pose3::from_parts(
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
            Vector3::new(1.0, -2.0, 0.5),
        );
        assert!(close(&Pose3::identity().compose(&p), &p));
        assert!(close(&p.compose(&Pose3::identity()), &p));
        assert!(close(&p.compose(&p.inverse()), &Pose3::identity()));
    }

    #[test]
    fn commuting_translations() {
        let c = Pose3::from_translation(1.0, 0.0, 0.0).compose(&Pose3::from_translation(0.0, 2.0, 0.0));
        assert_eq!(c.translation_array(), [1.0, 2.0, 0.0]);
    }

    #[test]
    fn inverse_examples() {
        assert!(close(&Pose3::identity().inverse(), &Pose3::identity()));
        assert_eq!(
            Pose3::from_translation(1.0, 2.0, 3.0).inverse().translation_array(),
            [-1.0, -2.0, -3.0]
        );
        let rz = Pose3::from_rotation_vector(Vector3::new(0.0, 0.0, FRAC_PI_2));
        let expect = Pose3::from_rotation_vector(Vector3::new(0.0, 0.0, -FRAC_PI_2));
        assert!(close(&rz.inverse(), &expect));
    }

    #[test]
    fn between_examples() {
        let p = Pose3::from_parts(
            UnitQuaternion::from_euler_angles(0.1, 0.2, 0.3),
            Vector3::new(4.0, 5.0, 6.0),
        );
        assert!(close(&p.between(&p), &Pose3::identity()));
        assert!(close(&Pose3::identity().between(&p), &p));
        let b = Pose3::from_translation(1.0, 0.0, 0.0).between(&Pose3::from_translation(3.0, 0.0, 0.0));
        assert!(close(&b, &Pose3::from_translation(2.0, 0.0, 0.0)));
        let q = Pose3::from_translation(-3.0, 1.0, 9.0);
        assert!(close(&p.compose(&p.between(&q)), &q));
    }

    #[test]
    fn log_of_identity_is_zero() {
        assert_eq!(Pose3::identity().logmap(), Tangent6::zeros());
    }

    #[test]
    fn exp_of_quarter_turn() {
        let p = Pose3::expmap(&Tangent6::new(0.0, 0.0, FRAC_PI_2, 0.0, 0.0, 0.0));
        let expect = Pose3::from_parts(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), FRAC_PI_2),
            Vector3::zeros(),
        );
        assert!(close(&p, &expect));
        assert!(p.translation().norm() < 1e-15);
        let r = p.rotation_matrix();
        assert!((r[(0, 1)] + 1.0).abs() < 1e-12);
        assert!((r[(1, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exp_log_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let p = random_pose(&mut rng, 3.0);
            let back = Pose3::expmap(&p.logmap());
            worst = worst.max(p.tangent_distance(&back));
            let xi = p.logmap();
            worst = worst.max((Pose3::expmap(&xi).logmap() - xi).norm());
        }
        assert!(worst < 1e-9, "worst round-trip error {worst}");
    }

    #[test]
    fn small_angle_round_trip() {
        for &angle in &[0.0, 1e-12, 1e-8, 1e-6, 9e-6, 2e-5, 1e-3, 8e-3, 1.2e-2, 0.1] {
            let xi = Tangent6::new(angle, -angle * 0.5, angle * 0.25, 1.0, 2.0, -3.0);
            let back = Pose3::expmap(&xi).logmap();
            assert!((back - xi).norm() < 1e-12, "angle {angle}: {back:?}");
        }
    }

    #[test]
    fn log_at_pi_uses_deterministic_axis() {
        // Both quaternion signs describe the same rotation by π about (0, 1, 0).
        let a = Pose3::from_wxyz([0.0, 0.0, 1.0, 0.0], [1.0, 2.0, 3.0]).unwrap();
        let b = Pose3::from_wxyz([0.0, 0.0, -1.0, 0.0], [1.0, 2.0, 3.0]).unwrap();
        let la = a.logmap();
        let lb = b.logmap();
        assert_eq!(la, lb);
        assert!((la[1] - PI).abs() < 1e-12);
        assert!(la[0].abs() < 1e-12 && la[2].abs() < 1e-12);
        assert!(a.tangent_distance(&Pose3::expmap(&la)) < 1e-9);

        // Off-axis rotation by π: largest diagonal picks the positive component.
        let axis = Vector3::new(1.0, -2.0, 0.5).normalize();
        let p = Pose3::from_parts(
            UnitQuaternion::new_unchecked(Quaternion::new(0.0, axis.x, axis.y, axis.z)),
            Vector3::zeros(),
        );
        let l = p.logmap();
        assert!((l.fixed_rows::<3>(0).norm() - PI).abs() < 1e-12);
        assert!(l[1] > 0.0, "component with largest diagonal is positive: {l:?}");
        let back = Pose3::expmap(&l);
        assert!((back.rotation_matrix() - p.rotation_matrix()).amax() < 1e-12);
    }

    #[test]
    fn quaternion_is_canonical() {
        let p = Pose3::from_wxyz([-0.5, 0.5, 0.5, 0.5], [0.0; 3]).unwrap();
        assert!(p.quaternion_wxyz()[0] >= 0.0);
        let n: f64 = p.quaternion_wxyz().iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(Pose3::from_wxyz([0.0; 4], [0.0; 3]).is_none());
    }

    #[test]
    fn interpolate_endpoints_and_midpoint() {
        let p0 = Pose3::from_translation(0.0, 0.0, 0.0);
        let p1 = Pose3::from_translation(2.0, 0.0, 0.0);
        assert!(close(&p0.interpolate(&p1, 0.0), &p0));
        assert!(close(&p0.interpolate(&p1, 1.0), &p1));
        assert!(close(&p0.interpolate(&p1, 0.5), &Pose3::from_translation(1.0, 0.0, 0.0)));
    }

    #[test]
    fn group_laws_and_equivariance_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..500 {
            let a = random_pose(&mut rng, 3.0);
            let b = random_pose(&mut rng, 3.0);
            let c = random_pose(&mut rng, 3.0);
            assert!(close(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c))));
            assert!(close(&a.compose(&a.inverse()), &Pose3::identity()));
            let alpha: f64 = rng.random_range(0.0..1.0);
            let lhs = c.compose(&a.interpolate(&b, alpha));
            let rhs = c.compose(&a).interpolate(&c.compose(&b), alpha);
            assert!(close(&lhs, &rhs));
        }
    }

    #[test]
    fn sampling_respects_singular_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_tangent(&Covariance6::zeros(), &mut rng), Tangent6::zeros());
        let mut cov = Covariance6::zeros();
        cov[(3, 3)] = 4.0;
        let s = sample_tangent(&cov, &mut rng);
        for i in [0, 1, 2, 4, 5] {
            assert!(s[i].abs() < 1e-12);
        }
    }

    #[test]
    fn psd_check() {
        assert!(is_symmetric_psd(&Covariance6::identity(), 1e-12, 1e-12));
        let mut c = Covariance6::identity();
        c[(0, 1)] = 0.5;
        assert!(!is_symmetric_psd(&c, 1e-12, 1e-12));
        let mut d = Covariance6::identity();
        d[(2, 2)] = -1.0;
        assert!(!is_symmetric_psd(&d, 1e-12, 1e-12));
    }
}
